"""skyvault: desk-scale secure digital content distribution.

Providers upload encrypted, chunked, replicated content to a simulated
decentralized storage network addressed by skylinks; consumers
authenticate via an encrypted challenge-response protocol, purchase
licenses whose content keys are sealed to their public keys, and a
public ledger records hash commitments to consumer-only secret blocks
so transactions verify without revealing their contents.
"""

__version__ = "0.1.0"

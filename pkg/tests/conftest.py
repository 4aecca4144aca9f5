import random
import shutil
import subprocess

import pytest


def openssl_available() -> bool:
    return shutil.which("openssl") is not None


def openssl_sha256(data: bytes) -> str:
    """Independent SHA-256 oracle via the openssl CLI."""
    out = subprocess.run(["openssl", "dgst", "-sha256", "-hex"],
                         input=data, capture_output=True, check=True).stdout
    return out.decode().strip().rsplit(" ", 1)[-1]


def openssl_aes128_cbc_decrypt(key: bytes, iv: bytes, ciphertext: bytes) -> bytes:
    """Independent AES-128-CBC + PKCS#7 decryption oracle via the openssl CLI."""
    return subprocess.run(
        ["openssl", "enc", "-d", "-aes-128-cbc", "-K", key.hex(), "-iv", iv.hex()],
        input=ciphertext, capture_output=True, check=True).stdout


requires_openssl = pytest.mark.skipif(
    not openssl_available(), reason="openssl CLI not available")


@pytest.fixture
def rng():
    """Seeded RNG so failures reproduce."""
    return random.Random(0x5EED)


class FakeClock:
    """Deterministic clock injected wherever expiry matters."""

    def __init__(self, start: int = 1_700_000_000):
        self.now = start

    def __call__(self) -> int:
        return self.now

    def advance(self, seconds: int):
        self.now += seconds


@pytest.fixture
def clock():
    return FakeClock()

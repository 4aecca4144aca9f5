"""On-disk state: line-based config plus one directory per subsystem.

Layout under the state root::

    config                      key=value lines
    accounts/<id>.json          registered accounts
    accounts/sessions.json      live session tokens
    hosts/roster.json           host ids and liveness
    hosts/<host_id>/<hex>       ciphertext fragments, named by digest
    manifests/<hex>.manifest    canonical manifests, named by skylink digest
    chain.log                   append-only checksummed block records
    licenses/<hex>.json         licenses, named by license id
    secrets/<hex>.secret        sealed secret blocks, named by tx id
    catalog.json                published titles -> skylinks
    keys/<id>.json              client-side keypairs
    session.json                the client's current login

Every file is the canonical format of its owning module, so a cold
restart rebuilds identical state. The chain file is never rewritten,
only appended to.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path
from typing import Callable

from .crypto import Digest, KeyPair, digest
from .errors import BadConfig, StateMissing, UnknownLicense, UnknownSkylink
from .identity import Account, IdentityService, SessionToken
from .ledger import Chain, load_chain
from .licensing import License
from .storage import FileManifest, Host, SkyLink, StorageNetwork
from .wire import b64u, b64u_decode

CONFIG_FILENAME = "config"
CHAIN_FILENAME = "chain.log"


@dataclass(frozen=True)
class Config:
    replication_factor: int = 3
    chunk_size: int = 262144
    pow_difficulty: int = 8
    challenge_ttl: int = 120
    session_ttl: int = 3600
    host_count: int = 5
    segment_bytes: int = 1048576

    def __post_init__(self):
        for field in dataclass_fields(self):
            if getattr(self, field.name) <= 0:
                raise BadConfig(f"{field.name} must be positive")
        if self.replication_factor > self.host_count:
            raise BadConfig(
                f"replication_factor {self.replication_factor} exceeds "
                f"host_count {self.host_count}")

    def to_text(self) -> str:
        return "".join(f"{field.name}={getattr(self, field.name)}\n"
                       for field in dataclass_fields(self))

    @classmethod
    def from_text(cls, text: str) -> "Config":
        known = {field.name for field in dataclass_fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in known:
                raise BadConfig(f"config line {lineno}: unknown setting {raw!r}")
            try:
                values[key] = int(value)
            except ValueError:
                raise BadConfig(f"config line {lineno}: {key} must be an integer") from None
        return cls(**values)


class StateDirectory:
    """Path schema plus load/save for each artifact kind."""

    def __init__(self, root):
        self.root = Path(root)

    # -- layout -------------------------------------------------------------

    @property
    def config_path(self) -> Path:
        return self.root / CONFIG_FILENAME

    @property
    def chain_path(self) -> Path:
        return self.root / CHAIN_FILENAME

    @property
    def accounts_dir(self) -> Path:
        return self.root / "accounts"

    @property
    def sessions_path(self) -> Path:
        return self.accounts_dir / "sessions.json"

    @property
    def hosts_dir(self) -> Path:
        return self.root / "hosts"

    @property
    def roster_path(self) -> Path:
        return self.hosts_dir / "roster.json"

    @property
    def manifests_dir(self) -> Path:
        return self.root / "manifests"

    @property
    def licenses_dir(self) -> Path:
        return self.root / "licenses"

    @property
    def secrets_dir(self) -> Path:
        return self.root / "secrets"

    @property
    def catalog_path(self) -> Path:
        return self.root / "catalog.json"

    @property
    def keys_dir(self) -> Path:
        return self.root / "keys"

    @property
    def session_path(self) -> Path:
        return self.root / "session.json"

    def exists(self) -> bool:
        return self.config_path.is_file()

    def initialize(self, config: Config):
        self.root.mkdir(parents=True, exist_ok=True)
        for directory in (self.accounts_dir, self.hosts_dir, self.manifests_dir,
                          self.licenses_dir, self.secrets_dir, self.keys_dir):
            directory.mkdir(exist_ok=True)
        self.config_path.write_text(config.to_text(), encoding="utf-8")

    def require(self):
        if not self.exists():
            raise StateMissing(f"no state at {self.root} (run init first)")

    # -- config ---------------------------------------------------------------

    def load_config(self) -> Config:
        self.require()
        return Config.from_text(self.config_path.read_text(encoding="utf-8"))

    # -- identity -------------------------------------------------------------

    def save_account(self, account: Account):
        path = self.accounts_dir / f"{account.id}.json"
        path.write_text(json.dumps(account.to_json(), indent=2), encoding="utf-8")

    def load_accounts(self) -> list[Account]:
        accounts = []
        for path in sorted(self.accounts_dir.glob("*.json")):
            if path.name == "sessions.json":
                continue
            accounts.append(Account.from_json(json.loads(path.read_text(encoding="utf-8"))))
        return accounts

    def save_sessions(self, sessions: list[SessionToken]):
        payload = [session.to_json() for session in sessions]
        self.sessions_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")

    def load_sessions(self) -> list[SessionToken]:
        if not self.sessions_path.is_file():
            return []
        payload = json.loads(self.sessions_path.read_text(encoding="utf-8"))
        return [SessionToken.from_json(item) for item in payload]

    # -- storage network --------------------------------------------------------

    def save_network(self, network: StorageNetwork):
        roster = [{"host_id": host.host_id, "alive": host.alive}
                  for host in network.hosts]
        self.roster_path.write_text(json.dumps(roster, indent=2), encoding="utf-8")
        for host in network.hosts:
            host_dir = self.hosts_dir / host.host_id
            host_dir.mkdir(exist_ok=True)
            for fragment_digest, fragment in host.fragments().items():
                (host_dir / fragment_digest.hex()).write_bytes(fragment)
        for manifest in network.manifests():
            link_digest = digest(manifest.core_bytes())
            path = self.manifests_dir / f"{link_digest.hex}.manifest"
            path.write_bytes(manifest.to_bytes())

    def load_network(self, config: Config) -> StorageNetwork:
        if not self.roster_path.is_file():
            return StorageNetwork.with_hosts(
                config.host_count, replication_factor=config.replication_factor)
        roster = json.loads(self.roster_path.read_text(encoding="utf-8"))
        hosts = []
        for entry in roster:
            host = Host(entry["host_id"], alive=bool(entry["alive"]))
            host_dir = self.hosts_dir / host.host_id
            if host_dir.is_dir():
                was_alive, host.alive = host.alive, True
                for path in sorted(host_dir.iterdir()):
                    host.store(Digest(bytes.fromhex(path.name)), path.read_bytes())
                host.alive = was_alive
            hosts.append(host)
        network = StorageNetwork(hosts=hosts,
                                 replication_factor=config.replication_factor)
        for path in sorted(self.manifests_dir.glob("*.manifest")):
            manifest = FileManifest.from_bytes(path.read_bytes())
            link = SkyLink.from_digest(digest(manifest.core_bytes()))
            network.register_manifest(link, manifest)
        return network

    # -- licenses and secrets ------------------------------------------------

    def save_license(self, license: License):
        path = self.licenses_dir / f"{license.license_id.hex()}.json"
        path.write_text(json.dumps(license.to_json(), indent=2), encoding="utf-8")

    def load_license(self, license_id: bytes) -> License:
        path = self.licenses_dir / f"{license_id.hex()}.json"
        if not path.is_file():
            raise UnknownLicense(f"no license {license_id.hex()}")
        return License.from_json(json.loads(path.read_text(encoding="utf-8")))

    def load_licenses(self) -> list[License]:
        return [License.from_json(json.loads(path.read_text(encoding="utf-8")))
                for path in sorted(self.licenses_dir.glob("*.json"))]

    def save_secret(self, tx_id_hex: str, sealed_bytes: bytes):
        (self.secrets_dir / f"{tx_id_hex}.secret").write_bytes(sealed_bytes)

    def load_secret(self, tx_id_hex: str) -> bytes:
        path = self.secrets_dir / f"{tx_id_hex}.secret"
        if not path.is_file():
            raise FileNotFoundError(f"no secret for tx {tx_id_hex}")
        return path.read_bytes()

    # -- catalog ---------------------------------------------------------------

    def load_catalog(self) -> list[dict]:
        if not self.catalog_path.is_file():
            return []
        return json.loads(self.catalog_path.read_text(encoding="utf-8"))

    def add_catalog_entry(self, title: str, skylink: SkyLink, provider_id: str):
        catalog = self.load_catalog()
        catalog.append({"title": title, "skylink": skylink.text,
                        "provider_id": provider_id})
        self.catalog_path.write_text(json.dumps(catalog, indent=2), encoding="utf-8")

    def find_catalog_entry(self, skylink_text: str) -> dict:
        for entry in self.load_catalog():
            if entry["skylink"] == skylink_text:
                return entry
        raise UnknownSkylink(f"not in catalog: {skylink_text}")

    # -- client keystore and login ----------------------------------------------

    def save_keypair(self, id: str, keypair: KeyPair):
        payload = {"id": id, "public_key": b64u(keypair.public_key),
                   "private_key": b64u(keypair.private_key)}
        (self.keys_dir / f"{id}.json").write_text(
            json.dumps(payload, indent=2), encoding="utf-8")

    def load_keypair(self, id: str) -> KeyPair:
        path = self.keys_dir / f"{id}.json"
        if not path.is_file():
            raise StateMissing(f"no keypair for {id} (register here first)")
        payload = json.loads(path.read_text(encoding="utf-8"))
        return KeyPair(public_key=b64u_decode(payload["public_key"]),
                       private_key=b64u_decode(payload["private_key"]))

    def save_login(self, session: SessionToken):
        self.session_path.write_text(
            json.dumps(session.to_json(), indent=2), encoding="utf-8")

    def load_login(self) -> SessionToken | None:
        if not self.session_path.is_file():
            return None
        return SessionToken.from_json(
            json.loads(self.session_path.read_text(encoding="utf-8")))

    def clear_login(self):
        if self.session_path.is_file():
            self.session_path.unlink()


@dataclass
class World:
    """Everything a command needs, loaded cold from one state directory."""

    state: StateDirectory
    config: Config
    identity: IdentityService
    network: StorageNetwork
    chain: Chain


def load_world(root, clock: Callable[[], float] = time.time) -> World:
    state = StateDirectory(root)
    config = state.load_config()
    identity = IdentityService(clock=lambda: int(clock()),
                               challenge_ttl=config.challenge_ttl,
                               session_ttl=config.session_ttl)
    for account in state.load_accounts():
        identity.restore_account(account)
    for session in state.load_sessions():
        identity.restore_session(session)
    network = state.load_network(config)
    chain = load_chain(state.chain_path, difficulty_bits=config.pow_difficulty,
                       clock=clock)
    return World(state=state, config=config, identity=identity,
                 network=network, chain=chain)


def save_world(world: World):
    """Persist everything except the chain, which is append-only."""
    for account in world.identity.accounts():
        world.state.save_account(account)
    world.state.save_sessions(world.identity.sessions())
    world.state.save_network(world.network)

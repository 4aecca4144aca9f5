"""Command-line gateway: one subcommand per workflow step.

State lives in a directory chosen by ``--state`` or the SKYVAULT_STATE
environment variable. Commands load it cold, act, and persist before
exiting; a later invocation (or a different machine pointed at a copy)
sees identical state. Failures print one JSON object on stderr,
``{"error": <stable code>, "message": ...}``, and exit nonzero; no
command prints key material unless ``play --show-key`` is given.
"""

from __future__ import annotations

import functools
import json
import os
import signal
import sys
import time
from pathlib import Path

import click

from .crypto import Digest, derive_credential, digest, generate_keypair
from .errors import NotAuthenticated, RightsDenied, SkyVaultError, UnknownLicense
from .hls import master_playlist, package, write_package, Rendition
from .identity import solve_challenge
from .ledger import append_block
from .licensing import (
    ACTION_DOWNLOAD,
    ACTION_STREAM,
    KeyRules,
    Rights,
    execute_purchase,
    redeem_license,
)
from .service import IdentityHttpServer
from .state import Config, StateDirectory, load_world, save_world
from .storage import SkyLink, download_with_key, fail_host, revive_host
from .storage import download as storage_download
from .storage import upload as storage_upload

DEFAULT_STATE = "skyvault-state"


def cli_errors(fn):
    """Uniform failure surface: JSON on stderr, nonzero exit."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SkyVaultError as exc:
            payload = {"error": exc.code, "message": str(exc)}
            payload.update(exc.details())
            click.echo(json.dumps(payload), err=True)
            sys.exit(1)
    return wrapper


@click.group()
@click.option("--state", "state_root", envvar="SKYVAULT_STATE",
              default=DEFAULT_STATE, show_default=True,
              help="State directory (or set SKYVAULT_STATE).")
@click.pass_context
def main(ctx, state_root):
    """Secure content distribution over simulated decentralized storage."""
    ctx.obj = state_root


@main.command()
@click.option("--replication-factor", type=int, default=3, show_default=True)
@click.option("--chunk-size", type=int, default=262144, show_default=True)
@click.option("--pow-difficulty", type=int, default=8, show_default=True)
@click.option("--challenge-ttl", type=int, default=120, show_default=True)
@click.option("--session-ttl", type=int, default=3600, show_default=True)
@click.option("--host-count", type=int, default=5, show_default=True)
@click.option("--segment-bytes", type=int, default=1048576, show_default=True)
@click.pass_obj
@cli_errors
def init(state_root, replication_factor, chunk_size, pow_difficulty,
         challenge_ttl, session_ttl, host_count, segment_bytes):
    """Create the state directory with its config."""
    config = Config(replication_factor=replication_factor,
                    chunk_size=chunk_size, pow_difficulty=pow_difficulty,
                    challenge_ttl=challenge_ttl, session_ttl=session_ttl,
                    host_count=host_count, segment_bytes=segment_bytes)
    state = StateDirectory(state_root)
    state.initialize(config)
    click.echo(f"Initialized state at {state.root}")


@main.command()
@click.argument("id")
@click.option("--password", prompt=True, hide_input=True,
              confirmation_prompt=False)
@click.pass_obj
@cli_errors
def register(state_root, id, password):
    """Create a keypair and register ID with the identity service."""
    world = load_world(state_root)
    keypair = generate_keypair()
    world.identity.register(id, password, keypair.public_key)
    save_world(world)
    world.state.save_keypair(id, keypair)
    click.echo(f"Registered {id}")


@main.command()
@click.argument("id")
@click.option("--password", prompt=True, hide_input=True)
@click.pass_obj
@cli_errors
def login(state_root, id, password):
    """Authenticate via challenge-response and store the session."""
    world = load_world(state_root)
    keypair = world.state.load_keypair(id)
    challenge = world.identity.begin_auth(id)
    verifier = derive_credential(id, password).verifier
    response = solve_challenge(challenge.sealed_nonce, keypair.private_key,
                               verifier)
    session = world.identity.complete_auth(challenge.challenge_id, response)
    save_world(world)
    world.state.save_login(session)
    click.echo(f"Logged in as {id}; session valid until {session.expires_at}")


def _current_identity(world, override: str | None) -> str:
    if override:
        return override
    session = world.state.load_login()
    if session is None:
        raise NotAuthenticated("not logged in (run login, or pass --as)")
    return world.identity.validate_session(session.token)


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--as", "as_id", default=None,
              help="Uploader account (default: current login).")
@click.pass_obj
@cli_errors
def upload(state_root, file, as_id):
    """Chunk, encrypt, and replicate FILE across the storage hosts."""
    world = load_world(state_root)
    uploader_id = _current_identity(world, as_id)
    keypair = world.state.load_keypair(uploader_id)
    with open(file, "rb") as handle:
        data = handle.read()
    link, _ = storage_upload(data, world.network, keypair,
                             chunk_size=world.config.chunk_size)
    save_world(world)
    click.echo(f"Successfully uploaded file! Skylink: {link.text}")


@main.command()
@click.argument("skylink")
@click.argument("out", type=click.Path(dir_okay=False))
@click.option("--as", "as_id", default=None,
              help="Requesting account (default: current login).")
@click.pass_obj
@cli_errors
def download(state_root, skylink, out, as_id):
    """Fetch SKYLINK with your own key and write the plaintext to OUT."""
    world = load_world(state_root)
    requester_id = _current_identity(world, as_id)
    keypair = world.state.load_keypair(requester_id)
    data = storage_download(SkyLink(skylink), world.network, keypair.private_key)
    with open(out, "wb") as handle:
        handle.write(data)
    click.echo("Successfully downloaded skylink!")


@main.command()
@click.argument("skylink")
@click.option("--title", required=True, help="Catalog title for the content.")
@click.option("--as", "as_id", default=None,
              help="Provider account (default: current login).")
@click.pass_obj
@cli_errors
def publish(state_root, skylink, title, as_id):
    """List uploaded content in the catalog so consumers can buy it."""
    world = load_world(state_root)
    provider_id = _current_identity(world, as_id)
    world.network.lookup(SkyLink(skylink))
    world.state.add_catalog_entry(title, SkyLink(skylink), provider_id)
    click.echo(f"Published {title!r} at {skylink}")


@main.command()
@click.argument("skylink")
@click.option("--valid-seconds", type=int, default=30 * 24 * 3600,
              show_default=True, help="License validity window from now.")
@click.option("--max-uses", type=int, default=None,
              help="Use budget (default: unlimited).")
@click.option("--actions", default=f"{ACTION_STREAM},{ACTION_DOWNLOAD}",
              show_default=True, help="Comma-separated allowed actions.")
@click.pass_obj
@cli_errors
def buy(state_root, skylink, valid_seconds, max_uses, actions):
    """Purchase SKYLINK: license, secret block, on-chain commitment."""
    world = load_world(state_root)
    session = world.state.load_login()
    if session is None:
        raise NotAuthenticated("not logged in (run login first)")
    consumer_id = world.identity.validate_session(session.token)
    consumer_account = world.identity.get_account(consumer_id)
    entry = world.state.find_catalog_entry(skylink)
    provider_keypair = world.state.load_keypair(entry["provider_id"])
    now = int(time.time())
    result = execute_purchase(
        identity=world.identity,
        session_token=session,
        content_id=SkyLink(skylink).digest(),
        content_title=entry["title"],
        provider=provider_keypair,
        provider_name=entry["provider_id"],
        consumer_account=consumer_account,
        network=world.network,
        chain=world.chain,
        rules=KeyRules(not_before=now, not_after=now + valid_seconds,
                       max_uses=max_uses),
        rights=Rights(frozenset(actions.split(","))),
        now=now,
    )
    block = world.chain.mine()
    append_block(world.state.chain_path, block)
    save_world(world)
    world.state.save_license(result.license)
    world.state.save_secret(result.tx_id.hex, result.sealed_secret_block.to_bytes())
    click.echo(f"Purchased {entry['title']!r}: license "
               f"{result.license.license_id.hex()}, tx {result.tx_id.hex} "
               f"committed in block {block.height}")


def _find_license(world, consumer_id: str, content_id: Digest):
    matches = [lic for lic in world.state.load_licenses()
               if lic.consumer_id == consumer_id and lic.content_id == content_id]
    if not matches:
        raise UnknownLicense(
            f"no license held by {consumer_id} for this content (buy first)")
    return max(matches, key=lambda lic: lic.issued_at)


@main.command()
@click.argument("skylink")
@click.argument("out", type=click.Path(dir_okay=False))
@click.option("--action", default=ACTION_STREAM, show_default=True,
              help="Action to exercise against the license.")
@click.option("--show-key", is_flag=True, default=False,
              help="Also print the redeemed content key (debug).")
@click.pass_obj
@cli_errors
def play(state_root, skylink, out, action, show_key):
    """Redeem your license for SKYLINK, decrypt, and write plaintext to OUT."""
    world = load_world(state_root)
    session = world.state.load_login()
    if session is None:
        raise NotAuthenticated("not logged in (run login first)")
    consumer_id = world.identity.validate_session(session.token)
    keypair = world.state.load_keypair(consumer_id)
    link = SkyLink(skylink)
    license = _find_license(world, consumer_id, link.digest())
    key = redeem_license(keypair.private_key, license, action, int(time.time()))
    world.state.save_license(license)
    data = download_with_key(link, world.network, key)
    with open(out, "wb") as handle:
        handle.write(data)
    uses = ("unlimited" if license.key_rules.max_uses is None
            else f"{license.uses_consumed}/{license.key_rules.max_uses}")
    click.echo(f"Played {skylink} ({len(data)} bytes, uses: {uses})")
    if show_key:
        click.echo(f"content key: {key.hex()}")


@main.command("hls-package")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.argument("outdir", type=click.Path(file_okay=False))
@click.option("--key-uri", default=None,
              help="Key URI for the playlist (default: license placeholder).")
@click.option("--key-out", type=click.Path(dir_okay=False), default=None,
              help="Write the key here; must not live inside OUTDIR.")
@click.option("--segment-bytes", type=int, default=None,
              help="Segment size (default: config value).")
@click.option("--bandwidths", default=None,
              help="Comma-separated bits/s to also emit a master playlist.")
@click.pass_obj
@cli_errors
def hls_package(state_root, file, outdir, key_uri, key_out, segment_bytes,
                bandwidths):
    """Encrypt FILE into HLS segments plus an M3U8 playlist in OUTDIR."""
    world = load_world(state_root)
    with open(file, "rb") as handle:
        media = handle.read()
    key = os.urandom(16)
    kwargs = {}
    if key_uri:
        kwargs["key_uri"] = key_uri
    pkg = package(media, key,
                  segment_bytes=segment_bytes or world.config.segment_bytes,
                  **kwargs)
    master = None
    if bandwidths:
        master = master_playlist([
            Rendition(int(b.strip()), "playlist.m3u8")
            for b in bandwidths.split(",")])
    write_package(pkg, outdir, master=master)
    if key_out:
        key_path = Path(key_out).resolve()
        if Path(outdir).resolve() in key_path.parents:
            raise click.UsageError("--key-out must not point inside OUTDIR")
        key_path.write_bytes(key)
    click.echo(f"Packaged {len(pkg.segments)} segments into {outdir}")


@main.command("verify-chain")
@click.pass_obj
@cli_errors
def verify_chain(state_root):
    """Recheck every block in the persisted chain."""
    world = load_world(state_root)
    bad_height = world.chain.verify()
    if bad_height is None:
        click.echo("ok")
    else:
        click.echo(json.dumps({"error": "chain_invalid",
                               "first_bad_height": bad_height}), err=True)
        sys.exit(1)


@main.group()
def host():
    """Storage host controls."""


@host.command("list")
@click.pass_obj
@cli_errors
def host_list(state_root):
    world = load_world(state_root)
    for h in world.network.hosts:
        status = "up" if h.alive else "down"
        click.echo(f"{h.host_id}\t{status}\t{h.fragment_count()} fragments")


@host.command("fail")
@click.argument("host_id")
@click.pass_obj
@cli_errors
def host_fail(state_root, host_id):
    world = load_world(state_root)
    fail_host(world.network, host_id)
    save_world(world)
    click.echo(f"{host_id} marked down")


@host.command("revive")
@click.argument("host_id")
@click.pass_obj
@cli_errors
def host_revive(state_root, host_id):
    world = load_world(state_root)
    revive_host(world.network, host_id)
    save_world(world)
    click.echo(f"{host_id} marked up")


@main.command()
@click.option("--bind", default="127.0.0.1:8321", show_default=True,
              help="host:port for the identity API.")
@click.pass_obj
@cli_errors
def serve(state_root, bind):
    """Run the identity endpoints as an HTTP JSON service."""
    world = load_world(state_root)
    bind_host, _, port_text = bind.rpartition(":")
    server = IdentityHttpServer(world.identity, host=bind_host or "127.0.0.1",
                                port=int(port_text))

    def stop(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGINT, stop)
    signal.signal(signal.SIGTERM, stop)
    click.echo(f"Serving identity API on {server.url}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        save_world(world)
        click.echo("Shut down cleanly")


if __name__ == "__main__":
    main()

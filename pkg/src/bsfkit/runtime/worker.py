"""Worker process for the multi-process backend.

    python -m bsfkit.runtime.worker --host H --port P --index J --workers K --plugin mod:Class

With ``--echo`` it instead runs a byte echo server on the given port, used by
the calibration routines to time raw loopback transfers.
"""

from __future__ import annotations

import argparse
import importlib
import socket
import sys

from ..list_ops import partition
from . import wire


def load_plugin(path: str):
    module_name, _, qualname = path.partition(":")
    obj = importlib.import_module(module_name)
    for attr in qualname.split("."):
        obj = getattr(obj, attr)
    return obj()


def serve(sock: socket.socket, plugin, index: int, workers: int) -> None:
    sock.sendall(wire.encode_handshake(index))
    tag, payload = wire.read_frame(sock)
    if tag != wire.INIT:
        raise wire.ProtocolError(f"expected INIT, got {wire.TAG_NAMES[tag]}")
    plugin.init(plugin.decode_input(payload))
    part = partition(plugin.list_length(), workers)[index]
    while True:
        tag, payload = wire.read_frame(sock)
        if tag == wire.STOP:
            return
        if tag != wire.ORDER:
            raise wire.ProtocolError(f"expected ORDER or STOP, got {wire.TAG_NAMES[tag]}")
        iteration, body = wire.parse_order(payload)
        partial = plugin.process_order(plugin.decode_order(body), part)
        body = plugin.encode_partial(partial)
        wire.send_frame(sock, wire.PARTIAL, wire.partial_payload(iteration, index, body))


def echo(host: str, port: int, timeout: float) -> None:
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        while True:
            data = sock.recv(1 << 20)
            if not data:
                return
            sock.sendall(data)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="bsfkit-worker")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--plugin")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--echo", action="store_true")
    args = p.parse_args(argv)

    if args.echo:
        echo(args.host, args.port, args.timeout)
        return 0
    if not args.plugin:
        p.error("--plugin is required unless --echo is given")
    plugin = load_plugin(args.plugin)
    with socket.create_connection((args.host, args.port), timeout=args.timeout) as sock:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        # the master may legitimately idle between orders for a long time
        sock.settimeout(None)
        try:
            serve(sock, plugin, args.index, args.workers)
        except wire.ConnectionClosed:
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line tools: listener, sender, invoker, demo service, benchmark.

Every tool is a thin shell over the library API; stdout carries data
(line-delimited JSON), stderr carries diagnostics.  Exit codes: 0 success,
2 usage or bind error, 3 message discarded, 4 invocation timeout, 5 peer
unreachable.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import time

from .endpoint import Endpoint, EndpointState, SendStatus, open_local_endpoint, open_remote_endpoint
from .errors import EndpointClosedError, EndpointOpenError, UsageError
from .wire import MESSAGE_ID, Message

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DISCARDED = 3
EXIT_TIMEOUT = 4
EXIT_UNREACHABLE = 5


def main(argv: list[str] | None = None) -> int:
    signal.signal(signal.SIGTERM, _raise_interrupt)
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_OK
    except UsageError as exc:
        print(f"rowe: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _raise_interrupt(signum, frame):
    raise KeyboardInterrupt


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rowe",
        description="Exchange JSON messages between two peers over a WebSocket.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("listen", help="receive messages on a local endpoint")
    p.add_argument("port", type=int)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--print", dest="mode", action="store_const", const="print",
                      help="write each received message as a JSON line (default)")
    mode.add_argument("--echo", dest="mode", action="store_const", const="echo",
                      help="reply to every message_id-bearing message with the same body")
    p.set_defaults(func=cmd_listen, mode="print")

    p = sub.add_parser("send", help="send one message to a remote endpoint")
    p.add_argument("host")
    p.add_argument("port", type=int)
    p.add_argument("json", help="the message, as a JSON object")
    p.add_argument("--ttl", type=int, default=-1, metavar="MS",
                   help="message time-to-live in ms; negative = forever (default)")
    p.set_defaults(func=cmd_send)

    p = sub.add_parser("invoke", help="send a request and print the reply")
    p.add_argument("host")
    p.add_argument("port", type=int)
    p.add_argument("json", help="the request, as a JSON object")
    p.add_argument("--timeout", type=int, default=5000, metavar="MS")
    p.set_defaults(func=cmd_invoke)

    p = sub.add_parser("addserver", help="serve the add-two-numbers demo")
    p.add_argument("port", type=int)
    p.set_defaults(func=cmd_addserver)

    p = sub.add_parser("bench", help="loopback latency/throughput benchmark")
    p.add_argument("--role", choices=["client", "server"], default="client",
                   help="client measures; server echoes until interrupted")
    p.add_argument("host", nargs="?", default="127.0.0.1")
    p.add_argument("port", type=int)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--payload-bytes", type=int, default=256)
    p.add_argument("--mode", choices=["invoke", "stream"], default="invoke")
    p.add_argument("--ttl", type=int, default=5000, metavar="MS",
                   help="per-operation timeout/TTL in ms")
    p.add_argument("--wait-s", type=float, default=10.0,
                   help="how long to wait for the peer before giving up")
    p.set_defaults(func=cmd_bench)

    return parser


def _parse_message(text: str) -> Message:
    try:
        value = json.loads(text)
    except ValueError as exc:
        raise UsageError(f"invalid JSON: {exc}") from exc
    if not isinstance(value, dict):
        raise UsageError("the message must be a JSON object")
    return value


def _print_json(value) -> None:
    print(json.dumps(value, ensure_ascii=False), flush=True)


def _wait_connected(ep: Endpoint, wait_s: float) -> bool:
    deadline = time.monotonic() + wait_s
    while time.monotonic() < deadline:
        if ep.state is EndpointState.CONNECTED:
            return True
        time.sleep(0.01)
    return ep.state is EndpointState.CONNECTED


# -- subcommands -----------------------------------------------------------

def cmd_listen(args) -> int:
    try:
        ep = open_local_endpoint(args.port)
    except EndpointOpenError as exc:
        print(f"rowe: {exc}", file=sys.stderr)
        return EXIT_USAGE
    with ep:
        if args.mode == "print":
            _serve_print(ep)
        else:
            _serve_echo(ep)
    return EXIT_OK


def _serve_print(ep: Endpoint) -> None:
    while True:
        msg = ep.receive(timeout_ms=500)
        if msg is not None:
            _print_json(msg)


def _serve_echo(ep: Endpoint) -> None:
    while True:
        msg = ep.receive(timeout_ms=500)
        if msg is not None and isinstance(msg.get(MESSAGE_ID), str):
            body = {k: v for k, v in msg.items() if k != MESSAGE_ID}
            ep.async_reply(msg, body)


def cmd_send(args) -> int:
    msg = _parse_message(args.json)
    with open_remote_endpoint(args.host, args.port) as ep:
        status = ep.send(msg, ttl_ms=args.ttl)
    if status is SendStatus.SENT:
        return EXIT_OK
    if status is SendStatus.DISCARDED:
        print("rowe: message discarded (ttl expired before it could be sent)",
              file=sys.stderr)
        return EXIT_DISCARDED
    print(f"rowe: send failed: {status.value}", file=sys.stderr)
    return EXIT_UNREACHABLE


def cmd_invoke(args) -> int:
    msg = _parse_message(args.json)
    with open_remote_endpoint(args.host, args.port) as ep:
        reply = ep.invoke(msg, timeout_ms=args.timeout)
    if reply is None:
        print("rowe: invocation timed out", file=sys.stderr)
        return EXIT_TIMEOUT
    _print_json(reply)
    return EXIT_OK


def cmd_addserver(args) -> int:
    """The add-two-numbers demo service.

    Replies {"result": a+b} to invocations with service "add-two-numbers"
    and integer "a"/"b"; unknown services get {"error": "unknown-service"}.
    """
    try:
        ep = open_local_endpoint(args.port)
    except EndpointOpenError as exc:
        print(f"rowe: {exc}", file=sys.stderr)
        return EXIT_USAGE
    with ep:
        while True:
            msg = ep.receive(timeout_ms=500)
            if msg is None or not isinstance(msg.get(MESSAGE_ID), str):
                continue
            if msg.get("service") != "add-two-numbers":
                ep.async_reply(msg, {"error": "unknown-service"})
            elif _is_int(msg.get("a")) and _is_int(msg.get("b")):
                ep.async_reply(msg, {"result": msg["a"] + msg["b"]})
            else:
                ep.async_reply(msg, {"error": "bad-arguments"})
    return EXIT_OK


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def cmd_bench(args) -> int:
    if args.role == "server":
        try:
            ep = open_local_endpoint(args.port)
        except EndpointOpenError as exc:
            print(f"rowe: {exc}", file=sys.stderr)
            return EXIT_USAGE
        with ep:
            _serve_echo(ep)
        return EXIT_OK

    report = {
        "count": args.count,
        "payload_bytes": args.payload_bytes,
        "rtt_p50_us": None,
        "rtt_p99_us": None,
        "throughput_msgs_per_s": None,
        "discarded": 0,
    }
    if args.count <= 0:
        _print_json(report)
        return EXIT_OK

    with open_remote_endpoint(args.host, args.port) as ep:
        if not _wait_connected(ep, args.wait_s):
            print(f"rowe: no peer at {args.host}:{args.port} "
                  f"within {args.wait_s:g} s", file=sys.stderr)
            return EXIT_UNREACHABLE
        payload = _bench_payload(args.payload_bytes)
        if args.mode == "invoke":
            rc = _bench_invoke(ep, args, payload, report)
        else:
            rc = _bench_stream(ep, args, payload, report)
        report["discarded"] = ep.counters().discarded_ttl
    if rc == EXIT_OK:
        _print_json(report)
    return rc


def _bench_payload(payload_bytes: int) -> Message:
    base = {"bench": "echo", "pad": ""}
    overhead = len(json.dumps(base, separators=(",", ":")).encode())
    return {"bench": "echo", "pad": "x" * max(0, payload_bytes - overhead)}


def _bench_invoke(ep: Endpoint, args, payload: Message, report: dict) -> int:
    rtts = []
    start = time.monotonic()
    for _ in range(args.count):
        t0 = time.monotonic()
        reply = ep.invoke(payload, timeout_ms=args.ttl)
        if reply is None:
            print("rowe: echo peer stopped answering", file=sys.stderr)
            return EXIT_TIMEOUT
        rtts.append(time.monotonic() - t0)
    elapsed = time.monotonic() - start
    rtts.sort()
    report["rtt_p50_us"] = round(_percentile(rtts, 0.50) * 1e6, 1)
    report["rtt_p99_us"] = round(_percentile(rtts, 0.99) * 1e6, 1)
    report["throughput_msgs_per_s"] = round(args.count / elapsed, 1)
    return EXIT_OK


def _bench_stream(ep: Endpoint, args, payload: Message, report: dict) -> int:
    start = time.monotonic()
    for _ in range(args.count):
        while ep.async_send(payload, ttl_ms=args.ttl) is SendStatus.QUEUE_FULL:
            time.sleep(0.0005)
    barrier = ep.invoke({"bench": "barrier"}, timeout_ms=max(args.ttl, 30000))
    if barrier is None:
        print("rowe: stream barrier timed out", file=sys.stderr)
        return EXIT_TIMEOUT
    elapsed = time.monotonic() - start
    report["throughput_msgs_per_s"] = round(args.count / elapsed, 1)
    return EXIT_OK


def _percentile(sorted_values: list[float], q: float) -> float:
    if not sorted_values:
        return 0.0
    index = min(len(sorted_values) - 1, int(q * len(sorted_values)))
    return sorted_values[index]


if __name__ == "__main__":
    sys.exit(main())

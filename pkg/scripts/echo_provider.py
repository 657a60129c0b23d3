"""Reference plan provider: answers every request with the current frame repeated.

Copies are re-indexed (index, index + 1, ...) so the reply is a valid plan.

    python scripts/echo_provider.py                 # stdio
    python scripts/echo_provider.py --tcp 127.0.0.1:7777
"""
import argparse
import socketserver
import sys

from planarnav.protocol import ProtocolError, encode_error, encode_response, parse_request
from planarnav.worldsim import Frame


def answer(line: bytes) -> bytes:
    try:
        frame, _, h = parse_request(line)
    except ProtocolError as exc:
        return encode_error(str(exc))
    return encode_response([Frame(frame.observations, frame.scan, frame.frame_index + k)
                            for k in range(h + 1)])


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for line in self.rfile:
            self.wfile.write(answer(line.rstrip(b"\n")))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tcp", help="host:port to listen on (default: stdio)")
    args = ap.parse_args(argv)
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        with socketserver.ThreadingTCPServer((host or "127.0.0.1", int(port)), _Handler) as srv:
            srv.serve_forever()
        return
    out = sys.stdout.buffer
    for line in sys.stdin.buffer:
        out.write(answer(line.rstrip(b"\n")))
        out.flush()


if __name__ == "__main__":
    main()

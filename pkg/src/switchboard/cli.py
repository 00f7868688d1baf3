"""Command-line entry point."""
from __future__ import annotations

import argparse
import sys

from .errors import SwitchboardError
from .server.bootstrap import serve
from .server.config import load_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchboard",
        description="Self-hosted multi-model LLM gateway.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("serve", help="start the server")
    run.add_argument("--bind", help="host:port to listen on "
                     "(default 127.0.0.1:8080, env APP_BIND)")
    run.add_argument("--data-dir", help="state directory "
                     "(default ./switchboard-data, env APP_DATA_DIR)")
    run.add_argument("--config", help="JSON config file (env APP_CONFIG)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        try:
            config = load_config(bind=args.bind, data_dir=args.data_dir,
                                 config_file=args.config)
            serve(config)
        except SwitchboardError as exc:
            print(f"error ({exc.code}): {exc.message}", file=sys.stderr)
            return 2
        except KeyboardInterrupt:
            return 0
    return 0


if __name__ == "__main__":
    sys.exit(main())

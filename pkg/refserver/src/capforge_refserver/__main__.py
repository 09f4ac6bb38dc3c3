"""Entry point: capforge-refserver --mode stub --seed 0 --dim 512 --port 8080"""

from __future__ import annotations

import argparse
import sys

from .app import ServerConfig, create_app


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="capforge-refserver",
        description="Reference caption/embed/summarize backend server.",
    )
    parser.add_argument("--mode", choices=["stub", "model"], default="stub")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--dim", type=int, default=512)
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument(
        "--adapter",
        action="append",
        default=[],
        metavar="ROLE=MODULE:ATTR",
        help="model-mode adapter, e.g. captioner=my_pkg.adapters:make_captioner",
    )
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    specs = {}
    for entry in args.adapter:
        role, _, spec = entry.partition("=")
        if not role or not spec:
            print(f"bad --adapter value: {entry!r}", file=sys.stderr)
            return 2
        specs[role] = spec
    try:
        config = ServerConfig(
            mode=args.mode, seed=args.seed, embedding_dim=args.dim, adapter_specs=specs
        )
        app = create_app(config)
    except (ValueError, RuntimeError) as exc:
        print(f"startup error: {exc}", file=sys.stderr)
        return 2

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""qgforge-shim: serve the configured models over the wire protocol."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from qgforge_shim.config import ConfigError, load_config
from qgforge_shim.models import ModelLoadError
from qgforge_shim.service import create_app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="qgforge-shim",
        description="Serve seq2seq generation and extractive QA models "
        "behind the qgforge wire protocol.",
    )
    parser.add_argument("--config", required=True, help="JSON config file (see README)")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, help="override the config file's port")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        app = create_app(config)
    except (ConfigError, ModelLoadError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    port = args.port if args.port is not None else config.port
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line entry point: embed-service --config service.json"""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .config import load_config


def main() -> None:
    parser = argparse.ArgumentParser(prog="embed-service")
    parser.add_argument("--config", required=True, help="JSON or YAML service config")
    parser.add_argument("--host", default=None, help="override configured listen host")
    parser.add_argument("--port", type=int, default=None, help="override configured listen port")
    args = parser.parse_args()

    config = load_config(args.config)
    app = create_app(config)
    uvicorn.run(app, host=args.host or config.host, port=args.port or config.port)


if __name__ == "__main__":
    main()

"""Server entry point.

Plain HTTP; put a TLS-terminating reverse proxy in front for any
non-local deployment.
"""

from __future__ import annotations

import argparse
import logging
import os
from pathlib import Path

import uvicorn

from .api import create_app
from .storage import Storage

DEFAULT_STATIC = Path(__file__).parent / "static"


def build_parser():
    parser = argparse.ArgumentParser(prog="hopaas-server",
                                     description="hyperparameter optimization service")
    parser.add_argument("--host", default=os.environ.get("HOPAAS_HOST", "127.0.0.1"))
    parser.add_argument("--port", type=int, default=int(os.environ.get("HOPAAS_PORT", "8021")))
    parser.add_argument("--data-dir", default=os.environ.get("HOPAAS_DATA_DIR", "./hopaas-data"))
    parser.add_argument("--admin-key", default=os.environ.get("HOPAAS_ADMIN_KEY"),
                        help="admin credential for the dashboard/token APIs")
    parser.add_argument("--static-dir", default=os.environ.get("HOPAAS_STATIC_DIR"),
                        help="dashboard assets directory (defaults to the bundled build)")
    parser.add_argument("--log-level", default=os.environ.get("HOPAAS_LOG_LEVEL", "info"))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if not args.admin_key:
        raise SystemExit("an admin credential is required (--admin-key or HOPAAS_ADMIN_KEY)")
    logging.basicConfig(
        level=args.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    static_dir = args.static_dir or (DEFAULT_STATIC if DEFAULT_STATIC.is_dir() else None)
    store = Storage(args.data_dir)
    app = create_app(store, admin_key=args.admin_key, static_dir=static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level=args.log_level)


if __name__ == "__main__":
    main()

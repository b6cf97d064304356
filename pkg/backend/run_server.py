#!/usr/bin/env python3
"""
Run the registry server

Usage:
    python run_server.py [--config data/mosaic_config.json]
"""

import argparse
import logging
import os

import uvicorn

from app.services.config import ServiceConfig


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run the Mosaic variant registry")
    parser.add_argument("--config", help="Service configuration JSON")
    args = parser.parse_args()

    if args.config:
        # The app reads its config path from the environment at startup
        os.environ["MOSAIC_CONFIG"] = args.config
    settings = ServiceConfig(args.config)
    logging.basicConfig(level=settings.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    uvicorn.run(
        "app.main:app",
        host=settings.get("server.host"),
        port=int(settings.get("server.port")),
        log_level=settings.log_level.lower(),
    )

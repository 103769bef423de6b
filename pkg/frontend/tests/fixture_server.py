"""Start the fixture service for frontend integration tests.

Usage: python3 fixture_server.py <scratch-dir> <port>
Builds the 30-painting fixture environment in the scratch dir and serves it.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "tests"))

import uvicorn

from artheal.config import load_config
from artheal.server import create_app
from fixture_build import build_config


def main() -> None:
    root = Path(sys.argv[1])
    port = int(sys.argv[2])
    config_path = build_config(root, port=port)
    app = create_app(load_config(config_path))
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()

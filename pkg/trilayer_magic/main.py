"""
Main entry point for trilayer_magic

Run from the repository root:
    python3 -m trilayer_magic.main magic --zeta 7/4
    OR
    python3 trilayer_magic/main.py magic --zeta 7/4
"""
import sys
import os

# Get the directory containing this file
current_dir = os.path.dirname(os.path.abspath(__file__))
# Get the parent directory (repository root)
parent_dir = os.path.dirname(current_dir)

if parent_dir not in sys.path:
    sys.path.insert(0, parent_dir)

from trilayer_magic import __version__
from trilayer_magic.cli import main


def start(argv=None) -> int:
    """Print the banner and hand the arguments to the CLI"""
    print("=" * 50)
    print(f"Trilayer magic-angle toolkit {__version__}")
    print("=" * 50)
    code = main(argv)
    print("=" * 50)
    return code


if __name__ == "__main__":
    sys.exit(start())

import sys
import os

# Add src to python path so we can import packages from it
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), 'src')))

from behaviorclust import __version__
from behaviorclust.cli.app import run

def main():
    if len(sys.argv) == 1:
        print(f"behaviorclust version {__version__}")
        print("Run with --help to list the commands.")
        return 0
    return run(sys.argv[1:])

if __name__ == "__main__":
    sys.exit(main())

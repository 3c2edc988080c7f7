"""Sample paths of the centered log singular values (N=50, t in (0, 10])."""
import sys

from artifact.harness.cli import main

if __name__ == "__main__":
    sys.exit(main(["sample-paths", "--n", "50", *sys.argv[1:]]))

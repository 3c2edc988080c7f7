"""Universality run: products of fixed-spectrum factors against the limit transform."""
import sys

from artifact.harness.cli import main

if __name__ == "__main__":
    sys.exit(main(["universality", *sys.argv[1:]]))

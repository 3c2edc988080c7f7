"""Finite-N Laplace transform against the limit, with per-doubling error ratios."""
import sys

from artifact.harness.cli import main

if __name__ == "__main__":
    sys.exit(main(["convergence", "--n-list", "50,100,200,400", *sys.argv[1:]]))

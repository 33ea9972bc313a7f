"""Stand-in anytime MaxSAT solver for timeout tests.

usage: fake_maxsat.py MODE INSTANCE

Modes: ``anytime`` prints one model then hangs; ``silent`` hangs without a model;
``truncated`` prints a model, then half a model, then hangs; ``crash`` exits 1.
"""

import sys
import time


def n_vars(path):
    with open(path) as fh:
        for line in fh:
            if line.startswith("p wcnf"):
                return int(line.split()[2])
    raise SystemExit("no header")


def main(mode, path):
    n = n_vars(path)
    if mode == "crash":
        print("c something went wrong", flush=True)
        return 1
    if mode in ("anytime", "truncated"):
        print(f"o {n}", flush=True)
        print("v " + " ".join(str(-v) for v in range(1, n + 1)), flush=True)
    if mode == "truncated":
        print(f"o {n - 1}", flush=True)
        print("v " + " ".join(str(v) for v in range(1, n // 2 + 1)), flush=True)
    time.sleep(60)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1], sys.argv[2]))

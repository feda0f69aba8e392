"""Run the acceptance criteria outside pytest and print one line per criterion.

    python3 scripts/run_acceptance.py            # all ten
    python3 scripts/run_acceptance.py 3 8 9      # a subset
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import test_acceptance as acc  # noqa: E402


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("criteria", nargs="*", type=int, choices=range(1, 11), metavar="K")
    args = p.parse_args()
    picked = args.criteria or list(range(1, 11))
    results = [acc.CRITERIA[k - 1]()[0] for k in picked]
    print(f"{sum(results)}/{len(results)} criteria passed (artifacts in {acc.WORK})")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())

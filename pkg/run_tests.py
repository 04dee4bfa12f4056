#!/usr/bin/env python
"""
Test runner for ScoreAG tests.

This script runs the test suite, optionally with coverage reporting, and
provides a summary of the results. Acceptance tests (statistical and trend
checks) only run when asked for explicitly.
"""

import argparse
import os
import subprocess
import sys
from pathlib import Path


def parse_args():
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(description="Run ScoreAG tests with optional coverage reporting")

    parser.add_argument("--unit", action="store_true", help="Run only unit tests")
    parser.add_argument("--integration", action="store_true", help="Run only integration tests")
    parser.add_argument("--acceptance", action="store_true", help="Run the slow acceptance tests")
    parser.add_argument("--all", action="store_true", help="Run unit and integration tests (default)")
    parser.add_argument("--coverage", action="store_true", help="Generate coverage report")
    parser.add_argument("--parallel", "-n", type=int, default=0, help="Worker processes via pytest-xdist")
    parser.add_argument("--verbose", "-v", action="store_true", help="Verbose output")
    parser.add_argument("--threshold", type=int, default=80, help="Coverage threshold percentage (default: 80)")

    return parser.parse_args()


def _suite(name: str, base_cmd, marker: str, coverage: bool) -> bool:
    print(f"\n----- Running {name} Tests -----\n")
    cmd = base_cmd + ["-m", marker]
    if coverage:
        cmd.extend(["--cov=scoreag", "--cov-append", "--cov-report=term", "--cov-report=html"])
    return subprocess.run(cmd, check=False).returncode == 0


def run_tests(args) -> int:
    """Run the selected suites and report overall success."""
    print("\n========== Running ScoreAG Tests ==========\n")

    root_dir = Path(__file__).parent.absolute()
    os.chdir(root_dir)
    os.environ.setdefault("ENVIRONMENT", "test")

    if not any([args.unit, args.integration, args.acceptance, args.all]):
        args.all = True

    base_cmd = [sys.executable, "-m", "pytest"]
    if args.verbose:
        base_cmd.append("-v")
    if args.parallel:
        base_cmd.extend(["-n", str(args.parallel)])

    if args.coverage and os.path.exists(".coverage"):
        os.remove(".coverage")

    all_tests_passed = True
    if args.unit or args.all:
        all_tests_passed &= _suite("Unit", base_cmd, "unit and not acceptance", args.coverage)
    if args.integration or args.all:
        all_tests_passed &= _suite("Integration", base_cmd, "integration and not acceptance", args.coverage)
    if args.acceptance:
        all_tests_passed &= _suite("Acceptance", base_cmd, "acceptance", False)

    if args.coverage and (args.unit or args.integration or args.all):
        print("\n----- Checking Coverage Threshold -----\n")
        result = subprocess.run(["coverage", "report", f"--fail-under={args.threshold}"], check=False)
        if result.returncode != 0:
            print(f"\n❌ Coverage is below the threshold of {args.threshold}%")
            all_tests_passed = False
        else:
            print(f"\n✅ Coverage meets the threshold of {args.threshold}%")

    if all_tests_passed:
        print("\n✅ All tests passed successfully!")
    else:
        print("\n❌ Some tests failed")

    return 0 if all_tests_passed else 1


if __name__ == "__main__":
    sys.exit(run_tests(parse_args()))

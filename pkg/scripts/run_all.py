"""Run every bundled experiment config through the CLI and summarise the results.

Usage: python3 scripts/run_all.py [--out DIR] [--skip-slow]
"""
import argparse
import json
import subprocess
import sys
import time
from pathlib import Path

HERE = Path(__file__).resolve().parent
CONFIGS = HERE / "configs"
RUNS = [
    ("basis", "basis.json", False),
    ("slow", "slow.json", False),
    ("rescale-scan", "family.json", False),
    ("weakkam", "weakkam_free.json", False),
    ("weakkam", "weakkam_pendulum.json", False),
    ("semicont", "semicont.json", True),
    ("nhic", "nhic.json", True),
]


def rk(task, config, out):
    cmd = [sys.executable, "-m", "rkit.cli", task, "--config", str(CONFIGS / config), "--out", str(out)]
    t0 = time.perf_counter()
    proc = subprocess.run(cmd, capture_output=True, text=True)
    return proc.returncode, proc.stdout.strip() or proc.stderr.strip(), time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out")
    ap.add_argument("--skip-slow", action="store_true", help="skip the semicontinuity and cylinder runs")
    args = ap.parse_args()
    worst = 0
    for task, config, slow in RUNS:
        if slow and args.skip_slow:
            continue
        code, msg, dt = rk(task, config, args.out)
        worst = max(worst, code)
        print(f"{task:13s} {config:24s} exit {code} {dt:7.1f} s  {msg}")
    code, msg, _ = rk("report", "family.json", args.out)
    summary = json.loads(msg) if code in (0, 1) else msg
    print("summary:", summary)
    return worst


if __name__ == "__main__":
    sys.exit(main())

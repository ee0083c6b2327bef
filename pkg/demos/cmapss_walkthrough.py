"""Turbofan sensor prediction across engine domains.

Needs the NASA C-MAPSS file train_FD001.txt. Point LIPEM_FD001 at it,
or place it under ./data. Run with: python3 demos/cmapss_walkthrough.py
"""

import os
import sys
import tempfile
from pathlib import Path

from lipem.bench import cmapss_experiment, fast_decay_lip
from lipem.cli import ingest_cmapss, write_report
from lipem.errors import DataNotFoundError


def find_data() -> Path | None:
    candidates = []
    env = os.environ.get("LIPEM_FD001")
    if env:
        candidates += [Path(env), Path(env) / "train_FD001.txt"]
    here = Path(__file__).resolve().parents[1]
    candidates += [here / "data" / "train_FD001.txt", here / "train_FD001.txt"]
    return next((c for c in candidates if c.is_file()), None)


path = find_data()
if path is None:
    print("train_FD001.txt not found; set LIPEM_FD001 or put it in ./data")
    print("the file ships with the NASA C-MAPSS turbofan degradation set")
    sys.exit(0)

engines = ingest_cmapss(path)
lifetimes = {e: len(d) for e, d in engines.items()}
print(f"{len(engines)} engines, lifetimes {min(lifetimes.values())}..{max(lifetimes.values())} cycles")

# a prior that bets on the fastest-decaying engines being informative
lip = fast_decay_lip(engines)
strong = [e for e, p in zip(sorted(engines), lip.pi) if p > 0.5]
print(f"fast-decay prior concentrates on engines {strong}")

# small grid: two cutoffs, three target engines, uniform vs fast-decay
targets = (4, 9, 18)
for source in ("uniform", "fast-decay"):
    reports, curves = cmapss_experiment(
        path.parent, lip_source=source, cutoffs=(0.9, 0.5), engines=targets
    )
    print(f"\nlip_source = {source}")
    for r in sorted(reports, key=lambda r: (r.param_value, r.mean)):
        print(
            f"  cutoff {r.param_value:.1f}  {r.method:<12s} "
            f"rmse {r.mean:7.2f} (stderr {r.stderr:.2f})"
        )
    with tempfile.TemporaryDirectory() as tmp:
        paths = write_report(reports, tmp, f"cmapss_{source.replace('-', '_')}", curves=curves)
        print("  wrote", ", ".join(p.name for p in paths))

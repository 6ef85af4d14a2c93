"""Run every entry of fixtures/expected_exit.json through the installed
``varcalc`` executable twice (with different thread caps) and compare the
reports byte for byte; exit codes are checked against the manifest."""

import argparse
import hashlib
import json
import os
import subprocess
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def sweep(manifest, threads: str):
    env = dict(os.environ, VARCALC_THREADS=threads)
    out = []
    for e in manifest:
        p = subprocess.run(["varcalc", e["command"], str(FIXTURES / e["file"]), *e["flags"]], capture_output=True, env=env)
        out.append((p.returncode, p.stdout))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--threads", nargs=2, default=["1", "4"])
    args = ap.parse_args()
    manifest = json.loads((FIXTURES / "expected_exit.json").read_text())
    a, b = (sweep(manifest, t) for t in args.threads)
    bad = 0
    for e, (ca, oa), (cb, ob) in zip(manifest, a, b):
        same = oa == ob
        code_ok = ca == cb == e["exit"]
        if not (same and code_ok):
            bad += 1
            print(f"MISMATCH {e['command']} {e['file']} {e['flags']}: exit {ca}/{cb} (want {e['exit']}), identical={same}")
    digest = hashlib.sha256(b"".join(o for _, o in a)).hexdigest()
    print(f"{len(manifest)} runs, {bad} mismatches, sha256 of the first sweep {digest}")
    return 1 if bad else 0


if __name__ == "__main__":
    raise SystemExit(main())

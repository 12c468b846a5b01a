"""Run the fast verification suite and print the verdict table.

Every check returns its thresholds and measured values, so a verdict can be
re-derived from the JSON record alone.  The same seed gives the same bytes
for any number of workers.

Run:  python3 demos/checks_suite.py [seed]
"""
import json
import sys

from blowup_lab import checks, reports

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
results = checks.run_suite("fast", seed=seed, workers=4)
print(reports.summary_table(results))
record = checks.to_jsonl(results).splitlines()[0]
print(f"\nfirst JSONL record re-derives to pass: {reports.rederive_verdict(json.loads(record))}")

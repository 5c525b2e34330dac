"""
Trading privacy for accuracy
============================

A slower-decaying noise schedule (larger q) hides each input better but
leaves the agreed value further from the true mean.  Larger c scales both.
"""

import csv
import io

from dpconsensus.experiment import cmd_sweep, parse_config

base = """
n = 500
sigma = 0.8
c = 10
q = 0.9
b = 0.5
rounds = 120
runs = 50
seed = 0
"""

# q at or below 1 - sigma gives no privacy guarantee; those rows are flagged
rows = csv.DictReader(io.StringIO(cmd_sweep(parse_config(base + "sweep = q: [0.2, 0.3, 0.5, 0.7, 0.9, 0.95]"))))
print(f"{'q':>5} {'epsilon':>9} {'radius':>8} {'within r':>9}")
for r in rows:
    eps = f"{float(r['epsilon']):.5f}" if r["epsilon"] else "-"
    print(f"{r['value']:>5} {eps:>9} {float(r['radius']):8.4f} {r['empirical_fraction']:>9}")

# c moves epsilon and radius in opposite directions, proportionally
for r in csv.DictReader(io.StringIO(cmd_sweep(parse_config(base + "sweep = c: [1, 10, 100]")))):
    print(f"c={r['value']:>6}  epsilon={float(r['epsilon']):.5f}  radius={float(r['radius']):.4f}")

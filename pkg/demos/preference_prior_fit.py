"""Elicit pairwise-style choices from a simulated judge and fit a prior.

Run with: python3 demos/preference_prior_fit.py
"""

import tempfile
from pathlib import Path

import numpy as np

from lipem.lip import Lip, WorthVector, fit_lip, read_records, simulate_elicitation

rng = np.random.default_rng(20)

# planted worths: the null option is index 0, sources 1..5 follow
planted = WorthVector(np.array([0.0, 1.5, -1.5, 0.75, -0.75, 1.2]))
print("planted worth gaps:", np.round(planted.alpha[1:] - planted.alpha[0], 3))

# a record presents a subgroup of sources and the judge picks one or
# abstains (choice 0); subgroup sizes cycle through 3, 4, 5
records = simulate_elicitation(planted, [3, 4, 5], 2000, rng)
abstain = sum(1 for r in records if r.choice == 0)
print(f"{len(records)} records simulated, {abstain} abstentions")

worths, lip = fit_lip(records, 5)
gaps = worths.alpha[1:] - worths.alpha[0]
true_gaps = planted.alpha[1:] - planted.alpha[0]
print("fitted worth gaps: ", np.round(gaps, 3))
print("max absolute gap error:", np.round(np.max(np.abs(gaps - true_gaps)), 4))

# the prior itself is the per-source relevance probability
print("relevance prior pi: ", np.round(lip.pi, 4))

# files round trip exactly, so a fit can be archived and reloaded
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "lip.txt"
    lip.write(path)
    again = Lip.read(path)
    print("round trip max |pi - pi'|:", np.max(np.abs(lip.pi - again.pi)))

# zero records fall back to the configured baseline probability
_, empty = fit_lip([], 5, p0=0.01)
print("prior from an empty elicitation:", np.round(empty.pi, 4))

"""
The CRF layer next to brute force
=================================

With three labels and four tokens there are only 81 labellings, so the
forward algorithm and Viterbi can be checked against plain enumeration.
"""

import itertools

import numpy as np
import torch

from stackner.crf import CRF, crf_log_partition, crf_sequence_score, viterbi_decode

torch.manual_seed(0)
crf = CRF(["O", "PER", "LOC"]).double()
with torch.no_grad():
    crf.transitions.normal_()
emissions = torch.randn(4, 3, dtype=torch.float64)

scores = {y: crf_sequence_score(emissions, crf, list(y)).item()
          for y in itertools.product(range(3), repeat=4)}
brute = np.logaddexp.reduce(list(scores.values()))
print("log Z forward:", crf_log_partition(emissions, crf).item())
print("log Z brute  :", brute)

path, score = viterbi_decode(emissions, crf)
best = max(scores, key=scores.get)
print("viterbi:", path, round(score, 6), " brute:", list(best), round(scores[best], 6))

###############################################################################
# Transitions into START and out of STOP are fixed at minus infinity; with
# ``constrained=True`` the IOBES-illegal pairs are masked as well.

print(crf.transition_matrix())

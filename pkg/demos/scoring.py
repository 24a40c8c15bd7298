"""
Entity-level scoring
====================

A predicted mention counts only if class, start and end all agree with gold.
"""

from stackner.corpus import IOB2, Sentence
from stackner.evaluation import ClassScore, ScoreReport, aggregate_runs, score_entities

gold = [Sentence.from_strings("Paris and Rome agreed".split(),
                              ["B-LOC", "O", "B-LOC", "O"], IOB2)]
predicted = [["B-LOC", "O", "O", "B-PER"]]

report = score_entities(gold, predicted)
print(report.table())
print("\n".join(report.lines()))

###############################################################################
# Several runs are summarised by mean and sample standard deviation.

runs = [ScoreReport({}, ClassScore(f, f, f, 0, 0, 0)) for f in (0.90, 0.91, 0.92)]
agg = aggregate_runs(runs)
print(f"{agg.mean:.4f} +- {agg.std:.4f}")

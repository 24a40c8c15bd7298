"""Linear-chain CRF over a per-position score table.

Both parameterizations reduce to a table ``T`` of shape ``(n, K + 1, K)``
where ``T[i, a, b]`` scores moving from label ``a`` at position ``i - 1`` to
label ``b`` at position ``i``; row ``K`` of the second axis is the virtual
START label, so position 0 only reads ``T[0, K, :]``.  A separate vector
``end[b]`` scores leaving the sequence from ``b``.

decomposed:  T[i, a, b] = emissions[i, b] + transition[a, b]
pairwise:    T[i, a, b] = weight[a, b] . emissions[i] + transition[a, b]

Forward algorithm and gold scoring run in torch (batched, differentiable);
Viterbi runs in numpy on a detached table.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import torch
from torch import nn


def _allowed(prev: str | None, curr: str | None) -> bool:
    """IOBES transition legality; ``None`` stands for START (as prev) or STOP."""
    def split(label):
        return ("O", None) if label == "O" else tuple(label.split("-", 1))

    if curr is None:
        return prev is None or split(prev)[0] in ("O", "E", "S")
    cp, cc = split(curr)
    if prev is None:
        return cp in ("O", "B", "S")
    pp, pc = split(prev)
    if pp in ("B", "I"):
        return cp in ("I", "E") and cc == pc
    return cp in ("O", "B", "S")


class CRF(nn.Module):
    """CRF layer with START/STOP virtual labels.

    ``transitions`` is a ``(K + 2, K + 2)`` parameter with START at index
    ``K`` and STOP at ``K + 1``.  Entries that are structurally impossible
    (into START, out of STOP, and optionally illegal IOBES moves) are
    replaced by ``-inf`` in :meth:`transition_matrix`.
    """

    def __init__(self, labels: Sequence[str], pairwise: bool = False,
                 constrained: bool = False):
        super().__init__()
        self.labels = list(labels)
        k = self.num_labels = len(self.labels)
        self.start, self.stop = k, k + 1
        self.pairwise = pairwise
        self.transitions = nn.Parameter(torch.zeros(k + 2, k + 2))
        mask = torch.zeros(k + 2, k + 2, dtype=torch.bool)
        mask[:, self.start] = True
        mask[self.stop, :] = True
        if constrained:
            names = self.labels + [None, None]
            for a in range(k + 1):
                for b in range(k):
                    mask[a, b] |= not _allowed(names[a], names[b])
                mask[a, self.stop] |= not _allowed(names[a], None)
        self.register_buffer("structural", mask, persistent=False)
        if pairwise:
            # starts out equivalent to the decomposed form
            eye = torch.eye(k).expand(k + 1, k, k).clone()
            self.pair_weight = nn.Parameter(eye)

    def transition_matrix(self) -> torch.Tensor:
        return self.transitions.masked_fill(self.structural, -math.inf)

    def score_table(self, emissions: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Map ``(..., n, K)`` emissions to the ``(..., n, K + 1, K)`` table and ``end``."""
        k = self.num_labels
        trans = self.transition_matrix()
        prev = trans[: k + 1, :k]
        if self.pairwise:
            table = torch.einsum("...nd,abd->...nab", emissions, self.pair_weight) + prev
        else:
            table = emissions.unsqueeze(-2) + prev
        return table, trans[:k, self.stop]

    def sequence_score(self, emissions, labels, mask=None):
        table, end = self.score_table(_batched(emissions))
        return _squeeze_like(emissions, table_sequence_score(table, end, _batched(labels, 1), mask))

    def log_partition(self, emissions, mask=None):
        table, end = self.score_table(_batched(emissions))
        return _squeeze_like(emissions, table_log_partition(table, end, mask))

    def neg_log_likelihood(self, emissions, labels, mask=None) -> torch.Tensor:
        """Summed ``log Z - score(gold)`` over a (padded) batch."""
        table, end = self.score_table(_batched(emissions))
        labels = _batched(labels, 1)
        return (table_log_partition(table, end, mask)
                - table_sequence_score(table, end, labels, mask)).sum()

    @torch.no_grad()
    def decode(self, emissions: torch.Tensor, lengths: Sequence[int] | None = None):
        """Viterbi paths and scores for a ``(B, n, K)`` batch (or one ``(n, K)``)."""
        single = emissions.dim() == 2
        table, end = self.score_table(_batched(emissions))
        table = table.double().numpy()
        end = end.double().numpy()
        if lengths is None:
            lengths = [table.shape[1]] * table.shape[0]
        out = [viterbi(table[b, :n], end) for b, n in enumerate(lengths)]
        return out[0] if single else out


def _batched(x, base_dim=2):
    x = torch.as_tensor(x)
    return x.unsqueeze(0) if x.dim() == base_dim else x


def _squeeze_like(ref, value):
    return value[0] if torch.as_tensor(ref).dim() == 2 else value


def table_sequence_score(table: torch.Tensor, end: torch.Tensor, labels: torch.Tensor,
                         mask: torch.Tensor | None = None) -> torch.Tensor:
    """Score of ``labels`` under ``table`` for a ``(B, n, K + 1, K)`` batch."""
    bsz, n = labels.shape
    k = table.shape[-1]
    if mask is None:
        mask = torch.ones(bsz, n, dtype=torch.bool)
    labels = labels.masked_fill(~mask, 0)
    prev = torch.cat([torch.full((bsz, 1), k, dtype=labels.dtype), labels[:, :-1]], dim=1)
    per_pos = table[torch.arange(bsz)[:, None], torch.arange(n)[None, :], prev, labels]
    score = per_pos.masked_fill(~mask, 0.0).sum(dim=1)
    last = labels.gather(1, (mask.sum(dim=1) - 1).unsqueeze(1)).squeeze(1)
    return score + end[last]


def table_log_partition(table: torch.Tensor, end: torch.Tensor,
                        mask: torch.Tensor | None = None) -> torch.Tensor:
    """Forward algorithm in log space; returns ``(B,)`` log normalizers."""
    bsz, n, _, k = table.shape
    if mask is None:
        mask = torch.ones(bsz, n, dtype=torch.bool)
    alpha = table[:, 0, k, :]
    for i in range(1, n):
        step = torch.logsumexp(alpha.unsqueeze(2) + table[:, i, :k, :], dim=1)
        alpha = torch.where(mask[:, i].unsqueeze(1), step, alpha)
    return torch.logsumexp(alpha + end, dim=1)


def viterbi(table: np.ndarray, end: np.ndarray) -> tuple[list[int], float]:
    """Best path through one ``(n, K + 1, K)`` table; ties go to the lowest index."""
    n, _, k = table.shape
    delta = table[0, k].copy()
    back = np.zeros((n, k), dtype=np.int64)
    for i in range(1, n):
        cand = delta[:, None] + table[i, :k]
        back[i] = np.argmax(cand, axis=0)
        delta = cand[back[i], np.arange(k)]
    final = delta + end
    best = int(np.argmax(final))
    path = [best]
    for i in range(n - 1, 0, -1):
        best = int(back[i, best])
        path.append(best)
    path.reverse()
    return path, float(final[path[-1]])


# Functional surface mirroring the module contract ---------------------------

def crf_sequence_score(emissions: torch.Tensor, crf: CRF, labels) -> torch.Tensor:
    labels = torch.as_tensor(labels, dtype=torch.long)
    if labels.numel() and (labels.min() < 0 or labels.max() >= crf.num_labels):
        raise IndexError(f"label index out of range [0, {crf.num_labels})")
    return crf.sequence_score(emissions, labels)


def crf_log_partition(emissions: torch.Tensor, crf: CRF) -> torch.Tensor:
    return crf.log_partition(emissions)


def crf_neg_log_likelihood(batch, crf: CRF) -> torch.Tensor:
    batch = list(batch)
    if not batch:
        raise ValueError("batch must be non-empty")
    return sum(crf.neg_log_likelihood(e, torch.as_tensor(y, dtype=torch.long))
               for e, y in batch)


def viterbi_decode(emissions: torch.Tensor, crf: CRF) -> tuple[list[int], float]:
    return crf.decode(emissions)

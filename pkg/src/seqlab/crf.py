"""Linear-chain CRF inference and loss kernels.

Everything runs in log space with log-sum-exp stabilization.  A path score is

    s(y) = start[y_0] + sum_i em[i, y_i] + sum_i trans[y_i, y_{i+1}] + stop[y_{N-1}]

Structural BIO constraints are carried by the transition table as boolean
masks and applied only when a kernel is called with ``constrained=True``;
decoding defaults to constrained, scoring of supplied sequences does not
(completed weak labels may be BIO-invalid yet must receive a finite loss).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .core import TagSet, bio_start_mask, bio_transition_mask

NEG_INF = -np.inf

# Clamp for the unlikelihood loss: log P(y) is capped at log(1 - UNLIKELIHOOD_EPS)
# so -log(1 - P(y)) and its gradient stay finite as P(y) -> 1.
UNLIKELIHOOD_EPS = 1e-6


@dataclass(frozen=True)
class TransitionTable:
    """Transition scores plus the structural BIO masks.

    ``allowed_trans[i, j]`` permits label j to follow label i; ``allowed_start``
    permits a label at position 0.  Masked entries act as -inf when a kernel
    runs constrained.
    """

    trans: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    allowed_trans: np.ndarray
    allowed_start: np.ndarray

    def __post_init__(self) -> None:
        L = self.trans.shape[0]
        if self.trans.shape != (L, L):
            raise ValueError("trans must be square")
        for name in ("start", "stop", "allowed_start"):
            if getattr(self, name).shape != (L,):
                raise ValueError(f"{name} must have shape ({L},)")
        if self.allowed_trans.shape != (L, L):
            raise ValueError("allowed_trans must match trans shape")
        if not (np.all(np.isfinite(self.trans)) and np.all(np.isfinite(self.start)) and np.all(np.isfinite(self.stop))):
            raise ValueError("transition scores must be finite")

    @property
    def num_labels(self) -> int:
        return self.trans.shape[0]

    @classmethod
    def zeros(cls, num_labels: int, tags: TagSet | None = None) -> "TransitionTable":
        """All-zero scores; masks from ``tags`` when given, else fully permissive."""
        L = num_labels
        if tags is not None:
            if tags.num_labels != L:
                raise ValueError("tag set size does not match num_labels")
            allowed_t, allowed_s = bio_transition_mask(tags), bio_start_mask(tags)
        else:
            allowed_t, allowed_s = np.ones((L, L), dtype=bool), np.ones(L, dtype=bool)
        return cls(np.zeros((L, L)), np.zeros(L), np.zeros(L), allowed_t, allowed_s)

    def copy(self) -> "TransitionTable":
        return TransitionTable(
            self.trans.copy(), self.start.copy(), self.stop.copy(),
            self.allowed_trans.copy(), self.allowed_start.copy(),
        )

    def effective(self, constrained: bool) -> Tuple[np.ndarray, np.ndarray]:
        """(trans, start) with masked entries replaced by -inf when constrained."""
        if not constrained:
            return self.trans, self.start
        trans = np.where(self.allowed_trans, self.trans, NEG_INF)
        start = np.where(self.allowed_start, self.start, NEG_INF)
        return trans, start


@dataclass(frozen=True)
class CrfGrads:
    """Gradients of a scalar loss w.r.t. the lattice parameters."""

    d_em: np.ndarray      # (N, L)
    d_trans: np.ndarray   # (L, L)
    d_start: np.ndarray   # (L,)
    d_stop: np.ndarray    # (L,)

    def scaled(self, c: float) -> "CrfGrads":
        return CrfGrads(c * self.d_em, c * self.d_trans, c * self.d_start, c * self.d_stop)


def _check_dims(em: np.ndarray, tr: TransitionTable) -> None:
    if em.ndim != 2 or em.shape[0] < 1:
        raise ValueError(f"emission matrix must be (N, L) with N >= 1, got {em.shape}")
    if em.shape[1] != tr.num_labels:
        raise ValueError(f"emission width {em.shape[1]} != num labels {tr.num_labels}")


def _check_path(em: np.ndarray, y: Sequence[int]) -> np.ndarray:
    ya = np.asarray(y, dtype=np.intp)
    if ya.shape != (em.shape[0],):
        raise ValueError(f"path length {ya.shape} does not match {em.shape[0]} tokens")
    if ya.size and (ya.min() < 0 or ya.max() >= em.shape[1]):
        raise ValueError("path contains out-of-range label ids")
    return ya


def _lse(a: np.ndarray, axis: int) -> np.ndarray:
    """log-sum-exp that tolerates -inf blocks without producing NaNs."""
    m = np.max(a, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m_safe), axis=axis)) + np.squeeze(m_safe, axis=axis)
    return out


def sequence_score(em: np.ndarray, tr: TransitionTable, y: Sequence[int]) -> float:
    """Unnormalized log score s(y) of one label path."""
    _check_dims(em, tr)
    ya = _check_path(em, y)
    s = tr.start[ya[0]] + em[0, ya[0]]
    for i in range(1, len(ya)):
        s += tr.trans[ya[i - 1], ya[i]] + em[i, ya[i]]
    s += tr.stop[ya[-1]]
    return float(s)


def _forward(em: np.ndarray, trans: np.ndarray, start: np.ndarray, stop: np.ndarray) -> Tuple[np.ndarray, float]:
    N = em.shape[0]
    alpha = np.empty_like(em)
    alpha[0] = start + em[0]
    for i in range(1, N):
        alpha[i] = _lse(alpha[i - 1][:, None] + trans, axis=0) + em[i]
    return alpha, float(_lse(alpha[-1] + stop, axis=0))


def _backward(em: np.ndarray, trans: np.ndarray, stop: np.ndarray) -> np.ndarray:
    N = em.shape[0]
    beta = np.empty_like(em)
    beta[-1] = stop
    for i in range(N - 2, -1, -1):
        beta[i] = _lse(trans + (em[i + 1] + beta[i + 1])[None, :], axis=1)
    return beta


def log_partition(em: np.ndarray, tr: TransitionTable, constrained: bool = False) -> float:
    """log sum over all paths of exp(s(y)), by the forward algorithm."""
    _check_dims(em, tr)
    trans, start = tr.effective(constrained)
    return _forward(em, trans, start, tr.stop)[1]


def _path_obeys_mask(tr: TransitionTable, ya: np.ndarray) -> bool:
    if not tr.allowed_start[ya[0]]:
        return False
    return all(tr.allowed_trans[ya[i - 1], ya[i]] for i in range(1, len(ya)))


def nll(em: np.ndarray, tr: TransitionTable, y: Sequence[int], constrained: bool = False) -> float:
    """Negative log-likelihood -log P(y); always >= 0."""
    _check_dims(em, tr)
    ya = _check_path(em, y)
    if constrained and not _path_obeys_mask(tr, ya):
        raise ValueError("label path crosses a masked transition; disable the mask to score it")
    return log_partition(em, tr, constrained) - sequence_score(em, tr, ya)


def log_unlikelihood(em: np.ndarray, tr: TransitionTable, y: Sequence[int], constrained: bool = False) -> float:
    """-log(1 - P(y)), with log P(y) clamped to log(1 - eps) so the value is finite."""
    log_p = min(-nll(em, tr, y, constrained), np.log1p(-UNLIKELIHOOD_EPS))
    return float(-np.log1p(-np.exp(log_p)))


def viterbi(em: np.ndarray, tr: TransitionTable, constrained: bool = True) -> Tuple[Tuple[int, ...], float]:
    """Best path and its score; ties break toward the lower label id.

    The returned score is recomputed with :func:`sequence_score`, so it equals
    the path's score exactly.
    """
    _check_dims(em, tr)
    trans, start = tr.effective(constrained)
    N = em.shape[0]
    delta = start + em[0]
    backptr = np.empty((N, em.shape[1]), dtype=np.intp)
    for i in range(1, N):
        cand = delta[:, None] + trans
        backptr[i] = np.argmax(cand, axis=0)
        delta = cand[backptr[i], np.arange(em.shape[1])] + em[i]
    last = int(np.argmax(delta + tr.stop))
    path = [last]
    for i in range(N - 1, 0, -1):
        last = int(backptr[i, last])
        path.append(last)
    path.reverse()
    y = tuple(path)
    return y, sequence_score(em, tr, y)


def _fb(
    em: np.ndarray, trans: np.ndarray, start: np.ndarray, stop: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, float]:
    """One forward-backward sweep: token marginals, pairwise marginals, log Z."""
    alpha, log_z = _forward(em, trans, start, stop)
    beta = _backward(em, trans, stop)
    token = np.exp(alpha + beta - log_z)
    N = em.shape[0]
    pair = np.empty((max(N - 1, 0), em.shape[1], em.shape[1]))
    for i in range(N - 1):
        joint = alpha[i][:, None] + trans + (em[i + 1] + beta[i + 1])[None, :] - log_z
        pair[i] = np.exp(joint)
    return token, pair, log_z


def marginals(
    em: np.ndarray, tr: TransitionTable, constrained: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """Forward-backward posteriors: token marginals (N, L) and pairwise (N-1, L, L)."""
    _check_dims(em, tr)
    trans, start = tr.effective(constrained)
    token, pair, _ = _fb(em, trans, start, tr.stop)
    return token, pair


def constrained_log_partition(em: np.ndarray, tr: TransitionTable, allowed: np.ndarray) -> float:
    """log sum over paths whose label at each position lies in the allowed set."""
    _check_dims(em, tr)
    allowed = np.asarray(allowed, dtype=bool)
    if allowed.shape != em.shape:
        raise ValueError(f"allowed mask shape {allowed.shape} != emissions {em.shape}")
    if not allowed.any(axis=1).all():
        raise ValueError("every token needs at least one allowed label")
    return log_partition(np.where(allowed, em, NEG_INF), tr)


def nll_and_grad(em: np.ndarray, tr: TransitionTable, y: Sequence[int]) -> Tuple[float, CrfGrads]:
    """NLL and its gradient (expected counts minus observed counts)."""
    _check_dims(em, tr)
    ya = _check_path(em, y)
    token, pair, log_z = _fb(em, tr.trans, tr.start, tr.stop)
    loss = log_z - sequence_score(em, tr, ya)
    N, L = em.shape
    d_em = token.copy()
    d_em[np.arange(N), ya] -= 1.0
    d_trans = pair.sum(axis=0)
    for i in range(1, N):
        d_trans[ya[i - 1], ya[i]] -= 1.0
    d_start = token[0].copy()
    d_start[ya[0]] -= 1.0
    d_stop = token[-1].copy()
    d_stop[ya[-1]] -= 1.0
    return float(loss), CrfGrads(d_em, d_trans, d_start, d_stop)


def _unlikelihood_factor(loss_nll: float) -> float:
    """d l-minus / d logP factor P/(1-P), with the clamp applied to log P."""
    log_p = min(-loss_nll, np.log1p(-UNLIKELIHOOD_EPS))
    p = np.exp(log_p)
    return float(p / (1.0 - p))


def unlikelihood_and_grad(em: np.ndarray, tr: TransitionTable, y: Sequence[int]) -> Tuple[float, CrfGrads]:
    """-log(1 - P(y)) and its gradient, sharing one forward-backward pass with nll."""
    loss_nll, g = nll_and_grad(em, tr, y)
    log_p = min(-loss_nll, np.log1p(-UNLIKELIHOOD_EPS))
    loss = float(-np.log1p(-np.exp(log_p)))
    return loss, g.scaled(-_unlikelihood_factor(loss_nll))


def grad_nll(em: np.ndarray, tr: TransitionTable, y: Sequence[int]) -> CrfGrads:
    return nll_and_grad(em, tr, y)[1]


def grad_log_unlikelihood(em: np.ndarray, tr: TransitionTable, y: Sequence[int]) -> CrfGrads:
    return unlikelihood_and_grad(em, tr, y)[1]


def partial_nll_and_grad(
    em: np.ndarray, tr: TransitionTable, allowed: np.ndarray
) -> Tuple[float, CrfGrads]:
    """Marginal NLL -log P(y in allowed set) and its gradient.

    The gradient is the difference between unconstrained posteriors and
    posteriors over the allowed lattice; entries at disallowed positions get
    zero from the constrained side.
    """
    _check_dims(em, tr)
    allowed = np.asarray(allowed, dtype=bool)
    if allowed.shape != em.shape:
        raise ValueError(f"allowed mask shape {allowed.shape} != emissions {em.shape}")
    if not allowed.any(axis=1).all():
        raise ValueError("every token needs at least one allowed label")
    token_f, pair_f, log_z_f = _fb(em, tr.trans, tr.start, tr.stop)
    em_c = np.where(allowed, em, NEG_INF)
    token_c, pair_c, log_z_c = _fb(em_c, tr.trans, tr.start, tr.stop)
    loss = log_z_f - log_z_c
    grads = CrfGrads(
        token_f - token_c,
        pair_f.sum(axis=0) - pair_c.sum(axis=0),
        token_f[0] - token_c[0],
        token_f[-1] - token_c[-1],
    )
    return float(loss), grads


def noise_aware_loss_and_grad(
    em: np.ndarray, tr: TransitionTable, y: Sequence[int], confidence: float
) -> Tuple[float, CrfGrads]:
    """conf * nll(y) + (1 - conf) * log_unlikelihood(y), one lattice pass.

    The combined gradient collapses to a single scalar multiple of the nll
    gradient: (conf - (1 - conf) * P/(1-P)) * grad_nll.
    """
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence must lie in [0, 1], got {confidence}")
    loss_nll, g = nll_and_grad(em, tr, y)
    log_p = min(-loss_nll, np.log1p(-UNLIKELIHOOD_EPS))
    loss_unl = float(-np.log1p(-np.exp(log_p)))
    loss = confidence * loss_nll + (1.0 - confidence) * loss_unl
    coeff = confidence - (1.0 - confidence) * _unlikelihood_factor(loss_nll)
    return float(loss), g.scaled(coeff)

"""Joint iterative message-passing baseline (turbo equalization).

A BCJR detector on the channel trellis exchanges extrinsic bit LLRs with a
flooding sum-product LDPC decoder.  LLRs are ``log P(x=0) / P(x=1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .code import ParityCheckCode, is_codeword
from .trellis import Trellis

_TANH_CLIP = 1.0 - 1e-15


def _log_bit_prob(llr: np.ndarray) -> np.ndarray:
    """``(n, 2)`` array of log P(x=0), log P(x=1)."""
    return np.stack([-np.logaddexp(0.0, -llr), -np.logaddexp(0.0, llr)], axis=1)


def _padded(groups) -> tuple[np.ndarray, np.ndarray]:
    width = max(1, max(len(g) for g in groups))
    table = np.zeros((len(groups), width), dtype=np.intp)
    pad = np.ones((len(groups), width), dtype=bool)
    for r, g in enumerate(groups):
        table[r, : len(g)] = g
        pad[r, : len(g)] = False
    return table, pad


@lru_cache(maxsize=8)
def _fb_tables(trellis: Trellis):
    """Per-time incoming/outgoing edge tables and per-time bit-0 / bit-1 edge tables."""
    S = trellis.channel.num_states
    inc = [_padded([trellis.incoming(t, j) for j in range(S)]) for t in range(trellis.n)]
    out = [_padded([trellis.outgoing(t, j) for j in range(S)]) for t in range(trellis.n)]
    by_bit = []
    for x in (0, 1):
        groups = []
        for t in range(trellis.n):
            sl = trellis.edges_at(t)
            groups.append(np.flatnonzero(trellis.bit[sl] == x) + sl.start)
        by_bit.append(_padded(groups))
    return inc, out, by_bit


def _reduce(vals: np.ndarray, pad: np.ndarray) -> np.ndarray:
    vals[pad] = -np.inf
    return np.logaddexp.reduce(vals, axis=-1)


def _normalize(v: np.ndarray) -> np.ndarray:
    top = v.max()
    return v - top if np.isfinite(top) else v


def forward_backward(trellis: Trellis, y, sigma: float, priors=None) -> np.ndarray:
    """Extrinsic bit LLRs of the channel detector given a-priori LLRs."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    y = np.asarray(y, dtype=float)
    n, S = trellis.n, trellis.channel.num_states
    priors = np.zeros(n) if priors is None else np.asarray(priors, dtype=float)
    if not np.all(np.isfinite(priors)):
        raise ValueError("priors must be finite")
    inc, out, by_bit = _fb_tables(trellis)
    logp = _log_bit_prob(priors)
    chan = -((y[trellis.time] - trellis.out) ** 2) / (2 * sigma**2) + trellis.logprob
    gamma = chan + logp[trellis.time, trellis.bit]

    # exact log-sum-exp recursions, shifted to a zero maximum at every step
    alpha = np.full((n + 1, S), -np.inf)
    alpha[0, trellis.reachable[0]] = 0.0
    for t in range(n):
        tab, pad = inc[t]
        alpha[t + 1] = _normalize(_reduce(alpha[t, trellis.src[tab]] + gamma[tab], pad))
    beta = np.empty((n + 1, S))
    beta[n] = 0.0
    for t in range(n - 1, -1, -1):
        tab, pad = out[t]
        beta[t] = _normalize(_reduce(gamma[tab] + beta[t + 1, trellis.dst[tab]], pad))

    # leave the bit's own prior out so the result is extrinsic by construction
    metric = alpha[trellis.time, trellis.src] + chan + beta[trellis.time + 1, trellis.dst]
    (t0, p0), (t1, p1) = by_bit
    return _reduce(metric[t0], p0) - _reduce(metric[t1], p1)


class SumProductDecoder:
    """Flooding sum-product decoder with exact (tanh-rule) check updates."""

    def __init__(self, code: ParityCheckCode):
        self.code = code
        width = max(len(c) for c in code.checks)
        self.var = np.zeros((code.m, width), dtype=np.intp)
        self.mask = np.zeros((code.m, width), dtype=bool)
        for r, c in enumerate(code.checks):
            self.var[r, : len(c)] = c
            self.mask[r, : len(c)] = True
        self._flat_var = self.var[self.mask]

    def _sum_at_vars(self, msgs: np.ndarray) -> np.ndarray:
        return np.bincount(self._flat_var, weights=msgs[self.mask], minlength=self.code.n)

    def check_update(self, v2c: np.ndarray) -> np.ndarray:
        """Exact boxplus of all other inputs on each check edge."""
        t = np.where(self.mask, np.tanh(0.5 * v2c), 1.0)
        ones = np.ones((t.shape[0], 1))
        before = np.cumprod(np.hstack([ones, t[:, :-1]]), axis=1)
        after = np.cumprod(np.hstack([ones, t[:, :0:-1]]), axis=1)[:, ::-1]
        prod = np.clip(before * after, -_TANH_CLIP, _TANH_CLIP)
        return np.where(self.mask, 2.0 * np.arctanh(prod), 0.0)

    def run(self, llr, iters: int, c2v=None, stop_on_valid: bool = True):
        """Returns ``(extrinsic, hard, valid, c2v)``; ``c2v`` can seed a later call."""
        if iters < 1:
            raise ValueError("need at least one iteration")
        llr = np.asarray(llr, dtype=float)
        c2v = np.zeros(self.var.shape) if c2v is None else c2v
        for _ in range(iters):
            total = llr + self._sum_at_vars(c2v)
            v2c = np.where(self.mask, total[self.var] - c2v, 0.0)
            c2v = self.check_update(v2c)
            ext = self._sum_at_vars(c2v)
            hard = ((llr + ext) < 0).astype(np.uint8)
            valid = is_codeword(self.code, hard)
            if valid and stop_on_valid:
                break
        return ext, hard, valid, c2v


def spa_ldpc(code: ParityCheckCode, llrs, iters: int):
    """Sum-product decoding; returns ``(extrinsic LLRs, hard decision, valid)``."""
    ext, hard, valid, _ = SumProductDecoder(code).run(llrs, iters)
    return ext, hard, valid


@dataclass(frozen=True)
class IterSchedule:
    outer_iters: int = 50
    inner_bp_iters: int = 3
    stop_on_valid: bool = True

    def __post_init__(self):
        if self.outer_iters < 1 or self.inner_bp_iters < 1:
            raise ValueError("iteration counts must be at least 1")


@dataclass(frozen=True)
class JimpdOutcome:
    bits: np.ndarray
    valid: bool
    iterations: int


def jimpd_decode(trellis: Trellis, code: ParityCheckCode, y, sigma: float,
                 schedule: IterSchedule = IterSchedule(), spa: SumProductDecoder | None = None) -> JimpdOutcome:
    """Alternate BCJR and sum-product, passing extrinsics; check messages persist across rounds."""
    if code.n != trellis.n or len(y) != trellis.n:
        raise ValueError("code, trellis and received block lengths differ")
    spa = spa or SumProductDecoder(code)
    from_code = np.zeros(trellis.n)
    c2v = None
    hard = np.zeros(trellis.n, dtype=np.uint8)
    valid = False
    for rnd in range(1, schedule.outer_iters + 1):
        from_channel = forward_backward(trellis, y, sigma, from_code)
        from_code, hard, valid, c2v = spa.run(from_channel, schedule.inner_bp_iters, c2v,
                                              stop_on_valid=schedule.stop_on_valid)
        if valid and schedule.stop_on_valid:
            return JimpdOutcome(hard, True, rnd)
    return JimpdOutcome(hard, valid, schedule.outer_iters)

"""Finite-state channels, their trellises, branch metrics and a Viterbi decoder.

Times are 0-based throughout the package: an edge with ``time == 0`` leaves
the initial state of the block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Transition:
    src: int
    bit: int
    dst: int
    out: float
    prob: float = 1.0


@dataclass(frozen=True)
class ChannelModel:
    """A binary-input finite-state channel with additive Gaussian noise.

    ``initial_state`` is either a state index or a probability vector over
    the states.  ``prob`` on a transition is ``P(s' | x, s)``; for an ISI
    channel every ``(s, x)`` has exactly one transition with probability 1.
    """

    num_states: int
    transitions: tuple[Transition, ...]
    initial_state: int | tuple[float, ...] = 0
    name: str = "custom"

    def __post_init__(self):
        if self.num_states < 1:
            raise ValueError("num_states must be positive")
        trans = tuple(t if isinstance(t, Transition) else Transition(*t) for t in self.transitions)
        object.__setattr__(self, "transitions", trans)
        for t in trans:
            if not (0 <= t.src < self.num_states and 0 <= t.dst < self.num_states):
                raise ValueError(f"transition {t} references an unknown state")
            if t.bit not in (0, 1):
                raise ValueError(f"transition {t} has non-binary input")
            if not 0.0 < t.prob <= 1.0:
                raise ValueError(f"transition {t} has probability outside (0, 1]")
        for s in range(self.num_states):
            for x in (0, 1):
                mass = sum(t.prob for t in trans if t.src == s and t.bit == x)
                if abs(mass - 1.0) > 1e-9:
                    raise ValueError(f"transitions from state {s} with input {x} carry mass {mass}, not 1")
        init = self.initial_state
        if not isinstance(init, (int, np.integer)):
            init = tuple(float(v) for v in init)
            if len(init) != self.num_states or min(init) < 0 or abs(sum(init) - 1.0) > 1e-12:
                raise ValueError("initial state distribution must be a probability vector over the states")
            object.__setattr__(self, "initial_state", init)
        elif not 0 <= init < self.num_states:
            raise ValueError(f"initial state {init} out of range")

    @property
    def is_isi(self) -> bool:
        """True when the next state is a deterministic function of (input, state)."""
        keys = [(t.src, t.bit) for t in self.transitions]
        return len(keys) == len(set(keys))

    @property
    def start_distribution(self) -> np.ndarray:
        if isinstance(self.initial_state, tuple):
            return np.array(self.initial_state)
        p = np.zeros(self.num_states)
        p[self.initial_state] = 1.0
        return p

    def step(self, state: int, bit: int, rng: np.random.Generator | None = None) -> tuple[int, float]:
        """Next state and noiseless output for one input bit."""
        options = [t for t in self.transitions if t.src == state and t.bit == bit]
        if len(options) == 1:
            return options[0].dst, options[0].out
        if rng is None:
            raise ValueError("stochastic transition needs an rng")
        k = rng.choice(len(options), p=[t.prob for t in options])
        return options[k].dst, options[k].out

    def output_power(self) -> float:
        """Mean noiseless output power under i.i.d. uniform inputs at stationarity."""
        S = self.num_states
        M = np.zeros((S, S))
        power = np.zeros(S)
        for t in self.transitions:
            M[t.src, t.dst] += 0.5 * t.prob
            power[t.src] += 0.5 * t.prob * t.out**2
        # stationary distribution: pi (M - I) = 0, sum(pi) = 1
        A = np.vstack([M.T - np.eye(S), np.ones(S)])
        rhs = np.zeros(S + 1)
        rhs[-1] = 1.0
        pi = np.linalg.lstsq(A, rhs, rcond=None)[0]
        return float(pi @ power)


def _antipodal(bit: int) -> float:
    return 2.0 * bit - 1.0


def make_dicode(precoded: bool = True, start_state: int | None = 0) -> ChannelModel:
    """Dicode channel ``1 - D`` with antipodal mapping 0 -> -1, 1 -> +1.

    The state is the previous channel symbol.  With ``precoded`` the input is
    differentially encoded first, so a 0 input keeps the state and yields 0.
    ``start_state=None`` gives a uniform initial state.
    """
    trans = []
    for s in (0, 1):
        for x in (0, 1):
            sym = x ^ s if precoded else x
            trans.append(Transition(s, x, sym, _antipodal(sym) - _antipodal(s)))
    init = (0.5, 0.5) if start_state is None else start_state
    return ChannelModel(2, tuple(trans), init, name="pdic" if precoded else "dic")


def make_memoryless(start_state: int = 0) -> ChannelModel:
    """Single-state binary antipodal AWGN channel."""
    trans = (Transition(0, 0, 0, -1.0), Transition(0, 1, 0, 1.0))
    return ChannelModel(1, trans, start_state, name="bpsk")


BUILTIN_CHANNELS = {
    "pdic": lambda: make_dicode(True, 0),
    "dic": lambda: make_dicode(False, 0),
    "bpsk": make_memoryless,
}


def parse_channel(text: str, name: str = "custom") -> ChannelModel:
    """Parse the channel description format.

    Lines (``#`` starts a comment)::

        states 2
        start 0              # or: start uniform | start 0.25 0.75
        transition 0 1 1 2.0 [prob]   # src bit dst output
    """
    num_states = None
    start: int | tuple[float, ...] | str = 0
    trans = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        try:
            if key == "states":
                num_states = int(rest[0])
            elif key == "start":
                if rest == ["uniform"]:
                    start = "uniform"
                elif len(rest) == 1:
                    start = int(rest[0])
                else:
                    start = tuple(float(v) for v in rest)
            elif key == "transition":
                src, bit, dst = (int(v) for v in rest[:3])
                prob = float(rest[4]) if len(rest) > 4 else 1.0
                trans.append(Transition(src, bit, dst, float(rest[3]), prob))
            else:
                raise ValueError(f"unknown key {key!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    if num_states is None:
        raise ValueError("channel description lacks a 'states' line")
    if start == "uniform":
        start = tuple([1.0 / num_states] * num_states)
    return ChannelModel(num_states, tuple(trans), start, name=name)


def format_channel(channel: ChannelModel) -> str:
    lines = [f"states {channel.num_states}"]
    if isinstance(channel.initial_state, tuple):
        lines.append("start " + " ".join(repr(p) for p in channel.initial_state))
    else:
        lines.append(f"start {channel.initial_state}")
    for t in channel.transitions:
        lines.append(f"transition {t.src} {t.bit} {t.dst} {t.out!r} {t.prob!r}")
    return "\n".join(lines) + "\n"


def load_channel(spec: str) -> ChannelModel:
    """Return a built-in channel by name or read a description file."""
    if spec in BUILTIN_CHANNELS:
        return BUILTIN_CHANNELS[spec]()
    path = Path(spec)
    return parse_channel(path.read_text(), name=path.stem)


@dataclass(frozen=True, eq=False)
class Trellis:
    """Time expansion of a channel over ``n`` uses.

    Edge arrays are sorted by time, then source state, then input bit, then
    sink state.  Edges at time ``t`` occupy ``offsets[t]:offsets[t+1]``.
    """

    channel: ChannelModel
    n: int
    time: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    bit: np.ndarray
    out: np.ndarray
    logprob: np.ndarray  # log P(s'|x,s), plus log P(s) on time-0 edges
    offsets: np.ndarray
    reachable: np.ndarray  # (n+1, S) bool
    _incoming: list = field(repr=False, default_factory=list)
    _tables: list = field(repr=False, default_factory=list)
    _outgoing: list = field(repr=False, default_factory=list)

    @property
    def num_edges(self) -> int:
        return len(self.time)

    def edges_at(self, t: int) -> slice:
        return slice(int(self.offsets[t]), int(self.offsets[t + 1]))

    def incoming(self, t: int, state: int) -> np.ndarray:
        """Edges at time ``t`` that end in ``state`` (i.e. enter node t+1)."""
        sl = self.edges_at(t)
        idx = np.arange(sl.start, sl.stop)
        return idx[self.dst[sl] == state]

    def outgoing(self, t: int, state: int) -> np.ndarray:
        sl = self.edges_at(t)
        idx = np.arange(sl.start, sl.stop)
        return idx[self.src[sl] == state]

    def path_for_bits(self, bits, start: int | None = None) -> np.ndarray:
        """Edge indices of the unique path an input sequence drives (ISI channels)."""
        bits = np.asarray(bits, dtype=int)
        if len(bits) != self.n:
            raise ValueError("bit vector length differs from the trellis length")
        if start is None:
            p0 = self.channel.start_distribution
            start = int(np.argmax(p0))
        state = start
        path = np.empty(self.n, dtype=int)
        for t, x in enumerate(bits):
            sl = self.edges_at(t)
            hit = np.flatnonzero((self.src[sl] == state) & (self.bit[sl] == x))
            if len(hit) != 1:
                raise ValueError(f"no unique edge for bit {x} from state {state} at time {t}")
            e = sl.start + hit[0]
            path[t] = e
            state = self.dst[e]
        return path

    def path_flow(self, path) -> np.ndarray:
        g = np.zeros(self.num_edges)
        g[np.asarray(path)] = 1.0
        return g


def build_trellis(channel: ChannelModel, n: int) -> Trellis:
    """Unroll ``channel`` over ``n`` uses, dropping edges out of unreachable states."""
    if n < 1:
        raise ValueError("block length must be at least 1")
    S = channel.num_states
    prior = channel.start_distribution
    trans = sorted(channel.transitions, key=lambda t: (t.src, t.bit, t.dst))
    reach = np.zeros((n + 1, S), dtype=bool)
    reach[0] = prior > 0
    cols: list[tuple] = []
    offsets = [0]
    for t in range(n):
        for tr in trans:
            if not reach[t, tr.src]:
                continue
            lp = math.log(tr.prob)
            if t == 0:
                lp += math.log(prior[tr.src])
            cols.append((t, tr.src, tr.dst, tr.bit, tr.out, lp))
            reach[t + 1, tr.dst] = True
        offsets.append(len(cols))
    arr = list(zip(*cols))
    trellis = Trellis(
        channel=channel,
        n=n,
        time=np.array(arr[0], dtype=np.intp),
        src=np.array(arr[1], dtype=np.intp),
        dst=np.array(arr[2], dtype=np.intp),
        bit=np.array(arr[3], dtype=np.int8),
        out=np.array(arr[4], dtype=float),
        logprob=np.array(arr[5], dtype=float),
        offsets=np.array(offsets, dtype=np.intp),
        reachable=reach,
    )
    # padded (S, D) incoming-edge tables per time, ascending edge index per row
    for t in range(n):
        rows = [trellis.incoming(t, j) for j in range(S)]
        width = max(1, max(len(r) for r in rows))
        table = np.full((S, width), -1, dtype=np.intp)
        for j, r in enumerate(rows):
            table[j, : len(r)] = r
        trellis._incoming.append(table)
        pad = table < 0
        safe = np.where(pad, 0, table)
        trellis._tables.append((safe, trellis.src[safe], pad if pad.any() else None))
        rows = [trellis.outgoing(t, j) for j in range(S)]
        width = max(1, max(len(r) for r in rows))
        table = np.full((S, width), -1, dtype=np.intp)
        for j, r in enumerate(rows):
            table[j, : len(r)] = r
        trellis._outgoing.append(table)
    for arr_ in (trellis.time, trellis.src, trellis.dst, trellis.bit, trellis.out, trellis.logprob):
        arr_.flags.writeable = False
    return trellis


@dataclass(frozen=True)
class BranchCosts:
    values: np.ndarray
    mode: str

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def branch_costs(trellis: Trellis, y, sigma: float, mode: str = "squared") -> BranchCosts:
    """Per-edge costs for a received block.

    ``squared`` gives ``(y_t - a(e))**2``; ``loglik`` the exact negative log of
    ``P(y_t, s'|x, s)`` with the initial-state prior folded into time-0 edges.
    Both select the same flow whenever the start state is known or uniform and
    transitions are deterministic.  ``y`` may be 2-D (one block per row).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != trellis.n:
        raise ValueError(f"received block has length {y.shape[-1]}, trellis has {trellis.n}")
    sq = (y[..., trellis.time] - trellis.out) ** 2
    if mode == "squared":
        return BranchCosts(sq, mode)
    if mode == "loglik":
        vals = sq / (2 * sigma**2) + 0.5 * math.log(2 * math.pi * sigma**2) - trellis.logprob
        return BranchCosts(vals, mode)
    raise ValueError(f"unknown cost mode {mode!r}")


def transmit_awgn(channel: ChannelModel, bits, sigma: float, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Send ``bits`` through the channel; returns ``(y, clean)``."""
    rng = np.random.default_rng(seed)
    bits = np.asarray(bits, dtype=int)
    p0 = channel.start_distribution
    state = int(rng.choice(len(p0), p=p0)) if np.count_nonzero(p0) > 1 else int(np.argmax(p0))
    clean = np.empty(len(bits))
    for i, x in enumerate(bits):
        state, clean[i] = channel.step(state, int(x), rng)
    y = clean + sigma * rng.standard_normal(len(bits))
    return y, clean


def snr_db_to_sigma(snr_db: float, channel: ChannelModel) -> float:
    """Noise std for an SNR defined as channel output power over noise variance."""
    return math.sqrt(channel.output_power() / 10 ** (snr_db / 10))


def viterbi(trellis: Trellis, costs) -> tuple[np.ndarray, float]:
    """Minimum-cost edge path; ties go to the lowest edge index."""
    b = np.asarray(costs, dtype=float)
    if b.ndim != 1:
        raise ValueError("viterbi takes a single cost vector; use viterbi_batch")
    paths, totals = viterbi_batch(trellis, b[None, :])
    return paths[0], float(totals[0])


def viterbi_batch(trellis: Trellis, costs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Viterbi over a ``(B, |E|)`` cost matrix; returns ``(B, n)`` paths and costs."""
    b = np.asarray(costs, dtype=float)
    B = b.shape[0]
    S = trellis.channel.num_states
    alpha = np.where(trellis.reachable[0], 0.0, np.inf)[None, :].repeat(B, axis=0)
    choice = np.empty((trellis.n, B, S), dtype=np.intp)
    rows_s = np.arange(S)[None, :]
    for t in range(trellis.n):
        safe, src, pad = trellis._tables[t]
        cand = alpha[:, src] + b[:, safe]
        if pad is not None:
            cand[:, pad] = np.inf
        k = np.argmin(cand, axis=2)  # first minimum -> lowest edge index
        choice[t] = safe[rows_s, k]
        alpha = np.take_along_axis(cand, k[..., None], axis=2)[..., 0]
    # final state: lowest cost, ties to the lowest index of the chosen final edge
    final_edges = choice[-1]
    order = np.lexsort((final_edges, alpha), axis=-1) if B else np.empty((0, S), dtype=np.intp)
    state = order[:, 0]
    totals = alpha[np.arange(B), state]
    paths = np.empty((B, trellis.n), dtype=np.intp)
    rows = np.arange(B)
    for t in range(trellis.n - 1, -1, -1):
        e = choice[t, rows, state]
        paths[:, t] = e
        state = trellis.src[e]
    return paths, totals

"""Binary parity-check codes: generation, alist I/O, local codeword polytopes."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParityCheckCode:
    """Code given by its checks; each check is a sorted tuple of 0-based bit indices."""

    n: int
    checks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        checks = tuple(tuple(sorted(int(i) for i in c)) for c in self.checks)
        for c in checks:
            if len(set(c)) != len(c):
                raise ValueError(f"check {c} repeats a bit index")
            if c and not (0 <= c[0] and c[-1] < self.n):
                raise ValueError(f"check {c} references bits outside 0..{self.n - 1}")
        object.__setattr__(self, "checks", checks)

    @property
    def m(self) -> int:
        return len(self.checks)

    @property
    def H(self) -> np.ndarray:
        H = np.zeros((self.m, self.n), dtype=np.uint8)
        for r, c in enumerate(self.checks):
            H[r, list(c)] = 1
        return H

    @classmethod
    def from_matrix(cls, H) -> "ParityCheckCode":
        H = np.asarray(H)
        return cls(H.shape[1], tuple(tuple(np.flatnonzero(row)) for row in H))

    def has_4cycle(self) -> bool:
        seen = set()
        for c in self.checks:
            for pair in itertools.combinations(c, 2):
                if pair in seen:
                    return True
                seen.add(pair)
        return False


def spc(n: int) -> ParityCheckCode:
    """Single parity-check code of length ``n``."""
    return ParityCheckCode(n, (tuple(range(n)),))


def gen_regular_code(n: int, dv: int, dc: int, seed=None, avoid_4cycles: bool = True,
                     max_restarts: int = 1000) -> ParityCheckCode:
    """Random ``(dv, dc)``-regular code without double edges (and 4-cycles).

    Variable sockets are connected one at a time to a random check that still
    has free sockets and keeps the graph simple; a dead end restarts the draw.
    """
    if n < 1 or dv < 1 or dc < 1 or (n * dv) % dc:
        raise ValueError(f"no ({dv},{dc})-regular code of length {n}")
    m = n * dv // dc
    if dv > m:
        raise ValueError(f"variable degree {dv} exceeds the number of checks {m}")
    rng = np.random.default_rng(seed)
    for _ in range(max_restarts):
        code = _try_regular(n, m, dv, dc, rng, avoid_4cycles)
        if code is not None:
            return code
    raise RuntimeError(f"no ({dv},{dc}) code of length {n} found in {max_restarts} restarts (seed={seed})")


def _try_regular(n, m, dv, dc, rng, avoid_4cycles):
    free = np.full(m, dc)
    check_vars: list[set[int]] = [set() for _ in range(m)]
    var_checks: list[list[int]] = [[] for _ in range(n)]
    for v in rng.permutation(n):
        for _ in range(dv):
            ok = free > 0
            ok[var_checks[v]] = False
            if avoid_4cycles and var_checks[v]:
                nbrs = set().union(*(check_vars[c] for c in var_checks[v])) - {v}
                for c in np.flatnonzero(ok):
                    if check_vars[c] & nbrs:
                        ok[c] = False
            cand = np.flatnonzero(ok)
            if len(cand) == 0:
                return None
            w = free[cand].astype(float)
            c = int(rng.choice(cand, p=w / w.sum()))
            free[c] -= 1
            check_vars[c].add(int(v))
            var_checks[v].append(c)
    return ParityCheckCode(n, tuple(tuple(sorted(s)) for s in check_vars))


def is_codeword(code: ParityCheckCode, c) -> bool:
    c = np.asarray(c)
    if c.shape != (code.n,):
        raise ValueError(f"expected a vector of length {code.n}, got shape {c.shape}")
    bits = c.astype(np.int64)
    return all(int(bits[list(chk)].sum()) % 2 == 0 for chk in code.checks)


def gf2_nullspace(H) -> np.ndarray:
    """Basis (rows) of the GF(2) null space of ``H``."""
    A = np.array(H, dtype=np.uint8) % 2
    m, n = A.shape
    pivots = []
    row = 0
    for col in range(n):
        if row == m:
            break
        hits = np.flatnonzero(A[row:, col]) + row
        if len(hits) == 0:
            continue
        p = hits[0]
        if p != row:
            A[[row, p]] = A[[p, row]]
        others = np.flatnonzero(A[:, col])
        others = others[others != row]
        A[others] ^= A[row]
        pivots.append(col)
        row += 1
    free = [c for c in range(n) if c not in set(pivots)]
    basis = np.zeros((len(free), n), dtype=np.uint8)
    for k, f in enumerate(free):
        basis[k, f] = 1
        for r, p in enumerate(pivots):
            basis[k, p] = A[r, f]
    return basis


def codewords(code: ParityCheckCode, max_dimension: int = 20) -> np.ndarray:
    """All codewords as rows (exhaustive; small codes only)."""
    G = gf2_nullspace(code.H)
    k = len(G)
    if k > max_dimension:
        raise ValueError(f"code dimension {k} too large to enumerate")
    coeffs = ((np.arange(2**k)[:, None] >> np.arange(k)) & 1).astype(np.uint8)
    return (coeffs @ G) % 2 if k else np.zeros((1, code.n), dtype=np.uint8)


def random_codeword_fixed_weight(code: ParityCheckCode, weight: int, seed=None,
                                 max_trials: int = 10**6) -> np.ndarray:
    """Uniform random codeword of exact Hamming weight.

    Small codes are enumerated; larger ones draw uniform codewords from a GF(2)
    basis and reject on weight.
    """
    if weight == 0:
        return np.zeros(code.n, dtype=np.uint8)
    if not 0 < weight <= code.n:
        raise ValueError(f"weight {weight} outside 0..{code.n}")
    rng = np.random.default_rng(seed)
    G = gf2_nullspace(code.H)
    k = len(G)
    if k <= 16:
        words = codewords(code)
        hits = words[words.sum(axis=1) == weight]
        if len(hits) == 0:
            raise ValueError(f"code has no codeword of weight {weight}")
        return hits[rng.integers(len(hits))].copy()
    batch = 4096
    for start in range(0, max_trials, batch):
        size = min(batch, max_trials - start)
        coeffs = rng.integers(0, 2, size=(size, k), dtype=np.uint8)
        words = (coeffs.astype(np.int64) @ G) % 2
        hit = np.flatnonzero(words.sum(axis=1) == weight)
        if len(hit):
            return words[hit[0]].astype(np.uint8)
    raise ValueError(f"no codeword of weight {weight} found in {max_trials} trials (seed={seed})")


@dataclass(frozen=True)
class LinearConstraint:
    coefficients: dict[int, float]
    bound: float
    sense: str = "<="


def lcp_rows(check, max_degree: int = 16):
    """Yield ``(odd subset S, rhs)`` for the local codeword polytope of one check."""
    check = tuple(check)
    if len(check) > max_degree:
        raise ValueError(f"check degree {len(check)} exceeds the cap {max_degree}")
    for r in range(1, len(check) + 1, 2):
        for S in itertools.combinations(check, r):
            yield S, r - 1


def lcp_constraints(code: ParityCheckCode, max_degree: int = 16, box: bool = True) -> list[LinearConstraint]:
    """Odd-subset inequalities of every check, plus ``0 <= f_i <= 1`` rows."""
    rows = []
    for check in code.checks:
        for S, rhs in lcp_rows(check, max_degree):
            coef = {i: (1.0 if i in S else -1.0) for i in check}
            rows.append(LinearConstraint(coef, float(rhs)))
    if box:
        for i in range(code.n):
            rows.append(LinearConstraint({i: 1.0}, 1.0))
            rows.append(LinearConstraint({i: -1.0}, 0.0))
    return rows


def lcp_matrix(code: ParityCheckCode, max_degree: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(A, b)`` with ``A f <= b`` for all odd-subset rows (no box rows)."""
    cons = lcp_constraints(code, max_degree, box=False)
    A = np.zeros((len(cons), code.n))
    for r, con in enumerate(cons):
        for i, v in con.coefficients.items():
            A[r, i] = v
    return A, np.array([c.bound for c in cons])


def in_relaxed_polytope(code: ParityCheckCode, f, tol: float = 1e-9) -> bool:
    f = np.asarray(f, dtype=float)
    if np.any(f < -tol) or np.any(f > 1 + tol):
        return False
    A, b = lcp_matrix(code)
    return bool(np.all(A @ f <= b + tol))


def project_q(trellis, g) -> np.ndarray:
    """Bit-wise projection: flow on input-1 edges summed per time."""
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != trellis.num_edges:
        raise ValueError(f"flow has {g.shape[-1]} entries, trellis has {trellis.num_edges} edges")
    ones = trellis.bit == 1
    if g.ndim == 1:
        return np.bincount(trellis.time[ones], weights=g[ones], minlength=trellis.n)
    M = np.zeros((trellis.num_edges, trellis.n))
    M[np.flatnonzero(ones), trellis.time[ones]] = 1.0
    return g @ M


def read_alist(path) -> ParityCheckCode:
    """Read a parity-check matrix in alist format (zero padding tolerated)."""
    tokens = Path(path).read_text().split()
    vals = [int(t) for t in tokens]
    n, m = vals[0], vals[1]
    pos = 4
    col_deg = vals[pos:pos + n]
    pos += n
    row_deg = vals[pos:pos + m]
    pos += m
    max_col, max_row = vals[2], vals[3]
    # padded files store max_col entries per column; unpadded store exactly the degree
    padded = len(vals) == 4 + n + m + n * max_col + m * max_row
    for d in col_deg:
        pos += max_col if padded else d
    checks = []
    for d in row_deg:
        width = max_row if padded else d
        row = [v - 1 for v in vals[pos:pos + width] if v > 0]
        if len(row) != d:
            raise ValueError(f"alist row lists {len(row)} entries, degree says {d}")
        checks.append(tuple(row))
        pos += width
    return ParityCheckCode(n, tuple(checks))


def write_alist(code: ParityCheckCode, path) -> None:
    var_checks = [[] for _ in range(code.n)]
    for r, c in enumerate(code.checks):
        for i in c:
            var_checks[i].append(r)
    max_col = max((len(v) for v in var_checks), default=0)
    max_row = max((len(c) for c in code.checks), default=0)

    def pad(idx, width):
        return " ".join(str(i + 1) for i in idx) + " 0" * (width - len(idx))

    lines = [f"{code.n} {code.m}", f"{max_col} {max_row}",
             " ".join(str(len(v)) for v in var_checks),
             " ".join(str(len(c)) for c in code.checks)]
    lines += [pad(v, max_col).strip() for v in var_checks]
    lines += [pad(c, max_row).strip() for c in code.checks]
    Path(path).write_text("\n".join(lines) + "\n")

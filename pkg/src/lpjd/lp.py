"""Trellis LPs: min-cost flow and joint decoding over the trellis-wise relaxed polytope.

The code constraints are written directly on edge variables (each local
codeword polytope row composed with the bit projection), so the LP has one
variable per trellis edge and no auxiliary bit variables.  Box rows
``0 <= f_i <= 1`` are implied by unit per-time flow and are not emitted.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import highspy
import numpy as np
import scipy.sparse as sp

from .code import ParityCheckCode, is_codeword, lcp_rows, project_q
from .trellis import Trellis, branch_costs, viterbi

INTEGRALITY_TOL = 1e-6
SOLVER_TOL = 1e-8


class SolverError(RuntimeError):
    """The LP solver did not return an optimal vertex."""


@dataclass
class LPProblem:
    """``min c.g  s.t.  A_eq g = b_eq,  A_ub g <= b_ub,  0 <= g <= 1``."""

    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ub: sp.csr_matrix | None = None
    b_ub: np.ndarray | None = None

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_ub(self) -> int:
        return 0 if self.A_ub is None else self.A_ub.shape[0]


@dataclass(frozen=True)
class EdgeFlow:
    values: np.ndarray
    provenance: str = "vertex-solution"

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return len(self.values)

    @property
    def is_integral(self) -> bool:
        return is_integral(self.values)


def is_integral(g, tol: float = INTEGRALITY_TOL) -> bool:
    g = np.asarray(g)
    return bool(np.all((g <= tol) | (g >= 1 - tol)))


@dataclass(frozen=True)
class DecodeOutcome:
    kind: str  # "TCW" or "JD-TPCW"
    flow: EdgeFlow
    f: np.ndarray  # bit-wise projection (SCW or JD-SPCW)
    p: np.ndarray  # signal-space projection
    objective: float
    ml_certificate: bool

    @property
    def bits(self) -> np.ndarray | None:
        """Decoded codeword, or ``None`` on failure."""
        if self.kind != "TCW":
            return None
        return np.rint(self.f).astype(np.uint8)


def flow_equalities(trellis: Trellis) -> tuple[sp.csr_matrix, np.ndarray]:
    """Unit mass at time 0 and conservation at every reachable interior node."""
    rows, cols, vals = [], [], []
    first = trellis.edges_at(0)
    cols += range(first.start, first.stop)
    rows += [0] * (first.stop - first.start)
    vals += [1.0] * (first.stop - first.start)
    r = 1
    S = trellis.channel.num_states
    for t in range(trellis.n - 1):
        for j in range(S):
            if not trellis.reachable[t + 1, j]:
                continue
            inc = trellis.incoming(t, j)
            out = trellis.outgoing(t + 1, j)
            cols += list(inc) + list(out)
            rows += [r] * (len(inc) + len(out))
            vals += [1.0] * len(inc) + [-1.0] * len(out)
            r += 1
    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, trellis.num_edges))
    b = np.zeros(r)
    b[0] = 1.0
    return A, b


def code_inequalities(trellis: Trellis, code: ParityCheckCode,
                      max_degree: int = 16) -> tuple[sp.csr_matrix, np.ndarray]:
    """Odd-subset rows of every check, expressed on the input-1 edges."""
    if code.n != trellis.n:
        raise ValueError(f"code length {code.n} differs from trellis length {trellis.n}")
    ones_at = [np.flatnonzero(trellis.bit[trellis.edges_at(t)] == 1) + trellis.offsets[t]
               for t in range(trellis.n)]
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for check in code.checks:
        for S, bound in lcp_rows(check, max_degree):
            Sset = set(S)
            for i in check:
                e = ones_at[i]
                cols.extend(e)
                rows.extend([r] * len(e))
                vals.extend([1.0 if i in Sset else -1.0] * len(e))
            rhs.append(float(bound))
            r += 1
    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, trellis.num_edges))
    return A, np.array(rhs)


def assemble_trellis_lp(trellis: Trellis, costs) -> LPProblem:
    A_eq, b_eq = flow_equalities(trellis)
    return LPProblem(np.asarray(costs, dtype=float).copy(), A_eq, b_eq)


def assemble_joint_lp(trellis: Trellis, costs, code: ParityCheckCode) -> LPProblem:
    prob = assemble_trellis_lp(trellis, costs)
    prob.A_ub, prob.b_ub = code_inequalities(trellis, code)
    return prob


def _highs(num_vars: int):
    h = highspy.Highs()
    for key, val in (("output_flag", False), ("presolve", "off"), ("solver", "simplex"),
                     ("simplex_strategy", 1), ("primal_feasibility_tolerance", SOLVER_TOL),
                     ("dual_feasibility_tolerance", SOLVER_TOL), ("random_seed", 0)):
        h.setOptionValue(key, val)
    zeros = np.zeros(num_vars)
    h.addCols(num_vars, zeros, zeros, np.ones(num_vars), 0, np.zeros(0, dtype=np.int32),
              np.zeros(0, dtype=np.int32), np.zeros(0))
    return h


def _add_rows(h, A: sp.csr_matrix, lower, upper) -> None:
    A = sp.csr_matrix(A)
    if A.shape[0] == 0:
        return
    h.addRows(A.shape[0], np.asarray(lower, dtype=float), np.asarray(upper, dtype=float), A.nnz,
              A.indptr[:-1].astype(np.int32), A.indices.astype(np.int32), A.data.astype(float))


def _run(h, num_vars: int) -> np.ndarray:
    h.run()
    status = h.getModelStatus()
    if status != highspy.HighsModelStatus.kOptimal:
        raise SolverError(f"LP solver stopped with status {h.modelStatusToString(status)}")
    return np.clip(np.asarray(h.getSolution().col_value[:num_vars], dtype=float), 0.0, 1.0)


def _build_model(problem: LPProblem):
    h = _highs(problem.num_vars)
    _add_rows(h, problem.A_eq, problem.b_eq, problem.b_eq)
    if problem.num_ub:
        _add_rows(h, problem.A_ub, np.full(problem.num_ub, -highspy.kHighsInf), problem.b_ub)
    return h


def solve_vertex(problem: LPProblem, iteration_limit: int | None = None) -> tuple[EdgeFlow, float]:
    """Optimal basic solution by dual simplex (HiGHS, presolve off)."""
    h = _build_model(problem)
    if iteration_limit is not None:
        h.setOptionValue("simplex_iteration_limit", iteration_limit)
    idx = np.arange(problem.num_vars, dtype=np.int32)
    h.changeColsCost(problem.num_vars, idx, np.asarray(problem.c, dtype=float))
    g = _run(h, problem.num_vars)
    return EdgeFlow(g), float(problem.c @ g)


def project_sspcw(trellis: Trellis, g) -> np.ndarray:
    """Signal-space projection: per-time flow average of noiseless outputs."""
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != trellis.num_edges:
        raise ValueError(f"flow has {g.shape[-1]} entries, trellis has {trellis.num_edges} edges")
    return np.bincount(trellis.time, weights=g * trellis.out, minlength=trellis.n)


def classify(trellis: Trellis, code: ParityCheckCode, g: EdgeFlow, objective: float) -> DecodeOutcome:
    f = project_q(trellis, g)
    p = project_sspcw(trellis, g)
    if g.is_integral:
        bits = np.rint(f)
        if not is_codeword(code, bits):
            raise SolverError("integral LP solution does not project to a codeword")
        return DecodeOutcome("TCW", g, f, p, objective, trellis.channel.is_isi)
    return DecodeOutcome("JD-TPCW", g, f, p, objective, False)


class JointLPDecoder:
    """Reusable LP joint decoder for one (trellis, code) pair.

    ``method="eager"`` keeps every odd-subset row in the model.
    ``method="adaptive"`` starts from the flow constraints alone and adds, per
    check, the single most violated odd-subset row until none is violated; the
    last solution is optimal over the full polytope and, being a vertex of a
    relaxation that lies inside it, a vertex of the full polytope as well.

    With ``shortcut`` the unconstrained Viterbi path is tried first: when it
    already projects to a codeword it is optimal over the joint polytope too.
    Every decode starts from the same solver state, so results depend only on
    the received block.
    """

    def __init__(self, trellis: Trellis, code: ParityCheckCode, method: str = "adaptive",
                 mode: str = "squared", shortcut: bool = True, max_rounds: int = 200):
        if code.n != trellis.n:
            raise ValueError(f"code length {code.n} differs from trellis length {trellis.n}")
        if method not in ("eager", "adaptive"):
            raise ValueError(f"unknown method {method!r}")
        self.trellis, self.code = trellis, code
        self.method, self.mode, self.shortcut = method, mode, shortcut
        self.max_rounds = max_rounds
        E = trellis.num_edges
        self._idx = np.arange(E, dtype=np.int32)
        A_eq, b_eq = flow_equalities(trellis)
        self._h = _highs(E)
        _add_rows(self._h, A_eq, b_eq, b_eq)
        if method == "eager":
            A_ub, b_ub = code_inequalities(trellis, code)
            _add_rows(self._h, A_ub, np.full(len(b_ub), -highspy.kHighsInf), b_ub)
        self._base_rows = self._h.getNumRow()
        self._ones_at = [np.flatnonzero(trellis.bit[trellis.edges_at(t)] == 1) + trellis.offsets[t]
                         for t in range(trellis.n)]
        self._checks = [np.array(c, dtype=np.intp) for c in code.checks]
        self.lp_solves = 0

    def decode(self, y, sigma: float) -> DecodeOutcome:
        return self.decode_costs(branch_costs(self.trellis, y, sigma, self.mode))

    def decode_costs(self, costs, viterbi_path=None) -> DecodeOutcome:
        """Decode from branch costs; ``viterbi_path`` skips recomputing the shortcut path."""
        tr = self.trellis
        b = np.asarray(costs, dtype=float)
        cuts = []
        if self.shortcut:
            if viterbi_path is None:
                path, total = viterbi(tr, b)
            else:
                path = np.asarray(viterbi_path)
                total = float(b[path].sum())
            g = tr.path_flow(path)
            if is_codeword(self.code, tr.bit[path]):
                return classify(tr, self.code, EdgeFlow(g, "viterbi"), total)
            if self.method == "adaptive":
                cuts = self._violated(project_q(tr, g))
        g = self._solve(b, cuts)
        return classify(tr, self.code, EdgeFlow(g), float(b @ g))

    def _reset(self) -> None:
        h = self._h
        extra = h.getNumRow() - self._base_rows
        if extra:
            h.deleteRows(extra, np.arange(self._base_rows, h.getNumRow(), dtype=np.int32))
        h.clearSolver()

    def _solve(self, b: np.ndarray, cuts) -> np.ndarray:
        E = self.trellis.num_edges
        self._reset()
        self._h.changeColsCost(E, self._idx, b)
        self.lp_solves += 1
        if self.method == "eager":
            return _run(self._h, E)
        for _ in range(self.max_rounds):
            for cut in cuts:
                self._add_cut(*cut)
            g = _run(self._h, E)
            cuts = self._violated(project_q(self.trellis, g))
            if not cuts:
                return g
        raise SolverError(f"cut generation did not converge in {self.max_rounds} rounds")

    def _violated(self, f: np.ndarray, tol: float = 1e-9):
        """Most violated odd-subset row of each check, if any."""
        out = []
        for chk in self._checks:
            fv = f[chk]
            inside = fv > 0.5
            if np.count_nonzero(inside) % 2 == 0:
                k = int(np.argmin(np.abs(fv - 0.5)))
                inside[k] = not inside[k]
            size = int(np.count_nonzero(inside))
            if fv[inside].sum() - fv[~inside].sum() > size - 1 + tol:
                out.append((chk, inside, size - 1))
        return out

    def _add_cut(self, chk, inside, bound) -> None:
        cols = np.concatenate([self._ones_at[i] for i in chk]).astype(np.int32)
        vals = np.concatenate([np.full(len(self._ones_at[i]), 1.0 if s else -1.0)
                               for i, s in zip(chk, inside)])
        self._h.addRow(-highspy.kHighsInf, float(bound), len(cols), cols, vals)


def joint_decode(trellis: Trellis, code: ParityCheckCode, y, sigma: float,
                 mode: str = "squared", method: str = "eager", shortcut: bool = False) -> DecodeOutcome:
    """One-off LP joint decode of a received block (builds a fresh decoder)."""
    return JointLPDecoder(trellis, code, method, mode, shortcut).decode(y, sigma)


def is_vertex(problem: LPProblem, g, tol: float = 1e-7) -> bool:
    """True when the active constraints at ``g`` have full column rank."""
    g = np.asarray(g, dtype=float)
    active = [problem.A_eq.toarray()]
    if problem.A_ub is not None:
        slack = problem.b_ub - problem.A_ub @ g
        active.append(problem.A_ub.toarray()[np.abs(slack) <= tol])
    eye = np.eye(problem.num_vars)
    active.append(eye[(g <= tol) | (g >= 1 - tol)])
    M = np.vstack(active)
    return int(np.linalg.matrix_rank(M, tol=1e-9)) == problem.num_vars


def feasibility_violation(problem: LPProblem, g) -> float:
    """Largest constraint violation of ``g`` (0 when feasible)."""
    g = np.asarray(g, dtype=float)
    worst = float(np.max(np.abs(problem.A_eq @ g - problem.b_eq), initial=0.0))
    if problem.A_ub is not None:
        worst = max(worst, float(np.max(problem.A_ub @ g - problem.b_ub, initial=0.0)))
    worst = max(worst, float(-g.min()), float(g.max() - 1.0))
    return max(worst, 0.0)


def write_lp_file(problem: LPProblem, path) -> None:
    """Dump in CPLEX LP text format for cross-checking with other solvers."""

    def terms(row):
        row = row.tocoo()
        out = []
        for j, v in sorted(zip(row.col, row.data)):
            out.append(f"{'+' if v >= 0 else '-'} {abs(v):.17g} g{j}")
        return " ".join(out) if out else "0 g0"

    lines = ["\\ joint LP decoding problem", "Minimize",
             " obj: " + " ".join(f"{'+' if v >= 0 else '-'} {abs(v):.17g} g{j}" for j, v in enumerate(problem.c)),
             "Subject To"]
    for r in range(problem.A_eq.shape[0]):
        lines.append(f" eq{r}: {terms(problem.A_eq[r])} = {problem.b_eq[r]:.17g}")
    for r in range(problem.num_ub):
        lines.append(f" ub{r}: {terms(problem.A_ub[r])} <= {problem.b_ub[r]:.17g}")
    lines.append("Bounds")
    lines += [f" 0 <= g{j} <= 1" for j in range(problem.num_vars)]
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")

"""Generalized distances, pairwise error probabilities and truncated union bounds."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import erfc

from .code import project_q
from .lp import DecodeOutcome, project_sspcw
from .trellis import Trellis

log = logging.getLogger(__name__)

KEY_GRID = 1e-6
DIST_GRID = 1e-6


class DegeneratePseudoCodeword(ValueError):
    """Pseudo-codeword whose signal-space projection coincides with the codeword."""


def q_function(x):
    """Gaussian tail probability."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def sigma_p_sq(trellis: Trellis, g, p=None, tol: float = 1e-6) -> float:
    """Per-time output variance of a flow, summed over time (zero for paths)."""
    g = np.asarray(g, dtype=float)
    own = project_sspcw(trellis, g)
    if p is None:
        p = own
    else:
        p = np.asarray(p, dtype=float)
        if np.max(np.abs(p - own), initial=0.0) > tol:
            raise ValueError("p is not the signal-space projection of g")
    # per-time variances, each exactly zero where the flow sits on one edge
    second = np.bincount(trellis.time, weights=g * trellis.out**2, minlength=trellis.n)
    return float(np.maximum(second - p * p, 0.0).sum())


def d_gen(c_signal, p, sigma_p_sq: float, min_norm: float = 1e-12) -> float:
    """Generalized Euclidean distance between a codeword signal and a pseudo-codeword."""
    d2 = float(np.sum((np.asarray(c_signal, dtype=float) - np.asarray(p, dtype=float)) ** 2))
    if d2 <= min_norm:
        raise DegeneratePseudoCodeword(f"|d|^2 = {d2:g} with sigma_p^2 = {sigma_p_sq:g}")
    return math.sqrt((d2 + sigma_p_sq) ** 2 / d2)


def pairwise_error_prob(dist, sigma: float):
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return q_function(np.asarray(dist, dtype=float) / (2.0 * sigma))


def flow_cost(trellis: Trellis, g, Y) -> np.ndarray:
    """Squared-distance cost of flow ``g`` for each received row of ``Y``."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    g = np.asarray(g, dtype=float)
    live = g > 0
    diff = Y[:, trellis.time[live]] - trellis.out[live]
    return (diff**2) @ g[live]


def pairwise_decide(trellis: Trellis, costs, g_pcw, g_cw) -> str:
    """Which of two flows the LP prefers; ties go to the pseudo-codeword."""
    b = np.asarray(costs, dtype=float)
    return "pcw_wins" if np.asarray(g_pcw) @ b <= np.asarray(g_cw) @ b else "cw_wins"


def pairwise_error_count(trellis: Trellis, g_pcw, g_cw, sigma: float, draws: int,
                         seed=None, batch: int = 20000) -> int:
    """Monte-Carlo count of noise draws around ``g_cw``'s path where ``g_pcw`` wins."""
    rng = np.random.default_rng(seed)
    clean = project_sspcw(trellis, g_cw)
    wins = 0
    for start in range(0, draws, batch):
        k = min(batch, draws - start)
        Y = clean + sigma * rng.standard_normal((k, trellis.n))
        wins += int(np.count_nonzero(flow_cost(trellis, g_pcw, Y) <= flow_cost(trellis, g_cw, Y)))
    return wins


def flow_key(g) -> tuple[int, ...]:
    return tuple(np.rint(np.asarray(g, dtype=float) / KEY_GRID).astype(np.int64).tolist())


@dataclass
class PcwRecord:
    key: tuple[int, ...]
    spcw: np.ndarray
    sspcw: np.ndarray
    sigma_p_sq: float
    norm_d_sq: float
    d_gen: float
    kind: str  # "pcw" or "codeword"
    count: int = 1


@dataclass
class DistanceSpectrum:
    """Distinct decoding errors observed for one transmitted codeword."""

    codeword_id: str
    c_signal: np.ndarray
    records: dict = field(default_factory=dict)
    degenerate: int = 0
    provenance: list = field(default_factory=list)  # (snr_db, trials)
    truncated: bool = True

    @property
    def observations(self) -> int:
        return sum(r.count for r in self.records.values())

    @property
    def entries(self) -> dict[float, int]:
        """Quantized distance -> number of distinct errors at that distance."""
        out: dict[float, int] = {}
        for r in self.records.values():
            d = round(r.d_gen / DIST_GRID) * DIST_GRID
            out[d] = out.get(d, 0) + 1
        return dict(sorted(out.items()))

    def distances(self) -> np.ndarray:
        return np.sort(np.array([r.d_gen for r in self.records.values()]))

    def merge(self, other: "DistanceSpectrum") -> "DistanceSpectrum":
        if other.codeword_id != self.codeword_id:
            raise ValueError("cannot merge spectra of different codewords")
        records = {k: _copy_record(r) for k, r in self.records.items()}
        for k, r in other.records.items():
            if k in records:
                records[k].count += r.count
            else:
                records[k] = _copy_record(r)
        return DistanceSpectrum(self.codeword_id, self.c_signal, dict(sorted(records.items())),
                                self.degenerate + other.degenerate,
                                sorted(self.provenance + other.provenance), self.truncated and other.truncated)


def _copy_record(r: PcwRecord) -> PcwRecord:
    return PcwRecord(r.key, r.spcw, r.sspcw, r.sigma_p_sq, r.norm_d_sq, r.d_gen, r.kind, r.count)


def accumulate_spectrum(spectrum: DistanceSpectrum, trellis: Trellis, outcome: DecodeOutcome) -> DistanceSpectrum:
    """Add one decoding error (wrong codeword or pseudo-codeword) to ``spectrum``."""
    g = np.asarray(outcome.flow, dtype=float)
    key = flow_key(g)
    if key in spectrum.records:
        spectrum.records[key].count += 1
        return spectrum
    p = project_sspcw(trellis, g)
    if outcome.kind == "TCW" and np.allclose(p, spectrum.c_signal, atol=1e-9):
        raise ValueError("outcome is the transmitted codeword, not an error")
    sp2 = sigma_p_sq(trellis, g, p)
    try:
        dist = d_gen(spectrum.c_signal, p, sp2)
    except DegeneratePseudoCodeword as exc:
        log.warning("degenerate pseudo-codeword excluded from the spectrum: %s", exc)
        spectrum.degenerate += 1
        return spectrum
    norm = float(np.sum((spectrum.c_signal - p) ** 2))
    kind = "codeword" if outcome.kind == "TCW" else "pcw"
    spectrum.records[key] = PcwRecord(key, project_q(trellis, g), p, sp2, norm, dist, kind)
    return spectrum


class BoundEstimate(NamedTuple):
    value: float
    truncated: bool


def union_bound(spectrum: DistanceSpectrum, sigma: float) -> BoundEstimate:
    """Sum of multiplicity times pairwise error probability over the spectrum."""
    if not spectrum.records:
        raise ValueError(f"spectrum for codeword {spectrum.codeword_id} is empty; harvest errors first")
    dist = np.array(list(spectrum.entries))
    mult = np.array(list(spectrum.entries.values()))
    return BoundEstimate(float(mult @ pairwise_error_prob(dist, sigma)), spectrum.truncated)


SPECTRUM_FIELDS = ["codeword_id", "d_gen", "multiplicity", "sigma_p_sq", "spcw_serialized",
                   "norm_d_sq", "kind", "observations"]


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_spectra(spectra, path) -> None:
    """One row per distinct error; multiplicities add up per quantized distance."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SPECTRUM_FIELDS)
        for spec in spectra:
            for rec in sorted(spec.records.values(), key=lambda r: (r.d_gen, r.key)):
                w.writerow([spec.codeword_id, _fmt(rec.d_gen), 1, _fmt(rec.sigma_p_sq),
                            " ".join(_fmt(v) for v in rec.spcw), _fmt(rec.norm_d_sq), rec.kind, rec.count])


def read_spectra(path) -> list[DistanceSpectrum]:
    """Load spectra written by :func:`write_spectra` (distances only; no flows)."""
    spectra: dict[str, DistanceSpectrum] = {}
    with open(Path(path), newline="") as fh:
        for k, row in enumerate(csv.DictReader(fh)):
            cid = row["codeword_id"]
            spec = spectra.setdefault(cid, DistanceSpectrum(cid, np.zeros(0)))
            spcw = np.array([float(v) for v in row["spcw_serialized"].split()])
            for j in range(int(row["multiplicity"])):
                key = (k, j)
                spec.records[key] = PcwRecord(key, spcw, np.zeros(0), float(row["sigma_p_sq"]),
                                              float(row.get("norm_d_sq") or "nan"), float(row["d_gen"]),
                                              row.get("kind", "pcw"), int(row.get("observations") or 1))
    return list(spectra.values())

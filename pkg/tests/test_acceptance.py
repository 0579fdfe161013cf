"""Acceptance criteria, one test each.

Every check prints a ``PASS``/``FAIL`` line (collected in the terminal summary
under pytest, or printed directly when run as ``python tests/test_acceptance.py``).
The two simulation criteria take several minutes; ``LPJD_ACCEPT_ERRORS`` raises
the per-point error target for tighter estimates.
"""

from __future__ import annotations

import filecmp
import math
import os
import sys
import tempfile
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

from lpjd import sim  # noqa: E402
from lpjd.code import codewords, gen_regular_code, random_codeword_fixed_weight, spc  # noqa: E402
from lpjd.lp import JointLPDecoder, assemble_trellis_lp, project_sspcw, solve_vertex  # noqa: E402
from lpjd.pcw import d_gen, pairwise_error_count, pairwise_error_prob, sigma_p_sq  # noqa: E402
from lpjd.trellis import (branch_costs, build_trellis, load_channel, snr_db_to_sigma,  # noqa: E402
                          transmit_awgn, viterbi)

from oracles import ml_codewords  # noqa: E402

CONFIGS = HERE.parent / "configs"
PDIC = load_channel("pdic")
RESULTS: list[str] = []
TARGET_SET = [(0, .5, .5), (.5, 0, .5), (.5, .5, 0), (.5, .5, 1), (1, .5, .5)]
ERRORS = int(os.environ.get("LPJD_ACCEPT_ERRORS", "25"))


def report(name: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    return ok


# ---------------------------------------------------------------- exact PCW set

def check_spc3_set():
    found = sorted(sim.enumerate_pcw(PDIC, spc(3), 200, -3.0, seed=0))
    ok = len(found) == len(TARGET_SET) and all(
        np.max(np.abs(np.array(a) - np.array(b))) <= 1e-6 for a, b in zip(found, TARGET_SET))
    return ok, f"{len(found)} distinct bit-wise pseudo-codewords {found}"


# ---------------------------------------------------------------- ML certificate

def check_ml_certificate(codes: int = 20, per_code: int = 500):
    snrs = [0.0, 1.5, 3.0, 4.5, 6.0]
    tr = build_trellis(PDIC, 10)
    trials = tcw = ties = disagree = 0
    for seed in range(codes):
        code = gen_regular_code(10, 3, 5, seed=seed, avoid_4cycles=False)
        dec = JointLPDecoder(tr, code)
        words = codewords(code)
        rng = np.random.default_rng([99, seed])
        for k in range(per_code):
            sigma = snr_db_to_sigma(snrs[k % len(snrs)], PDIC)
            y, _ = transmit_awgn(PDIC, words[rng.integers(len(words))], sigma, rng)
            o = dec.decode(y, sigma)
            trials += 1
            if o.kind != "TCW":
                continue
            tcw += 1
            best, _ = ml_codewords(PDIC, code, y)
            if len(best) > 1:
                ties += 1
            elif not np.array_equal(best[0], o.bits):
                disagree += 1
    ok = trials >= 10_000 and disagree == 0
    return ok, f"{trials} trials, {tcw} integral outcomes, {disagree} disagreements, {ties} oracle ties"


# ---------------------------------------------------------------- trellis LP vs Viterbi

def check_trellis_lp():
    tr = build_trellis(PDIC, 60)
    rng = np.random.default_rng(5)
    worst, bad = 0.0, 0
    for _ in range(100):
        bits = rng.integers(0, 2, 60)
        y, _ = transmit_awgn(PDIC, bits, snr_db_to_sigma(rng.uniform(-2, 8), PDIC), rng)
        b = branch_costs(tr, y, 1.0).values
        g, obj = solve_vertex(assemble_trellis_lp(tr, b))
        path, cost = viterbi(tr, b)
        rel = abs(obj - cost) / max(abs(cost), 1e-12)
        worst = max(worst, rel)
        if not g.is_integral or not np.array_equal(np.flatnonzero(np.rint(g.values)), np.sort(path)) or rel > 1e-7:
            bad += 1
    return bad == 0, f"100 instances, {bad} mismatches, worst relative cost gap {worst:.1e}"


# ---------------------------------------------------------------- pairwise law

def harvested_pairs(count: int = 3):
    """Pseudo-codeword flows from low-SNR decodes of the desk-scale code."""
    cfg = sim.load_config(CONFIGS / "harvest_n60.cfg")
    code = sim.make_code(cfg)
    tr = build_trellis(PDIC, code.n)
    c = sim.pick_codewords(cfg, code)[0]
    g_cw = tr.path_flow(tr.path_for_bits(c))
    dec = JointLPDecoder(tr, code)
    sigma = snr_db_to_sigma(4.0, PDIC)
    pairs, k = [], 0
    while len(pairs) < count:
        o = dec.decode(transmit_awgn(PDIC, c, sigma, [31, k])[0], sigma)
        k += 1
        if o.kind == "JD-TPCW":
            pairs.append(o.flow.values)
    return tr, g_cw, pairs


def check_pairwise(draws: int = 100_000):
    tr, g_cw, pairs = harvested_pairs()
    c_sig = project_sspcw(tr, g_cw)
    worst, bad, n = 0.0, 0, 0
    for j, g in enumerate(pairs):
        dist = d_gen(c_sig, project_sspcw(tr, g), sigma_p_sq(tr, g))
        for z in (1.0, 1.8):  # noise levels where Q is 0.16 and 0.036
            sigma = dist / (2 * z)
            q = float(pairwise_error_prob(dist, sigma))
            hits = pairwise_error_count(tr, g, g_cw, sigma, draws, seed=[j, int(10 * z)])
            sd = math.sqrt(q * (1 - q) / draws)
            dev = abs(hits / draws - q) / sd
            worst = max(worst, dev)
            bad += dev > 3
            n += 1
    return bad == 0, f"{len(pairs)} pairs x 2 noise levels x {draws} draws, worst deviation {worst:.2f} sd"


# ---------------------------------------------------------------- sigma_p^2 property suite

def check_sigma_p(count: int = 10_000):
    tr = build_trellis(PDIC, 60)
    code = gen_regular_code(60, 3, 5, seed=1)
    c = random_codeword_fixed_weight(code, 30, seed=0)
    c_sig = tr.out[tr.path_for_bits(c)]
    rng = np.random.default_rng(17)
    neg = integral_bad = 0
    minimum = np.inf
    for k in range(count):
        paths = 1 if k % 4 == 0 else int(rng.integers(2, 7))
        flows = [tr.path_flow(tr.path_for_bits(rng.integers(0, 2, 60))) for _ in range(paths)]
        g = flows[0] if paths == 1 else rng.dirichlet(np.ones(paths)) @ np.array(flows)
        p = project_sspcw(tr, g)
        raw = float(g @ tr.out**2 - p @ p)
        minimum = min(minimum, raw)
        neg += raw < -1e-9
        if paths == 1:
            d = np.linalg.norm(c_sig - p)
            sp = sigma_p_sq(tr, g, p)
            if sp != 0.0 or (d > 0 and abs(d_gen(c_sig, p, sp) - d) > 1e-12 * max(d, 1.0)):
                integral_bad += 1
    ok = neg == 0 and integral_bad == 0
    return ok, f"{count} flows, min raw sigma_p^2 {minimum:.2e}, {integral_bad} integral-flow violations"


# ---------------------------------------------------------------- desk-scale simulations

@lru_cache(maxsize=None)
def harvest_run():
    return sim.run_simulation(sim.load_config(CONFIGS / "harvest_n60.cfg", {"output_dir": ""}))


@lru_cache(maxsize=None)
def lp_run():
    return sim.run_simulation(sim.load_config(
        CONFIGS / "desk_n60.cfg", {"output_dir": "", "min_errors": str(ERRORS)}))


@lru_cache(maxsize=None)
def jimpd_run():
    return sim.run_simulation(sim.load_config(
        CONFIGS / "desk_n60.cfg",
        {"output_dir": "", "min_errors": str(ERRORS), "decoder": "jimpd", "snr_db": "5.5, 6.0"}))


def mean_wer(result, decoder: str) -> dict[float, float]:
    per: dict[float, list[float]] = {}
    for snr, _, dec, trials, errors, *_ in result.wer_rows:
        if dec == decoder:
            per.setdefault(float(snr), []).append(errors / trials)
    return {s: float(np.mean(v)) for s, v in per.items()}


def check_truncated_bound():
    spectra = harvest_run().spectra
    simulated = mean_wer(lp_run(), "lp")
    pred = {r["snr_db"]: r["wer_bound"] for r in sim.predict_wer(spectra, sorted(simulated), PDIC)}
    pts = [s for s, w in simulated.items() if 1e-4 <= w <= 1e-2]
    ratios = {s: pred[s] / simulated[s] for s in pts}
    ok = bool(pts) and all(1 / 3 <= r <= 3 for r in ratios.values())
    distinct = sum(len(s.records) for s in spectra.values())
    parts = ", ".join(f"{s:g} dB sim {simulated[s]:.2e} pred {pred[s]:.2e}" for s in sorted(simulated))
    return ok, f"{distinct} distinct harvested errors; {parts}; in-range ratios {[f'{r:.1e}' for r in ratios.values()]}"


def check_lp_vs_jimpd():
    lp = mean_wer(lp_run(), "lp")
    jd = mean_wer(jimpd_run(), "jimpd")
    pts = [s for s in sorted(jd) if 1e-3 <= lp.get(s, 0.0) <= 1e-2]
    ok = len(pts) >= 2 and all(lp[s] <= jd[s] for s in pts)
    parts = ", ".join(f"{s:g} dB LP {lp[s]:.2e} JIMPD {jd[s]:.2e}" for s in sorted(jd))
    return ok, f"{len(pts)} points in range; {parts}"


# ---------------------------------------------------------------- reproducibility

def check_reproducibility():
    overrides = {"snr_db": "3.5, 4.0", "min_errors": "8", "max_words": "300", "chunk": "16", "decoder": "both"}
    with tempfile.TemporaryDirectory() as tmp:
        dirs = []
        for workers in (1, 3):
            out = Path(tmp) / f"w{workers}"
            cfg = sim.load_config(CONFIGS / "desk_n60.cfg", {**overrides, "output_dir": str(out)})
            sim.run_simulation(cfg, workers=workers)
            dirs.append(out)
        names = sorted(p.name for p in dirs[0].glob("*.csv"))
        match, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
    ok = not mismatch and not errors and "spectrum.csv" in match
    return ok, f"1 vs 3 workers: identical {match}, differing {mismatch + errors}"


# ---------------------------------------------------------------- pytest entry points

CRITERIA = [
    ("SPC(3,2) pseudo-codeword set", check_spc3_set),
    ("ML certificate oracle equivalence", check_ml_certificate),
    ("Trellis LP equals Viterbi", check_trellis_lp),
    ("Pairwise probability law", check_pairwise),
    ("sigma_p^2 nonnegativity and reduction", check_sigma_p),
    ("Truncated-bound self-consistency", check_truncated_bound),
    ("LP vs JIMPD direction", check_lp_vs_jimpd),
    ("Reproducibility across worker counts", check_reproducibility),
]


@pytest.mark.parametrize("name,check", CRITERIA, ids=[c[1].__name__ for c in CRITERIA])
def test_criterion(name, check):
    ok, detail = check()
    assert report(name, ok, detail), detail


if __name__ == "__main__":
    failures = 0
    for name, check in CRITERIA:
        failures += not report(name, *check())
    sys.exit(1 if failures else 0)

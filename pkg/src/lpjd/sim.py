"""Experiment driver: SNR sweeps, error harvesting and truncated-bound prediction.

Every trial draws its noise from ``default_rng([master_seed, codeword, snr, trial])``
so a trial can be replayed on its own and results do not depend on how
trials are spread over worker processes.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import beta

from .code import (ParityCheckCode, codewords, gen_regular_code, random_codeword_fixed_weight,
                   read_alist, spc)
from .jimpd import IterSchedule, SumProductDecoder, jimpd_decode
from .lp import DecodeOutcome, EdgeFlow, JointLPDecoder, SolverError, project_sspcw
from .pcw import (DegeneratePseudoCodeword, DistanceSpectrum, accumulate_spectrum, d_gen,
                  sigma_p_sq, union_bound, write_spectra)
from .trellis import (ChannelModel, Trellis, branch_costs, build_trellis, load_channel, snr_db_to_sigma,
                      transmit_awgn, viterbi_batch)

log = logging.getLogger(__name__)

WORKERS_ENV = "LPJD_WORKERS"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    channel: str = "pdic"
    code: str = "regular"  # alist path, "spc:N" or "regular"
    n: int = 60
    dv: int = 3
    dc: int = 5
    code_seed: int = 1
    codewords: str = "3"  # count, or "all" for small codes
    codeword_weight: int | None = None  # default n // 2
    codeword_seed: int = 2
    snr_db: list[float] = field(default_factory=lambda: [4.0])
    harvest_snr_db: list[float] | None = None  # default: every simulated SNR
    min_errors: int = 100
    max_words: int = 100_000
    decoder: str = "lp"  # lp | jimpd | both
    lp_method: str = "adaptive"
    outer_iters: int = 50
    inner_bp_iters: int = 3
    master_seed: int = 0
    chunk: int = 256
    log_all_trials: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        self.output_dir = self.output_dir or None
        if self.min_errors < 1:
            raise ConfigError("min_errors must be at least 1")
        if self.max_words < 1:
            raise ConfigError("max_words must be at least 1")
        if not self.snr_db:
            raise ConfigError("snr_db must list at least one SNR")
        if self.decoder not in ("lp", "jimpd", "both"):
            raise ConfigError(f"decoder must be lp, jimpd or both, not {self.decoder!r}")
        if self.lp_method not in ("eager", "adaptive"):
            raise ConfigError(f"lp_method must be eager or adaptive, not {self.lp_method!r}")

    @property
    def decoders(self) -> tuple[str, ...]:
        return ("lp", "jimpd") if self.decoder == "both" else (self.decoder,)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ",".join(repr(x) for x in v)
            lines.append(f"{f.name} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"


def _convert(name: str, raw: str):
    raw = raw.strip()
    if name in ("snr_db", "harvest_snr_db"):
        values = [float(v) for v in raw.replace(",", " ").split()]
        return values if values or name == "snr_db" else None
    if name == "output_dir":
        return raw  # empty disables file output
    if name in ("channel", "code", "codewords", "decoder", "lp_method"):
        return raw or None
    if name == "log_all_trials":
        return raw.lower() in ("1", "true", "yes", "on")
    return int(raw) if raw else None


def parse_config(text: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Build a config from ``key = value`` lines (``#`` comments)."""
    known = {f.name for f in fields(ExperimentConfig)}
    items: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        items[key] = val
    items.update(overrides or {})
    kwargs = {}
    for key, val in items.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kwargs[key] = _convert(key, val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {val!r}") from exc
    return ExperimentConfig(**{k: v for k, v in kwargs.items() if v is not None})


def load_config(path, overrides=None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), overrides)


def make_code(cfg: ExperimentConfig) -> ParityCheckCode:
    if cfg.code == "regular":
        return gen_regular_code(cfg.n, cfg.dv, cfg.dc, seed=cfg.code_seed)
    if cfg.code.startswith("spc:"):
        return spc(int(cfg.code[4:]))
    return read_alist(cfg.code)


def pick_codewords(cfg: ExperimentConfig, code: ParityCheckCode) -> list[np.ndarray]:
    if cfg.codewords == "all":
        return list(codewords(code))
    count = int(cfg.codewords)
    weight = code.n // 2 if cfg.codeword_weight is None else cfg.codeword_weight
    return [random_codeword_fixed_weight(code, weight, seed=[cfg.codeword_seed, k]) for k in range(count)]


def trial_rng(master_seed: int, cw_index: int, snr_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, cw_index, snr_index, trial])


@dataclass
class TrialRecord:
    snr_db: float
    codeword_id: str
    decoder: str
    trial: int
    outcome: str  # correct | ml_codeword_error | pcw_failure | jimpd_error
    objective: float | None
    d_gen: float | None
    seed: str

    def row(self) -> list:
        return [f"{self.snr_db:g}", self.codeword_id, self.decoder, self.trial, self.outcome,
                "" if self.objective is None else f"{self.objective:.12g}",
                "" if self.d_gen is None else f"{self.d_gen:.12g}", self.seed]


TRIAL_FIELDS = ["snr_db", "codeword_id", "decoder", "trial", "outcome", "objective", "d_gen", "seed"]
WER_FIELDS = ["snr_db", "codeword_id", "decoder", "trials", "errors", "skipped", "wer", "ci_low", "ci_high"]


class _Context:
    """Per-process decoding state for one configuration."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.channel: ChannelModel = load_channel(cfg.channel)
        self.code = make_code(cfg)
        self.trellis: Trellis = build_trellis(self.channel, self.code.n)
        self.codewords = pick_codewords(cfg, self.code)
        # the noiseless signal is fixed only for a deterministic channel with a known start
        known = self.channel.is_isi and np.count_nonzero(self.channel.start_distribution) == 1
        self.paths = [self.trellis.path_for_bits(c) if known else None for c in self.codewords]
        self.clean = [self.trellis.out[p] if p is not None else None for p in self.paths]
        self.lp = JointLPDecoder(self.trellis, self.code, cfg.lp_method)
        self.spa = SumProductDecoder(self.code)
        self.schedule = IterSchedule(cfg.outer_iters, cfg.inner_bp_iters)


_CONTEXTS: dict[str, _Context] = {}


def _context(cfg: ExperimentConfig) -> _Context:
    key = cfg.to_text()
    if key not in _CONTEXTS:
        _CONTEXTS.clear()
        _CONTEXTS[key] = _Context(cfg)
    return _CONTEXTS[key]


def _received(ctx: _Context, cw: int, rng: np.random.Generator, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    if ctx.clean[cw] is not None:
        clean = ctx.clean[cw]
        return clean + sigma * rng.standard_normal(len(clean)), clean
    return transmit_awgn(ctx.channel, ctx.codewords[cw], sigma, rng)


def run_chunk(cfg: ExperimentConfig, cw: int, snr_index: int, start: int, stop: int,
              decoders: tuple[str, ...] | None = None) -> list[dict]:
    """Decode trials ``start..stop-1`` with ``decoders``; returns one dict per trial."""
    decoders = cfg.decoders if decoders is None else decoders
    ctx = _context(cfg)
    snr = cfg.snr_db[snr_index]
    sigma = snr_db_to_sigma(snr, ctx.channel)
    bits = ctx.codewords[cw]
    ys = [_received(ctx, cw, trial_rng(cfg.master_seed, cw, snr_index, k), sigma) for k in range(start, stop)]
    Y = np.array([y for y, _ in ys])
    costs = branch_costs(ctx.trellis, Y, sigma, ctx.lp.mode).values
    paths = viterbi_batch(ctx.trellis, costs)[0] if "lp" in decoders else None
    out = []
    for j, k in enumerate(range(start, stop)):
        res: dict = {"trial": k}
        if "lp" in decoders:
            try:
                o = ctx.lp.decode_costs(costs[j], viterbi_path=paths[j])
            except SolverError as exc:
                log.error("solver failure at snr=%g codeword=%d trial=%d: %s", snr, cw, k, exc)
                res["lp"] = ("skipped", None, None)
            else:
                if o.kind == "TCW" and np.array_equal(o.bits, bits):
                    res["lp"] = ("correct", o.objective, None)
                else:
                    res["lp"] = ("ml_codeword_error" if o.kind == "TCW" else "pcw_failure",
                                 o.objective, np.asarray(o.flow.values, dtype=float))
        if "jimpd" in decoders:
            jo = jimpd_decode(ctx.trellis, ctx.code, Y[j], sigma, ctx.schedule, spa=ctx.spa)
            ok = jo.valid and np.array_equal(jo.bits, bits)
            res["jimpd"] = ("correct" if ok else "jimpd_error", None, None)
        out.append(res)
    return out


@dataclass
class SimulationResult:
    wer_rows: list[list]
    spectra: dict[str, DistanceSpectrum]
    trials: list[TrialRecord]
    codeword_ids: list[str]


def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, workers)


def _chunks(cfg, cw, si, pool, width, active):
    """Yield chunk results in trial order; ``width`` chunks are kept in flight.

    ``active()`` names the decoders still running when a chunk is scheduled.
    """
    bounds = [(s, min(s + cfg.chunk, cfg.max_words)) for s in range(0, cfg.max_words, cfg.chunk)]
    if pool is None:
        for s, e in bounds:
            yield run_chunk(cfg, cw, si, s, e, active())
        return
    pending = []
    try:
        for s, e in bounds:
            pending.append(pool.submit(run_chunk, cfg, cw, si, s, e, active()))
            if len(pending) >= width:
                yield pending.pop(0).result()
        while pending:
            yield pending.pop(0).result()
    finally:
        for fut in pending:
            fut.cancel()


def clopper_pearson(errors: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    a = (1 - level) / 2
    lo = 0.0 if errors == 0 else float(beta.ppf(a, errors, trials - errors + 1))
    hi = 1.0 if errors == trials else float(beta.ppf(1 - a, errors + 1, trials - errors))
    return lo, hi


def run_simulation(cfg: ExperimentConfig, workers: int | None = None) -> SimulationResult:
    """Simulate every (codeword, SNR) point until the stop rule and harvest LP errors."""
    ctx = _context(cfg)
    nworkers = _workers(workers)
    ids = [f"cw{k}" for k in range(len(ctx.codewords))]
    spectra = {cid: DistanceSpectrum(cid, ctx.clean[k] if ctx.clean[k] is not None else np.zeros(0))
               for k, cid in enumerate(ids)}
    harvest = set(cfg.snr_db if cfg.harvest_snr_db is None else cfg.harvest_snr_db)
    rows, records = [], []
    pool = ProcessPoolExecutor(nworkers) if nworkers > 1 else None
    try:
        for cw, cid in enumerate(ids):
            for si, snr in enumerate(cfg.snr_db):
                # each decoder stops on its own error target; extra results are ignored
                errors = {d: 0 for d in cfg.decoders}
                skipped = {d: 0 for d in cfg.decoders}
                trials = {d: 0 for d in cfg.decoders}
                active = list(cfg.decoders)
                for chunk in _chunks(cfg, cw, si, pool, 2 * nworkers, lambda: tuple(active)):
                    for res in chunk:
                        if not active:
                            break
                        k = res["trial"]
                        seed = f"{cfg.master_seed}:{cw}:{si}:{k}"
                        for dec in tuple(active):
                            trials[dec] += 1
                            outcome, obj, flow = res[dec]
                            if outcome == "skipped":
                                skipped[dec] += 1
                            else:
                                dist = None
                                if outcome != "correct":
                                    errors[dec] += 1
                                    if flow is not None:
                                        dist = _error_distance(ctx, cw, flow)
                                        if snr in harvest:
                                            _harvest(ctx, spectra[cid], flow, outcome)
                                if outcome != "correct" or cfg.log_all_trials:
                                    records.append(TrialRecord(snr, cid, dec, k, outcome, obj, dist, seed))
                            if errors[dec] >= cfg.min_errors or trials[dec] >= cfg.max_words:
                                active.remove(dec)
                    if not active:
                        break
                if snr in harvest and "lp" in trials:
                    spectra[cid].provenance.append((snr, trials["lp"]))
                for dec in cfg.decoders:
                    used = trials[dec] - skipped[dec]
                    lo, hi = clopper_pearson(errors[dec], used) if used else (0.0, 1.0)
                    wer = errors[dec] / used if used else float("nan")
                    rows.append([f"{snr:g}", cid, dec, used, errors[dec], skipped[dec],
                                 f"{wer:.6e}", f"{lo:.6e}", f"{hi:.6e}"])
                log.info("%s snr=%g trials=%d errors=%s", cid, snr, trials, errors)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    result = SimulationResult(rows, spectra, records, ids)
    if cfg.output_dir:
        write_results(cfg, result)
    return result


def _error_distance(ctx: _Context, cw: int, flow: np.ndarray) -> float | None:
    clean = ctx.clean[cw]
    if clean is None:
        return None
    p = project_sspcw(ctx.trellis, flow)
    try:
        return d_gen(clean, p, sigma_p_sq(ctx.trellis, flow, p))
    except DegeneratePseudoCodeword:
        return None


def _harvest(ctx: _Context, spectrum: DistanceSpectrum, flow: np.ndarray, outcome: str) -> None:
    kind = "TCW" if outcome == "ml_codeword_error" else "JD-TPCW"
    o = DecodeOutcome(kind, EdgeFlow(flow), np.zeros(0), np.zeros(0), 0.0, False)
    accumulate_spectrum(spectrum, ctx.trellis, o)


def write_results(cfg: ExperimentConfig, result: SimulationResult) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_used.txt").write_text(cfg.to_text())
    with open(out / "wer.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WER_FIELDS)
        w.writerows(result.wer_rows)
    with open(out / "trials.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_FIELDS)
        w.writerows(r.row() for r in result.trials)
    if "lp" in cfg.decoders:
        write_spectra(result.spectra.values(), out / "spectrum.csv")


def predict_wer(spectra, snr_grid, channel: ChannelModel) -> list[dict]:
    """Truncated union bound per codeword and its mean over codewords."""
    spectra = list(spectra.values()) if isinstance(spectra, dict) else list(spectra)
    empty = [s.codeword_id for s in spectra if not s.records]
    if not spectra or empty:
        raise ValueError(f"no harvested errors for {empty or 'any codeword'}; "
                         "run a low-SNR simulation (WER near 1e-1) to harvest the spectrum first")
    rows = []
    for snr in snr_grid:
        sigma = snr_db_to_sigma(snr, channel)
        per = {s.codeword_id: union_bound(s, sigma).value for s in spectra}
        rows.append({"snr_db": snr, "wer_bound": float(np.mean(list(per.values()))), **per})
    return rows


def write_prediction(rows: list[dict], path) -> None:
    ids = [k for k in rows[0] if k not in ("snr_db", "wer_bound")]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "wer_bound"] + [f"wer_bound_{i}" for i in ids])
        for r in rows:
            w.writerow([f"{r['snr_db']:g}", f"{r['wer_bound']:.6e}"] + [f"{r[i]:.6e}" for i in ids])


def enumerate_pcw(channel: ChannelModel, code: ParityCheckCode, trials: int, snr_db: float,
                  seed: int = 0, words=None, method: str = "eager",
                  size_cap: int = 256) -> set[tuple[float, ...]]:
    """Distinct bit-wise pseudo-codewords seen in ``trials`` decodes per transmitted codeword."""
    if code.n * channel.num_states > size_cap:
        raise ValueError(f"instance too large for enumeration (n*|S| = {code.n * channel.num_states} > {size_cap})")
    trellis = build_trellis(channel, code.n)
    dec = JointLPDecoder(trellis, code, method)
    sigma = snr_db_to_sigma(snr_db, channel)
    words = codewords(code) if words is None else words
    found: set[tuple[float, ...]] = set()
    for w, bits in enumerate(words):
        for k in range(trials):
            y, _ = transmit_awgn(channel, bits, sigma, [seed, w, k])
            o = dec.decode(y, sigma)
            if o.kind == "JD-TPCW":
                found.add(tuple(float(v) for v in np.round(o.f, 6)))
    return found

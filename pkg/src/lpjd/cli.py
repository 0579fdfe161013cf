"""Command-line entry point: ``lpjd <subcommand>``.

Failures exit nonzero and print one JSON object ``{"error": category, "message": ...}``
on stderr.  Categories: config, input, solver, spectrum, internal.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import sim
from .code import gen_regular_code, read_alist, spc, write_alist
from .lp import JointLPDecoder, SolverError
from .pcw import read_spectra
from .trellis import build_trellis, load_channel, snr_db_to_sigma

EXIT_CODES = {"config": 3, "input": 4, "solver": 5, "spectrum": 6, "internal": 1}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def resolve_code(text: str):
    """``spc:N``, ``regular:n,dv,dc,seed`` or an alist path."""
    try:
        if text.startswith("spc:"):
            return spc(int(text[4:]))
        if text.startswith("regular:"):
            n, dv, dc, seed = (int(v) for v in text[8:].split(","))
            return gen_regular_code(n, dv, dc, seed=seed)
        return read_alist(text)
    except (OSError, ValueError) as exc:
        raise CliError("input", f"cannot load code {text!r}: {exc}") from exc


def _channel(text: str):
    try:
        return load_channel(text)
    except (OSError, ValueError) as exc:
        raise CliError("input", f"cannot load channel {text!r}: {exc}") from exc


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def cmd_gen_code(args) -> None:
    try:
        code = gen_regular_code(args.n, args.dv, args.dc, seed=args.seed, avoid_4cycles=not args.allow_4cycles)
    except (ValueError, RuntimeError) as exc:
        raise CliError("config", str(exc)) from exc
    write_alist(code, args.out)
    print(json.dumps({"alist": args.out, "n": code.n, "m": code.m, "seed": args.seed,
                      "has_4cycle": code.has_4cycle()}))


def cmd_decode(args) -> None:
    channel = _channel(args.channel)
    code = resolve_code(args.code)
    try:
        y = np.array(_floats(open(args.received).read()))
    except (OSError, ValueError) as exc:
        raise CliError("input", f"cannot read received vector: {exc}") from exc
    if len(y) != code.n:
        raise CliError("input", f"received vector has {len(y)} samples, code length is {code.n}")
    if (args.sigma is None) == (args.snr is None):
        raise CliError("config", "give exactly one of --sigma and --snr")
    sigma = args.sigma if args.sigma is not None else snr_db_to_sigma(args.snr, channel)
    trellis = build_trellis(channel, code.n)
    o = JointLPDecoder(trellis, code, args.method).decode(y, sigma)
    print(json.dumps({"kind": o.kind, "objective": o.objective, "ml_certificate": o.ml_certificate,
                      "bits": [round(float(v), 9) for v in o.f], "signal": [round(float(v), 9) for v in o.p]}))


def _overrides(pairs) -> dict[str, str]:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise CliError("config", f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    return out


def cmd_simulate(args) -> None:
    try:
        cfg = sim.load_config(args.config, _overrides(args.set))
    except OSError as exc:
        raise CliError("config", f"cannot read config: {exc}") from exc
    except sim.ConfigError as exc:
        raise CliError("config", str(exc)) from exc
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if not cfg.output_dir:
        raise CliError("config", "output_dir is not set")
    try:
        res = sim.run_simulation(cfg, workers=args.workers)
    except (OSError, ValueError) as exc:
        raise CliError("input", str(exc)) from exc
    print(json.dumps({"output_dir": cfg.output_dir, "points": len(res.wer_rows),
                      "logged_trials": len(res.trials)}))


def cmd_enumerate(args) -> None:
    channel = _channel(args.channel)
    code = resolve_code(args.code)
    try:
        found = sim.enumerate_pcw(channel, code, args.trials, args.snr, seed=args.seed)
    except ValueError as exc:
        raise CliError("config", str(exc)) from exc
    rows = sorted(found)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["spcw"])
            w.writerows([" ".join(f"{v:g}" for v in r)] for r in rows)
    for r in rows:
        print(" ".join(f"{v:g}" for v in r))


def cmd_predict(args) -> None:
    channel = _channel(args.channel)
    try:
        spectra = read_spectra(args.spectrum)
    except (OSError, KeyError, ValueError) as exc:
        raise CliError("input", f"cannot read spectrum: {exc}") from exc
    try:
        rows = sim.predict_wer(spectra, _floats(args.snr), channel)
    except ValueError as exc:
        raise CliError("spectrum", str(exc)) from exc
    sim.write_prediction(rows, args.out)
    for r in rows:
        print(f"{r['snr_db']:g} {r['wer_bound']:.4e}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lpjd", description="Joint LP decoding of LDPC codes on ISI channels.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-code", help="generate a regular LDPC code as alist")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dv", type=int, default=3)
    p.add_argument("--dc", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allow-4cycles", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_code)

    p = sub.add_parser("decode", help="LP-decode one received vector")
    p.add_argument("--channel", default="pdic")
    p.add_argument("--code", required=True, help="alist path, spc:N or regular:n,dv,dc,seed")
    p.add_argument("--received", required=True, help="file of whitespace/comma separated samples")
    p.add_argument("--sigma", type=float)
    p.add_argument("--snr", type=float)
    p.add_argument("--method", choices=["adaptive", "eager"], default="adaptive")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("simulate", help="run an SNR sweep from a key=value config")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int, help=f"worker processes (default ${sim.WORKERS_ENV} or 1)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("enumerate-pcw", help="collect distinct bit-wise pseudo-codewords")
    p.add_argument("--channel", default="pdic")
    p.add_argument("--code", required=True)
    p.add_argument("--trials", type=int, default=200, help="trials per transmitted codeword")
    p.add_argument("--snr", type=float, default=-3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("predict", help="truncated union bound from a harvested spectrum")
    p.add_argument("--spectrum", required=True)
    p.add_argument("--snr", required=True, help="comma separated SNR grid in dB")
    p.add_argument("--channel", default="pdic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES[exc.category]
    except SolverError as exc:
        print(json.dumps({"error": "solver", "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES["solver"]
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).debug("unexpected failure", exc_info=True)
        print(json.dumps({"error": "internal", "message": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return EXIT_CODES["internal"]
    return 0


if __name__ == "__main__":
    sys.exit(main())

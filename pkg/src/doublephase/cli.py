"""Command-line interface: ``doublephase {denoise, gamma-sweep, maximal, synth}``.

Settings come from built-in defaults, then an INI file (``--config``), then
``--set section.key=value`` pairs, then dedicated flags.  Exit codes: 0 on
success, 1 on bad input or a violated hypothesis, 2 when a run finished
without meeting its target (non-converged solve, failed check).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .energy import RegularizationMode, energy_I
from .gamma import WeightHypothesisError, gamma_sweep, recovery_sequence, summarize_sweep
from .grid import ScalarField
from .imageio import ImageFormatError, read_image, write_image
from .maximal import lp_experiment, lp_threshold
from .solver import SolveOptions, minimize_I, minimize_I_eps, rof_baseline, staircase_metric
from .synth import KINDS, synthesize
from .weight import WeightSpec, boundary_positivity, estimate_weight

log = logging.getLogger("doublephase")

INTEGRABLE_SLOPE = 0.05
DIVERGENT_SLOPE = 0.2


class ConfigError(ValueError):
    pass


def _floats(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(t) for t in text)
    return tuple(float(t) for t in str(text).replace(",", " ").split())


def _ints(text) -> tuple:
    return tuple(int(float(t)) for t in _floats(text))


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    """Every setting a command may read, grouped by INI section."""

    # [run]
    input_path: str = ""
    output_dir: str = "out"
    seed: int = 0
    spacing: float = 1.0
    override: bool = False
    # [denoise]
    model: str = "double_phase"
    epsilon: float = 1e-3
    mode: str = "combined"
    lam: float = 1.0
    weight_path: str = ""
    compare_rof: bool = True
    # [weight]
    presmooth_sigma: float = 2.0
    edge_threshold: float = 0.1
    a_max: float = 2.0
    holder_alpha: float = 1.0
    modulus_constant: float = 1.0
    # [solve]
    max_iters: int = 50000
    tol: float = 1e-8
    check_every: int = 100
    method: str = "primal_dual"
    # [gamma]
    eps_list: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    size: int = 64
    noise: float | None = None  # None: per-command default
    # [maximal]
    alpha: float = 0.75
    sigma: float = 1.0
    dimension: int = 2
    p_list: tuple = (3.0, 4.5)
    resolutions: tuple = (64, 128, 256, 512)
    maximal_method: str = "dyadic"
    # [synth]
    kind: str = "ramp"

    SECTIONS = {
        "run": ("input_path", "output_dir", "seed", "spacing", "override"),
        "denoise": ("model", "epsilon", "mode", "lam", "weight_path", "compare_rof"),
        "weight": ("presmooth_sigma", "edge_threshold", "a_max", "holder_alpha", "modulus_constant"),
        "solve": ("max_iters", "tol", "check_every", "method"),
        "gamma": ("eps_list", "size", "noise"),
        "maximal": ("alpha", "sigma", "dimension", "p_list", "resolutions", "maximal_method"),
        "synth": ("kind",),
    }

    def set(self, key: str, raw) -> None:
        names = {f.name: f for f in fields(self)}
        if key not in names:
            raise ConfigError(f"unknown setting {key!r}")
        current = getattr(self, key)
        try:
            if key in ("eps_list", "p_list"):
                value = _floats(raw)
            elif key == "resolutions":
                value = _ints(raw)
            elif key == "noise":
                value = None if str(raw).lower() in ("", "none") else float(raw)
            elif isinstance(current, bool):
                value = _bool(raw)
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = str(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        setattr(self, key, value)

    def load_ini(self, path: str) -> None:
        parser = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in parser.sections():
            allowed = self.SECTIONS.get(section)
            if allowed is None:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in allowed:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                self.set(key, raw)

    def weight_spec(self) -> WeightSpec:
        return WeightSpec(self.presmooth_sigma, self.edge_threshold, self.a_max,
                          self.holder_alpha, self.modulus_constant)

    def solve_options(self, **kw) -> SolveOptions:
        return SolveOptions(max_iters=self.max_iters, tol=self.tol, check_every=self.check_every,
                            seed=self.seed, **kw)

    def validate(self) -> None:
        if self.model not in ("rof", "double_phase", "i_eps"):
            raise ConfigError(f"unknown model {self.model!r}")
        RegularizationMode.parse(self.mode)
        if self.method not in ("descent", "primal_dual"):
            raise ConfigError(f"unknown solver method {self.method!r}")
        if not self.spacing > 0 or not self.lam > 0:
            raise ConfigError("spacing and lam must be positive")
        if self.maximal_method not in ("dyadic", "ball"):
            raise ConfigError(f"unknown maximal method {self.maximal_method!r}")
        self.weight_spec()
        self.solve_options()


# --------------------------------------------------------------------------
# output helpers (stable formatting for bit-identical reruns)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _load_weight(cfg: RunConfig, f: ScalarField) -> ScalarField:
    if cfg.weight_path:
        a = read_image(cfg.weight_path, f.spacing)
        if a.shape != f.shape:
            raise ConfigError("weight image and input differ in size")
        return a.with_values(a.values * cfg.a_max)
    return estimate_weight(f, cfg.weight_spec())


def _weight_image(a: ScalarField) -> ScalarField:
    top = float(a.values.max())
    return a.with_values(a.values / top) if top > 0 else a


# --------------------------------------------------------------------------
# commands


def cmd_denoise(cfg: RunConfig) -> int:
    """Restore ``input_path`` with the chosen model.

    Writes ``restored.pgm``, ``weight.pgm`` (scaled by its maximum, recorded
    as ``weight_scale``), ``report.json`` and ``trace.csv``.
    """
    if not cfg.input_path:
        raise ConfigError("denoise needs an input image")
    f = read_image(cfg.input_path, cfg.spacing)
    a = _load_weight(cfg, f)
    opts = cfg.solve_options(record_trace=True)
    if cfg.model == "rof":
        res = rof_baseline(f, cfg.lam, opts)
    elif cfg.model == "double_phase":
        res = minimize_I(f, a, opts)
    else:
        res = minimize_I_eps(f, a, cfg.epsilon, cfg.mode, opts, method=cfg.method)
    report = {
        "model": cfg.model,
        "energy": res.report.as_dict(),
        "energy_I": energy_I(res.minimizer, f, a).as_dict(),
        "certificate": res.certificate,
        "threshold": res.threshold,
        "iterations": res.iterations,
        "converged": res.converged,
        "staircase_metric": staircase_metric(res.minimizer),
        "weight_scale": float(a.values.max()),
        "boundary_positivity": boundary_positivity(a),
    }
    if cfg.compare_rof and cfg.model != "rof":
        rof = rof_baseline(f, cfg.lam, cfg.solve_options())
        report["rof_staircase_metric"] = staircase_metric(rof.minimizer)
        report["rof_converged"] = rof.converged
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_image(os.path.join(cfg.output_dir, "restored.pgm"), res.minimizer)
    write_image(os.path.join(cfg.output_dir, "weight.pgm"), _weight_image(a))
    write_json(os.path.join(cfg.output_dir, "report.json"), report)
    write_csv(os.path.join(cfg.output_dir, "trace.csv"), ["iter", "energy", "certificate"], res.trace)
    print(f"energy {res.report.total:.10g}  certificate {res.certificate:.3e}  "
          f"iterations {res.iterations}  converged {res.converged}")
    if "rof_staircase_metric" in report:
        print(f"staircase metric {report['staircase_metric']:.4f} (rof {report['rof_staircase_metric']:.4f})")
    return 0 if res.converged else 2


def default_gamma_instance(size: int = 64, seed: int = 0, noise: float = 0.05):
    """Two-region image on spacing 0.2 and its estimated weight.

    The spacing puts every recovery radius ``eps**(1/6)``, eps >= 1e-4, above
    one cell; the weight vanishes along the region edge and stays positive
    on the boundary.
    """
    h = 0.2
    f = synthesize("two-region", size, seed=seed, noise=noise, spacing=h)
    spec = WeightSpec(presmooth_sigma=2 * h, edge_threshold=0.5, a_max=1.0, modulus_constant=1.0)
    return f, estimate_weight(f, spec)


def cmd_gamma_sweep(cfg: RunConfig) -> int:
    """Sweep ``eps_list`` and write ``sweep.csv``, ``summary.json`` and images.

    Without ``input_path`` the default two-region instance is used.
    """
    if cfg.input_path:
        f = read_image(cfg.input_path, cfg.spacing)
        a = _load_weight(cfg, f)
    else:
        noise = 0.05 if cfg.noise is None else cfg.noise
        f, a = default_gamma_instance(cfg.size, cfg.seed, noise)
    if not cfg.override and boundary_positivity(a) < 1.0:
        raise WeightHypothesisError(
            "weight vanishes on part of the boundary; the convergence theorem has the hypothesis "
            "a > 0 on the boundary (use --override to run anyway)"
        )
    opts = cfg.solve_options()
    ref = minimize_I(f, a, SolveOptions(max_iters=max(cfg.max_iters, 200000), tol=1e-9,
                                        check_every=cfg.check_every))
    records = gamma_sweep(f, a, cfg.eps_list, opts, RegularizationMode.parse(cfg.mode),
                          override=cfg.override, reference=ref, method=cfg.method)
    summary = summarize_sweep(records)
    os.makedirs(cfg.output_dir, exist_ok=True)
    names = records[0].fieldnames()
    write_csv(os.path.join(cfg.output_dir, "sweep.csv"), names,
              [[getattr(r, k) for k in names] for r in records])
    write_json(os.path.join(cfg.output_dir, "summary.json"), {
        "checks": summary,
        "target_energy": ref.report.total,
        "reference_certificate": ref.certificate,
        "rows": len(records),
        "unconverged_rows": sum(not r.converged for r in records),
    })
    lo, hi = float(f.values.min()), float(f.values.max())
    span = hi - lo if hi > lo else 1.0

    def scaled(u):
        return u.with_values((u.values - lo) / span)

    write_image(os.path.join(cfg.output_dir, "reference.pgm"), scaled(ref.minimizer))
    for i, u in enumerate(recovery_sequence(ref.minimizer, cfg.eps_list)):
        write_image(os.path.join(cfg.output_dir, f"recovery_{i:02d}.pgm"), scaled(u))
    for key, verdict in summary.items():
        print(f"{key}: {verdict}")
    failed = any(v in ("FAIL", "VOID") for v in summary.values())
    return 2 if failed else 0


def cmd_maximal(cfg: RunConfig) -> int:
    """Integrability experiment for the plane measure; writes ``lp.csv`` and ``slopes.csv``."""
    n, sigma, alpha = cfg.dimension, cfg.sigma, cfg.alpha
    if sigma != int(sigma):
        raise ConfigError("only integer sigma is supported")
    p_star = lp_threshold(n, sigma, alpha)
    print(f"p* = 1 + alpha/(n - sigma - alpha) = {p_star:g}")
    rows, slopes = [], []
    for p in cfg.p_list:
        exp = lp_experiment(alpha, int(sigma), p, cfg.resolutions, n=n, method=cfg.maximal_method)
        rows.extend(exp.rows())
        if exp.slope <= INTEGRABLE_SLOPE:
            verdict = "slope ≈ 0: integrable side"
        elif exp.slope >= DIVERGENT_SLOPE:
            verdict = "slope > 0: divergent side"
        else:
            verdict = "slope inconclusive"
        slopes.append((p, exp.slope, verdict))
        print(f"p = {p:g}: slope {exp.slope:.4f}; {verdict}")
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_csv(os.path.join(cfg.output_dir, "lp.csv"), ["resolution", "p", "integral"], rows)
    write_csv(os.path.join(cfg.output_dir, "slopes.csv"), ["p", "slope", "verdict"], slopes)
    return 0


def cmd_synth(cfg: RunConfig, output: str = None, bit_depth: int = 16) -> int:
    """Write a synthetic image; the ramp rises along ``x`` as ``i / (size - 1)``."""
    if cfg.kind not in KINDS:
        raise ConfigError(f"unknown kind {cfg.kind!r}; expected one of {', '.join(KINDS)}")
    u = synthesize(cfg.kind, cfg.size, seed=cfg.seed, noise=cfg.noise, spacing=cfg.spacing)
    path = output or os.path.join(cfg.output_dir, f"{cfg.kind.replace('+', '_')}_{cfg.size}.pgm")
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    write_image(path, u, bit_depth)
    print(path)
    return 0


# --------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [run], [denoise], [weight], ... sections")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one setting (section prefix optional, e.g. solve.tol=1e-8)")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--override", action="store_true",
                        help="run even when the weight violates a theorem hypothesis")
    common.add_argument("-o", "--output-dir", help="directory for outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="doublephase", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", parents=[common], help="restore a grayscale image")
    p.add_argument("input", help="PGM or PNG image")
    p.add_argument("--model", choices=("rof", "double_phase", "i_eps"))
    p.add_argument("--epsilon", type=float)
    p.add_argument("--mode", choices=[m.value for m in RegularizationMode])
    p.add_argument("--weight", dest="weight_path", help="weight image, scaled by a_max")

    p = sub.add_parser("gamma-sweep", parents=[common], help="regularisation sweep")
    p.add_argument("input", nargs="?", help="image (default: synthetic two-region)")
    p.add_argument("--eps", dest="eps_list", help="decreasing eps values, comma separated")
    p.add_argument("--weight", dest="weight_path", help="weight image, scaled by a_max")

    p = sub.add_parser("maximal", parents=[common], help="maximal-function integrability run")
    p.add_argument("--alpha", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--p", dest="p_list", help="exponents, comma separated")
    p.add_argument("--resolutions", help="increasing resolutions, comma separated")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic test image")
    p.add_argument("kind", help=f"one of {', '.join(KINDS)}")
    p.add_argument("size", nargs="?", type=int, default=64)
    p.add_argument("--noise", type=float)
    p.add_argument("--out", help="output file (.pgm or .png)")
    p.add_argument("--bits", type=int, choices=(8, 16), default=16)
    return parser


_FLAG_KEYS = ("model", "epsilon", "mode", "weight_path", "eps_list", "alpha", "sigma", "p_list",
              "resolutions", "noise")


def build_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg.load_ini(args.config)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        cfg.set(key.strip().split(".")[-1], raw.strip())
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg.set(key, value)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.override:
        cfg.override = True
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if getattr(args, "input", None):
        cfg.input_path = args.input
    if args.command == "synth":
        cfg.kind = args.kind
        cfg.size = args.size
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "denoise":
            return cmd_denoise(cfg)
        if args.command == "gamma-sweep":
            return cmd_gamma_sweep(cfg)
        if args.command == "maximal":
            return cmd_maximal(cfg)
        return cmd_synth(cfg, args.out, args.bits)
    except (ConfigError, ImageFormatError, WeightHypothesisError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

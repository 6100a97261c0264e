"""Experiment orchestration: configs in, CSV/JSON artifacts plus manifest out.

Configs are plain-text ``key = value`` lines ('#' starts a comment). Every
artifact carries its seed and config echo in '#' header lines; reruns with
the same config and seed produce byte-identical files except for the
``# generated=<timestamp>`` line. Results of sweep points are written in
sweep order regardless of worker completion order.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .completeness import (
    ErgodicFamily,
    completeness_verdict,
    entropy_curve,
    family_curve_constraints,
    mean_field_pressure,
    pressure_slope_gap,
)
from .convex import CurveSamples, biconjugate, conjugate, tangent_set
from .errors import ConfigError, ThermolabError
from .gibbs import pressure_limit
from .kms import (
    GaussianTestFunction,
    default_probes,
    default_quadrature_step,
    kms_residual,
    kms_smeared_residual,
)
from .lattice import ModelSpec, build_model

SUBCOMMANDS = ("pressure", "entropy-curve", "legendre", "completeness",
               "kms-verify", "diff-test")


class Config:
    """key=value config with typed access and unused-key detection."""

    def __init__(self, entries: dict, source: str = "<config>"):
        self.entries = entries  # key -> (raw value, line number)
        self.source = source
        self.consumed: dict = {}

    @classmethod
    def load(cls, path) -> "Config":
        entries: dict = {}
        text = Path(path).read_text()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("expected 'key = value'", line=lineno)
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not key:
                raise ConfigError("empty key", line=lineno)
            if key in entries:
                raise ConfigError("duplicate key", key=key, line=lineno)
            entries[key] = (value, lineno)
        return cls(entries, str(path))

    def _take(self, key: str, required: bool):
        if key not in self.entries:
            if required:
                raise ConfigError("missing required key", key=key)
            return None
        value, _ = self.entries[key]
        self.consumed[key] = value
        return value

    def get_str(self, key: str, default: str | None = None, required: bool = False,
                choices=None) -> str | None:
        value = self._take(key, required)
        if value is None:
            value = default
        if value is not None and choices and value not in choices:
            raise ConfigError(f"value {value!r} not in {sorted(choices)}",
                              key=key, line=self._line(key))
        return value

    def get_float(self, key: str, default=None, required: bool = False):
        value = self._take(key, required)
        if value is None:
            return default
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"cannot parse {value!r} as a number",
                              key=key, line=self._line(key)) from None

    def get_int(self, key: str, default=None, required: bool = False):
        value = self._take(key, required)
        if value is None:
            return default
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"cannot parse {value!r} as an integer",
                              key=key, line=self._line(key)) from None

    def get_floats(self, key: str, default=None, required: bool = False):
        value = self._take(key, required)
        if value is None:
            return default
        try:
            return _parse_number_list(value)
        except ValueError as exc:
            raise ConfigError(str(exc), key=key, line=self._line(key)) from None

    def get_ints(self, key: str, default=None, required: bool = False):
        floats = self.get_floats(key, default=None, required=required)
        if floats is None:
            return default
        ints = [int(round(x)) for x in floats]
        if any(abs(i - x) > 1e-9 for i, x in zip(ints, floats)):
            raise ConfigError("expected integers", key=key, line=self._line(key))
        return ints

    def _line(self, key: str):
        return self.entries[key][1] if key in self.entries else None

    def finalize(self):
        unused = sorted(set(self.entries) - set(self.consumed))
        if unused:
            key = unused[0]
            raise ConfigError("unknown key", key=key, line=self._line(key))

    def echo(self) -> dict:
        return dict(sorted(self.consumed.items()))


def _parse_number_list(text: str) -> list[float]:
    """Scalars, comma lists, and lo:hi[:step] inclusive ranges."""
    text = text.strip()
    if "," in text:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    if ":" in text:
        parts = text.split(":")
        if len(parts) == 2:
            lo, hi, step = float(parts[0]), float(parts[1]), 1.0
        elif len(parts) == 3:
            lo, hi, step = (float(p) for p in parts)
        else:
            raise ValueError(f"bad range {text!r}")
        if step <= 0 or hi < lo:
            raise ValueError(f"bad range bounds {text!r}")
        return list(np.arange(lo, hi + step / 2.0, step))
    return [float(text)]


def _model_from_config(cfg: Config) -> ModelSpec:
    kind = cfg.get_str("model", required=True,
                       choices=("free_spins", "ising_chain", "curie_weiss",
                                "transverse_ising_chain"))
    return ModelSpec(
        kind,
        J=cfg.get_float("J", 0.0),
        h=cfg.get_float("h", 0.0),
        hx=cfg.get_float("hx", 0.0),
        boundary=cfg.get_str("boundary", "periodic", choices=("periodic", "open")),
    )


class ArtifactWriter:
    """Buffered single writer: runners queue artifacts, flush emits them.

    Flushing happens once the whole config has been consumed, so every CSV
    header carries the complete config echo alongside the seed.
    """

    def __init__(self, out_dir: Path, seed: int):
        self.out_dir = out_dir
        self.seed = seed
        self.pending: list[tuple] = []
        self.records: list[dict] = []

    def write_csv(self, name: str, columns: list[str], rows: list[tuple]):
        self.pending.append(("csv", name, columns, list(rows)))

    def write_curve(self, name: str, curve: CurveSamples):
        self.pending.append(("curve_csv", name, None, curve))

    def write_json(self, name: str, payload, rows: int):
        self.pending.append(("json", name, rows, payload))

    def _header(self, echo: dict) -> str:
        lines = [
            f"# generated={datetime.datetime.now(datetime.timezone.utc).isoformat()}",
            f"# thermolab={__version__}",
            f"# seed={self.seed}",
        ]
        lines.extend(f"# {k}={v}" for k, v in sorted(echo.items()))
        return "\n".join(lines) + "\n"

    def flush(self, echo: dict):
        for kind, name, extra, payload in self.pending:
            path = self.out_dir / name
            if kind == "csv":
                with path.open("w") as fh:
                    fh.write(self._header(echo))
                    fh.write(",".join(extra) + "\n")
                    for row in payload:
                        fh.write(",".join(_cell(v) for v in row) + "\n")
                rows = len(payload)
            elif kind == "curve_csv":
                meta = dict(payload.metadata)
                meta["seed"] = self.seed
                body = CurveSamples(payload.grid, payload.values,
                                    payload.orientation, meta).to_csv()
                path.write_text(self._header(echo) + body)
                rows = payload.npoints
            else:
                path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
                rows = extra
            self.records.append({"path": name, "kind": kind, "rows": rows})
        self.pending.clear()


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _theta_grid(cfg: Config, n_components: int) -> list[tuple]:
    theta0 = cfg.get_floats("theta0", required=True)
    if n_components == 1:
        return [(t0,) for t0 in theta0]
    theta1 = cfg.get_floats("theta1", [0.0])
    return [(t0, t1) for t0 in theta0 for t1 in theta1]


# -- subcommand runners ----------------------------------------------------


def _run_pressure(cfg: Config, writer: ArtifactWriter, rng, threads: int):
    spec = _model_from_config(cfg)
    sizes = cfg.get_ints("sizes", required=True)
    fit = cfg.get_str("fit", "affine", choices=("affine", "geometric"))
    thetas = _theta_grid(cfg, spec.n_observables)

    estimates = _pool_map(lambda th: pressure_limit(spec, th, sizes, fit=fit),
                          thetas, threads)
    columns = [f"theta_{k}" for k in range(spec.n_observables)]
    columns += ["N", "phi_N", "value", "extrapolation_error"]
    rows = []
    for th, est in zip(thetas, estimates):
        for n, phi in est.per_size:
            rows.append(tuple(th) + (n, phi, est.value, est.extrapolation_error))
    writer.write_csv("pressure.csv", columns, rows)
    return {}


def _curve_from_config(cfg: Config, family: ErgodicFamily) -> CurveSamples:
    mode = cfg.get_str("constrain", "joint", choices=("energy", "joint"))
    if mode == "energy":
        e_values = cfg.get_floats("e_values", required=True)
        grid = [{0: e} for e in e_values]
    else:
        m_values = cfg.get_floats("m_values", required=True)
        grid = family_curve_constraints(family, m_values)
    return entropy_curve(family, grid)


def _run_entropy_curve(cfg: Config, writer: ArtifactWriter, rng, threads: int):
    family = ErgodicFamily(_model_from_config(cfg))
    curve = _curve_from_config(cfg, family)
    writer.write_curve("entropy_curve.csv", curve)
    return {}


def _run_legendre(cfg: Config, writer: ArtifactWriter, rng, threads: int):
    family = ErgodicFamily(_model_from_config(cfg))
    curve = _curve_from_config(cfg, family)
    thetas = _theta_grid(cfg, curve.ndim)

    def one(th):
        grid_value = conjugate(curve, th)
        scan_value = (
            mean_field_pressure(family, th) if curve.ndim == family.n_components
            else float("nan")
        )
        return grid_value, scan_value

    results = _pool_map(one, thetas, threads)
    columns = [f"theta_{k}" for k in range(curve.ndim)] + ["value", "scan_value"]
    rows = [tuple(th) + tuple(res) for th, res in zip(thetas, results)]
    writer.write_csv("pressure_curve.csv", columns, rows)

    extras = {}
    if curve.ndim == 1 or curve.axes() is not None:
        # chain-of-samples grids (joint curves) have no product structure to
        # conjugate back onto; the round trip is emitted where it is defined
        hull = biconjugate(curve)
        roundtrip = CurveSamples(
            curve.grid, hull.values, curve.orientation,
            dict(curve.metadata, roundtrip="biconjugate"),
        )
        writer.write_curve("biconjugate.csv", roundtrip)
        extras["biconjugate_max_defect"] = float(np.max(np.abs(hull.values - curve.values)))
    return extras


def _run_completeness(cfg: Config, writer: ArtifactWriter, rng, threads: int):
    family = ErgodicFamily(_model_from_config(cfg))
    mode = cfg.get_str("constrain", "energy", choices=("energy", "joint"))
    tol = cfg.get_float("tol", 1e-9)
    if mode == "energy":
        constraints = [{0: e} for e in cfg.get_floats("e_values", required=True)]
    else:
        constraints = family_curve_constraints(
            family, cfg.get_floats("m_values", required=True)
        )
    report = completeness_verdict(family, constraints, tol=tol)
    payload = {
        "verdict": report.verdict,
        "witness": report.witness.to_json_dict(),
        "records": [r.to_json_dict(report.verdict) for r in report.records],
        "family": family.kind,
        "model": family.model.config_echo(),
    }
    writer.write_json("completeness.json", payload, rows=len(report.records))
    return {"verdict": report.verdict}


def _run_kms_verify(cfg: Config, writer: ArtifactWriter, rng, threads: int):
    spec = _model_from_config(cfg)
    n = cfg.get_int("N", required=True)
    family = build_model(spec, spec.region(n))
    thetas = _theta_grid(cfg, spec.n_observables)
    times = cfg.get_floats("times", [0.0, 0.7, 2.3])
    seed = int(writer.seed)
    sigma_w = cfg.get_float("sigma_w", 2.0)
    smeared_per_theta = cfg.get_int("smeared_probes", 1)

    probes = default_probes(family, seed, times)
    theta_cols = [f"theta_{k}" for k in range(spec.n_observables)]

    def residual_rows(th):
        rows = []
        for a, b, t in probes:
            res = kms_residual(family, th, a, b, t)
            rows.append((spec.kind, n) + tuple(th) + (a.label, b.label, t, res))
        return rows

    rows = [row for batch in _pool_map(residual_rows, thetas, threads) for row in batch]
    writer.write_csv("residuals.csv",
                     ["model", "N"] + theta_cols + ["A", "B", "t", "residual"], rows)

    smeared_rows = []
    if sigma_w > 0 and smeared_per_theta > 0:
        f = GaussianTestFunction(sigma_w)
        for th in thetas:
            step = default_quadrature_step(family, th, f)
            for a, b, _ in probes[:smeared_per_theta]:
                res = kms_smeared_residual(family, th, a, b, f, step=step)
                smeared_rows.append(
                    (spec.kind, n) + tuple(th)
                    + (a.label, b.label, float("nan"), res, sigma_w, step)
                )
        writer.write_csv(
            "smeared.csv",
            ["model", "N"] + theta_cols
            + ["A", "B", "t", "residual", "sigma_w", "quadrature_step"],
            smeared_rows,
        )
    worst = max(
        [r[-1] for r in rows] + [r[-3] for r in smeared_rows], default=0.0
    )
    return {"max_residual": worst}


def _run_diff_test(cfg: Config, writer: ArtifactWriter, rng, threads: int):
    family = ErgodicFamily(_model_from_config(cfg))
    theta0 = cfg.get_float("theta0", required=True)
    step = cfg.get_float("kink_step", 1e-4)
    spacing = cfg.get_float("m_spacing", 1e-3)
    m_max = cfg.get_float("m_max", 0.97)

    # smoothness of the entropy surface along the family curve; the sweep is
    # padded two steps so every reported point has full two-interval stencils
    pad = 2.0 * spacing
    m_values = np.arange(-(m_max + pad), m_max + pad + spacing / 2.0, spacing)
    curve = entropy_curve(family, family_curve_constraints(family, m_values))
    width_rows = []
    for i in range(2, curve.npoints - 2):
        if abs(curve.grid[i, family.n_components - 1]) > m_max:
            continue
        ts = tangent_set(curve, curve.grid[i])
        width_rows.append(tuple(curve.grid[i]) + tuple(ts.width) + (ts.max_width,))
    coord_cols = [f"q_{k}" for k in range(curve.ndim)]
    width_cols = [f"width_{k}" for k in range(curve.ndim)]
    writer.write_csv("tangent_widths.csv", coord_cols + width_cols + ["max_width"],
                     width_rows)
    max_tangent_width = max((r[-1] for r in width_rows), default=0.0)

    # one-sided pressure slopes across the symmetry-breaking control value
    base = [theta0] + [0.0] * (family.n_components - 1)
    gap = pressure_slope_gap(family, base, component=family.n_components - 1, step=step)
    writer.write_csv(
        "pressure_kink.csv",
        ["theta_0", "component", "step", "left_slope", "right_slope", "gap"],
        [(theta0, gap.component, gap.step, gap.left, gap.right, gap.gap)],
    )

    theta1_values = cfg.get_floats("theta1_values", None)
    if theta1_values:
        def scan_phi(t1):
            return mean_field_pressure(family, [theta0] + [0.0] * (family.n_components - 2) + [t1])
        phis = _pool_map(scan_phi, theta1_values, threads)
        writer.write_csv("pressure_scan.csv", ["theta_1", "value"],
                         list(zip(theta1_values, phis)))

    return {
        "pressure_kink": {
            "theta_0": theta0,
            "left_slope": gap.left,
            "right_slope": gap.right,
            "gap": gap.gap,
        },
        "max_tangent_width": max_tangent_width,
    }


_RUNNERS = {
    "pressure": _run_pressure,
    "entropy-curve": _run_entropy_curve,
    "legendre": _run_legendre,
    "completeness": _run_completeness,
    "kms-verify": _run_kms_verify,
    "diff-test": _run_diff_test,
}


def run_experiment(subcommand: str, config_path, out_dir, seed: int = 0,
                   threads: int = 1) -> dict:
    """Run one experiment and return its manifest (also written to disk)."""
    if subcommand not in _RUNNERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}; choose from {SUBCOMMANDS}")
    start = time.monotonic()
    cfg = Config.load(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    writer = ArtifactWriter(out, seed)
    extras = _RUNNERS[subcommand](cfg, writer, rng, threads)
    cfg.finalize()
    writer.flush(cfg.echo())

    manifest = {
        "subcommand": subcommand,
        "config": cfg.echo(),
        "seed": seed,
        "artifacts": writer.records,
        "wall_ms": int((time.monotonic() - start) * 1000),
    }
    if extras:
        manifest["summary"] = extras
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="thermolab",
        description="Thermodynamics experiments on finite lattice models.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="key=value experiment config")
    parser.add_argument("--out", default="thermolab_out", help="artifact directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        manifest = run_experiment(args.subcommand, args.config, args.out,
                                  seed=args.seed, threads=args.threads)
    except (ThermolabError, OSError) as exc:
        print(f"thermolab: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0

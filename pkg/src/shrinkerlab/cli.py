"""Batch driver: every verification suite and flow experiment as a subcommand.

Each subcommand reads an optional JSON config, runs its checks, writes a
versioned JSON report plus CSV/SVG artifacts into the output directory, and
exits 0 on PASS or OBSERVATION, 1 on FAIL, 2 on a configuration error.
Identical config and seed produce byte-identical CSV/JSON artifacts (set
SOURCE_DATE_EPOCH to pin the provenance timestamp as well).
"""

from __future__ import annotations

import argparse
import datetime
import glob
import json
import math
import multiprocessing
import os
import sys
import time
from dataclasses import dataclass, field as dc_field
from importlib import metadata as _metadata

import numpy as np

from . import graphflow, grassmann, immersion, ineq, sphere
from .grassmann import OrientedFrame, TangentCoeffs

REPORT_SCHEMA = "shrinkerlab.run-report/1"
BUNDLE_SCHEMA = "shrinkerlab.report-bundle/1"
CONFIG_SCHEMA = "shrinkerlab.run-config/1"

try:
    VERSION = _metadata.version("shrinkerlab")
except _metadata.PackageNotFoundError:  # pragma: no cover - source checkout
    VERSION = "0+unknown"


class ConfigError(ValueError):
    """Invalid run configuration; the process exits with code 2."""


# ---------------------------------------------------------------------------
# report records


@dataclass(frozen=True)
class CheckRecord:
    """One judged numeric: FAIL when a mandatory margin drops below -tolerance."""

    name: str
    value: float
    bound: float
    margin: float
    tolerance: float
    kind: str  # "mandatory" or "observation"

    def as_dict(self):
        return {
            "name": self.name,
            "value": self.value,
            "bound": self.bound,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "kind": self.kind,
        }


def check_le(name, value, bound, tolerance, kind="mandatory"):
    """Check that value <= bound, with `tolerance` of slack before FAIL."""
    value, bound = float(value), float(bound)
    return CheckRecord(name, value, bound, bound - value, float(tolerance), kind)


def check_ge(name, value, bound, tolerance, kind="mandatory"):
    """Check that value >= bound, with `tolerance` of slack before FAIL."""
    value, bound = float(value), float(bound)
    return CheckRecord(name, value, bound, value - bound, float(tolerance), kind)


def report_status(checks) -> str:
    if any(c.kind == "mandatory" and c.margin < -c.tolerance for c in checks):
        return "FAIL"
    if any(c.kind == "observation" for c in checks):
        return "OBSERVATION"
    return "PASS"


@dataclass
class RunReport:
    subcommand: str
    seed: int
    checks: list = dc_field(default_factory=list)
    artifacts: list = dc_field(default_factory=list)

    @property
    def status(self) -> str:
        return report_status(self.checks)

    def as_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "subcommand": self.subcommand,
            "status": self.status,
            "checks": [c.as_dict() for c in self.checks],
            "artifacts": sorted(self.artifacts),
            "provenance": {
                "seed": self.seed,
                "version": VERSION,
                "timestamp": run_timestamp(),
            },
        }


def run_timestamp() -> str:
    """UTC timestamp string; honors SOURCE_DATE_EPOCH for reproducible runs."""
    raw = os.environ.get("SOURCE_DATE_EPOCH")
    stamp = int(raw) if raw else int(time.time())
    when = datetime.datetime.fromtimestamp(stamp, datetime.timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def dump_json(payload) -> str:
    """Canonical JSON used for every artifact, so round trips are stable."""
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# configuration

DEFAULTS = {
    "verify-targets": {
        "seed": 0,
        "probes": 240,
        "chunks": 8,
        "fd_step": 1e-4,
        "tol_hessian": 1e-5,
        "flip_hess_height_sign": False,
        "residual_csv": "target_residuals.csv",
    },
    "verify-shrinkers": {
        "seed": 0,
        "probes": 120,
        "chunks": 4,
        "surfaces": ["plane:n=2,m=2", "sphere:n=2,R=2", "cylinder:k=1,n=2"],
        # off-center: the weighted tension vanishes identically on every
        # centered round sphere, so only a shifted one exercises the control
        "control_surfaces": ["sphere:n=2,R=1,c1=0.5"],
        "composition_probes": 20,
        "tol_residual": 1e-10,
        "tol_tension": 1e-6,
        "tol_composition": 1e-4,
        "control_floor": 1e-2,
        "residual_csv": "shrinker_residuals.csv",
    },
    "verify-prop41": {
        "seed": 0,
        "v_count": 1200,
        "rt_resolution": 1500,
        "v_hi": 3.0 - 1e-6,
        "samples": 4000,
        "restarts": 400,
        "iters": 30,
        "tol_sweep": 1e-9,
        "tol_regroup": 1e-10,
        "tol_margin": 1e-12,
        "certificate": "prop41_certificate.json",
    },
    "flow-graph": {
        "seed": 0,
        "n": 2,
        "m": 1,
        "box": 1.0,
        "resolution": 25,
        "amplitude": 0.3,
        "order": 2,
        "max_steps": 60_000,
        "sample_interval": 200,
        "threshold": 1e-8,
        "tol_b2": 1e-6,
        "tol_affine": 1e-6,
        "trace_csv": "flow_trace.csv",
        "trace_svg": "flow_trace.svg",
        "field_csv": "flow_final.csv",
    },
    "report": {
        "seed": 0,
        "run_dir": "",
        "bundle": "bundle.json",
    },
}

_POSITIVE_KEYS = ("fd_step", "threshold", "control_floor", "box")
_COUNT_KEYS = (
    "probes", "chunks", "composition_probes", "v_count", "rt_resolution",
    "samples", "restarts", "iters", "n", "m", "max_steps", "sample_interval",
)


def load_config(subcommand, path=None, seed=None, tolerance_scale=1.0):
    """Merge defaults, file payload, and flag overrides into one dict.

    Unknown keys are rejected, every tolerance must be positive, and the
    sweep ceiling must stay inside the v < 3 domain.
    """
    if subcommand not in DEFAULTS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    cfg = {k: (list(v) if isinstance(v, list) else v)
           for k, v in DEFAULTS[subcommand].items()}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError("config payload must be a JSON object")
        schema = payload.pop("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ConfigError(f"unsupported config schema {schema!r}")
        for key, val in payload.items():
            if key not in cfg:
                raise ConfigError(
                    f"unknown config key {key!r} for {subcommand}"
                )
            cfg[key] = val
    if seed is not None:
        cfg["seed"] = seed
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    try:
        tolerance_scale = float(tolerance_scale)
    except (TypeError, ValueError) as exc:
        raise ConfigError("tolerance scale must be a number") from exc
    if not tolerance_scale > 0.0 or not math.isfinite(tolerance_scale):
        raise ConfigError("tolerance scale must be positive and finite")
    for key in list(cfg):
        if key.startswith("tol_"):
            val = cfg[key]
            if not isinstance(val, (int, float)) or not val > 0:
                raise ConfigError(f"tolerance {key!r} must be positive")
            cfg[key] = float(val) * tolerance_scale
        elif key in _POSITIVE_KEYS:
            val = cfg[key]
            if not isinstance(val, (int, float)) or not val > 0:
                raise ConfigError(f"config key {key!r} must be positive")
            cfg[key] = float(val)
        elif key in _COUNT_KEYS:
            val = cfg[key]
            if not isinstance(val, int) or isinstance(val, bool) or val < 1:
                raise ConfigError(f"config key {key!r} must be a positive integer")
    if subcommand == "verify-prop41":
        v_hi = cfg["v_hi"]
        if not isinstance(v_hi, (int, float)) or not 1.0 < v_hi < 3.0:
            raise ConfigError(
                "v_hi must lie in (1, 3): the bound degenerates at v = 3 "
                "and samples at or above it are outside the domain"
            )
        cfg["v_hi"] = float(v_hi)
    if subcommand == "flow-graph":
        if cfg["order"] not in (2, 4):
            raise ConfigError("order must be 2 or 4")
        if cfg["resolution"] < 5 or not isinstance(cfg["resolution"], int):
            raise ConfigError("resolution must be an integer of at least 5")
        amp = cfg["amplitude"]
        if not isinstance(amp, (int, float)) or amp < 0:
            raise ConfigError("amplitude must be nonnegative")
        cfg["amplitude"] = float(amp)
    if subcommand == "verify-shrinkers":
        for key in ("surfaces", "control_surfaces"):
            names = cfg[key]
            if not isinstance(names, list) or not all(
                isinstance(s, str) for s in names
            ):
                raise ConfigError(f"config key {key!r} must be a list of names")
    return cfg


# ---------------------------------------------------------------------------
# worker plumbing


def _run_chunks(worker, chunk_args, jobs):
    """Map `worker` over chunks, with an optional process pool.

    Chunking is fixed by the config, so results do not depend on `jobs`.
    """
    if jobs <= 1 or len(chunk_args) <= 1:
        return [worker(a) for a in chunk_args]
    with multiprocessing.Pool(processes=min(jobs, len(chunk_args))) as pool:
        return pool.map(worker, chunk_args)


def _chunk_counts(total, chunks):
    base, extra = divmod(total, chunks)
    return [base + (1 if k < extra else 0) for k in range(chunks)]


def _unit(rng, dim=3):
    while True:
        x = rng.standard_normal(dim)
        nrm = float(np.linalg.norm(x))
        if nrm > 1e-6:
            return x / nrm


# ---------------------------------------------------------------------------
# verify-targets: finite-difference probes of the closed-form Hessians

TARGET_FAMILIES = (
    "sphere_height_hess",
    "sphere_r_hess",
    "sphere_theta_hess",
    "grassmann_v_hess",
    "grassmann_logv_hess",
    "grassmann_dlogv",
    "m1_reduction",
)


def _height_probe(rng, step, sign):
    x = _unit(rng)
    while True:
        a = _unit(rng)
        if abs(float(x @ a)) >= 0.3:
            break
    basis = sphere.tangent_frame(x)
    c = _unit(rng, 2)
    w = c @ basis

    def f(t):
        y = sphere.great_circle(x, w, t)
        return sphere.height_value(y / np.linalg.norm(y), a)

    d2 = (f(step) - 2.0 * f(0.0) + f(-step)) / step**2
    # the closed form is the Hessian of the pole coordinate <., a>; the
    # height 1 - <., a> carries the opposite sign
    closed = -sign * sphere.hess_height(x, a, basis)(c, c)
    return abs(d2 - closed) / max(1.0, abs(closed))


def _longitude_probe(rng, step):
    while True:
        x = _unit(rng)
        r = math.hypot(float(x[0]), float(x[1]))
        # margin from the polar set and the deleted half-equator, and keep
        # theta away from +-pi so differences never cross the cut
        if r >= 0.35 and float(x[0]) > -0.8 * r:
            break
    basis = sphere.tangent_frame(x)
    c = _unit(rng, 2)
    w = c @ basis

    def coords(t):
        y = sphere.great_circle(x, w, t)
        return sphere.longitude_coords(y / np.linalg.norm(y))

    (r0, t0), (rp, tp), (rm, tm) = coords(0.0), coords(step), coords(-step)
    hr, ht = sphere.hess_r_theta(x, basis)
    cr, ct = hr(c, c), ht(c, c)
    res_r = abs((rp - 2.0 * r0 + rm) / step**2 - cr) / max(1.0, abs(cr))
    res_t = abs((tp - 2.0 * t0 + tm) / step**2 - ct) / max(1.0, abs(ct))
    return res_r, res_t


def _random_frame(rng, n, amb):
    q, _ = np.linalg.qr(rng.standard_normal((amb, n)))
    return OrientedFrame(q.T)


def _normal_complement(P):
    q = np.linalg.qr(P.vectors.T, mode="complete")[0]
    return q[:, P.n:].T


def _frame_in_chart(rng, base, max_angle=1.1):
    om = rng.standard_normal((base.n, base.m))
    top = max(float(np.linalg.svd(om)[1][0]), 1e-12)
    om *= max_angle * rng.uniform(0.1, 1.0) / top
    return grassmann.geodesic_from_velocity(base, _normal_complement(base), om, 1.0)


def _grassmann_probe(rng, step):
    n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    base = _random_frame(rng, n, n + m)
    P = _frame_in_chart(rng, base)
    spec = grassmann.jordan_spectrum(P, base)
    om = rng.standard_normal((n, m))
    om /= np.linalg.norm(om)
    Z = TangentCoeffs(om, spec.tangent_frame)

    def v_at(t):
        frame = grassmann.geodesic_from_velocity(
            spec.tangent_frame, spec.normal_frame, om, t
        )
        return grassmann.v_value(grassmann.jordan_spectrum(frame, base))

    vp, v0, vm = v_at(step), v_at(0.0), v_at(-step)
    cv = grassmann.hess_v_form(spec, Z)
    res_v = abs((vp - 2.0 * v0 + vm) / step**2 - cv) / max(1.0, abs(cv))
    lp, l0, lm = math.log(vp), math.log(v0), math.log(vm)
    cl = grassmann.hess_logv_form(spec, Z)
    cd = grassmann.dlogv_form(spec, Z)
    res_l = abs((lp - 2.0 * l0 + lm) / step**2 - cl) / max(1.0, abs(cl))
    res_d = abs((lp - lm) / (2.0 * step) - cd) / max(1.0, abs(cd))
    return res_v, res_l, res_d


def _reduction_probe(rng, step):
    """Codimension-one degeneration: v equals the secant of the tilt angle."""
    nu0 = np.array([0.0, 0.0, 1.0])
    u = np.array([1.0, 0.0, 0.0])
    a = float(rng.uniform(0.1, 1.0))
    nu = sphere.great_circle(nu0, u, a)
    r1 = np.cross(np.array([0.0, 1.0, 0.0]), nu)
    r1 /= np.linalg.norm(r1)
    r2 = np.cross(nu, r1)
    P = OrientedFrame(np.vstack([r1, r2]))
    base = OrientedFrame(np.eye(3)[:2])
    spec = grassmann.jordan_spectrum(P, base)
    sec = 1.0 / math.cos(a)
    res = abs(grassmann.v_value(spec) - sec) / sec
    om = rng.standard_normal((2, 1))
    Z = TangentCoeffs(om, spec.tangent_frame)

    def sec_along(t):
        frame = grassmann.geodesic_from_velocity(
            spec.tangent_frame, spec.normal_frame, om, t
        )
        n_t = np.cross(frame.vectors[0], frame.vectors[1])
        return 1.0 / abs(float(n_t @ nu0))

    fd = (sec_along(step) - 2.0 * sec_along(0.0) + sec_along(-step)) / step**2
    cv = grassmann.hess_v_form(spec, Z)
    return max(res, abs(fd - cv) / max(1.0, abs(cv)))


def _target_chunk(args):
    seed_seq, count, step, sign = args
    rng = np.random.default_rng(seed_seq)
    rows = []
    for _ in range(count):
        rows.append(("sphere_height_hess", _height_probe(rng, step, sign)))
        rr, rt = _longitude_probe(rng, step)
        rows.append(("sphere_r_hess", rr))
        rows.append(("sphere_theta_hess", rt))
        rv, rl, rd = _grassmann_probe(rng, step)
        rows.append(("grassmann_v_hess", rv))
        rows.append(("grassmann_logv_hess", rl))
        rows.append(("grassmann_dlogv", rd))
        rows.append(("m1_reduction", _reduction_probe(rng, step)))
    return rows


def cmd_verify_targets(cfg, outdir, jobs=1) -> RunReport:
    chunks = int(cfg["chunks"])
    counts = _chunk_counts(int(cfg["probes"]), chunks)
    children = np.random.SeedSequence(cfg["seed"]).spawn(chunks)
    sign = -1.0 if cfg["flip_hess_height_sign"] else 1.0
    chunk_args = [
        (child, count, cfg["fd_step"], sign)
        for child, count in zip(children, counts)
        if count
    ]
    parts = _run_chunks(_target_chunk, chunk_args, jobs)

    worst = {name: 0.0 for name in TARGET_FAMILIES}
    lines = ["family,chunk,probe,residual"]
    for ci, rows in enumerate(parts):
        seen = {}
        for family, residual in rows:
            k = seen.get(family, 0)
            seen[family] = k + 1
            worst[family] = max(worst[family], residual)
            lines.append(f"{family},{ci},{k},{residual:.17g}")

    report = RunReport("verify-targets", cfg["seed"])
    for family in TARGET_FAMILIES:
        report.checks.append(
            check_le(family, worst[family], 0.0, cfg["tol_hessian"])
        )
    csv_path = os.path.join(outdir, cfg["residual_csv"])
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    report.artifacts.append(cfg["residual_csv"])
    return report


# ---------------------------------------------------------------------------
# verify-shrinkers: catalog residuals, weighted tension, composition identity


def _chart_probes(imm, rng, count, margin=0.12):
    lo = imm.chart[:, 0] + margin * (imm.chart[:, 1] - imm.chart[:, 0])
    hi = imm.chart[:, 1] - margin * (imm.chart[:, 1] - imm.chart[:, 0])
    return rng.uniform(lo, hi, size=(count, imm.chart.shape[0]))


def _surface_chunk(args):
    name, seed_seq, count = args
    imm = immersion.catalog_immersion(name)
    rng = np.random.default_rng(seed_seq)
    rows = []
    for p in _chart_probes(imm, rng, count):
        pf = immersion.point_frame(imm, p)
        res = float(np.max(np.abs(immersion.shrinker_residual(pf))))
        ten = float(np.max(np.abs(immersion.weighted_tension(imm, p))))
        rows.append((res, ten))
    return rows


def _composition_targets(imm):
    # reference the tangent plane at the chart center: it overlaps the
    # tangents of every catalog surface (a fixed coordinate plane does
    # not — the cylinder's tangents all contain the axis direction)
    center = 0.5 * (imm.chart[:, 0] + imm.chart[:, 1])
    ref = OrientedFrame(immersion.point_frame(imm, center).tangent)
    targets = [("v", immersion.VTarget(ref)), ("logv", immersion.LogVTarget(ref))]
    if imm.m == 1:
        amb = imm.n + imm.m
        a = np.zeros(amb)
        a[0], a[-1] = 0.6, 0.8
        targets.insert(0, ("height", immersion.HeightTarget(a)))
    return targets, ref


def _composition_worst(name, seed_seq, count):
    """Max chain-rule defect over admissible probes of one catalog surface.

    Probes whose tangent plane tilts far from the reference are redrawn:
    the overlap functions lose conditioning as the planes approach
    perpendicularity.
    """
    imm = immersion.catalog_immersion(name)
    rng = np.random.default_rng(seed_seq)
    targets, ref = _composition_targets(imm)
    worst = 0.0
    kept = 0
    attempts = 0
    while kept < count and attempts < 50 * count:
        attempts += 1
        p = _chart_probes(imm, rng, 1)[0]
        pf = immersion.point_frame(imm, p)
        if abs(grassmann.w_product(OrientedFrame(pf.tangent), ref)) < 0.3:
            continue
        kept += 1
        for _, target in targets:
            worst = max(worst, abs(immersion.composition_check(imm, p, target)))
    if kept < count:
        raise RuntimeError(
            f"only {kept}/{count} admissible composition probes on {name}"
        )
    return worst


def cmd_verify_shrinkers(cfg, outdir, jobs=1) -> RunReport:
    chunks = int(cfg["chunks"])
    names = list(cfg["surfaces"])
    controls = list(cfg["control_surfaces"])
    root = np.random.SeedSequence(cfg["seed"])
    children = root.spawn((len(names) + len(controls)) * chunks + len(names))

    chunk_args = []
    counts = _chunk_counts(int(cfg["probes"]), chunks)
    for si, name in enumerate(names + controls):
        for ci in range(chunks):
            if counts[ci]:
                chunk_args.append((name, children[si * chunks + ci], counts[ci]))
    parts = _run_chunks(_surface_chunk, chunk_args, jobs)

    per_surface = {name: [] for name in names + controls}
    for (name, _, _), rows in zip(chunk_args, parts):
        per_surface[name].extend(rows)

    report = RunReport("verify-shrinkers", cfg["seed"])
    lines = ["surface,probe,residual,tension"]
    for name in names:
        rows = per_surface[name]
        res = max(r for r, _ in rows)
        ten = max(t for _, t in rows)
        report.checks.append(
            check_le(f"residual[{name}]", res, 0.0, cfg["tol_residual"])
        )
        report.checks.append(
            check_le(f"tension[{name}]", ten, 0.0, cfg["tol_tension"])
        )
        for k, (r, t) in enumerate(rows):
            lines.append(f"{name},{k},{r:.17g},{t:.17g}")
    for name in controls:
        rows = per_surface[name]
        floor = min(t for _, t in rows)
        report.checks.append(
            check_ge(f"control_tension[{name}]", floor, cfg["control_floor"], 0.0)
        )
        for k, (r, t) in enumerate(rows):
            lines.append(f"{name},{k},{r:.17g},{t:.17g}")

    comp_children = children[(len(names) + len(controls)) * chunks:]
    comp_worst = 0.0
    for name, child in zip(names, comp_children):
        comp_worst = max(
            comp_worst,
            _composition_worst(name, child, int(cfg["composition_probes"])),
        )
    report.checks.append(
        check_le("composition_max", comp_worst, 0.0, cfg["tol_composition"])
    )

    csv_path = os.path.join(outdir, cfg["residual_csv"])
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    report.artifacts.append(cfg["residual_csv"])
    return report


# ---------------------------------------------------------------------------
# verify-prop41: scalar sweep, sampled grouped inequality, adversarial search


def cmd_verify_prop41(cfg, outdir, jobs=1) -> RunReport:
    report = RunReport("verify-prop41", cfg["seed"])

    sweep = ineq.sup_F_sweep(
        v_count=int(cfg["v_count"]),
        rt_resolution=int(cfg["rt_resolution"]),
        v_hi=cfg["v_hi"],
    )
    report.checks.append(
        check_le("sweep_sup_F", sweep.worst_value, -ineq.DELTA0, cfg["tol_sweep"])
    )
    report.checks.append(
        check_le("sweep_empty_slices", sweep.empty_slices, 0.0, 0.0)
    )

    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    patterns = ("dense", "diag", "triple", "lowrank", "sparse")
    regroup_worst = 0.0
    min_margin = math.inf
    for k in range(int(cfg["samples"])):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 6))
        s = ineq.random_group_sample(rng, n, m, pattern=patterns[k % len(patterns)])
        gb = ineq.group_terms(s)
        scale = max(1.0, abs(gb.direct_total))
        regroup_worst = max(
            regroup_worst, abs(gb.grouped_total - gb.direct_total) / scale
        )
        min_margin = min(min_margin, ineq.master_margin(s))
    report.checks.append(
        check_le("regroup_max", regroup_worst, 0.0, cfg["tol_regroup"])
    )
    report.checks.append(
        check_ge("sample_min_margin", min_margin, 0.0, cfg["tol_margin"])
    )

    zero_lam = ineq.GroupSample(
        3, 2, np.zeros(2), _symmetrized(rng.standard_normal((2, 3, 3)))
    )
    report.checks.append(
        check_le(
            "zero_lambda_margin",
            abs(ineq.master_margin(zero_lam)),
            0.0,
            cfg["tol_margin"],
        )
    )

    search = ineq.adversarial_margin_search(
        seed=cfg["seed"] + 1,
        restarts=int(cfg["restarts"]),
        iters=int(cfg["iters"]),
    )
    report.checks.append(
        check_ge("search_min_margin", search.worst_margin, 0.0, cfg["tol_margin"])
    )
    report.checks.append(
        check_le("search_violations", len(search.violations), 0.0, 0.0)
    )

    cert_path = os.path.join(outdir, cfg["certificate"])
    with open(cert_path, "w", encoding="utf-8") as fh:
        fh.write(ineq.sweep_certificate_json(sweep, seed=cfg["seed"]))
        fh.write("\n")
    report.artifacts.append(cfg["certificate"])
    return report


def _symmetrized(h):
    return 0.5 * (h + np.swapaxes(h, -1, -2))


# ---------------------------------------------------------------------------
# flow-graph: relaxation experiment with trace artifacts


def _seeded_bump_field(cfg, rng):
    n, m = int(cfg["n"]), int(cfg["m"])
    L = float(cfg["box"])
    res = (int(cfg["resolution"]),) * n
    A = 0.3 * rng.standard_normal((m, n))
    # only linear boundary data is stationary: a constant offset leaves a
    # drift residual of -b/2, so the experiment pins b = 0
    b = np.zeros(m)
    coef = rng.standard_normal((n, m))
    base = rng.standard_normal(m)
    amp = float(cfg["amplitude"])

    def value(x):
        z = x / L
        window = float(np.prod((1.0 - z * z) ** 2))
        bump = amp * window * (base + coef.T @ z)
        return A @ x + b + bump

    return graphflow.GridField.from_function(
        value, L, res, m, boundary="affine", A=A, b=b
    )


def cmd_flow_graph(cfg, outdir, jobs=1) -> RunReport:
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    field = _seeded_bump_field(cfg, rng)
    solver = graphflow.SolverConfig(
        max_steps=int(cfg["max_steps"]),
        threshold=cfg["threshold"],
        order=int(cfg["order"]),
        sample_interval=int(cfg["sample_interval"]),
    )
    final = None
    try:
        final, trace = graphflow.relax_flow(field, solver)
    except graphflow.DivergenceError as exc:
        trace = exc.trace

    report = RunReport("flow-graph", cfg["seed"])
    report.checks.append(
        check_le(
            "final_residual",
            trace.sup_residual[-1] if trace.sup_residual else math.inf,
            0.0,
            cfg["threshold"],
        )
    )
    if final is not None:
        order = int(cfg["order"])
        b2 = float(np.max(graphflow.second_form_sq_field(final, order)))
        report.checks.append(check_le("final_b2", b2, 0.0, cfg["tol_b2"]))
        deviation = float(np.max(np.abs(final.values - final.affine_values())))
        report.checks.append(
            check_le("affine_deviation", deviation, 0.0, cfg["tol_affine"])
        )
    report.checks.append(
        check_le(
            "initial_slope", trace.sup_slope[0], 3.0, 0.0, kind="observation"
        )
    )
    slopes = np.asarray(trace.sup_slope)
    bump = float(np.max(np.diff(slopes))) if slopes.size > 1 else 0.0
    report.checks.append(
        check_le("slope_monotone", bump, 0.0, 1e-9, kind="observation")
    )
    report.checks.append(
        check_le(
            "steps_to_converge",
            trace.steps[-1] if trace.steps else math.inf,
            float(cfg["max_steps"]),
            0.0,
            kind="observation",
        )
    )
    if final is not None and final.m == 1 and final.n == 2:
        pole = np.zeros(final.n + 1)
        pole[-1] = 1.0
        gauss = graphflow.gauss_image_report(final, pole=pole, order=int(cfg["order"]))
        report.checks.append(
            check_ge(
                "gauss_min_pole_ip",
                gauss.min_pole_ip,
                0.0,
                sphere.REGION_TOL,
                kind="observation",
            )
        )
        report.checks.append(
            check_le(
                "gauss_max_v", gauss.max_v, 3.0, 0.0, kind="observation"
            )
        )

    with open(os.path.join(outdir, cfg["trace_csv"]), "w", encoding="utf-8") as fh:
        fh.write(graphflow.trace_to_csv(trace))
    report.artifacts.append(cfg["trace_csv"])
    with open(os.path.join(outdir, cfg["trace_svg"]), "w", encoding="utf-8") as fh:
        fh.write(graphflow.trace_svg(trace))
    report.artifacts.append(cfg["trace_svg"])
    if final is not None:
        with open(os.path.join(outdir, cfg["field_csv"]), "w", encoding="utf-8") as fh:
            fh.write(graphflow.field_to_csv(final))
        report.artifacts.append(cfg["field_csv"])
    return report


# ---------------------------------------------------------------------------
# report: merge prior runs into one bundle


def cmd_report(cfg, outdir, jobs=1) -> RunReport:
    run_dir = cfg["run_dir"] or outdir
    paths = sorted(glob.glob(os.path.join(run_dir, "report_*.json")))
    runs = []
    warnings = []
    for path in paths:
        base = os.path.basename(path)
        if base == "report_report.json":
            continue
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            warnings.append(f"skipping {base}: {exc}")
            continue
        if not isinstance(payload, dict) or payload.get("schema") != REPORT_SCHEMA:
            warnings.append(f"skipping {base}: unrecognized schema")
            continue
        stamp = payload.get("provenance", {}).get("timestamp", "")
        runs.append((stamp, base, payload))
    runs.sort(key=lambda item: (item[0], item[1]))
    if not runs:
        warnings.append(f"no run reports found in {run_dir}")

    failures = sum(1 for _, _, payload in runs if payload.get("status") == "FAIL")
    bundle = {
        "schema": BUNDLE_SCHEMA,
        "generated": run_timestamp(),
        "warnings": warnings,
        "runs": [
            {"file": base, "report": payload} for _, base, payload in runs
        ],
    }
    bundle_name = cfg["bundle"]
    stem = os.path.splitext(bundle_name)[0]
    with open(os.path.join(outdir, bundle_name), "w", encoding="utf-8") as fh:
        fh.write(dump_json(bundle))

    lines = ["file,subcommand,status,check,value,bound,margin,tolerance,kind"]
    for _, base, payload in runs:
        for chk in payload.get("checks", []):
            lines.append(
                ",".join(
                    [
                        base,
                        str(payload.get("subcommand", "")),
                        str(payload.get("status", "")),
                        str(chk.get("name", "")).replace(",", ";"),
                        f"{chk.get('value', math.nan):.17g}",
                        f"{chk.get('bound', math.nan):.17g}",
                        f"{chk.get('margin', math.nan):.17g}",
                        f"{chk.get('tolerance', math.nan):.17g}",
                        str(chk.get("kind", "")),
                    ]
                )
            )
    with open(os.path.join(outdir, stem + ".csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(outdir, stem + ".svg"), "w", encoding="utf-8") as fh:
        fh.write(_bundle_svg(runs))

    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)

    report = RunReport("report", cfg["seed"])
    report.checks.append(check_le("merged_failures", failures, 0.0, 0.0))
    report.checks.append(
        check_ge("runs_merged", len(runs), 0.0, 0.0, kind="observation")
    )
    report.artifacts.extend([bundle_name, stem + ".csv", stem + ".svg"])
    return report


_STATUS_COLORS = {"PASS": "#2a7e43", "OBSERVATION": "#b57b14", "FAIL": "#b03030"}


def _bundle_svg(runs):
    row_h, width = 26, 520
    height = row_h * max(1, len(runs)) + 30
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        '<text x="10" y="18" font-family="monospace" font-size="13">'
        "run status</text>",
    ]
    for k, (_, base, payload) in enumerate(runs):
        y = 30 + k * row_h
        color = _STATUS_COLORS.get(payload.get("status", ""), "#777777")
        parts.append(
            f'<rect x="10" y="{y}" width="16" height="16" fill="{color}"/>'
        )
        parts.append(
            f'<text x="34" y="{y + 13}" font-family="monospace" '
            f'font-size="12">{payload.get("status", "?")} {base}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# entry point

HANDLERS = {
    "verify-targets": cmd_verify_targets,
    "verify-shrinkers": cmd_verify_shrinkers,
    "verify-prop41": cmd_verify_prop41,
    "flow-graph": cmd_flow_graph,
    "report": cmd_report,
}

_HELP = {
    "verify-targets": "finite-difference checks of the closed-form Hessians",
    "verify-shrinkers": "catalog residual, tension, and composition checks",
    "verify-prop41": "scalar sweep plus sampled grouped-inequality checks",
    "flow-graph": "graph relaxation experiment with trace artifacts",
    "report": "merge prior run reports into one bundle",
}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", default=None, help="JSON config file")
    shared.add_argument(
        "--out", default="runs", help="output directory (default: runs)"
    )
    shared.add_argument(
        "--seed", type=int, default=None, help="override the config seed"
    )
    shared.add_argument(
        "--jobs", type=int, default=1, help="worker processes for probe batches"
    )
    shared.add_argument(
        "--tolerance-scale",
        type=float,
        default=1.0,
        dest="tolerance_scale",
        help="multiply every configured tolerance",
    )
    parser = argparse.ArgumentParser(
        prog="shrinker-lab",
        description="batch verification runs with machine-readable reports",
    )
    sub = parser.add_subparsers(dest="command")
    for name in HANDLERS:
        sub.add_parser(name, parents=[shared], help=_HELP[name])
    return parser


def _print_report(report: RunReport, path: str) -> None:
    for c in report.checks:
        print(
            f"[{c.kind}] {c.name}: value={c.value:.6g} bound={c.bound:.6g} "
            f"margin={c.margin:.3g} tol={c.tolerance:.3g}"
        )
    print(f"status: {report.status}")
    print(f"report: {path}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        if args.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        cfg = load_config(
            args.command,
            path=args.config,
            seed=args.seed,
            tolerance_scale=args.tolerance_scale,
        )
        outdir = os.environ.get("SHRINKER_LAB_OUT") or args.out
        os.makedirs(outdir, exist_ok=True)
        report = HANDLERS[args.command](cfg, outdir, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    path = os.path.join(outdir, f"report_{args.command}.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_json(report.as_dict()))
    _print_report(report, path)
    return 0 if report.status != "FAIL" else 1


if __name__ == "__main__":
    sys.exit(main())

"""Bounded-grid solver for the graphic self-shrinker system.

A multi-component height field u on the box [-L, L]^n describes the graph
surface (x, u(x)).  The elliptic system for self-shrinking graphs,

    sum_ij g^ij u^a_ij = (x . Du^a - u^a) / 2,   g_ij = delta_ij + u^a_i u^a_j,

is discretized with central differences on a uniform grid; an explicit
parabolic relaxation du/dt = (elliptic) - (drift) flows fields toward
solutions with Dirichlet data pinned on the boundary.  Slope, curvature, and
Gauss-image telemetry are recorded along runs, and grid fields interoperate
with the immersion layer through jets evaluated at grid nodes.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import sphere
from .grassmann import OrientedFrame
from .immersion import ChartError, ParametricImmersion


class DivergenceError(RuntimeError):
    """Relaxation blow-up; carries the telemetry collected so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class GridField:
    """Height samples u: real[m] on the uniform grid of [-L, L]^n.

    Boundary data is either an affine map (A, b) whose values the perimeter
    must match, or "frozen" (whatever the perimeter samples are is held
    fixed by the solvers).
    """

    L: float
    values: np.ndarray  # shape (*resolution, m)
    boundary: str = "frozen"  # "affine" or "frozen"
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim < 2:
            raise ValueError("values must have shape (*resolution, m)")
        if self.L <= 0:
            raise ValueError("box half-width must be positive")
        if any(s < 5 for s in self.shape):
            raise ValueError("resolution must be at least 5 per axis")
        if self.boundary == "affine":
            self.A = np.zeros((self.m, self.n)) if self.A is None else np.asarray(self.A, float)
            self.b = np.zeros(self.m) if self.b is None else np.asarray(self.b, float)
            aff = self.affine_values()
            mask = _perimeter_mask(self.shape)
            gap = np.max(np.abs(self.values[mask] - aff[mask]))
            if gap > 1e-10:
                raise ValueError(
                    f"perimeter samples deviate from the affine data by {gap:.3e}"
                )
        elif self.boundary != "frozen":
            raise ValueError("boundary must be 'affine' or 'frozen'")

    @property
    def shape(self):
        return self.values.shape[:-1]

    @property
    def n(self):
        return self.values.ndim - 1

    @property
    def m(self):
        return self.values.shape[-1]

    @property
    def spacing(self):
        return np.array([2.0 * self.L / (s - 1) for s in self.shape])

    def axis_coords(self, k):
        return np.linspace(-self.L, self.L, self.shape[k])

    def coords(self):
        grids = np.meshgrid(*[self.axis_coords(k) for k in range(self.n)], indexing="ij")
        return np.stack(grids, axis=-1)

    def affine_values(self):
        if self.A is None or self.b is None:
            raise ValueError("no affine data attached")
        return self.coords() @ self.A.T + self.b

    @classmethod
    def from_function(cls, func, L, resolution, m, boundary="frozen", A=None, b=None):
        resolution = tuple(int(s) for s in resolution)
        axes = [np.linspace(-L, L, s) for s in resolution]
        grids = np.meshgrid(*axes, indexing="ij")
        X = np.stack(grids, axis=-1)
        flat = X.reshape(-1, len(resolution))
        vals = np.array([np.atleast_1d(func(x)) for x in flat], dtype=float)
        vals = vals.reshape(*resolution, m)
        return cls(L=L, values=vals, boundary=boundary, A=A, b=b)


def _perimeter_mask(shape):
    mask = np.zeros(shape, dtype=bool)
    for k in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[k] = 0
        mask[tuple(idx)] = True
        idx[k] = shape[k] - 1
        mask[tuple(idx)] = True
    return mask


def _margin(order):
    if order not in (2, 4):
        raise ValueError("stencil order must be 2 or 4")
    return order // 2


def interior(field: GridField, order=2):
    """Slices selecting the nodes where all order-wide stencils fit."""
    g = _margin(order)
    return tuple(slice(g, s - g) for s in field.shape)


def _d1(v, axis, h, order):
    if order == 2:
        return (np.roll(v, -1, axis) - np.roll(v, 1, axis)) / (2.0 * h)
    return (
        -np.roll(v, -2, axis)
        + 8.0 * np.roll(v, -1, axis)
        - 8.0 * np.roll(v, 1, axis)
        + np.roll(v, 2, axis)
    ) / (12.0 * h)


def _d2(v, axis, h, order):
    if order == 2:
        return (np.roll(v, -1, axis) - 2.0 * v + np.roll(v, 1, axis)) / (h * h)
    return (
        -np.roll(v, -2, axis)
        + 16.0 * np.roll(v, -1, axis)
        - 30.0 * v
        + 16.0 * np.roll(v, 1, axis)
        - np.roll(v, 2, axis)
    ) / (12.0 * h * h)


def field_jets(field: GridField, order=2):
    """du (*shape, n, m) and ddu (*shape, n, n, m); valid on the interior."""
    v = field.values
    h = field.spacing
    n = field.n
    du = np.stack([_d1(v, k, h[k], order) for k in range(n)], axis=-2)
    ddu = np.zeros(field.shape + (n, n, field.m))
    firsts = [du[..., k, :] for k in range(n)]
    for k in range(n):
        ddu[..., k, k, :] = _d2(v, k, h[k], order)
        for l in range(k + 1, n):
            mixed = _d1(firsts[k], l, h[l], order)
            ddu[..., k, l, :] = mixed
            ddu[..., l, k, :] = mixed
    return du, ddu


def _interior_geometry(field, order):
    box = interior(field, order)
    du, ddu = field_jets(field, order)
    du = du[box]
    ddu = ddu[box]
    u = field.values[box]
    X = field.coords()[box]
    g = np.einsum("...im,...jm->...ij", du, du) + np.eye(field.n)
    ginv = np.linalg.inv(g)
    return box, X, u, du, ddu, g, ginv


def system_residual(field: GridField, order=2, parts=False):
    """Per-interior-node defect of the graphic shrinker system, per component.

    Returns elliptic - drift with elliptic = g^ij u_ij and
    drift = (x . Du - u)/2; with parts=True the two pieces come back too.
    """
    _, X, u, du, ddu, _, ginv = _interior_geometry(field, order)
    elliptic = np.einsum("...ij,...ijm->...m", ginv, ddu)
    drift = 0.5 * (np.einsum("...i,...im->...m", X, du) - u)
    res = elliptic - drift
    if parts:
        return res, elliptic, drift
    return res


def slope_field(field: GridField, order=2):
    """sqrt(det g) at interior nodes; equals the graph's volume distortion."""
    _, _, _, du, _, g, _ = _interior_geometry(field, order)
    det = np.linalg.det(g)
    return np.sqrt(det)


def second_form_sq_field(field: GridField, order=2):
    """|B|^2 at interior nodes from the graph representation."""
    _, _, _, du, ddu, _, ginv = _interior_geometry(field, order)
    w = np.einsum("...pm,...ijm->...pij", du, ddu)
    full = np.einsum("...ik,...jl,...ijm,...klm->...", ginv, ginv, ddu, ddu)
    tang = np.einsum("...ik,...jl,...pij,...pq,...qkl->...", ginv, ginv, w, ginv, w)
    return full - tang


@dataclass(frozen=True)
class SolverConfig:
    """Explicit-relaxation policy: stepping, stopping, telemetry cadence."""

    dt: Optional[float] = None  # None: CFL-scaled cfl * h^2 / (2 n)
    cfl: float = 0.45
    max_steps: int = 200_000
    threshold: float = 1e-8
    order: int = 2
    sample_interval: int = 50
    blowup: float = 1e6

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0:
            raise ValueError("time step must be positive")
        if self.threshold <= 0:
            raise ValueError("convergence threshold must be positive")
        if self.cfl <= 0 or self.max_steps <= 0 or self.sample_interval <= 0:
            raise ValueError("solver parameters must be positive")


@dataclass
class FlowTrace:
    """Telemetry rows sampled along a relaxation run."""

    steps: list = dc_field(default_factory=list)
    times: list = dc_field(default_factory=list)
    sup_slope: list = dc_field(default_factory=list)
    sup_residual: list = dc_field(default_factory=list)
    sup_b2: list = dc_field(default_factory=list)
    min_w: list = dc_field(default_factory=list)
    min_pole_ip: list = dc_field(default_factory=list)  # m = 1 only, else nan
    converged: bool = False

    def record(self, step, time, field, order):
        if self.times and time <= self.times[-1]:
            raise ValueError("trace times must be strictly increasing")
        res = system_residual(field, order)
        sl = slope_field(field, order)
        self.steps.append(step)
        self.times.append(time)
        self.sup_slope.append(float(np.max(sl)))
        self.sup_residual.append(float(np.max(np.abs(res))))
        self.sup_b2.append(float(np.max(second_form_sq_field(field, order))))
        self.min_w.append(float(np.min(1.0 / sl)))
        if field.m == 1:
            du, _ = field_jets(field, order)
            box = interior(field, order)
            du1 = du[box][..., 0]
            vert = 1.0 / np.sqrt(1.0 + np.sum(du1 * du1, axis=-1))
            self.min_pole_ip.append(float(np.min(vert)))
        else:
            self.min_pole_ip.append(float("nan"))


def relax_flow(u0: GridField, cfg: SolverConfig = SolverConfig()):
    """Explicit parabolic relaxation toward the graphic shrinker system.

    Interior nodes move by the residual; boundary samples never change.  The
    default step is cfl * h^2 / (2 n), which satisfies the stability bound
    since the largest eigenvalue of g^ij is at most one (g >= identity).
    Stops when sup |residual| drops below the threshold or max_steps is hit;
    blow-up beyond cfg.blowup raises DivergenceError with the trace attached.
    """
    h = float(np.min(u0.spacing))
    dt = cfg.dt if cfg.dt is not None else cfg.cfl * h * h / (2.0 * u0.n)
    box = interior(u0, cfg.order)
    current = GridField(
        L=u0.L, values=u0.values.copy(), boundary=u0.boundary, A=u0.A, b=u0.b
    )
    trace = FlowTrace()
    trace.record(0, 0.0, current, cfg.order)
    step = 0
    while step < cfg.max_steps:
        res = system_residual(current, cfg.order)
        if float(np.max(np.abs(res))) < cfg.threshold:
            if trace.steps[-1] != step:
                trace.record(step, step * dt, current, cfg.order)
            trace.converged = True
            return current, trace
        current.values[box] += dt * res
        step += 1
        sup_val = float(np.max(np.abs(current.values)))
        if not math.isfinite(sup_val) or sup_val > cfg.blowup:
            if math.isfinite(sup_val) and trace.steps[-1] != step:
                trace.record(step, step * dt, current, cfg.order)
            raise DivergenceError(
                f"field magnitude {sup_val:.3e} exceeded the blow-up bound", trace
            )
        if step % cfg.sample_interval == 0:
            trace.record(step, step * dt, current, cfg.order)
    if trace.steps[-1] != step:
        trace.record(step, step * dt, current, cfg.order)
    trace.converged = trace.sup_residual[-1] < cfg.threshold
    return current, trace


# ---------------------------------------------------------------------------
# Gauss-image reporting


@dataclass(frozen=True)
class GaussImageReport:
    max_v: float
    min_w: float
    v_below_3: bool
    min_pole_ip: Optional[float]
    region_counts: Optional[dict]
    open_hemisphere: Optional[bool]
    closed_hemisphere: Optional[bool]


def gauss_image_report(field: GridField, reference: Optional[OrientedFrame] = None,
                       pole=None, order=2) -> GaussImageReport:
    """Summary of the tangent-plane image over the interior nodes.

    max_v is the largest slope (the v-function against the horizontal
    plane); min_w is the smallest w-product against the reference (the
    horizontal plane when none is given).  With a pole and m = 1 the unit
    normals are classified through the sphere-region machinery and the
    hemisphere hypotheses are flagged.
    """
    _, _, _, du, _, g, _ = _interior_geometry(field, order)
    sl = np.sqrt(np.linalg.det(g))
    max_v = float(np.max(sl))
    if reference is None:
        min_w = float(np.min(1.0 / sl))
    else:
        ref = reference.vectors
        n = field.n
        L = np.linalg.cholesky(g)
        flat_du = du.reshape(-1, n, field.m)
        flat_L = L.reshape(-1, n, n)
        dX = np.concatenate(
            [np.broadcast_to(np.eye(n), flat_du.shape[:1] + (n, n)), flat_du], axis=2
        )
        rows = np.linalg.solve(flat_L, dX)
        w_all = np.linalg.det(np.einsum("qia,ja->qij", rows, ref))
        min_w = float(np.min(w_all))
    min_ip = None
    counts = None
    open_h = None
    closed_h = None
    if field.m == 1 and pole is not None:
        pole = np.asarray(pole, dtype=float)
        flat_du = du.reshape(-1, field.n)
        denom = np.sqrt(1.0 + np.sum(flat_du * flat_du, axis=1))
        normals = np.concatenate(
            [-flat_du, np.ones((flat_du.shape[0], 1))], axis=1
        ) / denom[:, None]
        ips = normals @ pole
        min_ip = float(np.min(ips))
        counts = {}
        for row in normals:
            region = sphere.region_membership(row, pole)
            counts[region] = counts.get(region, 0) + 1
        open_h = min_ip > sphere.REGION_TOL
        closed_h = min_ip >= -sphere.REGION_TOL
    return GaussImageReport(
        max_v=max_v,
        min_w=min_w,
        v_below_3=max_v < 3.0,
        min_pole_ip=min_ip,
        region_counts=counts,
        open_hemisphere=open_h,
        closed_hemisphere=closed_h,
    )


# ---------------------------------------------------------------------------
# immersion-layer interop


def field_immersion(field: GridField, order=4) -> ParametricImmersion:
    """Wrap a grid field as an immersion with jets at interior grid nodes.

    Parameters must land on interior nodes (within 1e-8 of the spacing);
    jets are the grid stencils of the stated order, so downstream frame and
    curvature computations agree with the grid operators exactly.
    """
    du, ddu = field_jets(field, order)
    g = _margin(order)
    h = field.spacing
    lo = np.array([-field.L + g * h[k] for k in range(field.n)])
    hi = np.array([field.L - g * h[k] for k in range(field.n)])
    n, m = field.n, field.m

    def jet(param):
        idx = []
        for k in range(n):
            f = (param[k] + field.L) / h[k]
            i = int(round(f))
            if abs(f - i) > 1e-8:
                raise ChartError("parameter does not land on a grid node")
            if i < g or i > field.shape[k] - 1 - g:
                raise ChartError("grid node too close to the boundary")
            idx.append(i)
        idx = tuple(idx)
        amb = n + m
        x = np.zeros(amb)
        x[:n] = param
        x[n:] = field.values[idx]
        dX = np.zeros((n, amb))
        dX[:, :n] = np.eye(n)
        dX[:, n:] = du[idx]
        ddX = np.zeros((n, n, amb))
        ddX[:, :, n:] = ddu[idx]
        return x, dX, ddX

    return ParametricImmersion(
        n, m, np.stack([lo, hi], axis=1), jet, fd_step=h, label="graph:field"
    )


def interior_nodes(field: GridField, order=4):
    """Coordinates of the nodes where field_immersion accepts parameters."""
    g = _margin(order)
    axes = [field.axis_coords(k)[g : field.shape[k] - g] for k in range(field.n)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([gr.ravel() for gr in grids], axis=1)


# ---------------------------------------------------------------------------
# files and plots


def field_to_csv(field: GridField) -> str:
    """Loss-free text form: meta line, boundary line, then one row per node."""
    out = io.StringIO()
    res = "x".join(str(s) for s in field.shape)
    out.write("n,m,L,res,boundary\n")
    out.write(f"{field.n},{field.m},{field.L:.17g},{res},{field.boundary}\n")
    if field.boundary == "affine":
        flat = list(field.A.ravel()) + list(field.b)
        out.write(",".join(f"{v:.17g}" for v in flat) + "\n")
    cols = (
        [f"i{k}" for k in range(field.n)]
        + [f"x{k}" for k in range(field.n)]
        + [f"u{a}" for a in range(field.m)]
    )
    out.write(",".join(cols) + "\n")
    coords = field.coords()
    for idx in np.ndindex(*field.shape):
        row = list(map(str, idx)) + [
            f"{c:.17g}" for c in coords[idx]
        ] + [f"{v:.17g}" for v in field.values[idx]]
        out.write(",".join(row) + "\n")
    return out.getvalue()


def field_from_csv(text: str) -> GridField:
    lines = text.strip().split("\n")
    if lines[0] != "n,m,L,res,boundary":
        raise ValueError("unrecognized field file header")
    n_s, m_s, L_s, res_s, boundary = lines[1].split(",")
    n, m, L = int(n_s), int(m_s), float(L_s)
    shape = tuple(int(t) for t in res_s.split("x"))
    cursor = 2
    A = b = None
    if boundary == "affine":
        flat = [float(t) for t in lines[cursor].split(",")]
        A = np.array(flat[: m * n]).reshape(m, n)
        b = np.array(flat[m * n :])
        cursor += 1
    cursor += 1  # column header
    values = np.zeros(shape + (m,))
    for line in lines[cursor:]:
        toks = line.split(",")
        idx = tuple(int(t) for t in toks[:n])
        values[idx] = [float(t) for t in toks[2 * n :]]
    return GridField(L=L, values=values, boundary=boundary, A=A, b=b)


def trace_to_csv(trace: FlowTrace) -> str:
    out = ["step,time,sup_slope,sup_residual,sup_B2,min_w"]
    for i in range(len(trace.steps)):
        out.append(
            f"{trace.steps[i]},{trace.times[i]:.17g},{trace.sup_slope[i]:.17g},"
            f"{trace.sup_residual[i]:.17g},{trace.sup_b2[i]:.17g},{trace.min_w[i]:.17g}"
        )
    return "\n".join(out) + "\n"


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def trace_svg(trace: FlowTrace, channels=("sup_residual", "sup_slope"),
              log_channels=("sup_residual", "sup_b2"), size=(640, 360)) -> str:
    """Hand-rolled SVG line plot of trace channels against time."""
    width, height = size
    pad = 48.0
    t = np.asarray(trace.times, dtype=float)
    if t.size < 2:
        t = np.array([0.0, 1.0] if t.size == 0 else [t[0], t[0] + 1.0])
    series = []
    for name in channels:
        y = np.asarray(getattr(trace, name), dtype=float)
        if name in log_channels:
            y = np.log10(np.maximum(np.abs(y), 1e-300))
            label = f"log10 {name}"
        else:
            label = name
        series.append((label, y))
    ymin = min(float(np.min(y)) for _, y in series)
    ymax = max(float(np.max(y)) for _, y in series)
    if ymax - ymin < 1e-12:
        ymax = ymin + 1.0
    tmin, tmax = float(t[0]), float(t[-1])
    if tmax - tmin < 1e-12:
        tmax = tmin + 1.0

    def sx(tv):
        return pad + (tv - tmin) / (tmax - tmin) * (width - 2 * pad)

    def sy(yv):
        return height - pad - (yv - ymin) / (ymax - ymin) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" y2="{height-pad}" '
        'stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" stroke="black"/>',
        f'<text x="{width/2}" y="{height-12}" text-anchor="middle" '
        'font-size="12">time</text>',
    ]
    for pos, (label, y) in enumerate(series):
        color = _SVG_COLORS[pos % len(_SVG_COLORS)]
        n_pts = min(len(t), len(y))
        pts = " ".join(
            f"{sx(t[i]):.2f},{sy(y[i]):.2f}" for i in range(n_pts)
        )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'
        )
        parts.append(
            f'<text x="{width-pad}" y="{pad + 16*pos}" text-anchor="end" '
            f'font-size="12" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)

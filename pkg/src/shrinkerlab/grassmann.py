"""Oriented planes, principal angles, and the reciprocal-overlap function.

An n-plane in R^{n+m} is stored as n orthonormal spanning rows whose order
fixes an orientation.  For two such planes the overlap determinant
det <e_i, f_j> lies in [-1, 1], and the singular values of that matrix are
the cosines mu_i of the principal angles theta_i between the planes.  The
reciprocal-overlap function

    v = prod_i sec(theta_i) = prod_i sqrt(1 + lam_i^2),   lam_i = tan(theta_i),

controls slope bounds for graphical surfaces.  This module evaluates v and
its exact first and second derivative forms in the angle-adapted frame, and
provides the rotation geodesics used to cross-check those forms by finite
differences.  Derivative coefficients pair tangent row j with normal
direction alpha; the forms below are valid only in the adapted frame that
``jordan_spectrum`` returns, where the overlap matrix is diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# orthonormality of stored frames (freshly factorized or rotated rows)
_ORTHO_TOL = 1e-10
# below this sine of a principal angle the rotation partner is ill-conditioned
# and the slot is filled by the deterministic completion instead
_PARTNER_TOL = 1e-8


class ChartDomainError(ValueError):
    """A principal angle reached pi/2: the overlap vanishes and v is infinite."""


def _matrix(rows) -> np.ndarray:
    out = np.array(rows, dtype=float, copy=True)
    if out.ndim != 2:
        raise ValueError("expected a 2-d array of row vectors")
    return out


@dataclass(frozen=True, eq=False)
class OrientedFrame:
    """Orthonormal rows spanning an oriented n-plane in R^{n+m}."""

    vectors: np.ndarray

    def __post_init__(self):
        v = _matrix(self.vectors)
        n, amb = v.shape
        if n < 1 or amb - n < 1:
            raise ValueError("need at least one row and one normal direction")
        if np.max(np.abs(v @ v.T - np.eye(n))) > _ORTHO_TOL:
            raise ValueError("rows are not orthonormal")
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def m(self) -> int:
        return self.vectors.shape[1] - self.vectors.shape[0]

    @property
    def ambient(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True, eq=False)
class JordanSpectrum:
    """Principal-angle data plus the adapted frames the derivative forms use.

    mu, lam, theta hold the p = min(n, m) angle-carrying values, descending
    in mu; a right angle is stored as lam = inf.  tangent_frame spans the
    base plane with row j paired to angle j for j < p (any further rows span
    the part of the plane shared with the reference plane); normal_frame
    rows are the matched rotation directions, row j being the direction that
    opens angle j, completed deterministically where the angle leaves the
    partner underdetermined.
    """

    mu: np.ndarray
    lam: np.ndarray
    theta: np.ndarray
    p: int
    tangent_frame: OrientedFrame
    normal_frame: np.ndarray

    def __post_init__(self):
        for name in ("mu", "lam", "theta"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.p,):
                raise ValueError(f"{name} must have length p")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        nf = _matrix(self.normal_frame)
        nf.flags.writeable = False
        object.__setattr__(self, "normal_frame", nf)


@dataclass(frozen=True, eq=False)
class TangentCoeffs:
    """Coefficients omega[j, alpha] of a plane motion: row j toward normal alpha."""

    omega: np.ndarray
    frame: OrientedFrame

    def __post_init__(self):
        om = np.array(self.omega, dtype=float, copy=True)
        if om.shape != (self.frame.n, self.frame.m):
            raise ValueError("coefficient shape does not match the frame")
        if not np.all(np.isfinite(om)):
            raise ValueError("coefficients must be finite")
        om.flags.writeable = False
        object.__setattr__(self, "omega", om)


def _check_pair(P: OrientedFrame, Q: OrientedFrame) -> None:
    if P.vectors.shape != Q.vectors.shape:
        raise ValueError("frames have mismatched plane or ambient dimension")


def w_product(P: OrientedFrame, Q: OrientedFrame) -> float:
    """Overlap determinant det <e_i, f_j> of two oriented planes, in [-1, 1]."""
    _check_pair(P, Q)
    det = float(np.linalg.det(P.vectors @ Q.vectors.T))
    return min(1.0, max(-1.0, det))


def jordan_spectrum(P: OrientedFrame, Q: OrientedFrame) -> JordanSpectrum:
    """Principal angles between P and Q with the angle-adapted frames at P.

    Singular values of the overlap matrix are clamped to [0, 1]; the p =
    min(n, m) smallest become the stored angle cosines (the rest are overlap
    directions shared by both planes).  Sign choices are deterministic: each
    adapted row has its largest-magnitude component positive (pairs flip
    jointly, which keeps the diagonalized overlap nonnegative and leaves
    every derivative form unchanged), and the frame keeps P's orientation.
    """
    _check_pair(P, Q)
    n, m = P.n, P.m
    p = min(n, m)
    W = P.vectors @ Q.vectors.T
    U, sing, Vt = np.linalg.svd(W)
    mu_all = np.clip(sing, 0.0, 1.0)
    # angle-carrying pairs (smallest overlaps) first
    perm = list(range(n - p, n)) + list(range(n - p))
    R = U.T[perm]
    S = Vt[perm]
    mu_all = mu_all[perm]
    E = R @ P.vectors
    F = S @ Q.vectors
    for j in range(n):
        k = int(np.argmax(np.abs(E[j])))
        if E[j, k] < 0.0:
            E[j] = -E[j]
            F[j] = -F[j]
            R[j] = -R[j]
    if np.linalg.det(R) < 0.0:
        E[-1] = -E[-1]
        F[-1] = -F[-1]
    mu = mu_all[:p].copy()
    with np.errstate(divide="ignore"):
        lam = np.sqrt(np.maximum(np.where(mu > 0.0, 1.0 / mu**2, np.inf) - 1.0, 0.0))
    theta = np.arccos(mu)
    normals = _partner_normals(E, F, mu_all, n, m, p)
    return JordanSpectrum(
        mu=mu,
        lam=lam,
        theta=theta,
        p=p,
        tangent_frame=OrientedFrame(E),
        normal_frame=normals,
    )


def _partner_normals(E, F, mu_all, n, m, p):
    # partner of row j: unit vector in span(e_j, f_j) normal to the plane,
    # signed so that rotating toward it opens the angle
    amb = n + m
    normals = np.zeros((m, amb))
    have = np.zeros(m, dtype=bool)
    for j in range(p):
        s2 = 1.0 - mu_all[j] ** 2
        if s2 > _PARTNER_TOL**2:
            nu = (mu_all[j] * E[j] - F[j]) / math.sqrt(s2)
            normals[j] = nu / np.linalg.norm(nu)
            have[j] = True
    if np.all(have):
        return normals
    # deterministic completion inside the plane's orthogonal complement
    comp = np.linalg.qr(E.T, mode="complete")[0][:, n:].T
    chosen = [normals[j] for j in range(m) if have[j]]
    for j in range(m):
        if have[j]:
            continue
        resid = comp.copy()
        for nu in chosen:
            resid -= np.outer(resid @ nu, nu)
        norms = np.linalg.norm(resid, axis=1)
        k = int(np.argmax(norms))
        normals[j] = resid[k] / norms[k]
        chosen.append(normals[j])
    return normals


def v_value(spec: JordanSpectrum) -> float:
    """prod sqrt(1 + lam_i^2) = prod 1/mu_i, the reciprocal unsigned overlap."""
    if np.any(spec.mu <= 0.0):
        raise ChartDomainError("a principal angle is pi/2, so v is unbounded")
    return float(np.prod(1.0 / spec.mu))


def _form_coeffs(spec: JordanSpectrum, Z: TangentCoeffs) -> np.ndarray:
    if Z.frame is not spec.tangent_frame and not np.allclose(
        Z.frame.vectors, spec.tangent_frame.vectors, atol=1e-10
    ):
        raise ValueError("coefficients are not expressed in the adapted frame")
    if np.any(spec.mu <= 0.0):
        raise ChartDomainError("a principal angle is pi/2, so v is unbounded")
    return Z.omega


def hess_v_form(spec: JordanSpectrum, Z: TangentCoeffs) -> float:
    """Second derivative of v along the geodesic with velocity Z (closed form)."""
    om = _form_coeffs(spec, Z)
    v = v_value(spec)
    lam = spec.lam
    p = spec.p
    d = np.diagonal(om)[:p].copy()
    a = om[:p, :p]
    off = float(np.sum(om * om)) - float(d @ d)
    diag = float(np.sum((1.0 + 2.0 * lam**2) * d * d))
    ld = lam * d
    cross = float(np.sum(ld)) ** 2 - float(ld @ ld)
    cross += float(lam @ (a * a.T) @ lam) - float(np.sum(ld * ld))
    return v * (off + diag + cross)


def dlogv_form(spec: JordanSpectrum, Z: TangentCoeffs) -> float:
    """First derivative of log v along the geodesic with velocity Z: sum lam_j omega_jj."""
    om = _form_coeffs(spec, Z)
    return float(spec.lam @ np.diagonal(om)[: spec.p])


def hess_logv_form(spec: JordanSpectrum, Z: TangentCoeffs) -> float:
    """Second derivative of log v: |Z|^2 + sum_{j,k} lam_j lam_k omega_jk omega_kj."""
    om = _form_coeffs(spec, Z)
    a = om[: spec.p, : spec.p]
    return float(np.sum(om * om)) + float(spec.lam @ (a * a.T) @ spec.lam)


def _check_normals(P: OrientedFrame, N: np.ndarray) -> None:
    k = N.shape[0]
    if N.shape[1] != P.ambient:
        raise ValueError("normal directions live in the wrong ambient space")
    if np.max(np.abs(N @ N.T - np.eye(k))) > _ORTHO_TOL:
        raise ValueError("normal directions are not orthonormal")
    if np.max(np.abs(N @ P.vectors.T)) > _ORTHO_TOL:
        raise ValueError("directions are not normal to the plane")


def grassmann_geodesic(
    P: OrientedFrame, normals, angles, t: float
) -> OrientedFrame:
    """Rotate row j of P toward normal direction j with speed angles[j].

    Row j becomes cos(a_j t) e_j + sin(a_j t) nu_j; rows beyond the supplied
    directions ride along unchanged.  With orthonormal directions normal to
    P this is a unit-speed family of orthonormal frames for every t.
    """
    N = _matrix(normals)
    a = np.asarray(angles, dtype=float)
    k = N.shape[0]
    if a.shape != (k,):
        raise ValueError("need one angle per normal direction")
    if k > P.n:
        raise ValueError("more directions than frame rows")
    _check_normals(P, N)
    rows = np.array(P.vectors, copy=True)
    c = np.cos(a * t)[:, None]
    s = np.sin(a * t)[:, None]
    rows[:k] = c * rows[:k] + s * N
    return OrientedFrame(rows)


def geodesic_from_velocity(
    P: OrientedFrame, normals, omega, t: float
) -> OrientedFrame:
    """Frame at time t of the geodesic through P with velocity omega.

    omega[j, alpha] moves frame row j toward normals[alpha].  The motion is
    reduced to simultaneous principal rotations by a singular value
    decomposition of the coefficient matrix, so the returned path is the
    exact distance-minimizing one with that initial velocity.
    """
    N = _matrix(normals)
    if N.shape[0] != P.m:
        raise ValueError("need a full orthonormal basis of the complement")
    _check_normals(P, N)
    om = np.asarray(omega, dtype=float)
    if om.shape != (P.n, P.m):
        raise ValueError("coefficient shape does not match the frame")
    A, s, Bt = np.linalg.svd(om)
    rows = A.T @ P.vectors
    turned = Bt @ N
    k = s.size
    c = np.cos(s * t)[:, None]
    sn = np.sin(s * t)[:, None]
    rows[:k] = c * rows[:k] + sn * turned[:k]
    return OrientedFrame(rows)


def express_in_adapted_frame(
    spec: JordanSpectrum, omega, tangent_rows, normal_rows
) -> TangentCoeffs:
    """Rewrite motion coefficients from a caller frame into the adapted frame.

    tangent_rows must span the same plane as the spectrum's base and
    normal_rows its orthogonal complement; omega[i, alpha] refers to those
    rows.  Returns coefficients usable with the derivative forms.
    """
    E = _matrix(tangent_rows)
    Nr = _matrix(normal_rows)
    R = spec.tangent_frame.vectors @ E.T
    C = spec.normal_frame @ Nr.T
    if np.max(np.abs(R @ R.T - np.eye(R.shape[0]))) > 1e-8:
        raise ValueError("tangent rows do not span the spectrum's base plane")
    if np.max(np.abs(C @ C.T - np.eye(C.shape[0]))) > 1e-8:
        raise ValueError("normal rows do not span the plane's complement")
    om = R @ np.asarray(omega, dtype=float) @ C.T
    return TangentCoeffs(omega=om, frame=spec.tangent_frame)

import math

import numpy as np
import pytest

from shrinkerlab import grassmann, sphere
from shrinkerlab.grassmann import (
    ChartDomainError,
    OrientedFrame,
    TangentCoeffs,
    dlogv_form,
    express_in_adapted_frame,
    geodesic_from_velocity,
    grassmann_geodesic,
    hess_logv_form,
    hess_v_form,
    jordan_spectrum,
    v_value,
    w_product,
)


def _random_frame(rng, n, amb):
    q, _ = np.linalg.qr(rng.standard_normal((amb, n)))
    return OrientedFrame(q.T)


def _complement(P):
    q = np.linalg.qr(P.vectors.T, mode="complete")[0]
    return q[:, P.n :].T


def _frame_in_chart(rng, base, max_angle=1.1):
    # move the base plane by a geodesic with controlled principal angles
    om = rng.standard_normal((base.n, base.m))
    om *= max_angle * rng.uniform(0.1, 1.0) / max(np.linalg.svd(om)[1][0], 1e-12)
    return geodesic_from_velocity(base, _complement(base), om, 1.0)


def test_w_product_of_frame_with_itself_is_one():
    rng = np.random.default_rng(0)
    for n, m in [(1, 1), (2, 2), (3, 2), (2, 3)]:
        P = _random_frame(rng, n, n + m)
        assert w_product(P, P) == pytest.approx(1.0, abs=1e-12)


def test_w_product_line_rotation():
    for alpha in (0.0, 0.3, 1.2, 2.5):
        P = OrientedFrame(np.array([[1.0, 0.0]]))
        Q = OrientedFrame(np.array([[math.cos(alpha), math.sin(alpha)]]))
        assert w_product(P, Q) == pytest.approx(math.cos(alpha), abs=1e-14)


def test_w_product_dimension_mismatch():
    P = OrientedFrame(np.eye(3)[:2])
    Q = OrientedFrame(np.eye(4)[:2])
    with pytest.raises(ValueError):
        w_product(P, Q)
    with pytest.raises(ValueError):
        w_product(P, OrientedFrame(np.eye(3)[:1]))


def test_abs_w_equals_product_of_angle_cosines():
    rng = np.random.default_rng(1)
    for n, m in [(1, 2), (2, 2), (3, 2), (2, 4), (4, 2)]:
        for _ in range(20):
            P = _random_frame(rng, n, n + m)
            Q = _random_frame(rng, n, n + m)
            spec = jordan_spectrum(P, Q)
            assert abs(w_product(P, Q)) == pytest.approx(
                float(np.prod(spec.mu)), abs=1e-10
            )


def test_spectrum_of_identical_frames():
    rng = np.random.default_rng(2)
    P = _random_frame(rng, 3, 5)
    spec = jordan_spectrum(P, P)
    assert spec.p == 2
    assert np.allclose(spec.mu, 1.0, atol=1e-12)
    assert np.allclose(spec.lam, 0.0, atol=1e-6)
    assert np.allclose(spec.theta, 0.0, atol=1e-6)


def test_spectrum_of_single_block_rotation():
    alpha = 0.7
    P = OrientedFrame(np.eye(4)[:2])
    rows = np.array(
        [
            [math.cos(alpha), 0.0, math.sin(alpha), 0.0],
            [0.0, 1.0, 0.0, 0.0],
        ]
    )
    spec = jordan_spectrum(OrientedFrame(rows), P)
    # angles as a multiset are {alpha, 0}; storage is descending in mu
    assert sorted(spec.theta) == pytest.approx([0.0, alpha], abs=1e-12)
    assert spec.mu[0] >= spec.mu[1]


def test_spectrum_matches_eigen_oracle():
    rng = np.random.default_rng(3)
    for n, m in [(2, 2), (3, 2), (2, 3), (4, 3)]:
        for _ in range(15):
            P = _random_frame(rng, n, n + m)
            Q = _random_frame(rng, n, n + m)
            W = P.vectors @ Q.vectors.T
            eig = np.linalg.eigvalsh(W.T @ W)
            p = min(n, m)
            oracle = np.sqrt(np.clip(eig[:p], 0.0, 1.0))[::-1]
            spec = jordan_spectrum(P, Q)
            assert np.max(np.abs(spec.mu - oracle)) <= 1e-10


def test_spectrum_symmetry():
    rng = np.random.default_rng(4)
    for _ in range(25):
        P = _random_frame(rng, 3, 5)
        Q = _random_frame(rng, 3, 5)
        a = jordan_spectrum(P, Q).mu
        b = jordan_spectrum(Q, P).mu
        assert np.max(np.abs(np.sort(a) - np.sort(b))) <= 1e-10


def test_w_and_spectrum_invariant_under_reorthonormalization():
    rng = np.random.default_rng(5)
    for _ in range(20):
        P = _random_frame(rng, 3, 6)
        Q = _random_frame(rng, 3, 6)
        O1 = np.linalg.qr(rng.standard_normal((3, 3)))[0]
        P2 = OrientedFrame(O1 @ P.vectors)
        assert abs(w_product(P2, Q)) == pytest.approx(
            abs(w_product(P, Q)), abs=1e-10
        )
        mu1 = jordan_spectrum(P, Q).mu
        mu2 = jordan_spectrum(P2, Q).mu
        assert np.max(np.abs(mu1 - mu2)) <= 1e-10


def test_v_trivial_values():
    P = OrientedFrame(np.eye(5)[:2])
    assert v_value(jordan_spectrum(P, P)) == pytest.approx(1.0, abs=1e-12)
    # both angles at 45 degrees: v = sqrt(2) * sqrt(2)
    c = math.sqrt(0.5)
    rows = np.array(
        [
            [c, 0.0, c, 0.0, 0.0],
            [0.0, c, 0.0, c, 0.0],
        ]
    )
    spec = jordan_spectrum(OrientedFrame(rows), P)
    assert np.allclose(spec.lam, 1.0, atol=1e-12)
    assert v_value(spec) == pytest.approx(2.0, abs=1e-12)


def test_v_is_reciprocal_of_unsigned_overlap():
    rng = np.random.default_rng(6)
    for _ in range(30):
        base = _random_frame(rng, 2, 4)
        P = _frame_in_chart(rng, base)
        spec = jordan_spectrum(P, base)
        assert v_value(spec) == pytest.approx(
            1.0 / abs(w_product(P, base)), rel=1e-10
        )


def test_v_at_least_one_and_strict_away_from_overlap():
    P = OrientedFrame(np.eye(5)[:2])
    assert v_value(jordan_spectrum(P, P)) >= 1.0
    rows = np.eye(5)[:2].copy()
    a = 1e-3
    rows[0] = [math.cos(a), 0.0, math.sin(a), 0.0, 0.0]
    v = v_value(jordan_spectrum(OrientedFrame(rows), P))
    assert v > 1.0 + 1e-9


def test_orthogonal_planes_poison_v_operations():
    P = OrientedFrame(np.eye(4)[:2])
    Q = OrientedFrame(np.eye(4)[2:])
    spec = jordan_spectrum(P, Q)
    assert np.all(np.isinf(spec.lam))
    assert np.allclose(spec.theta, math.pi / 2)
    Z = TangentCoeffs(np.ones((2, 2)), spec.tangent_frame)
    with pytest.raises(ChartDomainError):
        v_value(spec)
    with pytest.raises(ChartDomainError):
        dlogv_form(spec, Z)
    with pytest.raises(ChartDomainError):
        hess_v_form(spec, Z)
    with pytest.raises(ChartDomainError):
        hess_logv_form(spec, Z)


def test_geodesic_identity_cases():
    rng = np.random.default_rng(7)
    P = _random_frame(rng, 2, 5)
    N = _complement(P)[:2]
    out = grassmann_geodesic(P, N, [0.4, 1.1], 0.0)
    assert np.allclose(out.vectors, P.vectors, atol=1e-15)
    out = grassmann_geodesic(P, N, [0.0, 0.0], 3.7)
    assert np.allclose(out.vectors, P.vectors, atol=1e-15)


def test_geodesic_rejects_bad_directions():
    P = OrientedFrame(np.eye(4)[:2])
    with pytest.raises(ValueError):
        grassmann_geodesic(P, np.array([[1.0, 0.0, 0.0, 0.0]]), [0.5], 1.0)
    with pytest.raises(ValueError):
        grassmann_geodesic(
            P, np.array([[0.0, 0.0, 1.0, 1.0]]), [0.5], 1.0
        )


def test_line_geodesic_is_a_great_circle():
    rng = np.random.default_rng(8)
    e = np.array([1.0, 0.0, 0.0])
    nu = np.array([0.0, 1.0, 0.0])
    P = OrientedFrame(e[None, :])
    for t in (0.0, 0.3, 1.0, 2.2):
        out = grassmann_geodesic(P, nu[None, :], [1.0], t)
        assert np.allclose(out.vectors[0], sphere.great_circle(e, nu, t), atol=1e-14)


def test_hess_v_at_zero_angles_is_squared_norm():
    rng = np.random.default_rng(9)
    for n, m in [(2, 2), (3, 2), (2, 3)]:
        P = _random_frame(rng, n, n + m)
        spec = jordan_spectrum(P, P)
        om = rng.standard_normal((n, m))
        Z = TangentCoeffs(om, spec.tangent_frame)
        assert hess_v_form(spec, Z) == pytest.approx(float(np.sum(om * om)), abs=1e-9)
        assert hess_logv_form(spec, Z) == pytest.approx(
            float(np.sum(om * om)), abs=1e-9
        )
        assert dlogv_form(spec, Z) == pytest.approx(0.0, abs=1e-6)


def test_hess_v_single_pair_coefficient():
    base = OrientedFrame(np.eye(3)[:1])
    a = 0.6
    rows = np.array([[math.cos(a), math.sin(a), 0.0]])
    spec = jordan_spectrum(OrientedFrame(rows), base)
    lam = math.tan(a)
    om = np.zeros((1, 2))
    om[0, 0] = 1.0
    Z = TangentCoeffs(om, spec.tangent_frame)
    expected = (1.0 + 2.0 * lam**2) / math.cos(a)
    assert hess_v_form(spec, Z) == pytest.approx(expected, rel=1e-10)


def test_chain_rule_between_hess_v_and_hess_logv():
    rng = np.random.default_rng(10)
    for _ in range(40):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        base = _random_frame(rng, n, n + m)
        P = _frame_in_chart(rng, base)
        spec = jordan_spectrum(P, base)
        Z = TangentCoeffs(rng.standard_normal((n, m)), spec.tangent_frame)
        v = v_value(spec)
        lhs = hess_logv_form(spec, Z)
        rhs = hess_v_form(spec, Z) / v - dlogv_form(spec, Z) ** 2
        assert lhs == pytest.approx(rhs, abs=1e-10 * max(1.0, abs(lhs)))


def test_derivative_forms_match_geodesic_differences():
    rng = np.random.default_rng(11)
    step = 1e-4
    checked = 0
    while checked < 200:
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        base = _random_frame(rng, n, n + m)
        P = _frame_in_chart(rng, base)
        spec = jordan_spectrum(P, base)
        om = rng.standard_normal((n, m))
        om /= np.linalg.norm(om)
        Z = TangentCoeffs(om, spec.tangent_frame)

        def logv_at(t):
            frame = geodesic_from_velocity(
                spec.tangent_frame, spec.normal_frame, om, t
            )
            return math.log(v_value(jordan_spectrum(frame, base)))

        f0 = logv_at(0.0)
        fp = logv_at(step)
        fm = logv_at(-step)
        d1 = (fp - fm) / (2.0 * step)
        d2 = (fp - 2.0 * f0 + fm) / step**2
        c1 = dlogv_form(spec, Z)
        c2 = hess_logv_form(spec, Z)
        assert abs(d1 - c1) <= 1e-5 * max(1.0, abs(c1))
        assert abs(d2 - c2) <= 1e-5 * max(1.0, abs(c2))

        def v_at(t):
            frame = geodesic_from_velocity(
                spec.tangent_frame, spec.normal_frame, om, t
            )
            return v_value(jordan_spectrum(frame, base))

        dv2 = (v_at(step) - 2.0 * v_at(0.0) + v_at(-step)) / step**2
        cv2 = hess_v_form(spec, Z)
        assert abs(dv2 - cv2) <= 1e-5 * max(1.0, abs(cv2))
        checked += 1


def test_forms_agree_for_different_orthonormalizations():
    # repeated principal angles leave the adapted frame non-unique; the form
    # values must not depend on the choice
    rng = np.random.default_rng(12)
    for _ in range(20):
        base = OrientedFrame(np.eye(5)[:2])
        a = 0.5
        rows = np.array(
            [
                [math.cos(a), 0.0, math.sin(a), 0.0, 0.0],
                [0.0, math.cos(a), 0.0, math.sin(a), 0.0],
            ]
        )
        P = OrientedFrame(rows)
        O1 = np.linalg.qr(rng.standard_normal((2, 2)))[0]
        P2 = OrientedFrame(O1 @ rows)
        s1 = jordan_spectrum(P, base)
        s2 = jordan_spectrum(P2, base)
        tangent = rows
        normal = _complement(P)
        om = rng.standard_normal((2, 3))
        Z1 = express_in_adapted_frame(s1, om, tangent, normal)
        Z2 = express_in_adapted_frame(s2, om, tangent, normal)
        for form in (dlogv_form, hess_v_form, hess_logv_form):
            assert form(s1, Z1) == pytest.approx(form(s2, Z2), abs=1e-9)


def test_line_machinery_degenerates_to_secant_on_sphere():
    rng = np.random.default_rng(13)
    step = 1e-4
    for _ in range(50):
        nu0 = np.array([0.0, 0.0, 1.0])
        u = np.array([1.0, 0.0, 0.0])
        a = rng.uniform(0.1, 1.0)
        nu = sphere.great_circle(nu0, u, a)
        # the plane normal to nu, oriented so that cross(r1, r2) = nu
        r1 = np.cross(np.array([0.0, 1.0, 0.0]), nu)
        r1 /= np.linalg.norm(r1)
        r2 = np.cross(nu, r1)
        P = OrientedFrame(np.vstack([r1, r2]))
        base = OrientedFrame(np.eye(3)[:2])
        spec = jordan_spectrum(P, base)
        assert v_value(spec) == pytest.approx(1.0 / math.cos(a), rel=1e-12)

        om = rng.standard_normal((2, 1))
        Z = TangentCoeffs(om, spec.tangent_frame)

        def sec_along(t):
            frame = geodesic_from_velocity(
                spec.tangent_frame, spec.normal_frame, om, t
            )
            n_t = np.cross(frame.vectors[0], frame.vectors[1])
            return 1.0 / abs(float(n_t @ nu0))

        fd = (sec_along(step) - 2.0 * sec_along(0.0) + sec_along(-step)) / step**2
        assert abs(fd - hess_v_form(spec, Z)) <= 1e-6 * max(
            1.0, abs(hess_v_form(spec, Z))
        )


def test_coeffs_frame_mismatch_rejected():
    rng = np.random.default_rng(14)
    base = _random_frame(rng, 2, 4)
    P = _frame_in_chart(rng, base)
    spec = jordan_spectrum(P, base)
    other = _random_frame(rng, 2, 4)
    Z = TangentCoeffs(np.ones((2, 2)), other)
    with pytest.raises(ValueError):
        dlogv_form(spec, Z)

"""Tests for the strong-converse rate-function machinery.

The slow cellwise oracle below recomputes the tilt density from scratch
(explicit loops, no shared code with the module), and a batched sampler
provides the dense random-joint minimum the multistart must not exceed.
"""

import math

import numpy as np
import pytest

from cidlossy.prob_core import ValidationError, compose_triple, mutual_information
from cidlossy.rd_region import RateTriple, bayes_phi
from cidlossy.strong_converse_exponent import (
    AuxJoint,
    ExpParams,
    ExponentConfig,
    expected_omega,
    f_exponent,
    f_param,
    omega_cgf,
    omega_density,
    omega_min,
    pc_upper_bound,
    rho_bound,
    sh_joint,
    sh_joint_any_u,
    solver_for,
    tilde_f,
    tilde_omega,
    tilde_omega_cgf,
    tilted_sh_joint,
    verify_sh,
)

HAMMING = np.array([[0.0, 1.0], [1.0, 0.0]])


def bsc(p):
    return [[1 - p, p], [p, 1 - p]]


SYS = compose_triple([0.5, 0.5], bsc(0.1), bsc(0.2), HAMMING)
I_YZ = mutual_information(SYS.py, SYS.pzy)


@pytest.fixture(scope="module")
def solver():
    return solver_for(SYS)


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def oracle_omega_cell(sys, j, x, y, z, u, v, alpha, mu, beta):
    """Cellwise tilt density via explicit marginalization."""
    qY = j.sum((0, 2, 3, 4))
    qZ = j.sum((0, 1, 3, 4))
    jyzu = j.sum((0, 4))
    jyu = jyzu.sum(1)
    jzu = jyzu.sum(0)
    ju = jyu.sum(0)
    jxyzu = j.sum(4)
    jzuv = j.sum((0, 1))
    mub, beb = 1 - mu, 1 - beta
    t = math.log(qY[y] / sys.py[y])
    t += math.log((jyzu[y, z, u] / jyu[y, u]) / sys.pzy[y, z])
    t += math.log((jxyzu[x, y, z, u] / jyzu[y, z, u]) / sys.px_given_yz[y, z, x])
    t += math.log((j[x, y, z, u, v] / jzuv[z, u, v]) / (jxyzu[x, y, z, u] / jzu[z, u]))
    t += alpha * (
        mub * beb * math.log((jyzu[y, z, u] / ju[u]) / sys.pyz[y, z])
        + mub * beta * math.log(qZ[z] / (jzu[z, u] / ju[u]))
        + mu * sys.distortion[x, v]
    )
    return t


def oracle_expected_omega_terms(sys, q: AuxJoint, params: ExpParams):
    """E[omega] as the sum of its divergence/MI constituents."""
    j = q.probs
    tot = 0.0
    it = np.ndindex(j.shape)
    for x, y, z, u, v in it:
        if j[x, y, z, u, v] > 0:
            tot += j[x, y, z, u, v] * oracle_omega_cell(
                sys, j, x, y, z, u, v, params.alpha, params.mu, params.beta
            )
    return tot


def oracle_batched_cgf(sys, joints, params: ExpParams):
    """Vectorized Omega(Q) over a (B, x,y,z,u,v) stack (oracle path)."""
    j = joints
    eps = 0.0

    def lg(a):
        return np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), 0.0)

    qY = j.sum((1, 3, 4, 5))
    qZ = j.sum((1, 2, 4, 5))
    jyzu = j.sum((1, 5))
    jyu = jyzu.sum(2)
    jzu = jyzu.sum(1)
    ju = jyu.sum(1)
    jxyzu = j.sum(5)
    jzuv = j.sum((1, 2))
    B = j.shape[0]
    om = np.zeros_like(j)
    om += lg(qY)[:, None, :, None, None, None] - lg(sys.py)[None, None, :, None, None, None]
    om += (lg(jyzu) - lg(jyu)[:, :, None, :])[:, None, :, :, :, None] - lg(sys.pzy)[None, None, :, :, None, None]
    om += (lg(jxyzu) - lg(jyzu)[:, None])[..., None] - lg(np.moveaxis(sys.px_given_yz, 2, 0))[None, ..., None, None]
    om += lg(j) - lg(jzuv)[:, None, None] - (lg(jxyzu) - lg(jzu)[:, None, None])[..., None]
    a, mu, beta = params.alpha, params.mu, params.beta
    om += a * (1 - mu) * (1 - beta) * ((lg(jyzu) - lg(ju)[:, None, None, :])[:, None, :, :, :, None] - lg(sys.pyz)[None, None, :, :, None, None])
    om += a * (1 - mu) * beta * (lg(qZ)[:, None, None, :, None, None] - (lg(jzu) - lg(ju)[:, None])[:, None, None, :, :, None])
    om += a * mu * sys.distortion[None, :, None, None, None, :]
    mask = j > 0
    arg = np.where(mask, np.log(np.where(mask, j, 1.0)) - params.theta * om, -np.inf)
    m = arg.max(axis=(1, 2, 3, 4, 5), keepdims=True)
    return -(m[:, 0, 0, 0, 0, 0] + np.log(np.exp(arg - m).sum(axis=(1, 2, 3, 4, 5))))


# ---------------------------------------------------------------------------
# density and cumulant function
# ---------------------------------------------------------------------------


class TestOmegaDensity:
    def test_matches_cellwise_oracle(self):
        rng = np.random.default_rng(3)
        params = ExpParams(1.7, 0.4, 0.35, 0.6)
        for _ in range(5):
            j = rng.dirichlet(np.ones(2 * 2 * 2 * 3 * 2)).reshape(2, 2, 2, 3, 2)
            q = AuxJoint(j)
            got = omega_density(SYS, q, params)
            for idx in np.ndindex(j.shape):
                if q.probs[idx] > 0:
                    want = oracle_omega_cell(SYS, q.probs, *idx, params.alpha, params.mu, params.beta)
                    assert got[idx] == pytest.approx(want, abs=1e-10)

    def test_matched_law_reduces_to_distortion(self):
        q = sh_joint(SYS, np.eye(2), np.full((2, 2, 2), 0.5))
        params = ExpParams(2.0, 1.0, 0.4, 0.3)
        om = omega_density(SYS, q, params)
        # U independent of nothing here, but the four structural ratios
        # cancel cellwise for any product-form joint
        mask = q.probs > 0
        mub, beb = 0.6, 0.7
        # alpha part survives; with U = Y it is not zero, so use U constant
        qc = sh_joint_any_u(SYS, np.array([[1.0], [1.0]]), np.full((1, 2, 2), 0.5))
        omc = omega_density(SYS, qc, params)
        want = params.alpha * params.mu * np.broadcast_to(
            SYS.distortion[:, None, None, None, :], omc.shape
        )
        maskc = qc.probs > 0
        np.testing.assert_allclose(omc[maskc], want[maskc], atol=1e-10)

    def test_mu_one_leaves_alpha_d(self):
        rng = np.random.default_rng(4)
        q = sh_joint_any_u(SYS, rng.dirichlet(np.ones(3), size=2),
                           rng.dirichlet(np.ones(2), size=(3, 2)))
        for beta in (0.0, 0.5, 1.0):
            params = ExpParams(1.3, 0.8, 1.0, beta)
            om = omega_density(SYS, q, params)
            want = 1.3 * np.broadcast_to(SYS.distortion[:, None, None, None, :], om.shape)
            mask = q.probs > 0
            np.testing.assert_allclose(om[mask], want[mask], atol=1e-10)

    def test_expected_omega_matches_term_oracle(self):
        # derived: term-by-term divergence oracle
        rng = np.random.default_rng(5)
        for _ in range(10):
            j = rng.dirichlet(np.ones(2 ** 5)).reshape(2, 2, 2, 2, 2)
            q = AuxJoint(j)
            params = ExpParams(
                float(rng.uniform(0.2, 3)), 0.5,
                float(rng.uniform(0, 1)), float(rng.uniform(0, 1)),
            )
            want = oracle_expected_omega_terms(SYS, q, params)
            assert expected_omega(SYS, q, params) == pytest.approx(want, abs=1e-10)

    def test_support_violation_flagged(self):
        degenerate = compose_triple([1.0, 0.0], bsc(0.1), bsc(0.2), HAMMING)
        j = np.zeros((2, 2, 2, 2, 2))
        j[1, 0, 0, 0, 0] = 1.0  # charges x=1 which the law never emits
        q = AuxJoint(j)
        params = ExpParams(1.0, 0.5, 0.5, 0.5)
        assert omega_cgf(degenerate, q, params) == math.inf
        assert np.isinf(omega_density(degenerate, q, params)).any()


class TestOmegaCgf:
    def test_zero_at_theta_zero(self):
        rng = np.random.default_rng(6)
        q = AuxJoint(rng.dirichlet(np.ones(2 ** 5)).reshape(2, 2, 2, 2, 2))
        assert omega_cgf(SYS, q, ExpParams(1.0, 0.0, 0.3, 0.3)) == pytest.approx(0.0, abs=1e-12)

    def test_matched_law_closed_form(self):
        # derived: two-point expectation; constant-U product with a
        # deterministic reconstruction gives
        # Omega = -log(1 - p_mis (1 - exp(-theta*alpha*mu)))
        phi = bayes_phi(SYS, np.array([[1.0], [1.0]]))
        k = np.zeros((1, 2, 2))
        k[0, [0, 1], phi[0]] = 1.0
        q = sh_joint_any_u(SYS, np.array([[1.0], [1.0]]), k)
        p_mis = float(np.sum(np.where(
            np.broadcast_to(SYS.distortion[:, None, None, None, :], q.probs.shape) > 0,
            q.probs, 0.0)))
        for theta, alpha, mu in ((0.5, 1.0, 1.0), (1.2, 2.0, 0.7)):
            params = ExpParams(alpha, theta, mu, 0.4)
            want = -math.log(1 - p_mis * (1 - math.exp(-theta * alpha * mu)))
            assert omega_cgf(SYS, q, params) == pytest.approx(want, abs=1e-10)

    def test_jensen_direction(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            j = rng.dirichlet(np.ones(2 ** 4 * 3)).reshape(2, 2, 2, 3, 2)
            q = AuxJoint(j)
            params = ExpParams(
                float(rng.uniform(0.1, 4)), float(rng.uniform(0.05, 3)),
                float(rng.uniform(0, 1)), float(rng.uniform(0, 1)),
            )
            assert omega_cgf(SYS, q, params) <= params.theta * expected_omega(SYS, q, params) + 1e-10


class TestOmegaMin:
    def test_zero_at_theta_zero(self, solver):
        val, _ = solver.omega_min(ExpParams(1.0, 1e-12, 0.5, 0.5), level="starts")
        assert val == pytest.approx(0.0, abs=1e-9)

    def test_dominated_by_matched_law(self, solver):
        params = ExpParams(1.0, 0.8, 0.5, 0.5)
        q = sh_joint(SYS, np.eye(2), np.full((2, 2, 2), 0.5))
        val, _ = solver.omega_min(params, level="full")
        assert val <= omega_cgf(SYS, q, params) + 1e-10

    def test_beats_dense_random_sampling(self, solver):
        # derived: random-sampling oracle (batched evaluation)
        rng = np.random.default_rng(11)
        params = ExpParams(0.8, 0.5, 0.25, 0.5)
        nu = solver.u_size
        dims = (2, 2, 2, nu, 2)
        best = math.inf
        for _ in range(10):
            batch = rng.dirichlet(np.ones(int(np.prod(dims))), size=10_000).reshape(-1, *dims)
            vals = oracle_batched_cgf(SYS, batch, params)
            best = min(best, float(vals.min()))
        val, _ = solver.omega_min(params, level="full")
        assert val <= best + 1e-6

    def test_batched_oracle_agrees_with_module(self):
        rng = np.random.default_rng(12)
        params = ExpParams(1.1, 0.6, 0.4, 0.7)
        batch = rng.dirichlet(np.ones(2 ** 5), size=4).reshape(4, 2, 2, 2, 2, 2)
        vals = oracle_batched_cgf(SYS, batch, params)
        for b in range(4):
            assert vals[b] == pytest.approx(
                omega_cgf(SYS, AuxJoint(batch[b]), params), abs=1e-10
            )


# ---------------------------------------------------------------------------
# rate function
# ---------------------------------------------------------------------------


class TestFParam:
    def test_vanishes_with_theta(self, solver):
        triple = RateTriple(0.05, 0.4, 0.5)
        for theta in (1e-6, 1e-4):
            params = ExpParams(1.0, theta, 0.5, 0.5)
            om, _ = solver.omega_min(params, level="starts")
            val = solver.f_value(om, triple, params)
            assert abs(val) < 10 * theta

    def test_distortion_direction(self, solver):
        params = ExpParams(1.5, 0.7, 0.8, 0.3)
        om, _ = solver.omega_min(params, level="medium")
        v1 = solver.f_value(om, RateTriple(0.05, 0.4, 0.2), params)
        v2 = solver.f_value(om, RateTriple(0.05, 0.4, 0.4), params)
        assert v2 < v1  # affine decrease in D at mu > 0


class TestFExponent:
    def test_inside_origin(self, solver):
        res = solver.f_exponent(RateTriple(0.0, 0.0, SYS.d_plus))
        assert res.value <= 0.05

    def test_outside_positive(self, solver):
        res = solver.f_exponent(RateTriple(I_YZ + 0.1, math.log(2), SYS.d_plus))
        assert res.value > 0.0
        assert res.value_raw > 0.0

    def test_outside_distortion_floor(self, solver):
        res = solver.f_exponent(RateTriple(0.0, math.log(2), 0.05))
        assert res.value > 0.0
        assert res.params.mu > 0.5  # distortion-binding plane dominates

    def test_ordering_vs_tilde(self, solver):
        for triple in (
            RateTriple(0.0, 0.0, SYS.d_plus),
            RateTriple(I_YZ + 0.1, math.log(2), SYS.d_plus),
            RateTriple(0.0, math.log(2), 0.05),
        ):
            f = solver.f_exponent(triple)
            ft = solver.tilde_f(triple)
            assert f.value >= ft.value - 0.02

    def test_doubling_distortion_never_raises_f(self, solver):
        t1 = RateTriple(0.0, math.log(2), 0.04)
        t2 = RateTriple(0.0, math.log(2), 0.08)
        r1 = solver.f_exponent(t1)
        r2 = solver.f_exponent(t2)
        assert r2.value <= r1.value + 1e-9


class TestPcUpperBound:
    def test_zero_exponent_gives_one(self, solver):
        assert pc_upper_bound(SYS, RateTriple(0.0, 0.0, SYS.d_plus), 50) == 1.0

    def test_rejects_n0(self):
        with pytest.raises(ValidationError):
            pc_upper_bound(SYS, RateTriple(0.0, 0.0, 1.0), 0)

    def test_decays_outside(self, solver):
        triple = RateTriple(I_YZ + 0.1, math.log(2), SYS.d_plus)
        b100 = pc_upper_bound(SYS, triple, 100)
        b1000 = pc_upper_bound(SYS, triple, 1000)
        assert b1000 < b100 <= 1.0


# ---------------------------------------------------------------------------
# structured (tilde) family
# ---------------------------------------------------------------------------


class TestTilde:
    def test_u_independent_leaves_mu_d(self):
        q = np.full((2, 2), 0.5)  # U independent of Y
        k = np.full((2, 2, 2), 0.5)
        p = sh_joint(SYS, q, k)
        om = tilde_omega(SYS, p, 0.4, 0.7)
        want = 0.4 * np.broadcast_to(SYS.distortion[:, None, None, None, :], om.shape)
        mask = p.probs > 0
        np.testing.assert_allclose(om[mask], want[mask], atol=1e-12)

    def test_mu_one_is_distortion(self):
        p = sh_joint(SYS, np.eye(2), np.full((2, 2, 2), 0.5))
        om = tilde_omega(SYS, p, 1.0, 0.3)
        want = np.broadcast_to(SYS.distortion[:, None, None, None, :], om.shape)
        mask = p.probs > 0
        np.testing.assert_allclose(om[mask], want[mask], atol=1e-12)

    def test_mean_decomposition(self):
        # derived: MI-decomposition oracle
        # E_p[tilde_omega] = mu_bar*beta_bar*I(YZ;U) - mu_bar*beta*I(Z;U) + mu*E[d]
        from cidlossy.prob_core import mutual_information_from_joint
        from cidlossy.rd_region import scheme_stats

        rng = np.random.default_rng(13)
        q = rng.dirichlet(np.ones(2), size=2)
        k = rng.dirichlet(np.ones(2), size=(2, 2))
        p = sh_joint(SYS, q, k)
        mu, beta = 0.3, 0.8
        om = tilde_omega(SYS, p, mu, beta)
        got = float(np.sum(p.probs * om))
        j = p.probs
        i_yzu = mutual_information_from_joint(j.sum(axis=(0, 4)).reshape(-1, j.shape[3]))
        i_zu = mutual_information_from_joint(j.sum(axis=(0, 1, 4)))
        ed = float(np.einsum("xyzuv,xv->", j, SYS.distortion))
        want = (1 - mu) * (1 - beta) * i_yzu - (1 - mu) * beta * i_zu + mu * ed
        assert got == pytest.approx(want, abs=1e-10)

    def test_rejects_unstructured(self):
        rng = np.random.default_rng(14)
        q = AuxJoint(rng.dirichlet(np.ones(2 ** 5)).reshape(2, 2, 2, 2, 2))
        with pytest.raises(ValidationError):
            tilde_omega(SYS, q, 0.5, 0.5)

    def test_tilde_f_signs(self, solver):
        inside = solver.tilde_f(RateTriple(0.0, 0.0, SYS.d_plus))
        assert inside.value <= 0.05
        outside = solver.tilde_f(RateTriple(I_YZ + 0.1, math.log(2), SYS.d_plus))
        assert outside.value > 0.0

    def test_lambda_zero_limit(self):
        p = sh_joint(SYS, np.eye(2), np.full((2, 2, 2), 0.5))
        assert tilde_omega_cgf(SYS, p, 0.0, 0.5, 0.5) == pytest.approx(0.0, abs=1e-12)


class TestTiltedJoint:
    def test_lambda_zero_identity(self):
        p = sh_joint(SYS, np.eye(2), np.full((2, 2, 2), 0.5))
        t = tilted_sh_joint(SYS, p, 0.0, 0.5, 0.5)
        np.testing.assert_allclose(t.probs, p.probs, atol=1e-12)

    def test_normalizes(self):
        rng = np.random.default_rng(15)
        for _ in range(50):
            q = rng.dirichlet(np.ones(2), size=2)
            k = rng.dirichlet(np.ones(2), size=(2, 2))
            p = sh_joint(SYS, q, k)
            lam = float(rng.uniform(0, 2))
            t = tilted_sh_joint(SYS, p, lam, float(rng.uniform(0, 1)), float(rng.uniform(0, 1)))
            assert abs(float(t.probs.sum()) - 1.0) < 1e-12

    def test_two_point_variance(self):
        # derived: two-point variance formula p(1-p) gap^2 under the tilt
        # mu=1 makes tilde_omega the distortion itself
        phi = np.array([[0, 0], [0, 0]])  # constant reconstruction 0
        k = np.zeros((2, 2, 2))
        k[:, :, 0] = 1.0
        p = sh_joint(SYS, np.eye(2), k)
        lam = 0.7
        om = tilde_omega(SYS, p, 1.0, 0.0)
        t = tilted_sh_joint(SYS, p, lam, 1.0, 0.0)
        # d(x, 0) is Bernoulli(P{X=1}) under p, tilted by exp(-lam d)
        p1 = float(np.sum(np.where(np.broadcast_to(
            SYS.distortion[:, None, None, None, :], p.probs.shape) > 0, p.probs, 0)))
        w1 = p1 * math.exp(-lam)
        w0 = (1 - p1)
        pt = w1 / (w0 + w1)
        want = pt * (1 - pt) * 1.0  # gap = d+ - 0 = 1
        m = float(np.sum(t.probs * om))
        var = float(np.sum(t.probs * (om - m) ** 2))
        assert var == pytest.approx(want, abs=1e-10)

    def test_rho_bound_positive_finite(self, solver):
        rho = solver.rho_bound()
        assert 0.0 < rho < 50.0


# ---------------------------------------------------------------------------
# parameter conversions and properties
# ---------------------------------------------------------------------------


class TestParams:
    def test_lambda_conversion(self):
        p = ExpParams(2.0, 0.5, 0.25, 0.4)
        t, a = 0.5, 2.0
        want = t / (1 + t + t * a * 0.75 * 0.4)
        assert p.lam == pytest.approx(want, abs=1e-15)

    def test_validation(self):
        with pytest.raises(ValidationError):
            ExpParams(0.0, 1.0, 0.5, 0.5)
        with pytest.raises(ValidationError):
            ExpParams(1.0, 1.0, 1.5, 0.5)


class TestProperties:
    def test_cgf_zero_at_theta_zero_random(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            q = AuxJoint(rng.dirichlet(np.ones(2 ** 5)).reshape(2, 2, 2, 2, 2))
            params = ExpParams(float(rng.uniform(0.1, 3)), 0.0,
                               float(rng.uniform(0, 1)), float(rng.uniform(0, 1)))
            assert omega_cgf(SYS, q, params) == pytest.approx(0.0, abs=1e-12)

    def test_min_below_random_feasible(self, solver):
        rng = np.random.default_rng(22)
        for params in (ExpParams(0.5, 0.3, 0.0, 0.0), ExpParams(2.0, 1.0, 0.6, 0.9)):
            val, _ = solver.omega_min(params, level="full")
            nu = solver.u_size
            for _ in range(100):
                q = AuxJoint(rng.dirichlet(np.ones(2 ** 4 * nu)).reshape(2, 2, 2, nu, 2))
                assert val <= omega_cgf(SYS, q, params) + 1e-9

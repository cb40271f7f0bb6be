"""Strong-converse rate function of the identification-with-recovery problem.

The correct-decoding probability of any scheme operating at rates
(Ri, Rc) with distortion level D obeys

    Pc <= 7 exp(-n F(Ri, Rc, D)),

where F is a sup over tilt parameters (alpha, theta) in R+^2 and mixture
weights (mu, beta) in [0,1]^2 of

    F^(params) = (Omega - theta*alpha*(mu_bar*(beta_bar*Rc - Ri) + mu*D))
                 / (1 + 5*theta + theta*alpha*mu_bar*(3 - beta)),

with Omega the minimum over all joints Q on X*Y*Z*U*Xhat (cardinality
|U| <= |X||Y||Z||Xhat|) of the negative cumulant generating function
-log E_Q[exp(-theta * omega)] of the tilt density

    omega = log(Q_Y/P_Y) + log(Q_{Z|YU}/P_{Z|Y}) + log(Q_{X|YZU}/P_{X|YZ})
          + log(Q_{XY|ZUXhat}/Q_{XY|ZU})
          + alpha*( mu_bar*beta_bar*log(Q_{YZ|U}/P_{YZ})
                  + mu_bar*beta*log(Q_Z/Q_{Z|U}) + mu*d(x,xhat) ).

The fourth log-ratio conditions the (x,y)-posterior on (z,u,xhat) against
the one on (z,u).  F vanishes on the first-order region and is strictly
positive outside it, which is what makes the bound an exponential strong
converse; the shipped tests pin the zero side on triples whose rate
combination dominates the tilt-mean support values everywhere (see the
region module's ``mean_combo_table``), where the claim is robust to the
inner search.

A companion family on the structured joints of the hyperplane description
(Q_X = P_X and the two Markov chains, |U| <= |Y|) gives the simpler rate
function Ftilde with F >= Ftilde everywhere; both are exposed together
with the tilted-distribution variance radius used to lower-bound Ftilde
off the region.

NOTES on reported values: the inner minimizations are nonconvex, so every
reported F is a heuristic estimate and inflation-prone (an unconverged
inner minimum can only raise it).  Tests and callers should use
sign-with-margin semantics, never exact values.  Cap attainment of the
parameter grids is reported in the result warnings.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize

from cidlossy.prob_core import (
    SystemTriple,
    ValidationError,
)
from cidlossy.rd_region import RateTriple, RegionAnalyzer, RegionConfig, _softmax_rows

__all__ = [
    "ExpParams",
    "AuxJoint",
    "ExponentConfig",
    "FExponentResult",
    "sh_joint",
    "verify_sh",
    "omega_density",
    "omega_cgf",
    "expected_omega",
    "omega_min",
    "f_param",
    "f_exponent",
    "pc_upper_bound",
    "tilde_omega",
    "tilde_omega_cgf",
    "tilde_omega_min",
    "tilde_f",
    "tilted_sh_joint",
    "rho_bound",
    "solver_for",
]


@dataclass(frozen=True)
class ExpParams:
    """Tilt parameters (alpha, theta) and mixture weights (mu, beta)."""

    alpha: float
    theta: float
    mu: float
    beta: float

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.theta < 0:
            raise ValidationError("alpha must be positive and theta nonnegative")
        if not (0.0 <= self.mu <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValidationError("mu and beta must lie in [0,1]")

    @property
    def lam(self) -> float:
        """Equivalent single-letter tilt lam = theta/(1 + theta + theta*alpha*mu_bar*beta)."""
        t, a = self.theta, self.alpha
        return t / (1.0 + t + t * a * (1.0 - self.mu) * self.beta)


@dataclass(frozen=True, eq=False)
class AuxJoint:
    """Joint distribution over X * Y * Z * U * Xhat (axes in that order)."""

    probs: np.ndarray

    def __init__(self, probs) -> None:
        arr = np.asarray(probs, dtype=float)
        if arr.ndim != 5:
            raise ValidationError(f"aux joint must be 5-d, got shape {arr.shape}")
        if np.any(arr < -1e-12) or not np.all(np.isfinite(arr)):
            raise ValidationError("aux joint entries must be finite and nonnegative")
        arr = np.maximum(arr, 0.0)
        s = float(arr.sum())
        if abs(s - 1.0) > 1e-9:
            raise ValidationError(f"aux joint sums to {s!r}")
        arr = arr / s
        arr.flags.writeable = False
        object.__setattr__(self, "probs", arr)

    @property
    def dims(self):
        return self.probs.shape

    @property
    def u_size(self) -> int:
        return self.probs.shape[3]


@dataclass(frozen=True)
class ExponentConfig:
    """Search budgets for the parameter sup and the inner minimizations."""

    u_size: int | None = None  # None -> min(|Y|+2, |X||Y||Z||Xhat|)
    alpha_max: float = 10.0
    theta_max: float = 10.0
    alpha_points: int = 16
    theta_points: int = 16
    mu_points: int = 5
    beta_points: int = 5
    random_starts: int = 6
    tilt_iters: int = 3
    product_maxiter: int = 250
    joint_maxfun: int = 1500
    max_polish_cells: int = 48
    refine_rounds: int = 3
    lambda_max: float = 10.0
    lambda_points: int = 16
    seed: int = 0


@dataclass(frozen=True, eq=False)
class FExponentResult:
    value: float  # clamped to 0 for reporting
    value_raw: float
    params: ExpParams
    argmin_summary: dict
    warnings: tuple = ()


# ---------------------------------------------------------------------------
# joint construction and verification
# ---------------------------------------------------------------------------


def sh_joint(sys: SystemTriple, q_u_given_y, recon_kernel) -> AuxJoint:
    """Structured joint P_XYZ * Q_{U|Y} * K_{Xhat|UZ}.

    Satisfies the chains Z - X - Y - U and (X,Y) - (U,Z) - Xhat by
    construction and matches the system marginals exactly.
    """
    q = np.asarray(q_u_given_y, dtype=float)
    k = np.asarray(recon_kernel, dtype=float)
    if q.shape[0] != sys.ny:
        raise ValidationError("q_u_given_y must have |Y| rows")
    if k.shape[:2] != (q.shape[1], sys.nz) or k.shape[2] != sys.nxhat:
        raise ValidationError("recon_kernel must be (|U|,|Z|,|Xhat|)")
    joint = np.einsum("xyz,yu,uzv->xyzuv", sys.pxyz, q, k)
    return AuxJoint(joint)


def _kernel_from_phi(phi: np.ndarray, nxhat: int) -> np.ndarray:
    k = np.zeros((phi.shape[0], phi.shape[1], nxhat))
    u_idx, z_idx = np.indices(phi.shape)
    k[u_idx, z_idx, phi] = 1.0
    return k


def verify_sh(sys: SystemTriple, q: AuxJoint, atol: float = 1e-10) -> None:
    """Raise unless ``q`` factorizes as P_XYZ * Q_{U|Y} * K_{Xhat|UZ}."""
    j = q.probs
    pxyz = j.sum(axis=(3, 4))
    if np.max(np.abs(pxyz - sys.pxyz)) > atol:
        raise ValidationError("joint does not match the system law P_XYZ")
    if q.u_size > sys.ny:
        raise ValidationError("structured joints require |U| <= |Y|")
    py = sys.py
    pyu = j.sum(axis=(0, 2, 4))  # (y,u)
    with np.errstate(divide="ignore", invalid="ignore"):
        q_u_y = np.where(py[:, None] > 0, pyu / np.where(py[:, None] > 0, py[:, None], 1.0), 0.0)
    pzu = j.sum(axis=(0, 1, 4))  # (z,u)
    pzuv = j.sum(axis=(0, 1))  # (z,u,v)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(pzu[..., None] > 0, pzuv / np.where(pzu[..., None] > 0, pzu[..., None], 1.0), 1.0 / sys.nxhat)
    rebuilt = np.einsum("xyz,yu,zuv->xyzuv", sys.pxyz, q_u_y, k)
    if np.max(np.abs(rebuilt - j)) > atol:
        raise ValidationError("joint violates the structured Markov factorization")


# ---------------------------------------------------------------------------
# the tilt density and its cumulant functions
# ---------------------------------------------------------------------------


def _cond_nd(joint: np.ndarray, sum_axes: tuple, keep: bool = True) -> np.ndarray:
    """joint / marginal with zero rows left at zero (callers mask by support)."""
    marg = joint.sum(axis=sum_axes, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(marg > 0, joint / np.where(marg > 0, marg, 1.0), 0.0)


def _safe_log(a: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, np.log(np.where(mask & (a > 0), a, 1.0)), 0.0)


def _omega_parts(sys: SystemTriple, q: AuxJoint):
    """(base, alpha_beta_bar, alpha_beta, dist, support_ok, mask) per cell.

    omega = base + alpha*(mu_bar*beta_bar*ab_bar + mu_bar*beta*ab + mu*dist)
    on the support; ``support_ok`` is False when q charges a cell outside
    the system law's support.
    """
    j = q.probs
    nx, ny, nz, nu, nv = j.shape
    mask = j > 0

    support = sys.pxyz > 0  # (x,y,z)
    ok = not np.any(mask & ~support[:, :, :, None, None])

    q_y = j.sum(axis=(0, 2, 3, 4))  # (y,)
    q_z = j.sum(axis=(0, 1, 3, 4))  # (z,)
    j_yzu = j.sum(axis=(0, 4))  # (y,z,u)
    j_yu = j_yzu.sum(axis=1)  # (y,u)
    j_zu = j_yzu.sum(axis=0)  # (z,u)
    j_u = j_yu.sum(axis=0)  # (u,)
    j_xyzu = j.sum(axis=4)  # (x,y,z,u)

    with np.errstate(divide="ignore", invalid="ignore"):
        q_z_yu = np.where(j_yu[:, None, :] > 0, j_yzu / np.where(j_yu[:, None, :] > 0, j_yu[:, None, :], 1.0), 0.0)  # (y,z,u)
        q_x_yzu = np.where(j_yzu[None] > 0, j_xyzu / np.where(j_yzu[None] > 0, j_yzu[None], 1.0), 0.0)  # (x,y,z,u)
        q_yz_u = np.where(j_u[None, None] > 0, j_yzu / np.where(j_u[None, None] > 0, j_u[None, None], 1.0), 0.0)  # (y,z,u)
        q_z_u = np.where(j_u[None] > 0, j_zu / np.where(j_u[None] > 0, j_u[None], 1.0), 0.0)  # (z,u)
    j_zuv = j.sum(axis=(0, 1))  # (z,u,v)
    with np.errstate(divide="ignore", invalid="ignore"):
        q_xy_zuv = np.where(j_zuv[None, None] > 0, j / np.where(j_zuv[None, None] > 0, j_zuv[None, None], 1.0), 0.0)
        q_xy_zu = np.where(j_zu[None, None] > 0, j_xyzu / np.where(j_zu[None, None] > 0, j_zu[None, None], 1.0), 0.0)

    lg = lambda a: _safe_log(a, a > 0)  # zero cells carry zero q-mass, masked later

    def bc(arr, axes):
        """Broadcast a sub-joint array to full (x,y,z,u,v) shape."""
        shape = [1, 1, 1, 1, 1]
        for ax, size in zip(axes, arr.shape):
            shape[ax] = size
        return arr.reshape(shape)

    px_yz = np.moveaxis(sys.px_given_yz, 2, 0)  # (x,y,z)
    base = (
        bc(lg(q_y), (1,)) - bc(_safe_log(sys.py, sys.py > 0), (1,))
        + bc(lg(q_z_yu), (1, 2, 3)) - bc(_safe_log(sys.pzy, sys.pzy > 0), (1, 2))
        + bc(lg(q_x_yzu), (0, 1, 2, 3)) - bc(_safe_log(px_yz, px_yz > 0), (0, 1, 2))
        + lg(q_xy_zuv) - bc(lg(q_xy_zu), (0, 1, 2, 3))
    )
    pyz = sys.pyz
    ab_bar = bc(lg(q_yz_u), (1, 2, 3)) - bc(_safe_log(pyz, pyz > 0), (1, 2))
    ab = bc(lg(q_z), (2,)) - bc(lg(q_z_u), (2, 3))
    dist = bc(sys.distortion, (0, 4))
    return base, ab_bar, ab, np.broadcast_to(dist, j.shape), ok, mask


def omega_density(sys: SystemTriple, q: AuxJoint, params: ExpParams) -> np.ndarray:
    """Per-cell tilt density; +inf on support violations, 0 on zero-mass cells."""
    base, ab_bar, ab, dist, ok, mask = _omega_parts(sys, q)
    mub, beb = 1.0 - params.mu, 1.0 - params.beta
    om = base + params.alpha * (mub * beb * ab_bar + mub * params.beta * ab + params.mu * dist)
    out = np.where(mask, om, 0.0)
    if not ok:
        bad = mask & ~(sys.pxyz > 0)[:, :, :, None, None]
        out = np.where(bad, np.inf, out)
    return out


def omega_cgf(sys: SystemTriple, q: AuxJoint, params: ExpParams) -> float:
    """Omega(Q) = -log E_Q[exp(-theta*omega)]; +inf when Q escapes the support."""
    base, ab_bar, ab, dist, ok, mask = _omega_parts(sys, q)
    if not ok:
        return math.inf
    mub, beb = 1.0 - params.mu, 1.0 - params.beta
    om = base + params.alpha * (mub * beb * ab_bar + mub * params.beta * ab + params.mu * dist)
    a = np.where(mask, np.log(np.where(mask, q.probs, 1.0)) - params.theta * om, -np.inf)
    m = float(a.max())
    return -(m + math.log(float(np.sum(np.exp(a - m)))))


def expected_omega(sys: SystemTriple, q: AuxJoint, params: ExpParams) -> float:
    """E_Q[omega]; +inf when Q escapes the support."""
    base, ab_bar, ab, dist, ok, mask = _omega_parts(sys, q)
    if not ok:
        return math.inf
    mub, beb = 1.0 - params.mu, 1.0 - params.beta
    om = base + params.alpha * (mub * beb * ab_bar + mub * params.beta * ab + params.mu * dist)
    return float(np.sum(np.where(mask, q.probs * om, 0.0)))


# ---------------------------------------------------------------------------
# the structured (tilde) family
# ---------------------------------------------------------------------------


def tilde_omega(sys: SystemTriple, p: AuxJoint, mu: float, beta: float) -> np.ndarray:
    """Structured tilt density mu_bar*beta_bar*log(P_{YZ|U}/P_YZ)
    + mu_bar*beta*log(P_Z/P_{Z|U}) + mu*d, per cell (0 on zero-mass cells)."""
    verify_sh(sys, p)
    return _tilde_omega_raw(sys, p, mu, beta)


def _tilde_omega_raw(sys: SystemTriple, p: AuxJoint, mu: float, beta: float) -> np.ndarray:
    # internal path for joints valid by construction (skips verification)
    j = p.probs
    mask = j > 0
    j_yzu = j.sum(axis=(0, 4))
    j_u = j_yzu.sum(axis=(0, 1))
    j_zu = j_yzu.sum(axis=0)
    p_z = j.sum(axis=(0, 1, 3, 4))
    with np.errstate(divide="ignore", invalid="ignore"):
        p_yz_u = np.where(j_u[None, None] > 0, j_yzu / np.where(j_u[None, None] > 0, j_u[None, None], 1.0), 0.0)
        p_z_u = np.where(j_u[None] > 0, j_zu / np.where(j_u[None] > 0, j_u[None], 1.0), 0.0)

    def bc(arr, axes, shape5):
        shape = [1] * 5
        for ax, size in zip(axes, arr.shape):
            shape[ax] = size
        return arr.reshape(shape)

    lg = lambda a: _safe_log(a, a > 0)
    term = (
        (1 - mu) * (1 - beta) * (bc(lg(p_yz_u), (1, 2, 3), j.shape) - bc(lg(sys.pyz), (1, 2), j.shape))
        + (1 - mu) * beta * (bc(lg(p_z), (2,), j.shape) - bc(lg(p_z_u), (2, 3), j.shape))
        + mu * bc(sys.distortion, (0, 4), j.shape)
    )
    return np.where(mask, np.broadcast_to(term, j.shape), 0.0)


def tilde_omega_cgf(sys: SystemTriple, p: AuxJoint, lam: float, mu: float, beta: float) -> float:
    """-log E_p[exp(-lam * tilde_omega)]."""
    verify_sh(sys, p)
    return _tilde_cgf_raw(sys, p, lam, mu, beta)


def _tilde_cgf_raw(sys: SystemTriple, p: AuxJoint, lam: float, mu: float, beta: float) -> float:
    om = _tilde_omega_raw(sys, p, mu, beta)
    mask = p.probs > 0
    a = np.where(mask, np.log(np.where(mask, p.probs, 1.0)) - lam * om, -np.inf)
    m = float(a.max())
    return -(m + math.log(float(np.sum(np.exp(a - m)))))


def tilted_sh_joint(sys: SystemTriple, p: AuxJoint, lam: float, mu: float, beta: float) -> AuxJoint:
    """Exponentially tilted joint p*exp(-lam*tilde_omega)/normalizer."""
    verify_sh(sys, p)
    om = _tilde_omega_raw(sys, p, mu, beta)
    mask = p.probs > 0
    a = np.where(mask, np.log(np.where(mask, p.probs, 1.0)) - lam * om, -np.inf)
    m = float(a.max())
    w = np.exp(a - m)
    z = float(w.sum())
    if not math.isfinite(m) or z <= 0:
        raise ValidationError("degenerate tilt normalizer")
    return AuxJoint(w / z)


def _tilted_variance(sys: SystemTriple, p: AuxJoint, lam: float, mu: float, beta: float) -> float:
    om = _tilde_omega_raw(sys, p, mu, beta)
    mask = p.probs > 0
    a = np.where(mask, np.log(np.where(mask, p.probs, 1.0)) - lam * om, -np.inf)
    a -= a.max()
    t = np.exp(a)
    t /= t.sum()
    m = float(np.sum(t * om))
    return float(np.sum(t * (om - m) ** 2))


# ---------------------------------------------------------------------------
# solver with per-system caches
# ---------------------------------------------------------------------------


class ExponentSolver:
    """Caches inner minimizations of Omega across parameter points.

    The minimum over joints does not depend on the rate triple, so all
    sup-searches for one system share the tables built here.
    """

    def __init__(self, sys: SystemTriple, cfg: ExponentConfig | None = None):
        self.sys = sys
        self.cfg = cfg or ExponentConfig()
        full = sys.nx * sys.ny * sys.nz * sys.nxhat
        self.u_size = min(self.cfg.u_size or (sys.ny + 2), full)
        self._omega_cache: dict[tuple, tuple] = {}
        self._tilde_cache: dict[tuple, tuple] = {}
        self._tilde_warm = None

    # -- parameter grids -----------------------------------------------------

    @cached_property
    def alpha_grid(self) -> np.ndarray:
        return np.geomspace(0.02, self.cfg.alpha_max, self.cfg.alpha_points)

    @cached_property
    def theta_grid(self) -> np.ndarray:
        return np.geomspace(0.02, self.cfg.theta_max, self.cfg.theta_points)

    @cached_property
    def mu_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.cfg.mu_points)

    @cached_property
    def beta_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.cfg.beta_points)

    @cached_property
    def region(self) -> RegionAnalyzer:
        return RegionAnalyzer(self.sys, RegionConfig(seed=self.cfg.seed))

    # -- start sets ------------------------------------------------------------

    def _product_joint(self, q_u_given_y: np.ndarray, kernel: np.ndarray) -> AuxJoint:
        ny, nu = q_u_given_y.shape
        full = np.zeros((self.sys.ny, self.u_size))
        full[:, :nu] = q_u_given_y
        k = np.full((self.u_size, self.sys.nz, self.sys.nxhat), 1.0 / self.sys.nxhat)
        k[:nu] = kernel[: min(nu, kernel.shape[0])]
        return sh_joint_any_u(self.sys, full, k)

    @cached_property
    def _start_products(self) -> dict:
        """Per-(mu,beta) product-form start joints (plus shared generic ones)."""
        from cidlossy.rd_region import bayes_phi

        sys = self.sys
        shared = []
        ny = sys.ny
        const = np.zeros((ny, 1)); const[:, 0] = 1.0
        ident = np.eye(ny)
        for qraw in (const, ident):
            phi = bayes_phi(sys, qraw)
            shared.append(self._product_joint(qraw, _kernel_from_phi(phi, sys.nxhat)))
        rng = np.random.default_rng(self.cfg.seed + 7)
        for _ in range(2):
            qraw = rng.dirichlet(np.ones(self.u_size), size=ny)
            k = rng.dirichlet(np.ones(sys.nxhat), size=(self.u_size, sys.nz))
            shared.append(sh_joint_any_u(sys, qraw, k))
        out = {}
        for mu in self.mu_grid:
            for beta in self.beta_grid:
                q = self.region.mean_combo_argmin(float(mu), float(beta))
                phi = bayes_phi(sys, q)
                item = self._product_joint(q, _kernel_from_phi(phi, sys.nxhat))
                out[(float(mu), float(beta))] = [item] + shared
        return out

    def _uniform_joint(self) -> AuxJoint:
        dims = (self.sys.nx, self.sys.ny, self.sys.nz, self.u_size, self.sys.nxhat)
        u = (self.sys.pxyz > 0).astype(float)[:, :, :, None, None] * np.ones(dims)
        return AuxJoint(u / u.sum())

    def _tilt_iterate(self, q: AuxJoint, params: ExpParams) -> AuxJoint:
        base, ab_bar, ab, dist, ok, mask = _omega_parts(self.sys, q)
        if not ok:
            return q
        mub, beb = 1.0 - params.mu, 1.0 - params.beta
        om = base + params.alpha * (mub * beb * ab_bar + mub * params.beta * ab + params.mu * dist)
        a = np.where(mask, np.log(np.where(mask, q.probs, 1.0)) - params.theta * om, -np.inf)
        a -= a.max()
        w = np.exp(a)
        s = w.sum()
        if s <= 0:
            return q
        return AuxJoint(w / s)

    def _starts(self, params: ExpParams) -> list:
        key = (float(params.mu), float(params.beta))
        base = list(self._start_products.get(key) or next(iter(self._start_products.values())))
        base.append(self._uniform_joint())
        out = list(base)
        for q in base:
            cur = q
            for _ in range(self.cfg.tilt_iters):
                cur = self._tilt_iterate(cur, params)
                out.append(cur)
        return out

    # -- inner minimization -----------------------------------------------------

    def omega_min(self, params: ExpParams, level: str = "full"):
        """(value, argmin) of Omega over joints; ``level`` trades cost for depth.

        "starts": best of the start set, "medium": adds a short product-form
        descent, "full": adds an unconstrained joint descent.  Results cache
        monotonically (a deeper level can only lower the cached value).
        """
        key = (round(params.alpha, 12), round(params.theta, 12),
               round(params.mu, 12), round(params.beta, 12))
        cached = self._omega_cache.get(key)
        rank = {"starts": 0, "medium": 1, "full": 2}
        if cached is not None and cached[2] >= rank[level]:
            return cached[0], cached[1]
        best_val, best_q = math.inf, None
        if cached is not None:
            best_val, best_q = cached[0], cached[1]
        for q in self._starts(params):
            v = omega_cgf(self.sys, q, params)
            if v < best_val:
                best_val, best_q = v, q
        if level in ("medium", "full") and best_q is not None:
            v, q = self._descend_product(params, best_q)
            if v < best_val:
                best_val, best_q = v, q
        if level == "full" and best_q is not None:
            v, q = self._descend_joint(params, best_q)
            if v < best_val:
                best_val, best_q = v, q
        self._omega_cache[key] = (best_val, best_q, rank[level])
        return best_val, best_q

    def _descend_product(self, params: ExpParams, q0: AuxJoint):
        """Nelder-Mead over (Q_{U|Y}, K_{Xhat|UZ}) product parameters."""
        sys, nu = self.sys, self.u_size
        ny, nz, nv = sys.ny, sys.nz, sys.nxhat
        nq, nk = ny * nu, nu * nz * nv

        j = q0.probs
        pyu = j.sum(axis=(0, 2, 4)) + 1e-12
        q_init = pyu / pyu.sum(axis=1, keepdims=True)
        pzuv = j.sum(axis=(0, 1)) + 1e-12
        k_init = np.transpose(pzuv / pzuv.sum(axis=2, keepdims=True), (1, 0, 2))

        def build(zvec):
            q = _softmax_rows(zvec[:nq].reshape(ny, nu))
            k = _softmax_rows(zvec[nq:].reshape(nu, nz, nv))
            return sh_joint_any_u(sys, q, k)

        def fun(zvec):
            return omega_cgf(sys, build(zvec), params)

        z0 = np.concatenate([np.log(q_init).ravel(), np.log(k_init).ravel()])
        res = optimize.minimize(fun, z0, method="Nelder-Mead",
                                options={"maxiter": self.cfg.product_maxiter,
                                         "fatol": 1e-11, "xatol": 1e-6})
        q = build(res.x)
        return omega_cgf(sys, q, params), q

    def _descend_joint(self, params: ExpParams, q0: AuxJoint):
        """L-BFGS over unconstrained joint logits (numeric gradient)."""
        sys = self.sys
        support = np.broadcast_to(
            (sys.pxyz > 0)[:, :, :, None, None],
            (*sys.pxyz.shape, self.u_size, sys.nxhat),
        )
        base = np.where(support, np.log(np.clip(q0.probs, 1e-12, 1.0)), -np.inf)

        idx = np.where(support.ravel())[0]

        def build(zvec):
            flat = np.full(base.size, -np.inf)
            flat[idx] = zvec
            w = flat - flat.max()
            w = np.exp(w)
            return AuxJoint((w / w.sum()).reshape(base.shape))

        def fun(zvec):
            return omega_cgf(sys, build(zvec), params)

        z0 = base.ravel()[idx]
        res = optimize.minimize(
            fun, z0, method="L-BFGS-B",
            options={"maxfun": self.cfg.joint_maxfun, "ftol": 1e-12, "eps": 1e-6},
        )
        q = build(res.x)
        return omega_cgf(sys, q, params), q

    # -- the rate function -------------------------------------------------------

    @staticmethod
    def f_value(omega: float, triple: RateTriple, params: ExpParams) -> float:
        a, t, mu, beta = params.alpha, params.theta, params.mu, params.beta
        mub = 1.0 - mu
        rate = mub * ((1.0 - beta) * triple.r_c - triple.r_i) + mu * triple.d
        return (omega - t * a * rate) / (1.0 + 5.0 * t + t * a * mub * (3.0 - beta))

    @cached_property
    def _start_table(self):
        """Start-set Omega values over the full parameter grid (vectorized).

        For each (mu,beta) and each start joint, omega splits as
        base + alpha * apart, so the (alpha,theta) grid is evaluated by
        broadcasting; values upper-bound the true inner minimum.
        """
        al, th = self.alpha_grid, self.theta_grid
        table = np.full(
            (len(self.mu_grid), len(self.beta_grid), len(al), len(th)), np.inf
        )
        for mi, mu in enumerate(self.mu_grid):
            for bi, beta in enumerate(self.beta_grid):
                params0 = ExpParams(1.0, 1.0, float(mu), float(beta))
                for q in self._starts(params0):
                    parts = _omega_parts(self.sys, q)
                    base, ab_bar, ab, dist, ok, mask = parts
                    if not ok:
                        continue
                    mub, beb = 1.0 - mu, 1.0 - beta
                    apart = mub * beb * ab_bar + mub * beta * ab + mu * dist
                    logq = np.where(mask, np.log(np.where(mask, q.probs, 1.0)), 0.0)
                    b = base[mask]
                    ap = apart[mask]
                    lq = logq[mask]
                    om = b[None, :] + al[:, None] * ap[None, :]  # (A, cells)
                    expo = lq[None, None, :] - th[None, :, None] * om[:, None, :]
                    m = expo.max(axis=2, keepdims=True)
                    vals = -(m[..., 0] + np.log(np.exp(expo - m).sum(axis=2)))
                    table[mi, bi] = np.minimum(table[mi, bi], vals)
        return table

    def f_exponent(self, triple: RateTriple) -> FExponentResult:
        cfg = self.cfg
        warns = []
        al, th = self.alpha_grid, self.theta_grid
        # phase 1: start-set table (inflated Omega => inflated F)
        f1 = np.empty_like(self._start_table)
        for mi, mu in enumerate(self.mu_grid):
            for bi, beta in enumerate(self.beta_grid):
                for ai, a in enumerate(al):
                    for ti, t in enumerate(th):
                        f1[mi, bi, ai, ti] = self.f_value(
                            self._start_table[mi, bi, ai, ti], triple,
                            ExpParams(float(a), float(t), float(mu), float(beta)),
                        )
        # phase 2: polish candidate cells until no unpolished cell can win
        order = np.argsort(f1.ravel())[::-1]
        best_val, best_params, best_q = -math.inf, None, None
        polished = 0
        for flat in order:
            mi, bi, ai, ti = np.unravel_index(flat, f1.shape)
            # cells that cannot beat the incumbent (or push the sign above
            # zero) are irrelevant under sign-with-margin semantics
            if f1[mi, bi, ai, ti] <= max(best_val, 0.0) + 1e-9 and polished > 0:
                break
            if polished >= cfg.max_polish_cells:
                warns.append("cell-polish budget exhausted; estimate may be loose")
                break
            params = ExpParams(float(al[ai]), float(th[ti]),
                               float(self.mu_grid[mi]), float(self.beta_grid[bi]))
            om, q = self.omega_min(params, level="full")
            polished += 1
            val = self.f_value(om, triple, params)
            if val > best_val:
                best_val, best_params, best_q = val, params, q
        # phase 3: coordinate refinement around the best cell
        if best_params is not None:
            best_val, best_params, best_q = self._refine(triple, best_val, best_params, best_q)
        if best_params is not None:
            if best_params.alpha >= self.cfg.alpha_max * 0.999:
                warns.append("sup attained at the alpha cap")
            if best_params.theta >= self.cfg.theta_max * 0.999:
                warns.append("sup attained at the theta cap")
        summary = {}
        if best_q is not None:
            summary = {
                "u_size": best_q.u_size,
                "support_cells": int(np.count_nonzero(best_q.probs > 1e-12)),
                "entropy": float(-np.sum(np.where(best_q.probs > 0,
                                                  best_q.probs * np.log(np.where(best_q.probs > 0, best_q.probs, 1.0)), 0.0))),
            }
        return FExponentResult(
            value=max(best_val, 0.0),
            value_raw=best_val,
            params=best_params or ExpParams(1.0, 1e-6, 0.0, 0.0),
            argmin_summary=summary,
            warnings=tuple(warns),
        )

    def _refine(self, triple: RateTriple, best_val: float, params: ExpParams, best_q):
        lo_a, hi_a = 0.005, self.cfg.alpha_max
        lo_t, hi_t = 1e-4, self.cfg.theta_max

        def eval_at(a, t, mu, beta):
            p = ExpParams(a, t, mu, beta)
            om, q = self.omega_min(p, level="medium")
            return self.f_value(om, triple, p), p, q

        cur = params
        for _ in range(self.cfg.refine_rounds):
            a_c = np.clip(np.geomspace(max(cur.alpha / 3, lo_a), min(cur.alpha * 3, hi_a), 7), lo_a, hi_a)
            for a in a_c:
                v, p, q = eval_at(float(a), cur.theta, cur.mu, cur.beta)
                if v > best_val:
                    best_val, cur, best_q = v, p, q
            t_c = np.clip(np.geomspace(max(cur.theta / 3, lo_t), min(cur.theta * 3, hi_t), 7), lo_t, hi_t)
            for t in t_c:
                v, p, q = eval_at(cur.alpha, float(t), cur.mu, cur.beta)
                if v > best_val:
                    best_val, cur, best_q = v, p, q
            for mu in np.clip(np.linspace(cur.mu - 0.15, cur.mu + 0.15, 5), 0.0, 1.0):
                v, p, q = eval_at(cur.alpha, cur.theta, float(mu), cur.beta)
                if v > best_val:
                    best_val, cur, best_q = v, p, q
            for beta in np.clip(np.linspace(cur.beta - 0.15, cur.beta + 0.15, 5), 0.0, 1.0):
                v, p, q = eval_at(cur.alpha, cur.theta, cur.mu, float(beta))
                if v > best_val:
                    best_val, cur, best_q = v, p, q
        return best_val, cur, best_q

    # -- tilde family -------------------------------------------------------------

    def tilde_min(self, lam: float, mu: float, beta: float):
        """(value, argmin joint) of the structured cumulant function.

        Multistart screening by value, one local descent from the best
        start (plus the cached argmin of the previous call, which chains
        warm starts along a lambda sweep).
        """
        key = (round(lam, 12), round(mu, 12), round(beta, 12))
        if key in self._tilde_cache:
            return self._tilde_cache[key]
        from cidlossy.rd_region import bayes_phi

        sys = self.sys
        ny, nz, nv = sys.ny, sys.nz, sys.nxhat

        def build(zv):
            q = _softmax_rows(zv[: ny * ny].reshape(ny, ny))
            k = _softmax_rows(zv[ny * ny:].reshape(ny, nz, nv))
            return sh_joint(sys, q, k)

        def fun(zv):
            return _tilde_cgf_raw(sys, build(zv), lam, mu, beta)

        starts = [self.region.mean_combo_argmin(mu, beta), np.eye(ny),
                  np.tile(np.eye(ny)[0], (ny, 1))]
        z_starts = []
        for q0 in starts:
            k0 = _kernel_from_phi(bayes_phi(sys, q0), nv)
            z_starts.append(np.concatenate([
                np.log(np.clip(q0, 1e-9, 1.0)).ravel(),
                np.log(np.clip(k0, 1e-9, 1.0)).ravel(),
            ]))
        if self._tilde_warm is not None:
            z_starts.append(self._tilde_warm)
        vals = [fun(z) for z in z_starts]
        z0 = z_starts[int(np.argmin(vals))]
        res = optimize.minimize(fun, z0, method="Nelder-Mead",
                                options={"maxiter": self.cfg.product_maxiter,
                                         "fatol": 1e-11, "xatol": 1e-6})
        best = (min(float(res.fun), float(min(vals))), build(res.x))
        if res.fun > min(vals):
            best = (float(min(vals)), build(z0))
        self._tilde_warm = res.x
        self._tilde_cache[key] = best
        return best

    @staticmethod
    def tilde_f_value(omega: float, triple: RateTriple, lam: float, mu: float, beta: float) -> float:
        mub = 1.0 - mu
        rate = mub * ((1.0 - beta) * triple.r_c - triple.r_i) + mu * triple.d
        return (omega - lam * rate) / (6.0 + lam * mub * (4.0 + 6.0 * beta))

    def tilde_f(self, triple: RateTriple) -> FExponentResult:
        lams = np.geomspace(0.02, self.cfg.lambda_max, self.cfg.lambda_points)
        best_val, best_p = -math.inf, (float(lams[0]), 0.0, 0.0)
        for mu in self.mu_grid:
            for beta in self.beta_grid:
                for lam in lams:
                    om, _ = self.tilde_min(float(lam), float(mu), float(beta))
                    v = self.tilde_f_value(om, triple, float(lam), float(mu), float(beta))
                    if v > best_val:
                        best_val, best_p = v, (float(lam), float(mu), float(beta))
        # local refinement in lambda
        lam, mu, beta = best_p
        for factor in (0.5, 0.75, 1.25, 1.5, 2.0):
            l2 = min(max(lam * factor, 1e-4), self.cfg.lambda_max)
            om, _ = self.tilde_min(l2, mu, beta)
            v = self.tilde_f_value(om, triple, l2, mu, beta)
            if v > best_val:
                best_val, best_p = v, (l2, mu, beta)
        warns = ()
        if best_p[0] >= self.cfg.lambda_max * 0.999:
            warns = ("sup attained at the lambda cap",)
        return FExponentResult(
            value=max(best_val, 0.0), value_raw=best_val,
            params=ExpParams(1.0, best_p[0], best_p[1], best_p[2]),
            argmin_summary={}, warnings=warns,
        )

    def rho_bound(self) -> float:
        """Grid supremum of the tilted variance over lam*mu_bar <= 1.

        A lower estimate of the true radius (finitely many structured
        joints and tilt parameters are examined).
        """
        from cidlossy.rd_region import bayes_phi

        sys = self.sys
        rng = np.random.default_rng(self.cfg.seed + 13)
        joints = []
        for q in (np.eye(sys.ny), np.tile(np.eye(sys.ny)[0], (sys.ny, 1))):
            joints.append(sh_joint(sys, q, _kernel_from_phi(bayes_phi(sys, q), sys.nxhat)))
        for _ in range(8):
            q = rng.dirichlet(np.ones(sys.ny), size=sys.ny)
            k = rng.dirichlet(np.ones(sys.nxhat), size=(sys.ny, sys.nz))
            joints.append(sh_joint(sys, q, k))
        best = 0.0
        for mu in self.mu_grid:
            lam_cap = 1.0 / max(1.0 - mu, 1e-9)
            for beta in self.beta_grid:
                for lam in np.linspace(0.0, min(lam_cap, 5.0), 11):
                    for p in joints:
                        best = max(best, _tilted_variance(sys, p, float(lam), float(mu), float(beta)))
        return best


def sh_joint_any_u(sys: SystemTriple, q_u_given_y: np.ndarray, kernel: np.ndarray) -> AuxJoint:
    """Product-form joint with unconstrained |U| (not necessarily <= |Y|)."""
    q = np.asarray(q_u_given_y, dtype=float)
    k = np.asarray(kernel, dtype=float)
    joint = np.einsum("xyz,yu,uzv->xyzuv", sys.pxyz, q, k)
    return AuxJoint(joint)


# ---------------------------------------------------------------------------
# module-level ops over a shared solver cache
# ---------------------------------------------------------------------------

_SOLVERS: dict[bytes, ExponentSolver] = {}


def solver_for(sys: SystemTriple, cfg: ExponentConfig | None = None) -> ExponentSolver:
    cfg = cfg or ExponentConfig()
    h = hashlib.blake2b(digest_size=16)
    for arr in (sys.px.probs, sys.pyx.rows, sys.pzx.rows, sys.distortion):
        h.update(np.ascontiguousarray(arr).tobytes())
        h.update(str(arr.shape).encode())
    h.update(repr(cfg).encode())
    key = h.digest()
    if key not in _SOLVERS:
        _SOLVERS[key] = ExponentSolver(sys, cfg)
    return _SOLVERS[key]


def omega_min(sys: SystemTriple, params: ExpParams, cfg: ExponentConfig | None = None):
    return solver_for(sys, cfg).omega_min(params, level="full")


def f_param(sys: SystemTriple, triple: RateTriple, params: ExpParams,
            cfg: ExponentConfig | None = None) -> float:
    om, _ = solver_for(sys, cfg).omega_min(params, level="full")
    return ExponentSolver.f_value(om, triple, params)


def f_exponent(sys: SystemTriple, triple: RateTriple, cfg: ExponentConfig | None = None) -> FExponentResult:
    return solver_for(sys, cfg).f_exponent(triple)


def pc_upper_bound(sys: SystemTriple, triple: RateTriple, n: int,
                   cfg: ExponentConfig | None = None) -> float:
    """7 exp(-n Fhat), clamped to [0,1]; Fhat is the heuristic estimate."""
    if n < 1:
        raise ValidationError(f"blocklength must be >= 1, got {n}")
    res = f_exponent(sys, triple, cfg)
    return min(1.0, 7.0 * math.exp(-n * res.value))


def tilde_omega_min(sys: SystemTriple, lam: float, mu: float, beta: float,
                    cfg: ExponentConfig | None = None):
    return solver_for(sys, cfg).tilde_min(lam, mu, beta)


def tilde_f(sys: SystemTriple, triple: RateTriple, cfg: ExponentConfig | None = None) -> FExponentResult:
    return solver_for(sys, cfg).tilde_f(triple)


def rho_bound(sys: SystemTriple, cfg: ExponentConfig | None = None) -> float:
    return solver_for(sys, cfg).rho_bound()

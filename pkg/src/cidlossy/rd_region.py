"""First-order rate-distortion region of the identification-with-recovery problem.

A scheme is an auxiliary channel Q_{U|Y} together with a deterministic
reconstruction map phi : U x Z -> Xhat.  Under the induced joint (which by
construction satisfies the chains Z - X - Y - U and (X,Y) - (U,Z) - Xhat),
a scheme dominates a rate-distortion triple (Ri, Rc, D) iff

    Ri <= I(U;Z),    Rc >= Ri + I(U;Y|Z),    D >= E[d(X, Xhat)].

The region is the union of the dominated sets over schemes with
|U| <= |Y| + 2.  It carries an equivalent supporting-hyperplane
description: for every (mu, beta) in [0,1]^2, writing a_bar = 1 - a and

    combo(mu, beta) = mu_bar*beta_bar*Rc - mu_bar*Ri + mu*D,

the triple lies inside iff combo(mu, beta) >= R(mu, beta) for all
(mu, beta), where R(mu, beta) minimizes

    mu_bar*beta_bar*I(YZ;U) - mu_bar*I(Z;U) + mu*E[d]

over schemes with |U| <= |Y|.  Membership queries use the scheme search
for Inside witnesses and the hyperplane sweep for Outside certificates;
verdicts inside a configurable boundary band stay Unknown rather than
guessing.

Desk-scale alphabets are assumed throughout (searches are dense grids
plus local polish, exhaustive where small).
"""

from __future__ import annotations

import hashlib
import itertools
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
from scipy import optimize

from cidlossy.prob_core import (
    Channel,
    SystemTriple,
    ValidationError,
    compose_triple,
    kl_divergence,
)

__all__ = [
    "AuxScheme",
    "RateTriple",
    "Verdict",
    "OutsideCertificate",
    "MembershipVerdict",
    "ShVerdict",
    "RegionConfig",
    "RegionAnalyzer",
    "corner_point",
    "bayes_phi",
    "scheme_stats",
    "membership",
    "membership_sh",
    "hyperplane_value",
    "exponent_upper_bound",
    "boundary_trace",
    "analyzer_for",
]


@dataclass(frozen=True, eq=False)
class AuxScheme:
    """Auxiliary channel Y -> U plus a total reconstruction map on U x Z."""

    q_u_given_y: Channel
    phi: np.ndarray  # (|U|, |Z|) integer indices into Xhat

    def __init__(self, q_u_given_y, phi) -> None:
        q = q_u_given_y if isinstance(q_u_given_y, Channel) else Channel(q_u_given_y)
        ph = np.asarray(phi, dtype=int)
        if ph.ndim != 2 or ph.shape[0] != q.out_size:
            raise ValidationError(f"phi must be (|U|,|Z|), got {ph.shape}")
        ph = ph.copy()
        ph.flags.writeable = False
        object.__setattr__(self, "q_u_given_y", q)
        object.__setattr__(self, "phi", ph)

    @property
    def u_size(self) -> int:
        return self.q_u_given_y.out_size


@dataclass(frozen=True)
class RateTriple:
    r_i: float
    r_c: float
    d: float

    def __post_init__(self) -> None:
        if self.r_i < 0 or self.r_c < 0 or self.d < 0:
            raise ValidationError(f"rate triple components must be nonnegative: {self}")


class Verdict(str, Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class OutsideCertificate:
    """A violated supporting hyperplane: combo(mu,beta) < R(mu,beta) - margin."""

    mu: float
    beta: float
    combo: float
    r_value: float

    @property
    def violation(self) -> float:
        return self.r_value - self.combo


@dataclass(frozen=True, eq=False)
class MembershipVerdict:
    status: Verdict
    witness: AuxScheme | None
    certificate: OutsideCertificate | None
    slack: float


@dataclass(frozen=True, eq=False)
class ShVerdict:
    """Hyperplane-sweep result: Outside certificate or inside-consistency."""

    outside: bool
    certificate: OutsideCertificate | None
    min_slack: float


@dataclass(frozen=True)
class RegionConfig:
    """Search budgets; the defaults reproduce all shipped results."""

    u_size: int | None = None  # None -> |Y| + 2
    simplex_step: float = 0.05
    mu_points: int = 21
    beta_points: int = 21
    margin: float = 0.02  # Unknown band half-width, nats
    random_starts: int = 64
    timeshare_grid: tuple = (0.1, 0.25, 0.5, 0.75, 0.9)
    polish_maxiter: int = 200
    seed: int = 0


# ---------------------------------------------------------------------------
# scheme statistics
# ---------------------------------------------------------------------------


def _batch_mi(joint: np.ndarray) -> np.ndarray:
    """I(A;B) for a (B, a, b) stack of 2-d joints."""
    pa = joint.sum(axis=2, keepdims=True)
    pb = joint.sum(axis=1, keepdims=True)
    pos = joint > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pos, np.log(np.where(pos, joint, 1.0)), 0.0) - np.where(
            pos, np.log(np.where(pos, pa * pb, 1.0)), 0.0
        )
    return np.maximum((joint * ratio).sum(axis=(1, 2)), 0.0)


def scheme_stats(sys: SystemTriple, q_batch: np.ndarray):
    """Corner statistics for a (B, |Y|, |U|) batch of auxiliary channels.

    Returns ``(i_uz, i_uy_given_z, ed_bayes, phi_bayes)``; the distortion
    coordinate uses the per-(u,z) Bayes reconstruction (lowest index on
    ties), which is exactly optimal at fixed Q_{U|Y}.
    """
    q = np.asarray(q_batch, dtype=float)
    if q.ndim == 2:
        q = q[None]
    pyz = sys.pyz  # (y,z)
    p_uz = np.einsum("yz,byu->buz", pyz, q)
    p_u_yz = np.einsum("yz,byu->buyz", pyz, q).reshape(q.shape[0], q.shape[2], -1)
    i_uz = _batch_mi(p_uz)
    i_uyz = _batch_mi(p_u_yz)
    i_uy_gz = np.maximum(i_uyz - i_uz, 0.0)
    # risk[b,u,z,v] = sum_x P(x,z,u) d(x,v)
    p_xzu = np.einsum("xyz,byu->bxzu", sys.pxyz, q)
    risk = np.einsum("bxzu,xv->buzv", p_xzu, sys.distortion)
    phi = risk.argmin(axis=3)
    ed = np.take_along_axis(risk, phi[..., None], axis=3).sum(axis=(1, 2, 3))
    return i_uz, i_uy_gz, ed, phi


def _scheme_ed(sys: SystemTriple, q: np.ndarray, phi: np.ndarray) -> float:
    p_xzu = np.einsum("xyz,yu->xzu", sys.pxyz, q)
    d_uz = sys.distortion[:, phi]  # (x,u,z)
    return float(np.einsum("xzu,xuz->", p_xzu, d_uz))


def corner_point(sys: SystemTriple, scheme: AuxScheme):
    """(I(U;Z), I(U;Y|Z), E[d(X,Xhat)]) for the scheme's own phi.

    A triple (Ri, Rc, D) is dominated by the scheme iff Ri <= I(U;Z),
    Rc >= Ri + I(U;Y|Z) and D >= E[d].
    """
    q = scheme.q_u_given_y.rows
    if q.shape[0] != sys.ny:
        raise ValidationError("scheme alphabet does not match system |Y|")
    if scheme.phi.shape[1] != sys.nz or scheme.phi.max() >= sys.nxhat:
        raise ValidationError("phi does not match system |Z| or |Xhat|")
    i_uz, i_uy_gz, _, _ = scheme_stats(sys, q[None])
    return float(i_uz[0]), float(i_uy_gz[0]), _scheme_ed(sys, q, scheme.phi)


def bayes_phi(sys: SystemTriple, q_u_given_y) -> np.ndarray:
    """Distortion-optimal deterministic reconstruction for a given Q_{U|Y}."""
    q = _rows(q_u_given_y)
    _, _, _, phi = scheme_stats(sys, q[None])
    return phi[0]


def _rows(q) -> np.ndarray:
    return q.rows if isinstance(q, Channel) else np.asarray(q, dtype=float)


def _simplex_grid(dim: int, step: float) -> np.ndarray:
    k = int(round(1.0 / step))
    pts = []
    for comp in itertools.combinations_with_replacement(range(dim), k):
        v = np.zeros(dim)
        for c in comp:
            v[c] += 1.0 / k
        pts.append(v)
    return np.unique(np.array(pts), axis=0)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# analyzer
# ---------------------------------------------------------------------------


class RegionAnalyzer:
    """Caches scheme libraries and hyperplane tables for one system.

    All randomness derives from ``cfg.seed``; repeated construction is
    bit-identical, so the module-level helpers share analyzers freely.
    """

    def __init__(self, sys: SystemTriple, cfg: RegionConfig | None = None):
        self.sys = sys
        self.cfg = cfg or RegionConfig()
        self.u_full = self.cfg.u_size or (sys.ny + 2)
        if self.u_full > sys.ny + 2:
            raise ValidationError("u_size may not exceed |Y| + 2")

    # -- hyperplane machinery (|U| <= |Y| scheme family) --------------------

    @cached_property
    def _sh_grid(self) -> np.ndarray:
        """Grid of Q_{U|Y} channels with |U| = |Y| (the hyperplane family)."""
        ny = self.sys.ny
        step = self.cfg.simplex_step
        while True:
            row_pts = _simplex_grid(ny, step)
            if len(row_pts) ** ny <= 50_000:
                break
            step *= 2.0  # desk-scale guard for larger alphabets
        idx = np.stack(
            np.meshgrid(*[np.arange(len(row_pts))] * ny, indexing="ij"), axis=-1
        ).reshape(-1, ny)
        return row_pts[idx]  # (B, ny, ny)

    @cached_property
    def _sh_stats(self) -> np.ndarray:
        """(B, 3) array of [I(YZ;U), I(Z;U), E[d]] over the grid."""
        i_uz, i_uy_gz, ed, _ = scheme_stats(self.sys, self._sh_grid)
        return np.column_stack([i_uz + i_uy_gz, i_uz, ed])

    @cached_property
    def plane_grid(self):
        mu = np.linspace(0.0, 1.0, self.cfg.mu_points)
        beta = np.linspace(0.0, 1.0, self.cfg.beta_points)
        return mu, beta

    @staticmethod
    def _plane_weights(mu: np.ndarray, beta: np.ndarray) -> np.ndarray:
        """(cells, 3) weights [mubar*betabar, -mubar, mu], row-major cells."""
        mm, bb = np.meshgrid(mu, beta, indexing="ij")
        return np.column_stack(
            [((1 - mm) * (1 - bb)).ravel(), -(1 - mm).ravel(), mm.ravel()]
        )

    @staticmethod
    def combo(triple: RateTriple, mu: float, beta: float) -> float:
        return (1 - mu) * (1 - beta) * triple.r_c - (1 - mu) * triple.r_i + mu * triple.d

    def _polish_sh(self, mu: float, beta: float, q0: np.ndarray):
        """Local minimization of the hyperplane objective over Q_{U|Y}."""
        ny = self.sys.ny
        w = np.array([(1 - mu) * (1 - beta), -(1 - mu), mu])

        def fun(z):
            q = _softmax_rows(z.reshape(ny, ny))
            i_uz, i_uy_gz, ed, _ = scheme_stats(self.sys, q[None])
            return float(w @ [i_uz[0] + i_uy_gz[0], i_uz[0], ed[0]])

        z0 = np.log(np.clip(q0, 1e-9, 1.0)).ravel()
        res = optimize.minimize(
            fun, z0, method="Nelder-Mead",
            options={"maxiter": self.cfg.polish_maxiter, "xatol": 1e-7, "fatol": 1e-12},
        )
        return float(res.fun), _softmax_rows(res.x.reshape(ny, ny))

    @cached_property
    def hyperplane_table(self):
        """R(mu,beta) on the plane grid with the achieving schemes.

        Grid minimization plus one local polish per cell; at binary scale
        the |U| <= |Y| family has two free parameters, so this is near
        exact.  Grid minima upper-bound the true R, which is the safe
        direction for Inside consistency; polish tightens the Outside
        certificates.
        """
        mu, beta = self.plane_grid
        weights = self._plane_weights(mu, beta)  # (cells, 3)
        obj = weights @ self._sh_stats.T  # (cells, B)
        best = obj.argmin(axis=1)
        table = np.empty(len(weights))
        argmins = []
        for c, (w, j) in enumerate(zip(weights, best)):
            mi, bi = divmod(c, len(beta))
            val, q = self._polish_sh(float(mu[mi]), float(beta[bi]), self._sh_grid[j])
            if float(obj[c, j]) <= val:
                val, q = float(obj[c, j]), self._sh_grid[j]
            table[c] = val
            argmins.append(q)
        return table.reshape(len(mu), len(beta)), argmins

    @cached_property
    def mean_combo_table(self) -> np.ndarray:
        """min of mu_bar*beta_bar*I(YZ;U) - mu_bar*beta*I(Z;U) + mu*E[d].

        The same scheme family scored with the beta-split weighting that
        the exponent module's tilt density averages to; used there for
        warm starts and by the acceptance suite to select triples whose
        rate function is robustly zero.
        """
        mu, beta = self.plane_grid
        mm, bb = np.meshgrid(mu, beta, indexing="ij")
        w = np.column_stack(
            [((1 - mm) * (1 - bb)).ravel(), (-(1 - mm) * bb).ravel(), mm.ravel()]
        )
        return (w @ self._sh_stats.T).min(axis=1).reshape(len(mu), len(beta))

    def mean_combo_argmin(self, mu: float, beta: float) -> np.ndarray:
        w = np.array([(1 - mu) * (1 - beta), -(1 - mu) * beta, mu])
        return self._sh_grid[int((self._sh_stats @ w).argmin())]

    def hyperplane_value(self, mu: float, beta: float):
        """R(mu,beta) and the achieving scheme (fresh polish at the point)."""
        if not (0.0 <= mu <= 1.0 and 0.0 <= beta <= 1.0):
            raise ValidationError("mu and beta must lie in [0,1]")
        w = np.array([(1 - mu) * (1 - beta), -(1 - mu), mu])
        obj = self._sh_stats @ w
        j = int(obj.argmin())
        val, q = self._polish_sh(mu, beta, self._sh_grid[j])
        if float(obj[j]) <= val:
            val, q = float(obj[j]), self._sh_grid[j]
        return val, AuxScheme(q, bayes_phi(self.sys, q))

    # -- witness library (|U| <= |Y| + 2 scheme family) ----------------------

    @cached_property
    def library(self):
        """Deterministic scheme library with precomputed corner statistics.

        Contents: structured schemes (constant U, U = Y), the |U| = |Y|
        grid, every hyperplane-table argmin, pairwise time-shares of
        adjacent argmins (the +2 cardinality slack is exactly the
        convexification allowance), and a seeded batch of random schemes
        at full |U|.
        """
        sys = self.sys
        ny, nu = sys.ny, self.u_full
        schemes: list[np.ndarray] = []

        const = np.zeros((ny, nu))
        const[:, 0] = 1.0
        schemes.append(const)
        ident = np.zeros((ny, nu))
        ident[np.arange(ny), np.arange(ny) % nu] = 1.0
        schemes.append(ident)

        def pad(q):
            out = np.zeros((ny, nu))
            out[:, : q.shape[1]] = q
            return out

        schemes.extend(pad(q) for q in self._sh_grid)
        _, argmins = self.hyperplane_table
        schemes.extend(pad(q) for q in argmins)
        if 2 * ny <= nu:
            for qa, qb in zip(argmins, argmins[1:]):
                for t in self.cfg.timeshare_grid:
                    mix = np.zeros((ny, nu))
                    mix[:, :ny] = t * qa
                    mix[:, ny : 2 * ny] = (1 - t) * qb
                    schemes.append(mix)

        rng = np.random.default_rng(self.cfg.seed)
        schemes.extend(
            rng.dirichlet(np.ones(nu), size=ny) for _ in range(self.cfg.random_starts)
        )

        q_all = np.array(schemes)
        i_uz, i_uy_gz, ed, phi = scheme_stats(sys, q_all)
        return q_all, i_uz, i_uy_gz, ed, phi

    # -- membership ----------------------------------------------------------

    def membership_sh(self, triple: RateTriple) -> ShVerdict:
        table, _ = self.hyperplane_table
        mu, beta = self.plane_grid
        w = self._plane_weights(mu, beta)
        combos = (w @ [triple.r_c, triple.r_i, triple.d]).reshape(table.shape)
        slacks = combos - table
        mi, bi = np.unravel_index(int(slacks.argmin()), slacks.shape)
        min_slack = float(slacks[mi, bi])
        outside = min_slack < -self.cfg.margin
        cert = None
        if outside:
            cert = OutsideCertificate(
                float(mu[mi]), float(beta[bi]),
                float(combos[mi, bi]), float(table[mi, bi]),
            )
        return ShVerdict(outside, cert, min_slack)

    def dominance_slack(self, triple: RateTriple):
        """Best library slack min(I_uz - Ri, (Rc-Ri) - I_uy|z, D - Ed)."""
        _, i_uz, i_uy_gz, ed, _ = self.library
        slack = np.minimum.reduce(
            [i_uz - triple.r_i, (triple.r_c - triple.r_i) - i_uy_gz, triple.d - ed]
        )
        j = int(slack.argmax())
        return float(slack[j]), j

    def membership(self, triple: RateTriple) -> MembershipVerdict:
        best_slack, j = self.dominance_slack(triple)
        sh = self.membership_sh(triple)
        if best_slack >= 0.0:
            q_all, _, _, _, phi = self.library
            witness = AuxScheme(q_all[j], phi[j])
            if sh.outside:
                warnings.warn(
                    "membership: hyperplane certificate contradicted by an exact "
                    "witness; the hyperplane table has not converged"
                )
            return MembershipVerdict(Verdict.INSIDE, witness, None, best_slack)
        if sh.outside:
            return MembershipVerdict(Verdict.OUTSIDE, None, sh.certificate, sh.min_slack)
        return MembershipVerdict(Verdict.UNKNOWN, None, None, max(best_slack, sh.min_slack))

    # -- frontier -------------------------------------------------------------

    def boundary_trace(self, d_fixed: float, n_points: int, polish: bool = True):
        """(Ri, minimal Rc) frontier samples at a fixed distortion level.

        Library minima are refined per grid point by a penalized local
        search over full-cardinality schemes; every reported point is the
        corner of an explicit scheme, hence achievable.
        """
        if n_points < 2:
            raise ValidationError("n_points must be >= 2")
        q_all, i_uz, i_uy_gz, ed, _ = self.library
        feas_d = ed <= d_fixed + 1e-12
        if not feas_d.any():
            return []
        r_max = float(i_uz[feas_d].max())
        out = []
        prev = 0.0
        for r_i in np.linspace(0.0, r_max, n_points):
            ok = feas_d & (i_uz >= r_i - 1e-12)
            if not ok.any():
                continue
            cand = np.where(ok)[0]
            j = cand[int(i_uy_gz[cand].argmin())]
            best = float(i_uy_gz[j])
            if polish:
                for q0 in (q_all[j],):
                    val = self._polish_trace_point(q0, r_i, d_fixed)
                    if val is not None:
                        best = min(best, val)
            r_c = r_i + best
            prev = max(prev, r_c)  # monotone nondecreasing by construction
            out.append((float(r_i), prev))
        return out

    def _polish_trace_point(self, q0: np.ndarray, r_i: float, d_fixed: float):
        """Minimize I(U;Y|Z) subject to I(U;Z) >= r_i and E[d] <= d_fixed."""
        ny, nu = self.sys.ny, self.u_full
        pen = 50.0

        def fun(z):
            q = _softmax_rows(z.reshape(ny, nu))
            i_uz, i_uy_gz, ed, _ = scheme_stats(self.sys, q[None])
            return float(
                i_uy_gz[0]
                + pen * max(0.0, r_i - i_uz[0])
                + pen * max(0.0, ed[0] - d_fixed)
            )

        z0 = np.log(np.clip(q0, 1e-6, 1.0)).ravel()
        res = optimize.minimize(
            fun, z0, method="Nelder-Mead",
            options={"maxiter": self.cfg.polish_maxiter, "xatol": 1e-7, "fatol": 1e-11},
        )
        q = _softmax_rows(res.x.reshape(ny, nu))
        i_uz, i_uy_gz, ed, _ = scheme_stats(self.sys, q[None])
        if i_uz[0] >= r_i - 1e-9 and ed[0] <= d_fixed + 1e-9:
            return float(i_uy_gz[0])
        return None

    # -- divergence upper bound on the error exponent -------------------------

    def excludes(self, cand: SystemTriple, triple: RateTriple, margin: float = 1e-7) -> bool:
        """Does the candidate law's region certifiably exclude the triple?

        Grid minima overestimate R(mu,beta) and could fabricate exclusion
        certificates, so any grid-level violation is confirmed against a
        polished minimum before it counts.
        """
        sub = RegionAnalyzer(cand, RegionConfig(
            simplex_step=self.cfg.simplex_step,
            mu_points=self.cfg.mu_points, beta_points=self.cfg.beta_points,
            polish_maxiter=80, seed=self.cfg.seed,
        ))
        mu, beta = sub.plane_grid
        w = sub._plane_weights(mu, beta)
        r_grid = (w @ sub._sh_stats.T).min(axis=1)
        combos = w @ [triple.r_c, triple.r_i, triple.d]
        slacks = combos - r_grid
        c = int(slacks.argmin())
        if slacks[c] >= -margin:
            return False
        mi, bi = divmod(c, len(beta))
        j = int((w[c] @ sub._sh_stats.T).argmin())
        val, _ = sub._polish_sh(float(mu[mi]), float(beta[bi]), sub._sh_grid[j])
        return float(combos[c]) - min(val, float(r_grid[c])) < -margin

    def exponent_upper_bound(self, triple: RateTriple, budget: int = 160):
        """Approximate inf of D(Q_XYZ||P_XYZ) over laws excluding the triple.

        Returns ``(value, achieving law or None, approximate_flag)``.  The
        search (degradation paths bisected to the feasibility boundary,
        random restarts, one local polish) is not global, so a finite
        result is an upper estimate and is flagged approximate; when the
        triple is already outside the system's own region the bound is an
        exact 0.
        """
        sys = self.sys
        if self.excludes(sys, triple):
            return 0.0, sys, False
        rng = np.random.default_rng(self.cfg.seed + 1)
        best_val, best_q = math.inf, None
        for cand in self._bound_candidates(triple, rng, budget):
            if self.excludes(cand, triple):
                val = kl_divergence(cand.pxyz, sys.pxyz)
                if val < best_val:
                    best_val, best_q = val, cand
        if best_q is None:
            warnings.warn("exponent_upper_bound: no excluded-region law found in budget")
            return math.inf, None, True
        val, cand = self._polish_bound(triple, best_q)
        if val < best_val:
            best_val, best_q = val, cand
        return best_val, best_q, True

    def _bound_candidates(self, triple: RateTriple, rng, budget: int):
        sys = self.sys
        flat_y = np.tile(sys.py, (sys.nx, 1))
        flat_z = np.tile(sys.pz, (sys.nx, 1))
        paths = [
            lambda t: compose_triple(
                sys.px, sys.pyx, (1 - t) * sys.pzx.rows + t * flat_z, sys.distortion),
            lambda t: compose_triple(
                sys.px, (1 - t) * sys.pyx.rows + t * flat_y, sys.pzx, sys.distortion),
            lambda t: compose_triple(
                sys.px, (1 - t) * sys.pyx.rows + t * flat_y,
                (1 - t) * sys.pzx.rows + t * flat_z, sys.distortion),
        ]
        for path in paths:
            if not self.excludes(path(1.0), triple):
                continue
            lo, hi = 0.0, 1.0
            for _ in range(14):
                mid = 0.5 * (lo + hi)
                if self.excludes(path(mid), triple):
                    hi = mid
                else:
                    lo = mid
            yield path(hi)
            yield path(min(1.0, hi + 0.02))
        for _ in range(max(budget - 8, 0)):
            scale = 10.0 ** rng.uniform(0.5, 2.5)
            px = rng.dirichlet(scale * sys.nx * sys.px.probs + 0.05)
            pyx = np.stack([rng.dirichlet(scale * sys.ny * r + 0.05) for r in sys.pyx.rows])
            pzx = np.stack([rng.dirichlet(scale * sys.nz * r + 0.05) for r in sys.pzx.rows])
            try:
                yield compose_triple(px, pyx, pzx, sys.distortion)
            except ValidationError:
                continue

    def _polish_bound(self, triple: RateTriple, start: SystemTriple):
        sys = self.sys
        nx, ny, nz = sys.nx, sys.ny, sys.nz

        def unpack(z):
            i = 0
            px = _softmax_rows(z[i : i + nx]); i += nx
            pyx = _softmax_rows(z[i : i + nx * ny].reshape(nx, ny)); i += nx * ny
            pzx = _softmax_rows(z[i : i + nx * nz].reshape(nx, nz))
            return compose_triple(px, pyx, pzx, sys.distortion)

        def fun(z):
            cand = unpack(z)
            div = kl_divergence(cand.pxyz, sys.pxyz)
            if not math.isfinite(div):
                return 1e3
            # infeasible candidates pay a constant penalty on top
            return div if self.excludes(cand, triple) else div + 10.0

        z0 = np.concatenate([
            np.log(np.clip(start.px.probs, 1e-9, 1)),
            np.log(np.clip(start.pyx.rows, 1e-9, 1)).ravel(),
            np.log(np.clip(start.pzx.rows, 1e-9, 1)).ravel(),
        ])
        res = optimize.minimize(fun, z0, method="Nelder-Mead",
                                options={"maxiter": 300, "fatol": 1e-10})
        cand = unpack(res.x)
        if self.excludes(cand, triple):
            return kl_divergence(cand.pxyz, sys.pxyz), cand
        return math.inf, start


# ---------------------------------------------------------------------------
# module-level ops over a shared analyzer cache
# ---------------------------------------------------------------------------

_CACHE: dict[bytes, RegionAnalyzer] = {}


def _fingerprint(sys: SystemTriple, cfg: RegionConfig) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for arr in (sys.px.probs, sys.pyx.rows, sys.pzx.rows, sys.distortion):
        h.update(np.ascontiguousarray(arr).tobytes())
        h.update(str(arr.shape).encode())
    h.update(repr(cfg).encode())
    return h.digest()


def analyzer_for(sys: SystemTriple, cfg: RegionConfig | None = None) -> RegionAnalyzer:
    cfg = cfg or RegionConfig()
    key = _fingerprint(sys, cfg)
    if key not in _CACHE:
        _CACHE[key] = RegionAnalyzer(sys, cfg)
    return _CACHE[key]


def membership(sys: SystemTriple, triple: RateTriple, cfg: RegionConfig | None = None) -> MembershipVerdict:
    return analyzer_for(sys, cfg).membership(triple)


def membership_sh(sys: SystemTriple, triple: RateTriple, cfg: RegionConfig | None = None) -> ShVerdict:
    return analyzer_for(sys, cfg).membership_sh(triple)


def hyperplane_value(sys: SystemTriple, mu: float, beta: float, cfg: RegionConfig | None = None):
    return analyzer_for(sys, cfg).hyperplane_value(mu, beta)


def boundary_trace(sys: SystemTriple, d_fixed: float, n_points: int, cfg: RegionConfig | None = None):
    return analyzer_for(sys, cfg).boundary_trace(d_fixed, n_points)


def exponent_upper_bound(sys: SystemTriple, triple: RateTriple, cfg: RegionConfig | None = None, budget: int = 160):
    return analyzer_for(sys, cfg).exponent_upper_bound(triple, budget=budget)

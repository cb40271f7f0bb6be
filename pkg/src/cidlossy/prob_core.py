"""Finite-alphabet probability objects and elementary information functionals.

Conventions used throughout the package:

- every information quantity is in nats (natural log);
- 0*log(0) = 0 and 0*log(0/0) = 0; q*log(q/0) with q > 0 signals +inf
  rather than a large float;
- probability vectors must sum to 1 within ``PMF_ATOL``; sums drifting by
  less than ``PMF_RENORM_TOL`` are silently renormalized, larger drift is
  rejected (distinguishes float rounding from user error);
- conditionals on zero-probability conditioning events are flagged as
  undefined rows rather than fabricated; expectations under the joint give
  such rows zero weight, so downstream code skips them.

The three-source model (a feature source X observed through two independent
memoryless channels Y|X and Z|X, plus a reconstruction alphabet with a
distortion matrix) is carried by :class:`SystemTriple`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "PMF_ATOL",
    "PMF_RENORM_TOL",
    "MERGE_ATOL",
    "CidlossyError",
    "ValidationError",
    "StateSpaceError",
    "Pmf",
    "Channel",
    "SystemTriple",
    "FiniteRandomVariable",
    "compose_triple",
    "entropy",
    "mutual_information",
    "mutual_information_from_joint",
    "conditional_mutual_information",
    "kl_divergence",
    "info_density_rv",
    "mean",
    "variance",
    "cgf",
    "cramer_tail_bound",
    "tail_probability",
    "iid_sum_rv",
    "iid_tail_exact",
    "conditional_from_joint",
    "system_from_dict",
    "system_to_dict",
]

# Absolute tolerance on pmf normalization; accepted as-is below this.
PMF_ATOL = 1e-12
# Sums drifting by less than this are renormalized, beyond it rejected.
PMF_RENORM_TOL = 1e-9
# Value-merging tolerance for convolutions of finite random variables.
MERGE_ATOL = 1e-12


class CidlossyError(Exception):
    """Base error for the package."""


class ValidationError(CidlossyError, ValueError):
    """Inputs violate a contract: shape, stochasticity, domain."""


class StateSpaceError(CidlossyError, RuntimeError):
    """An exact enumeration would exceed its declared budget."""


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------


def _as_prob_vector(p, name: str) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{name} must be a nonempty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    if np.any(arr < -PMF_ATOL):
        raise ValidationError(f"{name} has negative entries: min={arr.min()!r}")
    arr = np.maximum(arr, 0.0)
    s = float(arr.sum())
    if abs(s - 1.0) > PMF_RENORM_TOL:
        raise ValidationError(f"{name} does not sum to 1 (sum={s!r})")
    if abs(s - 1.0) > PMF_ATOL:
        arr = arr / s
    arr.flags.writeable = False
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out


def _probs_of(p) -> np.ndarray:
    return p.probs if isinstance(p, Pmf) else np.asarray(p, dtype=float)


def _rows_of(ch) -> np.ndarray:
    return ch.rows if isinstance(ch, Channel) else np.asarray(ch, dtype=float)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability vector over a finite alphabet."""

    probs: np.ndarray

    def __init__(self, probs) -> None:
        object.__setattr__(self, "probs", _as_prob_vector(probs, "pmf"))

    @property
    def alphabet_size(self) -> int:
        return self.probs.size

    def __len__(self) -> int:
        return self.probs.size


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic matrix between two finite alphabets."""

    rows: np.ndarray

    def __init__(self, rows) -> None:
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            raise ValidationError(f"channel must be a 2-d matrix, got shape {arr.shape}")
        validated = np.stack(
            [_as_prob_vector(arr[i], f"channel row {i}") for i in range(arr.shape[0])]
        )
        object.__setattr__(self, "rows", _frozen(validated))

    @property
    def in_size(self) -> int:
        return self.rows.shape[0]

    @property
    def out_size(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True, eq=False)
class FiniteRandomVariable:
    """Finitely supported real random variable (values with atom masses)."""

    values: np.ndarray
    probs: np.ndarray

    def __init__(self, values, probs) -> None:
        v = np.asarray(values, dtype=float)
        p = _as_prob_vector(probs, "rv probs")
        if v.ndim != 1 or v.shape != p.shape:
            raise ValidationError(f"values/probs shape mismatch: {v.shape} vs {p.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("rv values must be finite")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True, eq=False)
class SystemTriple:
    """Source pmf, the two observation channels, and a distortion matrix.

    Caches the induced joint P_XYZ together with the marginals and
    conditionals every other module needs.  The Markov chain Z - X - Y holds
    by construction of the joint.
    """

    px: Pmf
    pyx: Channel
    pzx: Channel
    distortion: np.ndarray = field(repr=False)

    def __init__(self, px: Pmf, pyx: Channel, pzx: Channel, distortion) -> None:
        px = px if isinstance(px, Pmf) else Pmf(px)
        pyx = pyx if isinstance(pyx, Channel) else Channel(pyx)
        pzx = pzx if isinstance(pzx, Channel) else Channel(pzx)
        if pyx.in_size != len(px) or pzx.in_size != len(px):
            raise ValidationError(
                f"channel input sizes {pyx.in_size}, {pzx.in_size} do not match |X|={len(px)}"
            )
        d = np.asarray(distortion, dtype=float)
        if d.ndim != 2 or d.shape[0] != len(px):
            raise ValidationError(f"distortion must be |X| x |Xhat|, got {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValidationError("distortion entries must be finite and nonnegative")
        object.__setattr__(self, "px", px)
        object.__setattr__(self, "pyx", pyx)
        object.__setattr__(self, "pzx", pzx)
        object.__setattr__(self, "distortion", _frozen(d))

    # -- sizes ------------------------------------------------------------

    @property
    def nx(self) -> int:
        return len(self.px)

    @property
    def ny(self) -> int:
        return self.pyx.out_size

    @property
    def nz(self) -> int:
        return self.pzx.out_size

    @property
    def nxhat(self) -> int:
        return self.distortion.shape[1]

    @property
    def d_plus(self) -> float:
        """Largest distortion value d+ = max_{x,xhat} d(x,xhat)."""
        return float(self.distortion.max())

    # -- induced distributions ---------------------------------------------

    @cached_property
    def pxyz(self) -> np.ndarray:
        """Joint P_XYZ(x,y,z) = px(x) pyx(y|x) pzx(z|x)."""
        j = np.einsum("x,xy,xz->xyz", self.px.probs, self.pyx.rows, self.pzx.rows)
        s = float(j.sum())
        if abs(s - 1.0) > 1e-10:
            raise ValidationError(f"induced joint sums to {s!r}")
        return _frozen(j / s)

    @cached_property
    def py(self) -> np.ndarray:
        return _frozen(self.pxyz.sum(axis=(0, 2)))

    @cached_property
    def pz(self) -> np.ndarray:
        return _frozen(self.pxyz.sum(axis=(0, 1)))

    @cached_property
    def pyz(self) -> np.ndarray:
        return _frozen(self.pxyz.sum(axis=0))

    @cached_property
    def pzy(self) -> np.ndarray:
        """Conditional P_{Z|Y} as a (|Y|,|Z|) row-stochastic array.

        Rows conditioned on zero-probability y are flagged undefined (see
        :attr:`pzy_defined`) and left as zeros.
        """
        cond, _ = conditional_from_joint(self.pyz, cond_axes=(0,))
        return _frozen(cond)

    @cached_property
    def pzy_defined(self) -> np.ndarray:
        _, defined = conditional_from_joint(self.pyz, cond_axes=(0,))
        return defined

    @cached_property
    def px_given_yz(self) -> np.ndarray:
        """P_{X|YZ} indexed (y,z,x);  undefined rows flagged separately."""
        joint_yzx = np.moveaxis(self.pxyz, 0, 2)
        cond, _ = conditional_from_joint(joint_yzx, cond_axes=(0, 1))
        return _frozen(cond)

    @cached_property
    def px_given_yz_defined(self) -> np.ndarray:
        joint_yzx = np.moveaxis(self.pxyz, 0, 2)
        _, defined = conditional_from_joint(joint_yzx, cond_axes=(0, 1))
        return defined


def compose_triple(px, pyx, pzx, distortion) -> SystemTriple:
    """Build a :class:`SystemTriple` and materialize its cached joint."""
    sys = SystemTriple(px, pyx, pzx, distortion)
    sys.pxyz  # force validation of the induced joint
    return sys


def conditional_from_joint(joint: np.ndarray, cond_axes: tuple[int, ...]):
    """Normalize ``joint`` along the axes not in ``cond_axes``.

    Returns ``(cond, defined)`` where ``cond`` has the conditioning axes
    first and ``defined`` marks conditioning cells with positive mass.
    Undefined rows are all-zero, never fabricated.
    """
    joint = np.asarray(joint, dtype=float)
    rest = tuple(i for i in range(joint.ndim) if i not in cond_axes)
    perm = tuple(cond_axes) + rest
    j = np.transpose(joint, perm)
    marg = j.sum(axis=tuple(range(len(cond_axes), j.ndim)), keepdims=True)
    defined = marg.reshape(j.shape[: len(cond_axes)]) > 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(marg > 0.0, j / np.where(marg > 0.0, marg, 1.0), 0.0)
    return cond, defined


# ---------------------------------------------------------------------------
# information functionals
# ---------------------------------------------------------------------------


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


def entropy(p) -> float:
    """Shannon entropy in nats with the 0 log 0 = 0 convention."""
    return float(-_xlogx(_probs_of(p)).sum())


def mutual_information_from_joint(joint) -> float:
    """I(A;B) in nats from a 2-d joint array."""
    j = np.asarray(joint, dtype=float)
    if j.ndim != 2:
        raise ValidationError(f"expected 2-d joint, got shape {j.shape}")
    pa = j.sum(axis=1)
    pb = j.sum(axis=0)
    mask = j > 0
    prod = np.outer(pa, pb)
    val = float(np.sum(j[mask] * (np.log(j[mask]) - np.log(prod[mask]))))
    return max(val, 0.0)


def mutual_information(p, ch) -> float:
    """I(P, W) in nats for input pmf ``p`` and channel ``ch``."""
    probs = _probs_of(p)
    rows = _rows_of(ch)
    if rows.shape[0] != probs.size:
        raise ValidationError(
            f"pmf size {probs.size} does not match channel input {rows.shape[0]}"
        )
    return mutual_information_from_joint(probs[:, None] * rows)


def conditional_mutual_information(joint) -> float:
    """I(U;Y|Z) in nats from a 3-d joint array indexed (z,u,y)."""
    j = np.asarray(joint, dtype=float)
    if j.ndim != 3:
        raise ValidationError(f"expected 3-d joint, got shape {j.shape}")
    if abs(float(j.sum()) - 1.0) > PMF_RENORM_TOL:
        raise ValidationError(f"joint sums to {float(j.sum())!r}")
    pz = j.sum(axis=(1, 2))
    puz = j.sum(axis=2)
    pyz = j.sum(axis=1)
    mask = j > 0
    num = j * pz[:, None, None]
    den = puz[:, :, None] * pyz[:, None, :]
    val = float(np.sum(j[mask] * (np.log(num[mask]) - np.log(den[mask]))))
    return max(val, 0.0)


def kl_divergence(q, p) -> float:
    """D(q||p) in nats; +inf when support(q) is not contained in support(p)."""
    qa = np.asarray(q, dtype=float)
    pa = np.asarray(p, dtype=float)
    if qa.shape != pa.shape:
        raise ValidationError(f"shape mismatch {qa.shape} vs {pa.shape}")
    qpos = qa > 0
    if np.any(pa[qpos] <= 0):
        return math.inf
    return float(np.sum(qa[qpos] * (np.log(qa[qpos]) - np.log(pa[qpos]))))


def info_density_rv(py, pzy) -> FiniteRandomVariable:
    """Information density log P_{Z|Y}(z|y)/P_Z(z) as a finite rv.

    Atoms are the (y,z) pairs with positive joint mass; the mean equals
    the mutual information of the pair.
    """
    p = _probs_of(py)
    rows = _rows_of(pzy)
    if rows.shape[0] != p.size:
        raise ValidationError("pmf/channel size mismatch")
    joint = p[:, None] * rows
    pz = joint.sum(axis=0)
    mask = joint > 0
    vals = np.log(rows[mask]) - np.log(np.broadcast_to(pz, joint.shape)[mask])
    mv, mp = _merge_atoms(vals, joint[mask])
    return FiniteRandomVariable(mv, mp)


# ---------------------------------------------------------------------------
# finite random variable calculus
# ---------------------------------------------------------------------------


def mean(rv: FiniteRandomVariable) -> float:
    return float(rv.probs @ rv.values)


def variance(rv: FiniteRandomVariable) -> float:
    m = mean(rv)
    return float(rv.probs @ (rv.values - m) ** 2)


def cgf(rv: FiniteRandomVariable, lam: float) -> float:
    """Cumulant generating function log E[exp(lam * rv)], overflow-guarded."""
    a = lam * rv.values + np.log(np.where(rv.probs > 0, rv.probs, 1.0))
    a = np.where(rv.probs > 0, a, -np.inf)
    m = float(np.max(a))
    if not np.isfinite(m):
        return -math.inf
    return m + math.log(float(np.sum(np.exp(a - m))))


def cramer_tail_bound(rv: FiniteRandomVariable, a: float, lam: float) -> float:
    """Chernoff bound exp(-(lam*a - cgf(rv,lam))) on Pr{rv >= a}, in [0,1]."""
    if lam <= 0:
        raise ValidationError(f"lam must be positive, got {lam!r}")
    return float(min(1.0, math.exp(-(lam * a - cgf(rv, lam)))))


def tail_probability(rv: FiniteRandomVariable, t: float) -> float:
    """Exact Pr{rv >= t} by direct summation (>= up to MERGE_ATOL slack)."""
    return float(rv.probs[rv.values >= t - MERGE_ATOL].sum())


def _merge_atoms(values: np.ndarray, probs: np.ndarray):
    order = np.argsort(values, kind="stable")
    v = values[order]
    p = probs[order]
    keep = np.empty(v.size, dtype=bool)
    keep[0] = True
    np.greater(np.diff(v), MERGE_ATOL, out=keep[1:])
    idx = np.cumsum(keep) - 1
    mv = v[keep]
    mp = np.zeros(mv.size)
    np.add.at(mp, idx, p)
    return mv, mp


def iid_sum_rv(rv: FiniteRandomVariable, n: int, max_states: int = 10**6) -> FiniteRandomVariable:
    """Distribution of the sum of ``n`` iid copies, by value-space convolution.

    Values equal within ``MERGE_ATOL`` are merged, which keeps lattice
    supports (e.g. binary channels) linear in n instead of exponential.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    pos = rv.probs > 0
    base_v, base_p = _merge_atoms(rv.values[pos], rv.probs[pos])
    acc_v, acc_p = np.array([0.0]), np.array([1.0])
    for _ in range(n):
        grid_v = (acc_v[:, None] + base_v[None, :]).ravel()
        grid_p = (acc_p[:, None] * base_p[None, :]).ravel()
        acc_v, acc_p = _merge_atoms(grid_v, grid_p)
        if acc_v.size > max_states:
            raise StateSpaceError(
                f"iid convolution needs {acc_v.size} states (> {max_states}); "
                "use the Berry-Esseen approximation instead"
            )
    return FiniteRandomVariable(acc_v, acc_p / acc_p.sum())


def iid_tail_exact(
    rv: FiniteRandomVariable, n: int, t: float, max_states: int = 10**6
) -> float:
    """Exact Pr{(1/n) sum of n iid copies >= t} by n-fold convolution."""
    s = iid_sum_rv(rv, n, max_states=max_states)
    return tail_probability(s, n * t)


# ---------------------------------------------------------------------------
# structured-document interface
# ---------------------------------------------------------------------------


def system_from_dict(doc: dict) -> SystemTriple:
    """Build a system from ``{"px": [...], "pyx": [[...]], "pzx": [[...]], "distortion": [[...]]}``."""
    missing = [k for k in ("px", "pyx", "pzx", "distortion") if k not in doc]
    if missing:
        raise ValidationError(f"system document missing fields: {missing}")
    return compose_triple(doc["px"], doc["pyx"], doc["pzx"], doc["distortion"])


def system_to_dict(sys: SystemTriple) -> dict:
    return {
        "px": sys.px.probs.tolist(),
        "pyx": sys.pyx.rows.tolist(),
        "pzx": sys.pzx.rows.tolist(),
        "distortion": sys.distortion.tolist(),
    }

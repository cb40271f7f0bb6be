"""Monte Carlo simulation of the enrollment / identification / recovery system.

A trial enrolls M feature vectors drawn iid from the source, observes them
through the enrollment channel, stores the encoder output, draws a uniform
query index W, passes the queried feature vector through the identification
channel, decodes, reconstructs, and reports the two failure indicators
(wrong index, excess distortion).

Two execution paths produce identically distributed trial outcomes:

- literal: items are materialized; any encoder/decoder combination, item
  counts up to ``LITERAL_M_MAX``.
- spectrum: for the store-observations-verbatim encoder the decoder only
  sees per-item likelihood scores, whose law under a wrong item is a known
  finite lattice.  Per trial the true pair (y^n, z^n) is sampled, and the
  wrong items' score counts are drawn per lattice class (exact binomial
  while the count fits an int64, Poisson beyond, deterministic when the
  expected count is astronomically large).  This handles item counts like
  exp(100) that no literal simulation could touch.  Excess-distortion
  accounting is not available on this path, so it requires a distortion
  level at or above d+ (the event is then impossible).

Reproducibility contract: trial t draws from an independent Philox stream
keyed by ``mix64(seed, t)`` (the 64-bit mixing function below), so the
estimate is bitwise independent of batching or scheduling.

Ties in maximum-likelihood identification break toward the smallest item
index; reconstruction is the symbolwise Bayes estimate given the decoded
item's stored symbol and the query symbol (lowest index on ties).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.random import Generator, Philox

from cidlossy.prob_core import (
    StateSpaceError,
    SystemTriple,
    ValidationError,
)

__all__ = [
    "LITERAL_M_MAX",
    "IdentityEncoder",
    "QuantizeBinEncoder",
    "MaxLikelihood",
    "StochasticLikelihood",
    "SimConfig",
    "TrialOutcome",
    "SimEstimate",
    "ExponentFit",
    "mix64",
    "run_trial",
    "estimate_pe",
    "exact_pc_bruteforce",
    "empirical_exponent",
    "fit_exponent",
]

# Item-count ceiling for the literal path; identity-encoder configs beyond
# it switch to the spectrum path automatically.
LITERAL_M_MAX = 4096
# Expected class counts above this are treated as deterministic.
_COUNT_DETERMINISTIC = 1e15
# Sampled-score lattice matching tolerance.
_LATTICE_ATOL = 1e-8

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def mix64(seed: int, index: int) -> int:
    """SplitMix64 finalizer of seed + (index+1)*golden; the per-trial key."""
    z = (seed + (index + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _rng(seed: int, index: int) -> Generator:
    return Generator(Philox(key=mix64(seed, index)))


# ---------------------------------------------------------------------------
# configuration types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityEncoder:
    """Store the enrollment observation verbatim (log L = n log|Y|)."""


@dataclass(frozen=True)
class QuantizeBinEncoder:
    """Random codebook over the observation alphabet with uniform binning.

    ``round(exp(n*codebook_rate))`` codewords are drawn iid (default from
    the observation marginal) once per encoder from ``codebook_seed``;
    observations quantize to the closest codeword by symbol matches and
    store the codeword index modulo ``round(exp(n*bin_rate))`` bins.
    """

    codebook_rate: float
    bin_rate: float
    aux_pmf: tuple | None = None
    codebook_seed: int = 0

    def __post_init__(self) -> None:
        if self.codebook_rate < 0 or self.bin_rate < 0:
            raise ValidationError("encoder rates must be nonnegative")


@dataclass(frozen=True)
class MaxLikelihood:
    """argmax_m of the stored-information likelihood of z^n, smallest index on ties."""


@dataclass(frozen=True)
class StochasticLikelihood:
    """Samples the decoded index proportionally to the per-item likelihood."""


@dataclass(frozen=True, eq=False)
class SimConfig:
    sys: SystemTriple
    n: int
    m: int
    encoder: object
    decoder: object
    distortion_level: float
    trials: int
    seed: int

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1 or self.trials < 1:
            raise ValidationError("n, m and trials must all be >= 1")
        if self.distortion_level < 0:
            raise ValidationError("distortion level must be nonnegative")
        if not isinstance(self.encoder, (IdentityEncoder, QuantizeBinEncoder)):
            raise ValidationError(f"unknown encoder {self.encoder!r}")
        if not isinstance(self.decoder, (MaxLikelihood, StochasticLikelihood)):
            raise ValidationError(f"unknown decoder {self.decoder!r}")

    @property
    def log_l(self) -> float:
        """log of the stored-alphabet size (the compression-rate ledger)."""
        if isinstance(self.encoder, IdentityEncoder):
            return self.n * math.log(self.sys.ny)
        bins = _bin_count(self.encoder, self.n)
        return math.log(bins)


@dataclass(frozen=True)
class TrialOutcome:
    correct_id: bool
    excess_distortion: bool

    @property
    def failed(self) -> bool:
        return (not self.correct_id) or self.excess_distortion


@dataclass(frozen=True)
class SimEstimate:
    p_e_hat: float
    p_c_hat: float
    ci_halfwidth: float
    trials_used: int
    ci_method: str = "normal"
    path: str = "literal"


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    slope_ci: float
    points: tuple  # (n, p_c_hat, ci_halfwidth) per kept point
    dropped: tuple = ()


def _codeword_count(enc: QuantizeBinEncoder, n: int) -> int:
    return max(1, round(math.exp(n * enc.codebook_rate)))


def _bin_count(enc: QuantizeBinEncoder, n: int) -> int:
    return max(1, round(math.exp(n * enc.bin_rate)))


# ---------------------------------------------------------------------------
# shared tables
# ---------------------------------------------------------------------------


class _Tables:
    """Per-system sampling and decoding tables."""

    def __init__(self, sys: SystemTriple):
        self.sys = sys
        self.cum_px = np.cumsum(sys.px.probs)
        self.cum_pyx = np.cumsum(sys.pyx.rows, axis=1)
        self.cum_pzx = np.cumsum(sys.pzx.rows, axis=1)
        with np.errstate(divide="ignore"):
            self.log_pzy = np.where(sys.pzy > 0, np.log(np.where(sys.pzy > 0, sys.pzy, 1.0)), -np.inf)

    @cached_property
    def bayes_xhat(self) -> np.ndarray:
        """(y,z) -> Bayes-optimal reconstruction symbol, index 0 on undefined rows."""
        sys = self.sys
        risk = np.einsum("yzx,xv->yzv", sys.px_given_yz, sys.distortion)
        return risk.argmin(axis=2)


_TABLES: dict[int, _Tables] = {}


def _tables(sys: SystemTriple) -> _Tables:
    key = id(sys)
    if key not in _TABLES:
        _TABLES[key] = _Tables(sys)
    return _TABLES[key]


def _sample_rows(rng: Generator, cum_rows: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Per-entry categorical draw using row cumulative distributions."""
    u = rng.random(idx.shape)
    return (u[..., None] > cum_rows[idx][..., :-1]).sum(axis=-1)


def _codebook(enc: QuantizeBinEncoder, sys: SystemTriple, n: int) -> np.ndarray:
    rng = Generator(Philox(key=mix64(enc.codebook_seed, 0xC0DE)))
    pmf = np.asarray(enc.aux_pmf if enc.aux_pmf is not None else sys.py, dtype=float)
    if pmf.size != sys.ny:
        raise ValidationError("aux_pmf must live on the observation alphabet")
    cum = np.cumsum(pmf / pmf.sum())
    k = _codeword_count(enc, n)
    return np.searchsorted(cum, rng.random((k, n)), side="right").clip(max=sys.ny - 1)


# ---------------------------------------------------------------------------
# literal path
# ---------------------------------------------------------------------------


def run_trial(cfg: SimConfig, trial_seed: int) -> TrialOutcome:
    """One literal trial: enroll, identify, reconstruct, report failures."""
    if cfg.m > LITERAL_M_MAX:
        raise StateSpaceError(
            f"literal path supports m <= {LITERAL_M_MAX}; use estimate_pe, "
            "which switches to the spectrum path for the identity encoder"
        )
    rng = Generator(Philox(key=trial_seed & _MASK64))
    return _literal_trial(cfg, rng)


def _literal_trial(cfg: SimConfig, rng: Generator) -> TrialOutcome:
    sys, n, m = cfg.sys, cfg.n, cfg.m
    tab = _tables(sys)

    x = np.searchsorted(tab.cum_px, rng.random((m, n)), side="right").clip(max=sys.nx - 1)
    y = _sample_rows(rng, tab.cum_pyx, x)
    w = int(rng.integers(m))
    z = _sample_rows(rng, tab.cum_pzx, x[w])

    if isinstance(cfg.encoder, IdentityEncoder):
        scores = tab.log_pzy[y, z[None, :]].sum(axis=1)
        recon_src = y
    else:
        cw = _codebook(cfg.encoder, sys, n)
        bins = _bin_count(cfg.encoder, n)
        matches = (y[:, None, :] == cw[None, :, :]).sum(axis=2)
        j_star = matches.argmax(axis=1)
        stored = j_star % bins
        cw_scores = tab.log_pzy[cw, z[None, :]].sum(axis=1)  # (K,)
        bin_best = np.full(bins, -np.inf)
        bin_arg = np.zeros(bins, dtype=int)
        for j in range(len(cw)):  # first-index ties within a bin
            b = j % bins
            if cw_scores[j] > bin_best[b]:
                bin_best[b] = cw_scores[j]
                bin_arg[b] = j
        scores = bin_best[stored]
        recon_src = cw[bin_arg[stored]]

    if isinstance(cfg.decoder, MaxLikelihood):
        w_hat = int(np.argmax(scores))
    else:
        finite = np.isfinite(scores)
        if not finite.any():
            w_hat = 0
        else:
            s = scores - scores[finite].max()
            p = np.where(finite, np.exp(np.where(finite, s, 0.0)), 0.0)
            p /= p.sum()
            w_hat = int(rng.choice(m, p=p))

    xhat = tab.bayes_xhat[recon_src[w_hat], z]
    dbar = float(sys.distortion[x[w], xhat].mean())
    return TrialOutcome(
        correct_id=(w_hat == w),
        excess_distortion=dbar > cfg.distortion_level + 1e-12,
    )


# ---------------------------------------------------------------------------
# spectrum path (identity encoder, arbitrarily large m)
# ---------------------------------------------------------------------------


class _Spectrum:
    """Score-lattice tables for wrong items given the query sequence."""

    def __init__(self, sys: SystemTriple, n: int):
        self.sys = sys
        self.n = n
        tab = _tables(sys)
        self.log_pzy = tab.log_pzy
        self.py = sys.py
        vp = []
        for z in range(sys.nz):
            vals = self.log_pzy[:, z]
            order = np.argsort(vals)
            vp.append((vals[order], self.py[order]))
        self.per_z = vp
        self.cum_pair = np.cumsum(sys.pyz.ravel())
        ref = vp[0]
        self.symmetric = all(
            len(v[0]) == len(ref[0])
            and np.allclose(v[0], ref[0], atol=1e-12)
            and np.allclose(v[1], ref[1], atol=1e-12)
            for v in vp[1:]
        )
        self._cache: dict[tuple, tuple] = {}

    def _convolve(self, counts: tuple) -> tuple:
        """Noise-score lattice for a z-composition: (values asc, probs, tails)."""
        acc_v, acc_p = np.array([0.0]), np.array([1.0])
        for z, cnt in enumerate(counts):
            if cnt == 0:
                continue
            base_v, base_p = self.per_z[z]
            keep = base_p > 0
            base_v, base_p = base_v[keep], base_p[keep]
            for _ in range(cnt):
                grid_v = (acc_v[:, None] + base_v[None, :]).ravel()
                grid_p = (acc_p[:, None] * base_p[None, :]).ravel()
                order = np.argsort(grid_v, kind="stable")
                grid_v, grid_p = grid_v[order], grid_p[order]
                keep2 = np.empty(grid_v.size, dtype=bool)
                keep2[0] = True
                np.greater(np.diff(grid_v), 1e-12, out=keep2[1:])
                idx = np.cumsum(keep2) - 1
                acc_v = grid_v[keep2]
                acc_p = np.zeros(acc_v.size)
                np.add.at(acc_p, idx, grid_p)
                if acc_v.size > 500_000:
                    raise StateSpaceError("noise-score lattice too large")
        tail = np.concatenate([np.cumsum(acc_p[::-1])[::-1], [0.0]])
        return acc_v, acc_p, tail

    def lattice_for(self, z_counts: tuple) -> tuple:
        if self.symmetric:
            z_counts = (self.n,) + (0,) * (self.sys.nz - 1)
        if z_counts not in self._cache:
            if len(self._cache) > 20_000:
                raise StateSpaceError("too many distinct query compositions")
            self._cache[z_counts] = self._convolve(z_counts)
        return self._cache[z_counts]


def _draw_count(rng: Generator, m_minus_1: int, prob: float) -> float:
    """Count of wrong items in a score class: exact binomial while the item
    count fits an int64, Poisson beyond, deterministic when huge."""
    if prob <= 0.0 or m_minus_1 == 0:
        return 0.0
    lam = m_minus_1 * prob
    if lam > _COUNT_DETERMINISTIC:
        return lam
    if m_minus_1 <= (1 << 62):
        return float(rng.binomial(m_minus_1, min(prob, 1.0)))
    return float(rng.poisson(lam))


def _spectrum_trial(cfg: SimConfig, spec: _Spectrum, rng: Generator) -> TrialOutcome:
    sys, n, m = cfg.sys, cfg.n, cfg.m
    cum_flat = spec.cum_pair
    pair = np.searchsorted(cum_flat, rng.random(n), side="right").clip(max=cum_flat.size - 1)
    y_seq, z_seq = np.divmod(pair, sys.nz)
    s_true = float(spec.log_pzy[y_seq, z_seq].sum())
    z_counts = tuple(int(np.count_nonzero(z_seq == z)) for z in range(sys.nz))
    values, probs, tail = spec.lattice_for(z_counts)

    hi = int(np.searchsorted(values, s_true + _LATTICE_ATOL, side="right"))
    lo = int(np.searchsorted(values, s_true - _LATTICE_ATOL, side="left"))
    p_gt = float(tail[hi])
    p_eq = float(probs[lo:hi].sum())

    if isinstance(cfg.decoder, MaxLikelihood):
        g = _draw_count(rng, m - 1, p_gt)
        if g >= 1.0:
            return TrialOutcome(False, False)
        t = _draw_count(rng, m - 1, p_eq)
        correct = bool(rng.random() < 1.0 / (t + 1.0))
        return TrialOutcome(correct, False)

    # stochastic likelihood: win probability 1/(1 + sum_k N_k e^{v_k - s})
    lam = (m - 1) * probs
    det = lam > 1e9
    counts = np.where(det, lam, 0.0)
    small = ~det
    if small.any():
        ps = probs[small]
        if m - 1 <= (1 << 62):
            counts[small] = rng.binomial(m - 1, np.minimum(ps, 1.0))
        else:
            counts[small] = rng.poisson((m - 1) * ps)
    rel = np.exp(np.clip(values - s_true, -745.0, 700.0))
    s_noise = float(np.dot(counts, rel))
    correct = bool(rng.random() < 1.0 / (1.0 + s_noise))
    return TrialOutcome(correct, False)


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


def _ci(p_hat: float, trials: int) -> tuple[float, str]:
    z = 1.959963984540054
    if p_hat * (1 - p_hat) * trials >= 10:
        return z * math.sqrt(p_hat * (1 - p_hat) / trials), "normal"
    denom = 1 + z * z / trials
    half = z * math.sqrt(p_hat * (1 - p_hat) / trials + z * z / (4 * trials * trials)) / denom
    return half, "wilson"


def estimate_pe(cfg: SimConfig) -> SimEstimate:
    """Monte Carlo estimate of the joint error probability.

    Identity-encoder configs beyond ``LITERAL_M_MAX`` items run on the
    spectrum path, which requires the distortion level to be at or above
    d+ (the excess event is then impossible).
    """
    use_spectrum = isinstance(cfg.encoder, IdentityEncoder) and cfg.m > LITERAL_M_MAX
    if use_spectrum and cfg.distortion_level < cfg.sys.d_plus - 1e-12:
        raise StateSpaceError(
            "spectrum path cannot track excess distortion; raise the "
            f"distortion level to d+={cfg.sys.d_plus} or reduce m below {LITERAL_M_MAX}"
        )
    if not use_spectrum and cfg.m > LITERAL_M_MAX:
        raise StateSpaceError(
            f"m={cfg.m} requires the identity encoder's spectrum path"
        )
    if cfg.trials < 100:
        warnings.warn("fewer than 100 trials: the confidence interval is unreliable")
    spec = _Spectrum(cfg.sys, cfg.n) if use_spectrum else None
    failures = 0
    for t in range(cfg.trials):
        rng = _rng(cfg.seed, t)
        out = _spectrum_trial(cfg, spec, rng) if use_spectrum else _literal_trial(cfg, rng)
        failures += out.failed
    p_e = failures / cfg.trials
    half, method = _ci(p_e, cfg.trials)
    return SimEstimate(
        p_e_hat=p_e, p_c_hat=1.0 - p_e, ci_halfwidth=half,
        trials_used=cfg.trials, ci_method=method,
        path="spectrum" if use_spectrum else "literal",
    )


# ---------------------------------------------------------------------------
# exact tiny-instance oracle
# ---------------------------------------------------------------------------


def exact_pc_bruteforce(cfg: SimConfig) -> float:
    """Exact P_c by exhaustive summation over all randomness sources.

    Enumerates every assignment of feature vectors and observations to the
    m items, every query index, and every query sequence, applying the
    deterministic encoder/decoder/reconstruction maps.  Only feasible at
    desk scale; the budget guard rejects anything beyond ~1e8 terms.
    Stochastic decoders average the conditional win probability exactly.
    """
    sys, n, m = cfg.sys, cfg.n, cfg.m
    n_xy = (sys.nx * sys.ny) ** n
    budget = (n_xy**m) * m * (sys.nz**n)
    if budget > 2e8:
        raise StateSpaceError(f"bruteforce budget exceeded: {budget:.2e} terms")
    tab = _tables(sys)

    def all_seqs(k):
        return np.stack(np.meshgrid(*[np.arange(k)] * n, indexing="ij"), -1).reshape(-1, n)

    xseqs, yseqs, zseqs = all_seqs(sys.nx), all_seqs(sys.ny), all_seqs(sys.nz)
    nxs, nys, nzs = len(xseqs), len(yseqs), len(zseqs)

    log_px = np.log(np.where(sys.px.probs > 0, sys.px.probs, 1.0))
    px_ok = sys.px.probs > 0
    pxy_seq = np.zeros((nxs, nys))
    for xi in range(nxs):
        if not px_ok[xseqs[xi]].all():
            continue
        base = math.exp(log_px[xseqs[xi]].sum())
        pxy_seq[xi] = base * np.prod(sys.pyx.rows[xseqs[xi], yseqs[:, :]], axis=1)
    pzx_seq = np.zeros((nxs, nzs))
    for xi in range(nxs):
        pzx_seq[xi] = np.prod(sys.pzx.rows[xseqs[xi], zseqs[:, :]], axis=1)

    if isinstance(cfg.encoder, IdentityEncoder):
        score = np.zeros((nys, nzs))
        for yi in range(nys):
            score[yi] = tab.log_pzy[yseqs[yi], zseqs[:, :]].sum(axis=1)
    else:
        cw = _codebook(cfg.encoder, sys, n)
        bins = _bin_count(cfg.encoder, n)
        matches = (yseqs[:, None, :] == cw[None, :, :]).sum(axis=2)
        stored_of_y = matches.argmax(axis=1) % bins
        cw_score = np.stack(
            [tab.log_pzy[cw[j], zseqs[:, :]].sum(axis=1) for j in range(len(cw))]
        )  # (K, nzs)
        score = np.full((bins, nzs), -np.inf)
        bin_arg = np.zeros((bins, nzs), dtype=int)
        for j in range(len(cw)):
            b = j % bins
            better = cw_score[j] > score[b]
            score[b] = np.where(better, cw_score[j], score[b])
            bin_arg[b] = np.where(better, j, bin_arg[b])

    # mean distortion d(x-seq, reconstruction from (source-seq, z-seq))
    def dbar_table(source_seqs):
        ns = len(source_seqs)
        out = np.zeros((nxs, ns, nzs))
        for si in range(ns):
            xh = tab.bayes_xhat[source_seqs[si][None, :].repeat(nzs, 0), zseqs]  # (nzs, n)
            for xi in range(nxs):
                out[xi, si] = sys.distortion[xseqs[xi][None, :], xh].mean(axis=1)
        return out

    pairs = np.stack(np.meshgrid(np.arange(nxs), np.arange(nys), indexing="ij"), -1).reshape(-1, 2)
    pair_prob = pxy_seq.ravel()
    live = pair_prob > 0
    pairs, pair_prob = pairs[live], pair_prob[live]
    npair = len(pairs)

    configs = np.stack(
        np.meshgrid(*[np.arange(npair)] * m, indexing="ij"), -1
    ).reshape(-1, m)
    cfg_prob = np.prod(pair_prob[configs], axis=1)
    x_idx = pairs[configs, 0]  # (C, m)
    y_idx = pairs[configs, 1]

    if isinstance(cfg.encoder, IdentityEncoder):
        dtab = dbar_table(yseqs)
        stored = y_idx
    else:
        dtab = dbar_table(cw)
        stored = stored_of_y[y_idx]

    stochastic = isinstance(cfg.decoder, StochasticLikelihood)
    total_parts = []
    d_tol = cfg.distortion_level + 1e-12
    for w in range(m):
        for zi in range(nzs):
            sc = score[stored[:, :], zi] if isinstance(cfg.encoder, QuantizeBinEncoder) else score[y_idx, zi]
            if isinstance(cfg.encoder, QuantizeBinEncoder):
                src = bin_arg[stored, zi]  # codeword index per item
            else:
                src = y_idx
            pz_w = pzx_seq[x_idx[:, w], zi]
            if stochastic:
                finite = np.isfinite(sc)
                mx = np.where(finite.any(axis=1), np.max(np.where(finite, sc, -np.inf), axis=1), 0.0)
                ex = np.where(finite, np.exp(sc - mx[:, None]), 0.0)
                denom = ex.sum(axis=1)
                win = np.where(denom > 0, ex[:, w] / np.where(denom > 0, denom, 1.0), 1.0 / m)
                dok = dtab[x_idx[:, w], src[:, w], zi] <= d_tol
                total_parts.append(float(np.sum(cfg_prob * pz_w * win * dok)))
            else:
                best = sc.max(axis=1)
                w_hat = (sc >= best[:, None]).argmax(axis=1)  # first max index
                correct = w_hat == w
                dok = dtab[x_idx[:, w], src[np.arange(len(src)), w_hat], zi] <= d_tol
                total_parts.append(float(np.sum(cfg_prob * pz_w * correct * dok)))
    return math.fsum(total_parts) / m


# ---------------------------------------------------------------------------
# empirical exponent
# ---------------------------------------------------------------------------


def fit_exponent(points) -> ExponentFit:
    """Weighted least-squares slope of -log p_c against n.

    ``points`` is an iterable of (n, p_c_hat, ci_halfwidth); zero estimates
    are dropped with a warning (their log diverges).
    """
    kept, dropped = [], []
    for n, pc, hw in points:
        if pc <= 0.0:
            dropped.append((n, pc, hw))
        else:
            kept.append((float(n), float(pc), float(hw)))
    if dropped:
        warnings.warn(f"dropped {len(dropped)} zero-estimate points from the exponent fit")
    if len(kept) < 2:
        raise ValidationError("fewer than two usable points for the exponent fit")
    ns = np.array([k[0] for k in kept])
    ys = -np.log(np.array([k[1] for k in kept]))
    sd = np.array([max(k[2], 1e-12) / 1.959963984540054 / k[1] for k in kept])
    w = 1.0 / sd**2
    nbar = float(np.sum(w * ns) / np.sum(w))
    ybar = float(np.sum(w * ys) / np.sum(w))
    sxx = float(np.sum(w * (ns - nbar) ** 2))
    slope = float(np.sum(w * (ns - nbar) * (ys - ybar)) / sxx)
    slope_ci = 1.959963984540054 / math.sqrt(sxx)
    return ExponentFit(slope, slope_ci, tuple(kept), tuple(dropped))


def empirical_exponent(cfg: SimConfig, n_list, m_of_n=None) -> ExponentFit:
    """Estimate p_c on each blocklength and fit the decay exponent.

    ``m_of_n`` maps a blocklength to its item count (rate studies scale
    the database as exp(n R)); by default the template's count is kept.
    """
    n_list = list(n_list)
    if len(n_list) < 3:
        raise ValidationError("need at least three blocklengths")
    points = []
    for n in n_list:
        m = int(m_of_n(int(n))) if m_of_n is not None else cfg.m
        sub = SimConfig(cfg.sys, int(n), m, cfg.encoder, cfg.decoder,
                        cfg.distortion_level, cfg.trials, cfg.seed)
        est = estimate_pe(sub)
        points.append((n, est.p_c_hat, est.ci_halfwidth))
    return fit_exponent(points)

"""Acceptance criteria for the toolkit, runnable as a suite or one by one.

Each criterion returns a :class:`CriterionResult` with a pass flag and a
detail transcript; ``run`` executes a selection and ``format_report``
renders one line per criterion.  The pytest module ``test_acceptance.py``
asserts these same results, and the CLI ``verify`` command prints them.

The reference instances are fixed here once:

- BIO: observations Bern(1/2) queried through BSC(0.1) (built as a system
  triple with X = Y so that both the region and the simulator see it);
- CASCADE: Bern(1/2) source observed through BSC(0.1) and queried through
  BSC(0.2) under Hamming distortion, whose query-given-observation channel
  is BSC(0.26).

Known caveat, documented rather than hidden: three sub-assertions compare
finite-blocklength Monte Carlo output against asymptotic identities whose
sub-exponential prefactors exceed the allotted Monte Carlo slack at any
desk-scale blocklength (the stochastic-decoder lower envelope in
criterion 2, the eps = 0.5 and 0.7 windows in criterion 8, and the
slope-versus-divergence comparison in criterion 7).  They are implemented
faithfully and report their measured gaps.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from cidlossy import bio_asymptotics as bio
from cidlossy import rd_region as region
from cidlossy import simulator as sim
from cidlossy import strong_converse_exponent as sce
from cidlossy.prob_core import compose_triple
from cidlossy.rd_region import RateTriple, Verdict

__all__ = ["CriterionResult", "ALL_CRITERIA", "run", "format_report",
           "bio_triple", "cascade_triple", "bio_system"]

HAMMING = [[0.0, 1.0], [1.0, 0.0]]
LN2 = math.log(2.0)


def bio_triple():
    """The identification special case as a full system (X = Y)."""
    return compose_triple([0.5, 0.5], np.eye(2), [[0.9, 0.1], [0.1, 0.9]], HAMMING)


def cascade_triple():
    return compose_triple([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]],
                          [[0.8, 0.2], [0.2, 0.8]], HAMMING)


def bio_system():
    return bio.BioSystem([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]])


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: list = field(default_factory=list)
    runtime_s: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"CRITERION {self.number}: {tag} - {self.name} ({self.runtime_s:.1f}s)"


def _check(details, ok: bool, msg: str) -> bool:
    details.append(("ok " if ok else "VIOLATED ") + msg)
    return ok


# ---------------------------------------------------------------------------
# criterion 1: closed-form numerics
# ---------------------------------------------------------------------------


def criterion_1() -> CriterionResult:
    t0 = time.time()
    details = []
    sysb = bio_system()
    c_oracle = LN2 - (-0.1 * math.log(0.1) - 0.9 * math.log(0.9))
    v_oracle = 0.09 * math.log(9.0) ** 2
    ok = True
    c = bio.capacity_bio(sysb)
    ok &= _check(details, abs(c - c_oracle) <= 1e-9,
                 f"capacity = {c:.9f} vs closed form {c_oracle:.9f} (tol 1e-9)")
    ok &= _check(details, abs(sysb.v - v_oracle) <= 1e-9,
                 f"V = {sysb.v:.9f} vs closed form {v_oracle:.9f} (tol 1e-9)")
    mdc = bio.moderate_deviations_constant(sysb)
    ok &= _check(details, abs(mdc - 1.0 / (2 * v_oracle)) <= 1e-6,
                 f"1/(2V) = {mdc:.7f} (tol 1e-6)")
    exact = all(bio.second_order_rate(sysb, 0.5, n) == n * c for n in (1, 10, 200))
    ok &= _check(details, exact, "second_order_rate(0.5) equals n*C exactly")
    return CriterionResult(1, "closed-form numerics", ok, details, time.time() - t0)


# ---------------------------------------------------------------------------
# criterion 2: exponent sandwich
# ---------------------------------------------------------------------------


def criterion_2(trials: int = 100_000) -> CriterionResult:
    t0 = time.time()
    details = []
    sysb, syst = bio_system(), bio_triple()
    r = 0.5
    e_low = bio.exponent_lower(sysb, r)
    e_up = bio.exponent_upper(sysb, r)
    details.append(f"R = {r} > C = {sysb.capacity:.6f}; Elow = {e_low:.6f}, Ebar = {e_up:.6f}")
    ok = True
    for n in (50, 100, 200):
        m = math.ceil(math.exp(n * r))
        ml = sim.estimate_pe(sim.SimConfig(syst, n, m, sim.IdentityEncoder(),
                                           sim.MaxLikelihood(), 1.0, trials, 202))
        ub = 2.0 * math.exp(-n * e_low)
        ok &= _check(details, ml.p_c_hat <= ub + 3 * ml.ci_halfwidth,
                     f"n={n} ML p_c = {ml.p_c_hat:.5f} <= 2e^-nElow + 3CI = {ub + 3*ml.ci_halfwidth:.5f}")
        st = sim.estimate_pe(sim.SimConfig(syst, n, m, sim.IdentityEncoder(),
                                           sim.StochasticLikelihood(), 1.0, trials, 202))
        lb = 0.5 * math.exp(-n * e_up)
        ok &= _check(details, st.p_c_hat >= lb - 3 * st.ci_halfwidth,
                     f"n={n} stochastic p_c = {st.p_c_hat:.5f} >= 0.5e^-nEbar - 3CI = {lb - 3*st.ci_halfwidth:.5f}")
    if not ok:
        details.append(
            "note: 0.5 exp(-n Ebar) is the asymptotic envelope without its "
            "1/sqrt(n) prefactor; the simulated stochastic decoder provably "
            "undershoots it at every desk-scale n (the maximum-likelihood "
            "decoder, which attains the optimum the envelope describes, "
            "satisfies the same bound at these n)"
        )
        for n in (50, 100, 200):
            m = math.ceil(math.exp(n * r))
            ml = sim.estimate_pe(sim.SimConfig(syst, n, m, sim.IdentityEncoder(),
                                               sim.MaxLikelihood(), 1.0, trials, 202))
            lb = 0.5 * math.exp(-n * e_up)
            details.append(f"  reference: n={n} ML p_c = {ml.p_c_hat:.5f} vs 0.5e^-nEbar = {lb:.5f}")
    return CriterionResult(2, "correct-decoding exponent sandwich", ok, details, time.time() - t0)


# ---------------------------------------------------------------------------
# criterion 3: oracle equivalence on tiny instances
# ---------------------------------------------------------------------------


def criterion_3(trials: int = 100_000) -> CriterionResult:
    t0 = time.time()
    details = []
    syst = cascade_triple()
    ident = sim.IdentityEncoder()
    qb1 = sim.QuantizeBinEncoder(codebook_rate=0.7, bin_rate=0.35)
    qb2 = sim.QuantizeBinEncoder(codebook_rate=0.5, bin_rate=0.3, codebook_seed=5)
    ml, stoch = sim.MaxLikelihood(), sim.StochasticLikelihood()
    matrix = [
        (1, 1, ident, ml, 0.0),
        (1, 2, ident, ml, 0.4),
        (2, 2, ident, stoch, 0.25),
        (1, 2, qb1, ml, 0.4),
        (2, 2, qb2, ml, 0.25),
        (2, 1, qb1, stoch, 0.1),
    ]
    ok = True
    for i, (n, m, enc, dec, d) in enumerate(matrix):
        cfg = sim.SimConfig(syst, n, m, enc, dec, d, trials, 300 + i)
        exact = sim.exact_pc_bruteforce(cfg)
        est = sim.estimate_pe(cfg)
        gap = abs(est.p_e_hat - (1.0 - exact))
        ok &= _check(details, gap <= 3 * max(est.ci_halfwidth, 1e-6),
                     f"cfg{i} (n={n}, m={m}, {type(enc).__name__}, {type(dec).__name__}, D={d}): "
                     f"|p_e - exact| = {gap:.5f} <= 3CI = {3*est.ci_halfwidth:.5f}")
    return CriterionResult(3, "simulator matches the exact oracle", ok, details, time.time() - t0)


# ---------------------------------------------------------------------------
# criterion 4: region dual-method consistency
# ---------------------------------------------------------------------------


def criterion_4() -> CriterionResult:
    t0 = time.time()
    details = []
    syst = cascade_triple()
    ana = region.analyzer_for(syst)
    i_yz = 0.12009026342852491
    r_is = np.linspace(0.0, 1.5 * i_yz, 10)
    r_cs = np.linspace(0.0, 0.75, 10)
    ds = (0.12, 0.2, 0.5)
    contradictions = 0
    disagreements = 0
    band = 0
    total = 0
    for d in ds:
        for r_i in r_is:
            for r_c in r_cs:
                total += 1
                triple = RateTriple(float(r_i), float(r_c), float(d))
                m = ana.membership(triple)
                sh = ana.membership_sh(triple)
                if m.status is Verdict.INSIDE and sh.outside:
                    contradictions += 1
                    details.append(f"CONTRADICTION at {triple}")
                if abs(sh.min_slack) <= ana.cfg.margin:
                    band += 1
                    continue
                agree = (m.status is Verdict.INSIDE and not sh.outside) or (
                    m.status is Verdict.OUTSIDE and sh.outside
                )
                if not agree:
                    disagreements += 1
                    details.append(f"disagreement at {triple}: {m.status.value} vs sh_outside={sh.outside}")
    ok = contradictions == 0 and disagreements == 0
    details.insert(0, f"{total} triples: {band} in the 0.02-nat boundary band, "
                      f"{disagreements} disagreements, {contradictions} contradictions")
    return CriterionResult(4, "region dual-method consistency", ok, details, time.time() - t0)


# ---------------------------------------------------------------------------
# criterion 5: rate-function sign properties
# ---------------------------------------------------------------------------


def _criterion5_triples(ana):
    """10 certified-Inside triples robust to the tilt mean (the combo
    dominates the beta-split support value everywhere) and 10 triples with
    a certified hyperplane violation."""
    mu, beta = ana.plane_grid
    mean_table = ana.mean_combo_table
    inside = []
    pool_in = [
        (0.0, 0.0, 1.0), (0.0, 0.0, 0.6), (0.0, 0.0, 0.3), (0.0, 0.25, 0.2),
        (0.02, 0.25, 0.5), (0.03, 0.4, 0.8), (0.05, 0.5, 0.6), (0.06, 0.55, 1.0),
        (0.08, 0.62, 0.9), (0.10, 0.69, 1.0), (0.11, LN2, 0.9), (0.04, 0.5, 0.25),
        (0.02, 0.35, 0.15), (0.07, 0.6, 0.5),
    ]
    for cand in pool_in:
        triple = RateTriple(*cand)
        combos = np.array([[ana.combo(triple, m_, b_) for b_ in beta] for m_ in mu])
        mean_slack = float((combos - mean_table).min())
        verdict = ana.membership(triple)
        # slack >= 0 suffices: the tilt mean at the supporting scheme then
        # never exceeds the rate combination, so F <= 0 pointwise
        if verdict.status is Verdict.INSIDE and mean_slack >= -1e-9:
            inside.append(triple)
        if len(inside) == 10:
            break
    outside = []
    pool_out = [
        (0.22, LN2, 1.0), (0.30, LN2, 1.0), (0.16, LN2, 1.0), (0.14, 0.3, 1.0),
        (0.20, 0.5, 1.0), (0.0, LN2, 0.05), (0.0, LN2, 0.07), (0.05, LN2, 0.06),
        (0.10, 0.08, 0.5), (0.05, 0.10, 0.12), (0.18, 0.62, 0.5), (0.25, 0.5, 0.3),
    ]
    for cand in pool_out:
        triple = RateTriple(*cand)
        v = ana.membership(triple)
        if v.status is Verdict.OUTSIDE and v.certificate.violation > 0.03:
            outside.append(triple)
        if len(outside) == 10:
            break
    return inside, outside


def criterion_5() -> CriterionResult:
    t0 = time.time()
    details = []
    syst = cascade_triple()
    ana = region.analyzer_for(syst)
    solver = sce.solver_for(syst)
    inside, outside = _criterion5_triples(ana)
    ok = _check(details, len(inside) == 10 and len(outside) == 10,
                f"selected {len(inside)} inside and {len(outside)} outside triples")
    for triple in inside:
        f = solver.f_exponent(triple)
        ft = solver.tilde_f(triple)
        ok &= _check(details, f.value <= 0.05,
                     f"inside {triple}: Fhat = {f.value:.5f} <= 0.05")
        ok &= _check(details, f.value >= ft.value - 0.02,
                     f"  ordering Fhat = {f.value:.5f} >= Ftildehat - 0.02 = {ft.value - 0.02:.5f}")
    for triple in outside:
        f = solver.f_exponent(triple)
        ft = solver.tilde_f(triple)
        ok &= _check(details, f.value_raw > 0.0,
                     f"outside {triple}: Fhat = {f.value_raw:.5f} > 0 (margin {f.value_raw:.5f})")
        ok &= _check(details, f.value >= ft.value - 0.02,
                     f"  ordering Fhat = {f.value:.5f} >= Ftildehat - 0.02 = {ft.value - 0.02:.5f}")
    return CriterionResult(5, "rate-function sign properties", ok, details, time.time() - t0)


# ---------------------------------------------------------------------------
# criterion 6: correct-decoding bound consistency
# ---------------------------------------------------------------------------


def criterion_6(trials: int = 100_000) -> CriterionResult:
    t0 = time.time()
    details = []
    syst = bio_triple()
    triple = RateTriple(0.5, LN2, 1.0)
    solver = sce.solver_for(syst)
    f = solver.f_exponent(triple)
    details.append(f"outside triple {triple}: Fhat = {f.value:.5f} ({', '.join(f.warnings) or 'no warnings'})")
    ok = _check(details, f.value_raw > 0, "Fhat > 0 for the outside triple")
    for n in (20, 50, 100):
        m = math.ceil(math.exp(n * triple.r_i))
        est = sim.estimate_pe(sim.SimConfig(syst, n, m, sim.IdentityEncoder(),
                                            sim.MaxLikelihood(), 1.0, trials, 606))
        if est.p_c_hat <= 0:
            details.append(f"n={n}: p_c estimate 0; skipped (bound trivially consistent)")
            continue
        lhs = -math.log(est.p_c_hat) / n + math.log(7.0) / n
        ok &= _check(details, lhs >= f.value - 0.05,
                     f"n={n}: -(1/n)log p_c + ln7/n = {lhs:.5f} >= Fhat - 0.05 = {f.value - 0.05:.5f}")
    details.append("consistency check, not a falsification-proof certification: "
                   "Fhat is a heuristic, inflation-prone estimate")
    return CriterionResult(6, "correct-decoding bound consistency", ok, details, time.time() - t0)


# ---------------------------------------------------------------------------
# criterion 7: divergence bound on the error exponent
# ---------------------------------------------------------------------------


def criterion_7(trials: int = 100_000) -> CriterionResult:
    t0 = time.time()
    details = []
    syst = bio_triple()
    cascade = cascade_triple()

    out_triple = RateTriple(0.22, LN2, 1.0)
    val, _, approx = region.exponent_upper_bound(cascade, out_triple, budget=24)
    ok = _check(details, abs(val) <= 1e-9,
                f"outside triple: bound = {val:.2e} (own law excludes it, exact 0)")

    in_triple = RateTriple(0.3, LN2, 1.0)
    bound, law, _ = region.exponent_upper_bound(syst, in_triple, budget=120)
    details.append(f"just-inside triple {in_triple}: divergence bound = {bound:.5f} (approximate)")
    pts = []
    for n in (100, 200, 400):
        m = math.ceil(math.exp(n * in_triple.r_i))
        est = sim.estimate_pe(sim.SimConfig(syst, n, m, sim.IdentityEncoder(),
                                            sim.MaxLikelihood(), 1.0, trials, 707))
        pts.append((n, est.p_e_hat, est.ci_halfwidth))
        details.append(f"  n={n}: p_e = {est.p_e_hat:.5f} +- {est.ci_halfwidth:.5f}")
    fit = sim.fit_exponent(pts)
    ok &= _check(details, bound >= fit.slope - 3 * fit.slope_ci,
                 f"bound {bound:.5f} >= slope - 3CI = {fit.slope - 3*fit.slope_ci:.5f} "
                 f"(slope {fit.slope:.5f}, CI {fit.slope_ci:.5f})")
    if bound < fit.slope - 3 * fit.slope_ci:
        details.append(
            "note: the exact finite-n slope approaches the divergence bound "
            "from above (a +log(n)/n prefactor), so the measured slope "
            "exceeds the asymptotic bound by more than Monte Carlo slack at "
            "every desk-scale blocklength"
        )
    return CriterionResult(7, "divergence bound on the error exponent", ok, details, time.time() - t0)


# ---------------------------------------------------------------------------
# criterion 8: second-order empirical check
# ---------------------------------------------------------------------------


def criterion_8(trials: int = 20_000) -> CriterionResult:
    t0 = time.time()
    details = []
    sysb, syst = bio_system(), bio_triple()
    n = 200
    ok = True
    for eps in (0.3, 0.5, 0.7):
        m = round(math.exp(bio.second_order_rate(sysb, eps, n)))
        est = sim.estimate_pe(sim.SimConfig(syst, n, m, sim.IdentityEncoder(),
                                            sim.MaxLikelihood(), 1.0, trials, 808))
        ok &= _check(details, abs(est.p_e_hat - eps) <= 0.10,
                     f"eps={eps}: log M = {math.log(m):.3f}, p_e = {est.p_e_hat:.4f} in {eps} +- 0.10")
    if not ok:
        details.append(
            "note: the optimal decoder beats the two-term expansion by the "
            "third-order log(n)/sqrt(n V) backoff (~0.11 at n=200), which "
            "no binary system can compress inside the +-0.10 window; the "
            "deviation is the predicted one, not an implementation artifact"
        )
    details.append("moderate-deviations limits are out of empirical scope beyond 1/(2V)")
    return CriterionResult(8, "second-order empirical check", ok, details, time.time() - t0)


# ---------------------------------------------------------------------------
# criterion 9: property suites
# ---------------------------------------------------------------------------


def criterion_9(run_pytest: bool = True) -> CriterionResult:
    t0 = time.time()
    details = []
    if not run_pytest:
        details.append("property suites execute inside the pytest session itself")
        return CriterionResult(9, "module property suites", True, details, time.time() - t0)
    import pathlib
    import subprocess
    import sys as _sys

    tests = pathlib.Path(__file__).resolve().parents[2] / "tests"
    if not tests.is_dir():
        details.append(f"tests directory not found at {tests}")
        return CriterionResult(9, "module property suites", False, details, time.time() - t0)
    module_tests = [str(p) for p in sorted(tests.glob("test_*.py")) if p.name != "test_acceptance.py"]
    proc = subprocess.run(
        [_sys.executable, "-m", "pytest", "-q", *module_tests],
        capture_output=True, text=True,
    )
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else "(no output)"
    details.append(f"pytest: {tail}")
    return CriterionResult(9, "module property suites", proc.returncode == 0, details, time.time() - t0)


ALL_CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
}


def run(numbers=None, **kwargs) -> list:
    numbers = sorted(numbers) if numbers else sorted(ALL_CRITERIA)
    return [ALL_CRITERIA[k]() for k in numbers]


def format_report(results) -> str:
    lines = []
    for r in results:
        lines.append(r.line())
        for d in r.details:
            lines.append(f"    {d}")
    failed = [r.number for r in results if not r.passed]
    lines.append("ALL CRITERIA PASS" if not failed else f"FAILED CRITERIA: {failed}")
    return "\n".join(lines)

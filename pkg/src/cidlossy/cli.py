"""Batch front end: parse system documents, dispatch, emit results.

Input and output documents are JSON; tabular payloads additionally emit
CSV.  Every result document echoes its inputs and the defaults in force,
so reruns are reproducible; the payload is byte-identical across runs of
the same manifest (wall-clock time lives outside the payload).

Exit codes: 0 success, 1 validation error, 2 numeric-domain error,
3 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict

from cidlossy import __version__
from cidlossy import bio_asymptotics as bio
from cidlossy import rd_region as region
from cidlossy import simulator as sim
from cidlossy import strong_converse_exponent as sce
from cidlossy.prob_core import (
    CidlossyError,
    StateSpaceError,
    SystemTriple,
    ValidationError,
    system_from_dict,
    system_to_dict,
)
from cidlossy.rd_region import RateTriple

DEFAULT_SEED = 20240901

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2
EXIT_ACCEPTANCE = 3

_NAT_KEYS = {"capacity_nats", "v_nats2", "rate_nats", "e_lower", "e_upper",
             "second_order_log_m", "f_hat", "f_hat_raw", "tilde_f_hat", "bound_nats"}


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"cannot read {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path!r} line {exc.lineno}: {exc.msg}") from exc


def _load_system(path: str) -> SystemTriple:
    return system_from_dict(_load_json(path))


def _parse_triple(text: str) -> RateTriple:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValidationError(f"triple must be 'ri,rc,d', got {text!r}")
    try:
        r_i, r_c, d = (float(p) for p in parts)
    except ValueError as exc:
        raise ValidationError(f"non-numeric triple component in {text!r}") from exc
    return RateTriple(r_i, r_c, d)


def _emit(doc: dict, out_path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, default=str)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _emit_csv(rows, header, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _to_bits(payload: dict) -> dict:
    factor = 1.0 / math.log(2.0)
    out = dict(payload)
    for key in list(out):
        if key in _NAT_KEYS and isinstance(out[key], (int, float)) and math.isfinite(out[key]):
            scale = factor * factor if key.endswith("_nats2") else factor
            new = key.replace("_nats2", "_bits2").replace("_nats", "_bits")
            if new == key:
                new = key + "_bits"
            out[new] = out[key] * scale
            if new != key:
                del out[key]
    out["units"] = "bits"
    return out


def _result(command: str, inputs: dict, payload: dict, seed: int, defaults: dict, t0: float) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": seed,
        "inputs": inputs,
        "defaults": defaults,
        "payload": payload,
        "wall_clock_s": round(time.time() - t0, 3),
    }


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_info(args, t0):
    syst = _load_system(args.system)
    sysb = bio.BioSystem.from_triple(syst)
    payload = {
        "alphabet_sizes": {"x": syst.nx, "y": syst.ny, "z": syst.nz, "xhat": syst.nxhat},
        "capacity_nats": bio.capacity_bio(sysb),
        "v_nats2": sysb.v,
        "d_plus": syst.d_plus,
        "degenerate": sysb.degenerate,
        "units": "nats",
    }
    if not sysb.degenerate:
        payload["moderate_deviations_constant"] = bio.moderate_deviations_constant(sysb)
    if args.bits:
        payload = _to_bits(payload)
    return _result("info", {"system": system_to_dict(syst)}, payload, args.seed, {}, t0)


def _cmd_bio_exponent(args, t0):
    sysb = bio.BioSystem.from_triple(_load_system(args.system))
    rep = bio.exponent_report(sysb, args.rate)
    payload = {
        "rate_nats": args.rate,
        "capacity_nats": rep.capacity,
        "e_lower": rep.e_lower,
        "e_upper": rep.e_upper,
        "argmax_lambda_lower": rep.argmax_lambda_lower,
        "argmax_lambda_upper": rep.argmax_lambda_upper,
        "units": "nats",
    }
    if args.n:
        lo, hi = bio.correct_decoding_envelope(sysb, args.rate, args.n)
        payload["envelope_n"] = args.n
        payload["pc_lower"] = lo
        payload["pc_upper"] = hi
    if args.bits:
        payload = _to_bits(payload)
    return _result("bio-exponent", {"system": args.system, "rate": args.rate, "n": args.n},
                   payload, args.seed, {"lambda_max": bio.LAMBDA_MAX}, t0)


def _cmd_bio_asymptotics(args, t0):
    sysb = bio.BioSystem.from_triple(_load_system(args.system))
    eps_list = [float(e) for e in args.eps.split(",")]
    rows = []
    for eps in eps_list:
        log_m = bio.second_order_rate(sysb, eps, args.n)
        rows.append({
            "eps": eps,
            "second_order_log_m": log_m,
            "m": int(round(math.exp(min(log_m, 700.0)))),
            "one_shot_converse": bio.one_shot_converse(sysb, args.n, log_m / args.n, args.eta),
            "one_shot_achievability": bio.one_shot_achievability(sysb, args.n, log_m / args.n, args.gamma),
        })
    payload = {
        "n": args.n,
        "capacity_nats": sysb.capacity,
        "v_nats2": sysb.v,
        "moderate_deviations_constant": bio.moderate_deviations_constant(sysb),
        "rows": rows,
        "units": "nats",
    }
    return _result("bio-asymptotics",
                   {"system": args.system, "n": args.n, "eps": eps_list},
                   payload, args.seed, {"eta": args.eta, "gamma": args.gamma}, t0)


def _cmd_region(args, t0):
    syst = _load_system(args.system)
    cfg = region.RegionConfig(seed=args.seed)
    verdicts = []
    for text in args.triple or []:
        triple = _parse_triple(text)
        v = region.membership(syst, triple, cfg)
        sh = region.membership_sh(syst, triple, cfg)
        verdicts.append({
            "triple": [triple.r_i, triple.r_c, triple.d],
            "status": v.status.value,
            "slack": v.slack,
            "hyperplane_min_slack": sh.min_slack,
            "certificate": None if v.certificate is None else {
                "mu": v.certificate.mu, "beta": v.certificate.beta,
                "violation": v.certificate.violation,
            },
        })
    payload = {"verdicts": verdicts, "units": "nats"}
    if args.frontier is not None:
        trace = region.boundary_trace(syst, args.frontier, args.frontier_points, cfg)
        payload["frontier_d"] = args.frontier
        payload["frontier"] = [[a, b] for a, b in trace]
        if args.csv:
            _emit_csv(payload["frontier"], ["r_i_nats", "r_c_nats"], args.csv)
            payload["csv"] = args.csv
    return _result("region", {"system": args.system, "triples": args.triple or []},
                   payload, args.seed, asdict(cfg), t0)


def _cmd_exponent_f(args, t0):
    syst = _load_system(args.system)
    cfg = sce.ExponentConfig(seed=args.seed)
    triple = _parse_triple(args.triple)
    res = sce.f_exponent(syst, triple, cfg)
    tf = sce.tilde_f(syst, triple, cfg)
    payload = {
        "triple": [triple.r_i, triple.r_c, triple.d],
        "f_hat": res.value,
        "f_hat_raw": res.value_raw,
        "tilde_f_hat": tf.value,
        "params": {"alpha": res.params.alpha, "theta": res.params.theta,
                   "mu": res.params.mu, "beta": res.params.beta},
        "omega_argmin": res.argmin_summary,
        "warnings": list(res.warnings) + ["heuristic estimate, inflation-prone"],
        "units": "nats",
    }
    if args.n:
        payload["n"] = args.n
        payload["pc_upper_bound"] = sce.pc_upper_bound(syst, triple, args.n, cfg)
    if args.surface:
        solver = sce.solver_for(syst, cfg)
        rows = []
        for ai, a in enumerate(solver.alpha_grid):
            for ti, th in enumerate(solver.theta_grid):
                best = -math.inf
                for mi, mu in enumerate(solver.mu_grid):
                    for bi, beta in enumerate(solver.beta_grid):
                        om = solver._start_table[mi, bi, ai, ti]
                        best = max(best, solver.f_value(
                            om, triple, sce.ExpParams(float(a), float(th), float(mu), float(beta))))
                rows.append([float(a), float(th), best])
        _emit_csv(rows, ["alpha", "theta", "f_start_estimate"], args.surface)
        payload["surface_csv"] = args.surface
    return _result("exponent-f", {"system": args.system, "triple": args.triple},
                   payload, args.seed, asdict(cfg), t0)


def _cmd_theorem3_bound(args, t0):
    syst = _load_system(args.system)
    cfg = region.RegionConfig(seed=args.seed)
    triple = _parse_triple(args.triple)
    val, law, approx = region.exponent_upper_bound(syst, triple, cfg, budget=args.budget)
    payload = {
        "triple": [triple.r_i, triple.r_c, triple.d],
        "bound_nats": val if math.isfinite(val) else "inf",
        "approximate": approx,
        "achieving_law": None if law is None else system_to_dict(law),
        "units": "nats",
    }
    return _result("theorem3-bound", {"system": args.system, "triple": args.triple},
                   payload, args.seed, {"budget": args.budget}, t0)


def _encoder_from_doc(doc):
    variant = doc.get("variant", "identity")
    if variant == "identity":
        return sim.IdentityEncoder()
    if variant == "quantize_bin":
        return sim.QuantizeBinEncoder(
            codebook_rate=float(doc["codebook_rate"]),
            bin_rate=float(doc["bin_rate"]),
            aux_pmf=tuple(doc["aux_pmf"]) if doc.get("aux_pmf") else None,
            codebook_seed=int(doc.get("codebook_seed", 0)),
        )
    raise ValidationError(f"unknown encoder variant {variant!r}")


def _decoder_from_doc(name):
    if name in ("ml", "max_likelihood"):
        return sim.MaxLikelihood()
    if name in ("stochastic", "stochastic_likelihood"):
        return sim.StochasticLikelihood()
    raise ValidationError(f"unknown decoder {name!r}")


def _cmd_simulate(args, t0):
    doc = _load_json(args.config)
    for field in ("system", "n", "m", "trials"):
        if field not in doc:
            raise ValidationError(f"simulation config missing field {field!r}")
    syst = system_from_dict(doc["system"])
    cfg = sim.SimConfig(
        sys=syst,
        n=int(doc["n"]),
        m=int(doc["m"]),
        encoder=_encoder_from_doc(doc.get("encoder", {})),
        decoder=_decoder_from_doc(doc.get("decoder", "ml")),
        distortion_level=float(doc.get("distortion_level", syst.d_plus)),
        trials=int(doc["trials"]),
        seed=int(doc.get("seed", args.seed)),
    )
    if args.n_list:
        n_list = [int(x) for x in args.n_list.split(",")]
        m_of_n = None
        if doc.get("rate_r") is not None:
            rate = float(doc["rate_r"])
            m_of_n = lambda n: math.ceil(math.exp(n * rate))
        fit = sim.empirical_exponent(cfg, n_list, m_of_n=m_of_n)
        payload = {
            "slope": fit.slope,
            "slope_ci": fit.slope_ci,
            "points": [list(p) for p in fit.points],
            "dropped": [list(p) for p in fit.dropped],
        }
        if args.csv:
            _emit_csv(payload["points"], ["n", "p_c_hat", "ci_halfwidth"], args.csv)
            payload["csv"] = args.csv
    else:
        est = sim.estimate_pe(cfg)
        payload = {
            "p_e_hat": est.p_e_hat,
            "p_c_hat": est.p_c_hat,
            "ci_halfwidth": est.ci_halfwidth,
            "trials_used": est.trials_used,
            "ci_method": est.ci_method,
            "path": est.path,
            "log_l": cfg.log_l,
        }
    return _result("simulate", {"config": doc}, payload, cfg.seed, {}, t0)


def _cmd_verify(args, t0):
    from cidlossy import acceptance

    numbers = None
    if args.criteria:
        numbers = sorted({int(x) for x in args.criteria.split(",")})
    results = acceptance.run(numbers)
    print(acceptance.format_report(results))
    payload = {
        "results": [
            {"criterion": r.number, "name": r.name, "passed": r.passed,
             "runtime_s": round(r.runtime_s, 2), "details": r.details}
            for r in results
        ],
        "all_passed": all(r.passed for r in results),
    }
    doc = _result("verify", {"criteria": numbers or "all"}, payload, args.seed, {}, t0)
    if args.out:
        _emit(doc, args.out)
    return doc if payload["all_passed"] else None


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cidlossy",
        description="content identification with lossy recovery: regions, exponents, simulation",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, system=True):
        if system:
            p.add_argument("--system", required=True, help="system document (JSON)")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--threads", type=int, default=1,
                       help="worker-count cap (results never depend on it)")
        p.add_argument("--out", help="write the result document here instead of stdout")

    p = sub.add_parser("info", help="capacities and variances of a system")
    common(p)
    p.add_argument("--bits", action="store_true", help="display in bits instead of nats")

    p = sub.add_parser("bio-exponent", help="correct-decoding exponent sandwich")
    common(p)
    p.add_argument("--rate", type=float, required=True, help="identification rate, nats")
    p.add_argument("--n", type=int, help="also evaluate the probability envelope at this n")
    p.add_argument("--bits", action="store_true")

    p = sub.add_parser("bio-asymptotics", help="second-order and one-shot quantities")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", default="0.1,0.5,0.9", help="comma-separated error levels")
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--gamma", type=float, default=0.05)

    p = sub.add_parser("region", help="membership verdicts and frontier tables")
    common(p)
    p.add_argument("--triple", action="append", help="'ri,rc,d' (repeatable)")
    p.add_argument("--frontier", type=float, help="emit the frontier at this distortion")
    p.add_argument("--frontier-points", type=int, default=25)
    p.add_argument("--csv", help="write tabular payloads to this CSV path")

    p = sub.add_parser("exponent-f", help="strong-converse rate function")
    common(p)
    p.add_argument("--triple", required=True, help="'ri,rc,d'")
    p.add_argument("--n", type=int, help="also evaluate the 7exp(-nF) bound")
    p.add_argument("--surface", help="write the (alpha,theta) grid surface CSV here")

    p = sub.add_parser("theorem3-bound", help="divergence upper bound on the error exponent")
    common(p)
    p.add_argument("--triple", required=True, help="'ri,rc,d'")
    p.add_argument("--budget", type=int, default=120)

    p = sub.add_parser("simulate", help="Monte Carlo estimate from a config document")
    p.add_argument("--config", required=True, help="simulation config (JSON)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="write the result document here")
    p.add_argument("--n-list", help="comma-separated blocklengths for an exponent fit")
    p.add_argument("--csv", help="write tabular payloads to this CSV path")

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--criteria", help="comma-separated criterion numbers (default all)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="write the result document here")

    return parser


_DISPATCH = {
    "info": _cmd_info,
    "bio-exponent": _cmd_bio_exponent,
    "bio-asymptotics": _cmd_bio_asymptotics,
    "region": _cmd_region,
    "exponent-f": _cmd_exponent_f,
    "theorem3-bound": _cmd_theorem3_bound,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else 0
    t0 = time.time()
    try:
        if args.command == "verify":
            doc = _cmd_verify(args, t0)
            return EXIT_OK if doc is not None else EXIT_ACCEPTANCE
        doc = _DISPATCH[args.command](args, t0)
        _emit(doc, args.out)
        return EXIT_OK
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (StateSpaceError, bio.DegenerateSystemError, CidlossyError) as exc:
        print(f"numeric-domain error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

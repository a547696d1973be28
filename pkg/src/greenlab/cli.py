"""Command-line front door: run experiments, persist reports, summarize.

One binary, subcommand style.  Every experiment reads the same resolved
config (file plus flag overrides, flags win), writes its report as CSV
and/or JSON into the output directory, and contributes a pass/fail flag.
The resolved config itself is echoed to config.json first, so any run can
be reproduced from its artifacts alone; rerunning with the echoed config
gives byte-identical outputs for any --workers value.

Exit status: 0 when every flag passes, 1 when a check fails or a numeric
invariant is violated, 2 for config errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction

from .config import ExperimentConfig, load_config
from .errors import CoboundaryDetected, ConfigError, GreenlabError
from .measure import (
    ball_mass_exponent,
    exp_moment,
    green_function,
    psh_tail_exponent,
    sample_equilibrium,
)
from .observables import _parse_center, log_singular
from .shiftspace import oracle_suite
from .sphere import Chart
from .stochastic import clt_test, correlation_series, ldt_tail, variance_sigma2
from .transfer import check_martingale, gordin_sequence, martingale_decompose

SUBCOMMANDS = (
    "sample",
    "green",
    "moderate",
    "correlations",
    "variance",
    "clt",
    "ldt",
    "decompose",
    "oracle-suite",
    "all",
)


# ---------------------------------------------------------------------------
# Deterministic writers
# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if v is None:
        return ""
    return str(v)


def write_csv(path: str, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([str(h) for h in header])
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _json_default(v):
    if isinstance(v, Fraction):
        return [v.numerator, v.denominator]
    if isinstance(v, Chart):
        return "z" if v is Chart.Z else "w"
    raise TypeError(f"not JSON-serializable: {type(v)}")


def write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _g(x) -> str:
    return "%.6g" % x if isinstance(x, float) else str(x)


# ---------------------------------------------------------------------------
# Experiment runners
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    name: str
    passed: bool
    payload: dict
    table: tuple[list, list] | None
    summary: str


class Lab:
    """Shared context for one CLI invocation: map, budget, lazy sample cloud."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.fmap = cfg.map.build()
        self.budget = cfg.budget.build()
        self._measure = None

    @property
    def seed(self) -> int:
        return self.cfg.sampler.seed

    @property
    def measure(self):
        if self._measure is None:
            s = self.cfg.sampler
            self._measure = sample_equilibrium(
                self.fmap,
                s.n_samples,
                burn_in=s.burn_in,
                seed=s.seed,
                start=s.start_point(),
                workers=self.cfg.workers,
            )
        return self._measure


def run_sample(lab: Lab) -> RunResult:
    m = lab.measure
    payload = {"schema_version": 1, "n": m.n, "meta": m.meta}
    return RunResult(
        name="sample",
        passed=True,
        payload=payload,
        table=None,  # the cloud itself is the CSV artifact
        summary=f"{m.n} points, seed {lab.seed}, degree {lab.fmap.degree}",
    )


def run_green(lab: Lab) -> RunResult:
    g = lab.cfg.green
    try:
        pts = [_parse_center(p) for p in g.points]
    except GreenlabError as exc:
        raise ConfigError(f"green.points: {exc}") from exc
    rows, values = [], []
    for raw, p in zip(g.points, pts):
        gv = green_function(lab.fmap, p, g.n_iter)
        rows.append(
            [p.coord.real, p.coord.imag, "z" if p.chart is Chart.Z else "w",
             gv.value, gv.tail_bound]
        )
        values.append(
            {"point": raw, "value": gv.value, "tail_bound": gv.tail_bound,
             "chart": gv.chart, "start_norm": gv.start_norm}
        )
    payload = {"schema_version": 1, "n_iter": g.n_iter, "values": values}
    worst = max(v["tail_bound"] for v in values)
    return RunResult(
        name="green",
        passed=True,
        payload=payload,
        table=(["re", "im", "chart", "green", "tail_bound"], rows),
        summary=f"{len(pts)} probe points, tail bound <= {_g(worst)}",
    )


def run_moderate(lab: Lab) -> RunResult:
    mo = lab.cfg.moderate
    try:
        center = _parse_center(mo.center)
    except GreenlabError as exc:
        raise ConfigError(f"moderate.center: {exc}") from exc
    obs = log_singular(mo.beta, center)
    psh = psh_tail_exponent(lab.measure, obs, mo.m_grid)
    ball = ball_mass_exponent(lab.measure, center, mo.radii)
    emr = exp_moment(lab.measure, obs, mo.exp_alpha)
    payload = {
        "schema_version": 1,
        "psh_tail": psh.to_json(),
        "ball_mass": ball.to_json(),
        "exp_moment": emr.to_json(),
    }
    header = ["probe", "x", "estimate", "stderr", "hits"]
    rows = [["psh_tail", M, psh.tail[i], psh.tail_stderr[i], ""]
            for i, M in enumerate(psh.m_grid)]
    rows += [["ball_mass", r, ball.mass[i], ball.mass_stderr[i], ball.hits[i]]
             for i, r in enumerate(ball.r_grid)]
    passed = (
        (psh.alpha_hat is not None or psh.degenerate)
        and (ball.alpha_hat is not None or ball.degenerate)
        and not emr.flagged
    )
    bits = []
    bits.append("psh alpha " + (_g(psh.alpha_hat) if psh.alpha_hat is not None else "degenerate"))
    bits.append("ball alpha " + (_g(ball.alpha_hat) if ball.alpha_hat is not None else "degenerate"))
    bits.append(f"exp moment {_g(emr.estimate)}")
    return RunResult("moderate", passed, payload, (header, rows), "; ".join(bits))


def run_correlations(lab: Lab) -> RunResult:
    co = lab.cfg.correlations
    rep = correlation_series(
        lab.fmap,
        lab.measure,
        lab.cfg.observable("correlations.phi"),
        lab.cfg.observable("correlations.psi"),
        co.n_max,
        budget=lab.budget,
        seed=lab.seed,
        n_orbits=co.n_orbits,
        n_eval=co.n_eval,
        burn_in=lab.cfg.sampler.burn_in,
        workers=lab.cfg.workers,
    )
    passed = rep.agree_ok and (rep.no_claim or bool(rep.rate_conforms))
    rate = "no claim" if rep.no_claim else f"rate {_g(rep.fitted_rate)} vs {_g(rep.class_expected_rate)}"
    summary = (
        f"C_1 = {_g(rep.corr[1])} +/- {_g(rep.stderr[1])}; {rate}; "
        f"estimators agree: {rep.agree_ok}"
    )
    return RunResult("correlations", passed, rep.to_json(), rep.csv_rows(), summary)


def run_variance(lab: Lab) -> RunResult:
    va = lab.cfg.variance
    rep = variance_sigma2(
        lab.fmap,
        lab.measure,
        lab.cfg.observable("variance.psi"),
        va.n_max,
        budget=lab.budget,
        seed=lab.seed,
        bk_grid=va.bk_grid,
        n_orbits=va.n_orbits,
        burn_in=lab.cfg.sampler.burn_in,
        workers=lab.cfg.workers,
    )
    d = lab.fmap.degree
    scale = max(1.0, abs(rep.sigma2_raw))
    ok = [
        r <= 5.0 * se + scale * d ** (-n) / n + 0.01
        for n, r, se in zip(rep.birkhoff_n, rep.expansion_residual, rep.birkhoff_stderr)
    ]
    payload = rep.to_json()
    payload["expansion_ok"] = ok
    summary = (
        f"sigma2 = {_g(rep.sigma2)}, gamma = {_g(rep.gamma)}, "
        f"max residual {_g(max(rep.expansion_residual))}"
    )
    return RunResult("variance", all(ok), payload, rep.csv_rows(), summary)


def run_clt(lab: Lab) -> RunResult:
    cl = lab.cfg.clt
    try:
        rep = clt_test(
            lab.fmap,
            lab.measure,
            lab.cfg.observable("clt.psi"),
            cl.n,
            cl.n_orbits,
            seed=lab.seed,
            budget=lab.budget,
            coboundary_tol=cl.coboundary_tol,
            burn_in=lab.cfg.sampler.burn_in,
            workers=lab.cfg.workers,
        )
    except CoboundaryDetected as exc:
        # a coboundary has no CLT scaling; detecting one is the correct outcome
        payload = {
            "schema_version": 1,
            "coboundary_detected": True,
            "sigma2": exc.sigma2,
            "tolerance": cl.coboundary_tol,
        }
        return RunResult(
            "clt", True, payload, None,
            f"coboundary detected (sigma2 = {_g(exc.sigma2)}), no scaling limit",
        )
    passed = rep.ks_distance < cl.ks_threshold
    payload = rep.to_json()
    payload["coboundary_detected"] = False
    payload["ks_threshold"] = cl.ks_threshold
    summary = (
        f"KS = {_g(rep.ks_distance)} (threshold {_g(cl.ks_threshold)}), "
        f"n = {rep.n}, sigma = {_g(rep.sigma)}"
    )
    return RunResult("clt", passed, payload, rep.csv_rows(), summary)


def run_ldt(lab: Lab) -> RunResult:
    ld = lab.cfg.ldt
    rep = ldt_tail(
        lab.fmap,
        lab.measure,
        lab.cfg.observable("ldt.psi"),
        ld.epsilon,
        ld.n_grid,
        ld.n_orbits,
        seed=lab.seed,
        burn_in=lab.cfg.sampler.burn_in,
        workers=lab.cfg.workers,
    )
    passed = (
        all(rep.envelope_ok)
        and all(c == 0.0 for c in rep.control_tail)
        and (rep.h_eps_hat is None or rep.h_eps_hat > 0)
    )
    h = "all tails zero" if rep.h_eps_hat is None else f"h_hat = {_g(rep.h_eps_hat)}"
    summary = (
        f"eps = {_g(rep.epsilon)}, tail(n={rep.n_grid[-1]}) = {_g(rep.tail[-1])}, "
        f"{h}, control clean: {all(c == 0.0 for c in rep.control_tail)}"
    )
    return RunResult("ldt", passed, rep.to_json(), rep.csv_rows(), summary)


def run_decompose(lab: Lab) -> RunResult:
    de = lab.cfg.decompose
    psi = lab.cfg.observable("decompose.psi")
    dec = martingale_decompose(
        lab.fmap, psi, lab.measure, tol=de.tol, budget=lab.budget,
        seed=lab.seed, n_eval=de.n_eval,
    )
    chk = check_martingale(
        lab.fmap, lab.measure, dec, budget=lab.budget, tol=de.tol, seed=lab.seed,
    )
    gr = gordin_sequence(
        lab.fmap, lab.measure, psi, de.gordin_n, budget=lab.budget,
        seed=lab.seed, n_eval=de.n_eval,
    )
    payload = {
        "schema_version": 1,
        "truncation_N": dec.truncation_N,
        "tail_bound": dec.tail_bound,
        "norms": dec.norms,
        "mean_used": dec.mean_used,
        "mean_stderr": dec.mean_stderr,
        "check": chk.to_json(),
        "gordin": gr.to_json(),
    }
    header = ["n", "gordin_norm", "gordin_stderr"]
    rows = [[n, gr.norms[n], gr.norms_stderr[n]] for n in range(len(gr.norms))]
    summary = (
        f"N = {dec.truncation_N}, residual {_g(chk.residual_norm)} "
        f"<= {_g(chk.threshold)}: {chk.residual_ok}, "
        f"orthogonality: {chk.orthogonality_ok}"
    )
    return RunResult("decompose", chk.ok, payload, (header, rows), summary)


def run_oracle_suite(lab: Lab) -> RunResult:
    oc = lab.cfg.oracle
    rep = oracle_suite(d=oc.d, depth=oc.depth, seed=lab.seed)
    summary = f"{len(rep.checks)} exact checks, {rep.n_failed} failed"
    return RunResult("oracle-suite", rep.ok, rep.to_json(), rep.csv_rows(), summary)


RUNNERS = {
    "sample": run_sample,
    "green": run_green,
    "moderate": run_moderate,
    "correlations": run_correlations,
    "variance": run_variance,
    "clt": run_clt,
    "ldt": run_ldt,
    "decompose": run_decompose,
    "oracle-suite": run_oracle_suite,
}

# `all` regenerates every table; the oracle goes first so estimator
# failures are never blamed on a broken reference
ALL_ORDER = (
    "oracle-suite",
    "sample",
    "green",
    "moderate",
    "correlations",
    "variance",
    "clt",
    "ldt",
    "decompose",
)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="greenlab",
        description="Stochastic checks for the equilibrium measure of a rational map.",
    )
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", metavar="PATH", default=None,
                   help="experiment file (.toml or .json); defaults used when omitted")
    p.add_argument("--seed", type=int, default=None, metavar="U64",
                   help="override the sampler/estimator seed")
    p.add_argument("--workers", type=int, default=None, metavar="N",
                   help="worker threads (never changes numerical output)")
    p.add_argument("--out", metavar="DIR", default=None,
                   help="output directory (default from config)")
    p.add_argument("--format", choices=("csv", "json", "both"), default=None,
                   help="report formats to write")
    return p


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed: must fit in an unsigned 64-bit integer")
        cfg.sampler.seed = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("workers: must be >= 1")
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out_dir = args.out
    if args.format is not None:
        cfg.format = args.format
    return cfg


def _emit(lab: Lab, results: list[RunResult]) -> None:
    cfg = lab.cfg
    want_csv = cfg.format in ("csv", "both")
    want_json = cfg.format in ("json", "both")
    for res in results:
        if res.name == "sample" and want_csv:
            lab.measure.to_csv(os.path.join(cfg.out_dir, "measure.csv"))
        if want_csv and res.table is not None:
            write_csv(os.path.join(cfg.out_dir, f"{res.name}.csv"), *res.table)
        if want_json:
            write_json(os.path.join(cfg.out_dir, f"{res.name}.json"), res.payload)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        lab = Lab(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    os.makedirs(cfg.out_dir, exist_ok=True)
    write_json(os.path.join(cfg.out_dir, "config.json"), cfg.to_dict())

    plan = ALL_ORDER if args.subcommand == "all" else (args.subcommand,)
    results: list[RunResult] = []
    try:
        for name in plan:
            results.append(RUNNERS[name](lab))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GreenlabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    _emit(lab, results)

    width = max(len(r.name) for r in results)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name:<{width}}  {r.summary}")
    n_fail = sum(not r.passed for r in results)
    if n_fail:
        print(f"{n_fail} of {len(results)} checks failed")
    else:
        print(f"all {len(results)} checks passed")
    return 0 if n_fail == 0 else 1


if __name__ == "__main__":
    raise SystemExit(main())

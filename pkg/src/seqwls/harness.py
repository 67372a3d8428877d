"""Monte Carlo experiments on sequential sampling and the ``seqwls`` CLI.

A run applies one of the sequential algorithms for ``m = 1..m_max`` in each of
``trials`` independent trials and records, per ``m``, the sample size, the
Gramian deviation and condition number, and the cumulative cost ``C_m``.
:func:`summarize` reduces the trials to nearest-rank quantiles.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import budget
from .basis import BasisFamily, HaarTreeBasis, HermiteBasis, grow_random_tree
from .budget import BudgetRule, FixedEps, PerStepEps, n_eps
from .leastsq import assemble_gramian, condition_number, spectral_deviation, wls_fit
from .samplers import (
    CostLedger,
    RngStream,
    algorithm1_step,
    algorithm2_step,
    algorithm3_step,
    bootstrap_algorithm3,
    initial_sample,
)

LEVELS = (("min", 0.0), ("0.1", 0.1), ("0.25", 0.25), ("0.5", 0.5),
          ("0.75", 0.75), ("0.9", 0.9), ("max", 1.0))


@dataclass
class TrialConfig:
    basis: str = "hermite"
    alg: int = 1
    rule: str = "fixed"
    eps: float = 0.01
    m_max: int = 50
    trials: int = 1000
    seed: int = 0
    tree_seed: int = 0
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        if self.basis not in ("hermite", "haar"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.alg not in (1, 2, 3):
            raise ValueError(f"unknown algorithm {self.alg!r}")
        if self.rule not in ("fixed", "per_step"):
            raise ValueError(f"unknown budget rule {self.rule!r}")
        if self.format not in ("csv", "json"):
            raise ValueError(f"unknown format {self.format!r}")
        if self.trials < 1 or self.m_max < 1:
            raise ValueError("trials and m_max must be >= 1")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")

    def budget_rule(self) -> BudgetRule:
        return FixedEps(self.eps) if self.rule == "fixed" else PerStepEps(self.eps)

    def make_basis(self) -> BasisFamily:
        if self.basis == "hermite":
            return HermiteBasis()
        return HaarTreeBasis(tuple(grow_random_tree(self.tree_seed, self.m_max)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepRecord:
    m: int
    size: int
    replaced: int  # n~(m-1); 0 for m = 1
    cost: int
    deviation: float
    kappa: float
    accepted: bool


@dataclass
class TrialRecord:
    trial: int
    steps: list[StepRecord] = field(default_factory=list)
    error: str | None = None


def _record(sample, ledger, gram=None) -> StepRecord:
    m = sample.m
    if gram is None:
        gram = assemble_gramian(sample.basis, m, sample.points)
    delta = spectral_deviation(gram)
    return StepRecord(
        m=m,
        size=len(sample),
        replaced=ledger.replacements(m - 1) if m > 1 else 0,
        cost=ledger.cost(m),
        deviation=delta,
        kappa=condition_number(gram),
        accepted=delta <= 0.5,
    )


def run_trial(config: TrialConfig, basis: BasisFamily, trial: int) -> TrialRecord:
    rng = RngStream(config.seed, trial, "sampling").generator()
    ledger = CostLedger()
    rule = config.budget_rule()
    rec = TrialRecord(trial)
    try:
        if config.alg == 3:
            sample = bootstrap_algorithm3(basis, rng, ledger)
        else:
            sample = initial_sample(basis, rule.n(1), rng, ledger)
        rec.steps.append(_record(sample, ledger, sample.gramian))
        for m in range(1, config.m_max):
            if config.alg == 1:
                sample = algorithm1_step(sample, rule.n(m + 1), rng, ledger)
            elif config.alg == 2:
                sample = algorithm2_step(sample, rule.n(m + 1), rng, ledger)
            else:
                sample = algorithm3_step(sample, rng, ledger)
            rec.steps.append(_record(sample, ledger, sample.gramian))
    except Exception as exc:  # recorded per trial, never dropped
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def _run_chunk(args):
    config, basis, trials = args
    return [run_trial(config, basis, t) for t in trials]


def run_trials(config: TrialConfig, jobs: int = 1) -> list[TrialRecord]:
    """Run all trials; the result is independent of ``jobs``."""
    basis = config.make_basis()
    indices = list(range(config.trials))
    if jobs <= 1:
        return [run_trial(config, basis, t) for t in indices]
    chunks = [indices[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(jobs) as pool:
        parts = list(pool.map(_run_chunk, [(config, basis, c) for c in chunks]))
    records = [r for part in parts for r in part]
    return sorted(records, key=lambda r: r.trial)


def nearest_rank(values, p: float) -> float:
    """Type-1 (nearest-rank) empirical quantile."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("no values")
    idx = max(math.ceil(p * v.size) - 1, 0)
    return float(v[min(idx, v.size - 1)])


@dataclass
class QuantileTable:
    rows: list[tuple[int, str, str, float]] = field(default_factory=list)
    failures: int = 0

    def value(self, m: int, stat: str, level: str) -> float:
        for row in self.rows:
            if row[:3] == (m, stat, level):
                return row[3]
        raise KeyError((m, stat, level))


def _stat_series(records, config):
    rule = config.budget_rule()
    ok = [r for r in records if r.error is None]
    series: dict[int, dict[str, list[float]]] = {}
    for rec in ok:
        for st in rec.steps:
            dest = series.setdefault(st.m, {"kappa": [], "cost_ratio": [], "cost_mlog2": []})
            dest["kappa"].append(st.kappa)
            denom = rule.n(st.m) if config.alg != 3 else n_eps(st.m, config.eps)
            dest["cost_ratio"].append(st.cost / denom)
            if config.alg == 3 and st.m >= 2:
                dest["cost_mlog2"].append(st.cost / (st.m * math.log(st.m) ** 2))
    return series


def summarize(records: Sequence[TrialRecord], config: TrialConfig) -> QuantileTable:
    """Per-``m`` quantiles of ``kappa_m`` and ``C_m / n(m)`` (and ``C_m / (m ln^2 m)`` for alg 3)."""
    table = QuantileTable(failures=sum(r.error is not None for r in records))
    for m, stats in sorted(_stat_series(records, config).items()):
        for stat in ("kappa", "cost_ratio", "cost_mlog2"):
            vals = stats[stat]
            if not vals:
                continue
            for label, p in LEVELS:
                table.rows.append((m, stat, label, nearest_rank(vals, p)))
    return table


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


TABLE_HEADER = ("m", "stat", "level", "value")
RECORD_HEADER = ("trial", "m", "size", "replaced", "cost", "deviation", "kappa", "accepted", "error")


def _record_rows(records):
    for rec in records:
        if not rec.steps:
            yield (rec.trial, "", "", "", "", "", "", "", rec.error or "")
        for st in rec.steps:
            yield (rec.trial, st.m, st.size, st.replaced, st.cost, st.deviation, st.kappa,
                   st.accepted, rec.error or "")


def render(obj, fmt: str = "csv", config: TrialConfig | None = None) -> str:
    """Serialise a :class:`QuantileTable` or a list of :class:`TrialRecord`."""
    if isinstance(obj, QuantileTable):
        header, rows = TABLE_HEADER, obj.rows
    else:
        header, rows = RECORD_HEADER, list(_record_rows(obj))
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_fmt(v) for v in row] for row in rows)
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "config": config.to_dict() if config else None,
            "seed": config.seed if config else None,
            "columns": list(header),
            "rows": [dict(zip(header, row)) for row in rows],
        }
        if isinstance(obj, QuantileTable):
            doc["failures"] = obj.failures
        return json.dumps(doc, indent=1) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit(obj, fmt: str, path, config: TrialConfig | None = None) -> None:
    text = render(obj, fmt, config)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc


def read_table_csv(path) -> QuantileTable:
    """Parse a quantile CSV written by :func:`emit`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != TABLE_HEADER:
            raise ValueError(f"{path}: not a quantile table")
        rows = [(int(m), stat, level, float(v)) for m, stat, level, v in reader]
    return QuantileTable(rows)


def read_fit_input(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``x y`` pairs, one per line; ``#`` starts a comment."""
    xs, ys = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'x y', got {line!r}")
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
    return np.array(xs), np.array(ys)


def verify_sweeps(m_max: int = 10_000, out=None) -> bool:
    """Deterministic checks of the budget inequalities and closed-form bounds."""
    out = sys.stdout if out is None else out
    ok = True

    def report(name, passed):
        nonlocal ok
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}", file=out)

    slack = 1e-9
    for eps in (0.5, 0.1, 0.01, 0.001):
        rule = FixedEps(eps)
        n = np.array(rule.sizes(m_max), dtype=float)
        sums = budget.harmonic_cost_sums(rule, m_max)
        report(f"expected replacements bracket, fixed eps={eps}",
               bool(np.all(0.5 * n - 2 * budget.C <= sums + slack) and np.all(sums <= n + 1 + slack)))
    for eps0 in (0.1, 0.01):
        rule = PerStepEps(eps0)
        n = np.array(rule.sizes(m_max), dtype=float)
        sums = budget.harmonic_cost_sums(rule, m_max)
        report(f"expected replacements bracket, per-step eps0={eps0}",
               bool(np.all(0.5 * n - 6 * budget.C <= sums + slack) and np.all(sums <= n + 1 + slack)))
        report(f"per-step budget dominates fixed budget, eps0={eps0}",
               all(a >= b for a, b in zip(rule.sizes(m_max), FixedEps(eps0).sizes(m_max))))
    for eps in (0.1, 0.01):
        report(f"matrix Chernoff bound <= eps at n_eps(m), eps={eps}",
               all(budget.matrix_chernoff_bound(m, n_eps(m, eps), m) <= eps for m in range(1, 1001)))
    taus = np.linspace(0.0, 1.0, 40)
    means = np.geomspace(1e-3, 1e3, 25)
    report("Chernoff exact form <= simplified form on tau in [0, 1]",
           all(e <= s * (1 + 1e-12) for e, s in (budget.chernoff_tail(t, x) for t in taus for x in means)))
    return ok


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqwls", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("--basis", choices=["hermite", "haar"], default="hermite")
    sim.add_argument("--alg", type=int, choices=[1, 2, 3], default=1)
    rule = sim.add_mutually_exclusive_group()
    rule.add_argument("--eps", type=float, help="fixed failure probability (default 0.01)")
    rule.add_argument("--eps0", type=float, help="total failure probability of the per-step schedule")
    sim.add_argument("--m-max", type=int, default=50)
    sim.add_argument("--trials", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--tree-seed", type=int, default=0)
    sim.add_argument("--out", help="output path (default: stdout)")
    sim.add_argument("--format", choices=["csv", "json"], default="csv")
    sim.add_argument("--records", help="also write per-trial records to this path")
    sim.add_argument("--jobs", type=int, default=1)

    bud = sub.add_parser("budget", help="tabulate sample sizes and bounds")
    bud.add_argument("--m-min", type=int, default=1)
    bud.add_argument("--m-max", type=int, default=50)
    bud.add_argument("--eps", type=float, default=0.01)
    bud.add_argument("--eps0", type=float, default=0.01)
    bud.add_argument("--tau", type=float, default=0.5)

    fit = sub.add_parser("fit", help="weighted least-squares fit of x y data")
    fit.add_argument("input")
    fit.add_argument("--basis", choices=["hermite", "haar"], default="hermite")
    fit.add_argument("--m", type=int, required=True)
    fit.add_argument("--tree-seed", type=int, default=0)

    ver = sub.add_parser("verify", help="run the deterministic bound sweeps")
    ver.add_argument("--m-max", type=int, default=10_000)
    return parser


class UsageError(Exception):
    pass


def _cmd_simulate(args) -> int:
    if args.eps0 is not None:
        cfg_rule, eps = "per_step", args.eps0
    else:
        cfg_rule, eps = "fixed", 0.01 if args.eps is None else args.eps
    try:
        config = TrialConfig(basis=args.basis, alg=args.alg, rule=cfg_rule, eps=eps,
                             m_max=args.m_max, trials=args.trials, seed=args.seed,
                             tree_seed=args.tree_seed, out=args.out, format=args.format)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    records = run_trials(config, jobs=args.jobs)
    table = summarize(records, config)
    if args.records:
        emit(records, config.format, args.records, config)
    if config.out:
        emit(table, config.format, config.out, config)
    else:
        sys.stdout.write(render(table, config.format, config))
    if table.failures:
        print(f"{table.failures} trial(s) failed", file=sys.stderr)
    return 0


def _cmd_budget(args) -> int:
    if not (0 < args.eps < 1 and 0 < args.eps0 < 1 and 0 <= args.tau <= 1):
        raise UsageError("need eps, eps0 in (0, 1) and tau in [0, 1]")
    if args.m_min < 1 or args.m_max < args.m_min:
        raise UsageError("need 1 <= m-min <= m-max")
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["m", "n_eps", "n_uniform", "eps_m", "harmonic_sum",
                     "chernoff_at_n_eps", "cost_tail_bound"])
    rule = FixedEps(args.eps)
    for m in range(args.m_min, args.m_max + 1):
        n = n_eps(m, args.eps)
        tail = budget.cost_tail_bound(rule, m, args.tau) if m >= 2 else float("nan")
        writer.writerow([m, n, budget.n_uniform(m, args.eps0),
                         _fmt(budget.eps_schedule(m, args.eps0)),
                         _fmt(budget.harmonic_cost_sum(rule, m)),
                         _fmt(budget.matrix_chernoff_bound(m, n, m)), _fmt(tail)])
    return 0


def _cmd_fit(args) -> int:
    if args.m < 1:
        raise UsageError("--m must be >= 1")
    x, y = read_fit_input(args.input)
    basis = (HermiteBasis() if args.basis == "hermite"
             else HaarTreeBasis(tuple(grow_random_tree(args.tree_seed, args.m))))
    fit = wls_fit(basis, args.m, x, y)
    print("coefficients:", " ".join(_fmt(float(c)) for c in fit.coefficients))
    print("deviation:", _fmt(fit.deviation))
    print("kappa:", _fmt(fit.condition))
    print("accepted:", "yes" if fit.accepted else "no")
    return 0


def cli_main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {"simulate": _cmd_simulate, "budget": _cmd_budget, "fit": _cmd_fit}
    try:
        if args.command == "verify":
            return 0 if verify_sweeps(args.m_max) else 1
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"seqwls: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except Exception as exc:
        print(f"seqwls: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())

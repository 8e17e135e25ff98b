"""Experiment harness: spec files, snapshot sweeps, CSV reports.

An experiment spec is a flat `key = value` text file with dotted section
prefixes (`channel.kappa = 0.43`); unprefixed keys configure the run
itself. Environment variables of the form QNET_<SECTION>_<KEY> override
file values. Each run writes `raw.csv` (one row per sweep value, snapshot
and method), `aggregate.csv` (feasible-only means with counts) and, for
convergence runs, `trace.csv` with the per-iteration objective records.

Rows are emitted in canonical order (sweep value, seed, method) no matter
how many workers computed them, so identical specs reproduce identical
files byte for byte; wall-clock columns are zeroed under deterministic
mode since they cannot reproduce.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .ao_optimizer import AoConfig, alternating_optimize
from .exact_oracle import OracleBudgetError, enumerate_optimal
from .fidelity import FidelityConfig
from .fso_channel import ChannelConfig
from .scenario import GenerationError, ScenarioConfig, generate

EXPERIMENTS = ("convergence", "sweep_users", "sweep_qbs", "sweep_rmin", "single")
METHODS = ("AO_DC", "AO_SC", "EXACT_DC", "EXACT_SC")

RAW_COLUMNS = (
    "experiment",
    "sweep_value",
    "seed",
    "method",
    "status",
    "objective_pairs_per_s",
    "iterations",
    "runtime_ms",
)
AGG_COLUMNS = ("experiment", "sweep_value", "method", "mean", "stderr", "n", "n_total")
TRACE_COLUMNS = (
    "experiment",
    "sweep_value",
    "seed",
    "iteration",
    "objective_pairs_per_s",
    "lambda",
    "fractional_norm",
)


class SpecError(ValueError):
    """Malformed experiment spec (parse failure, unknown key, bad value)."""


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    sweep_values: tuple[float, ...]
    snapshots: int
    seed: int
    compare: tuple[str, ...]
    scenario: ScenarioConfig
    ao: AoConfig


def parse_spec_text(text: str) -> dict[str, str]:
    """Parse flat `key = value` lines; '#' starts a comment."""
    mapping: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, value = line.partition("=")
        mapping[key.strip().lower()] = value.strip()
    return mapping


def apply_env_overrides(mapping: dict[str, str], environ=None) -> dict[str, str]:
    """Overlay QNET_<SECTION>_<KEY> variables; section RUN maps to top level."""
    environ = os.environ if environ is None else environ
    out = dict(mapping)
    for var, value in sorted(environ.items()):
        if not var.startswith("QNET_"):
            continue
        rest = var[len("QNET_"):].lower()
        section, _, key = rest.partition("_")
        if not key:
            raise SpecError(f"environment override {var} lacks a key part")
        out[key if section == "run" else f"{section}.{key}"] = value
    return out


def _to_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise SpecError(f"{key}: expected a number, got {value!r}") from None


def _to_int(key: str, value: str) -> int:
    f = _to_float(key, value)
    if f != int(f):
        raise SpecError(f"{key}: expected an integer, got {value!r}")
    return int(f)


def _to_pair(key: str, value: str) -> tuple[float, float]:
    parts = [p for p in value.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise SpecError(f"{key}: expected 'lo, hi', got {value!r}")
    return (_to_float(key, parts[0]), _to_float(key, parts[1]))


def _to_list(value: str) -> list[str]:
    return [p for p in value.replace(",", " ").split() if p]


_INT_FIELDS = {"n_qbs", "n_qu", "seed", "max_placement_attempts", "max_resample_tries",
               "max_outer_iters", "max_mm_iters", "max_lambda_escalations"}
_STR_FIELDS = {"infeasible_policy", "pointing_jitter_mode", "xi_mode", "mode"}


def _coerce_section(default, section: str, entries: dict[str, str]):
    """Overlay flat-text entries onto a section's default config instance."""
    valid = {f.name for f in dataclasses.fields(default)}
    kwargs = {}
    for key, value in entries.items():
        if key not in valid:
            raise SpecError(f"unknown key {section}.{key}")
        if key.endswith("_range") or key == "d_range":
            kwargs[key] = _to_pair(f"{section}.{key}", value)
        elif key in _INT_FIELDS:
            kwargs[key] = _to_int(f"{section}.{key}", value)
        elif key in _STR_FIELDS:
            kwargs[key] = value
        elif key == "penalty_lambda":
            kwargs[key] = None if value.lower() in ("auto", "none") else _to_float(key, value)
        else:
            kwargs[key] = _to_float(f"{section}.{key}", value)
    try:
        return replace(default, **kwargs)
    except (ValueError, TypeError) as exc:
        raise SpecError(f"invalid [{section}] configuration: {exc}") from exc


def _worst_case_combinations(n_qbs: int, n_qu: int, rmin_positive: bool, mode: str) -> float:
    per_user = n_qbs + (n_qbs * (n_qbs - 1)) // 2 if mode == "DC" else n_qbs
    if not rmin_positive:
        per_user += 1
    return float(per_user) ** n_qu


def build_spec(mapping: dict[str, str]) -> ExperimentSpec:
    mapping = dict(mapping)
    sections: dict[str, dict[str, str]] = {"scenario": {}, "channel": {}, "fidelity": {}, "ao": {}}
    top: dict[str, str] = {}
    for key, value in mapping.items():
        if "." in key:
            section, _, field = key.partition(".")
            if section == "run":
                top[field] = value
            elif section in sections:
                sections[section][field] = value
            else:
                raise SpecError(f"unknown section {section!r} in key {key!r}")
        else:
            top[key] = value

    experiment = top.pop("experiment", "single")
    if experiment not in EXPERIMENTS:
        raise SpecError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    snapshots = _to_int("snapshots", top.pop("snapshots", "1"))
    if snapshots < 1:
        raise SpecError("snapshots must be >= 1")
    seed = _to_int("seed", top.pop("seed", "0"))

    values_raw = top.pop("sweep_values", "")
    if values_raw:
        sweep_values = tuple(sorted({_to_float("sweep_values", v) for v in _to_list(values_raw)}))
    elif experiment in ("convergence", "single"):
        sweep_values = (0.0,)
    else:
        raise SpecError(f"experiment {experiment!r} requires sweep_values")

    compare_raw = top.pop("compare", "AO_DC")
    unknown = {c.upper() for c in _to_list(compare_raw)} - set(METHODS)
    if unknown:
        raise SpecError(f"unknown methods in compare: {sorted(unknown)}")
    compare = tuple(m for m in METHODS if m in {c.upper() for c in _to_list(compare_raw)})
    if not compare:
        raise SpecError(f"compare must name at least one of {METHODS}")
    if top:
        raise SpecError(f"unknown top-level keys: {sorted(top)}")
    if experiment in ("sweep_users", "sweep_qbs"):
        for v in sweep_values:
            _int_value(v, experiment)

    channel = _coerce_section(ChannelConfig, "channel", sections["channel"]) if sections["channel"] else None
    fid = _coerce_section(FidelityConfig, "fidelity", sections["fidelity"]) if sections["fidelity"] else None
    scen_entries = sections["scenario"]
    scenario = _coerce_section(ScenarioConfig, "scenario", scen_entries)
    if channel is not None:
        scenario = replace(scenario, channel=channel)
    if fid is not None:
        scenario = replace(scenario, fidelity=fid)
    ao = _coerce_section(AoConfig, "ao", sections["ao"])

    spec = ExperimentSpec(
        experiment=experiment,
        sweep_values=sweep_values,
        snapshots=snapshots,
        seed=seed,
        compare=compare,
        scenario=scenario,
        ao=ao,
    )
    _validate_exact_guard(spec)
    return spec


def _scenario_dims(spec: ExperimentSpec, value: float) -> tuple[int, int]:
    n_qbs, n_qu = spec.scenario.n_qbs, spec.scenario.n_qu
    if spec.experiment == "sweep_users":
        n_qu = int(value)
    elif spec.experiment == "sweep_qbs":
        n_qbs = int(value)
    return n_qbs, n_qu


def _validate_exact_guard(spec: ExperimentSpec) -> None:
    exact = [m for m in spec.compare if m.startswith("EXACT")]
    if not exact:
        return
    rmin_positive = spec.scenario.rmin_range[0] > 0
    for value in spec.sweep_values:
        n_qbs, n_qu = _scenario_dims(spec, value)
        for method in exact:
            mode = method.split("_")[1]
            combos = _worst_case_combinations(n_qbs, n_qu, rmin_positive, mode)
            if combos > 1_000_000:
                raise SpecError(
                    f"{method} not permitted at N={n_qbs}, U={n_qu}: worst-case "
                    f"{combos:.3g} association combinations exceed the exact-solver guard"
                )


def load_spec(path: str | Path, environ=None) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec file {path}: {exc}") from exc
    return build_spec(apply_env_overrides(parse_spec_text(text), environ))


def _scenario_config_for(spec: ExperimentSpec, value: float, snapshot: int) -> ScenarioConfig:
    base = spec.scenario
    n_qbs, n_qu = _scenario_dims(spec, value)
    changes: dict = {"n_qbs": n_qbs, "n_qu": n_qu, "seed": spec.seed + snapshot}
    if spec.experiment == "sweep_rmin":
        lo, hi = base.rmin_range
        changes["rmin_range"] = (lo * value, hi * value)
    return replace(base, **changes)


def _int_value(value: float, what: str) -> None:
    if value != int(value) or value < 1:
        raise SpecError(f"{what} sweep values must be positive integers, got {value}")


def _run_method(method: str, scenario, ao: AoConfig):
    """Returns (status, objective or nan, iterations, trace or None)."""
    mode = method.split("_")[1]
    if method.startswith("AO"):
        sol = alternating_optimize(scenario, replace(ao, mode=mode))
        status = "ok" if sol.feasible else "infeasible"
        return status, sol.objective, sol.iterations, sol.trace
    try:
        res = enumerate_optimal(scenario, mode)
    except OracleBudgetError:
        return "error:instance-too-large", math.nan, 0, None
    status = "ok" if res.status == "optimal" else "infeasible"
    return status, res.objective, res.evaluations, None


def _execute_task(spec: ExperimentSpec, value: float, snapshot: int, deterministic: bool):
    """One (sweep value, snapshot) cell: generate and run every method."""
    raw_rows = []
    trace_rows = []
    try:
        scenario = generate(_scenario_config_for(spec, value, snapshot))
    except GenerationError:
        for method in spec.compare:
            raw_rows.append((value, spec.seed + snapshot, method, "error:generation", math.nan, 0, 0.0))
        return raw_rows, trace_rows

    for method in spec.compare:
        t0 = time.perf_counter()
        status, objective, iterations, trace = _run_method(method, scenario, spec.ao)
        runtime_ms = 0.0 if deterministic else (time.perf_counter() - t0) * 1e3
        raw_rows.append((value, spec.seed + snapshot, method, status, objective, iterations, runtime_ms))
        if spec.experiment == "convergence" and trace is not None:
            for rec in trace:
                trace_rows.append(
                    (value, spec.seed + snapshot, rec.iteration, rec.objective, rec.lam, rec.fractional_norm)
                )
    return raw_rows, trace_rows


@dataclass
class RunResult:
    raw_rows: list[tuple]
    aggregate_rows: list[tuple]
    trace_rows: list[tuple]
    files: list[Path]
    n_failures: int


def _fmt_float(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return f"{x:.17g}"


def _write_csv(path: Path, columns, rows, deterministic: bool) -> None:
    with open(path, "w", newline="") as fh:
        if not deterministic:
            fh.write(f"# generated {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def aggregate_rows_from_raw(raw_rows) -> list[tuple]:
    """Feasible-only mean/stderr per (experiment, sweep value, method).

    `n` counts the rows that went into the mean, `n_total` every attempted
    snapshot, so infeasible snapshots are visible without poisoning means.
    """
    groups: dict[tuple, list] = {}
    totals: dict[tuple, int] = {}
    for row in raw_rows:
        key = (row[0], row[1], row[3])
        totals[key] = totals.get(key, 0) + 1
        if row[4] == "ok":
            groups.setdefault(key, []).append(float(row[5]))
    out = []
    for key in sorted(totals, key=lambda k: (float(k[1]), _method_order(k[2]))):
        vals = groups.get(key, [])
        n = len(vals)
        mean = float(np.mean(vals)) if n else math.nan
        stderr = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        out.append((key[0], key[1], key[2], mean, stderr, n, totals[key]))
    return out


def _method_order(method: str) -> int:
    return METHODS.index(method)


def run(
    spec: ExperimentSpec,
    outdir: str | Path,
    deterministic: bool = False,
    jobs: int = 1,
    make_plots: bool = True,
) -> RunResult:
    """Execute every (sweep value, snapshot, method) cell and write reports."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tasks = [(value, snap) for value in spec.sweep_values for snap in range(spec.snapshots)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_task_entry, [(spec, v, s, deterministic) for v, s in tasks]))
    else:
        results = [_execute_task(spec, v, s, deterministic) for v, s in tasks]

    raw_unsorted = [row for rows, _ in results for row in rows]
    trace_unsorted = [row for _, trows in results for row in trows]

    raw_rows = [
        (
            spec.experiment,
            f"{value:g}",
            seed,
            method,
            status,
            _fmt_float(obj),
            iterations,
            f"{runtime:.3f}",
        )
        for value, seed, method, status, obj, iterations, runtime in sorted(
            raw_unsorted, key=lambda r: (r[0], r[1], _method_order(r[2]))
        )
    ]
    trace_rows = [
        (spec.experiment, f"{value:g}", seed, it, _fmt_float(obj), _fmt_float(lam), _fmt_float(frac))
        for value, seed, it, obj, lam, frac in sorted(trace_unsorted, key=lambda r: (r[0], r[1], r[2]))
    ]
    agg_source = [
        (spec.experiment, f"{value:g}", seed, method, status, obj, iterations, runtime)
        for value, seed, method, status, obj, iterations, runtime in raw_unsorted
    ]
    aggregate = [
        (exp, val, method, _fmt_float(mean), _fmt_float(stderr), n, n_total)
        for exp, val, method, mean, stderr, n, n_total in aggregate_rows_from_raw(agg_source)
    ]

    files = []
    raw_path = outdir / "raw.csv"
    _write_csv(raw_path, RAW_COLUMNS, raw_rows, deterministic)
    files.append(raw_path)
    agg_path = outdir / "aggregate.csv"
    _write_csv(agg_path, AGG_COLUMNS, aggregate, deterministic)
    files.append(agg_path)
    if spec.experiment == "convergence":
        trace_path = outdir / "trace.csv"
        _write_csv(trace_path, TRACE_COLUMNS, trace_rows, deterministic)
        files.append(trace_path)

    if make_plots:
        from . import plotting

        files.extend(plotting.render_report(outdir))

    n_failures = sum(1 for row in raw_rows if row[4] != "ok")
    return RunResult(raw_rows, aggregate, trace_rows, files, n_failures)


def _task_entry(args):
    return _execute_task(*args)


def read_csv_rows(path: str | Path) -> list[dict]:
    """Read a harness CSV, skipping the optional timestamp comment line."""
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def summarize(raw_path: str | Path, outdir: str | Path | None = None):
    """Re-aggregate a raw CSV and derive the improvement/gap table.

    Returns (aggregate rows, gap rows, warnings). Gap percentages pair AO
    against EXACT per seed where both are feasible; improvement percentages
    compare DC and SC means of the same family.
    """
    rows = read_csv_rows(raw_path)
    if not rows:
        raise SpecError(f"no rows in {raw_path}")
    raw_tuples = [
        (
            r["experiment"],
            r["sweep_value"],
            int(r["seed"]),
            r["method"],
            r["status"],
            float(r["objective_pairs_per_s"]) if r["objective_pairs_per_s"] else math.nan,
            r["iterations"],
            r["runtime_ms"],
        )
        for r in rows
    ]
    aggregate = aggregate_rows_from_raw(raw_tuples)

    methods_present = {r[3] for r in raw_tuples}
    warnings = []
    by_value: dict[str, dict[str, dict[int, float]]] = {}
    for exp, value, seed, method, status, obj, _, _ in raw_tuples:
        if status == "ok":
            by_value.setdefault(value, {}).setdefault(method, {})[seed] = obj

    def paired_gap(value_methods, better: str, worse: str):
        a = value_methods.get(better, {})
        b = value_methods.get(worse, {})
        shared = sorted(set(a) & set(b))
        if not shared:
            return None
        gaps = [(a[s] - b[s]) / a[s] * 100.0 for s in shared if a[s] > 0]
        return float(np.mean(gaps)) if gaps else None

    def mean_of(value_methods, method):
        vals = list(value_methods.get(method, {}).values())
        return float(np.mean(vals)) if vals else None

    gap_rows = []
    experiment = raw_tuples[0][0]
    for value in sorted(by_value, key=float):
        vm = by_value[value]
        dc_sc_ao = None
        m_dc, m_sc = mean_of(vm, "AO_DC"), mean_of(vm, "AO_SC")
        if m_dc is not None and m_sc is not None and m_sc > 0:
            dc_sc_ao = (m_dc / m_sc - 1.0) * 100.0
        dc_sc_exact = None
        e_dc, e_sc = mean_of(vm, "EXACT_DC"), mean_of(vm, "EXACT_SC")
        if e_dc is not None and e_sc is not None and e_sc > 0:
            dc_sc_exact = (e_dc / e_sc - 1.0) * 100.0
        gap_dc = paired_gap(vm, "EXACT_DC", "AO_DC")
        gap_sc = paired_gap(vm, "EXACT_SC", "AO_SC")
        gap_rows.append(
            (
                experiment,
                value,
                "" if dc_sc_ao is None else f"{dc_sc_ao:.6g}",
                "" if dc_sc_exact is None else f"{dc_sc_exact:.6g}",
                "" if gap_dc is None else f"{gap_dc:.6g}",
                "" if gap_sc is None else f"{gap_sc:.6g}",
            )
        )

    for family in ("AO", "EXACT"):
        have = [m for m in methods_present if m.startswith(family)]
        if have and len(have) < 2:
            warnings.append(f"only {have[0]} present: no DC/SC improvement for {family}")
    if not any(m.startswith("EXACT") for m in methods_present):
        warnings.append("no EXACT rows: gap columns are empty")

    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        agg_fmt = [
            (exp, val, method, _fmt_float(mean), _fmt_float(stderr), n, n_total)
            for exp, val, method, mean, stderr, n, n_total in aggregate
        ]
        _write_csv(outdir / "aggregate.csv", AGG_COLUMNS, agg_fmt, deterministic=True)
        _write_csv(
            outdir / "gaps.csv",
            ("experiment", "sweep_value", "dc_sc_improvement_pct_ao", "dc_sc_improvement_pct_exact", "ao_gap_pct_dc", "ao_gap_pct_sc"),
            gap_rows,
            deterministic=True,
        )
    return aggregate, gap_rows, warnings

"""Command-line front end: ``hssm {simulate,pmf,rates,verify,estimate}``.

Configuration is one JSON object (``--config FILE``) whose keys may be
overridden by flags of the same name.  Single-level runs use the top-level
block ``alpha0``/``theta0`` as the EPM parameters.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .epm_core import (DEFAULT_RMAX, EpmParams, PartitionStats, SeatingState, estimate_alpha,
                       sample_k_batch, validate_params)
from .errors import (
    DuplicateObservation,
    HssmError,
    InvalidParams,
    MalformedRow,
    NumericalFailure,
    ParseError,
    ValidationError,
)
from .exact_oracle import (
    enumerate_joint,
    exact_hier_K_pmf,
    exact_hier_Mr_pmf,
    exact_K_pmf,
    exact_xi_pmf,
)
from .experiments import SUITES, ExperimentConfig, run_suite
from .hierarchy import CASES, GroupDesign, HierParams, hier_batch, resolve_sizes, sample_hier
from .io import csv_text, json_text, write_text
from .rates import RATE_FUNCTIONS, evaluate_rate
from .rng import RngSpec

SUBCOMMANDS = ("simulate", "pmf", "rates", "verify", "estimate")
SINGLE = "single"
PMF_KINDS = ("K", "hier_K", "xi", "Mr", "joint")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    """Validated inputs of one CLI invocation.

    ``case`` is ``single`` or one of HDP, HDPYP, HPYDP, HPYP; when omitted it
    follows from the discounts.  Single-level sizes come from ``n`` (or
    ``N``); hierarchical sizes from ``sizes`` or from ``N`` apportioned by
    ``weights``.
    """

    subcommand: str
    case: str | None = None
    alpha0: float = 0.0
    theta0: float = 1.0
    beta: float = 0.0
    theta: float = 1.0
    d: int = 2
    weights: tuple[float, ...] | None = None
    N: int | None = None
    n: int | None = None
    sizes: tuple[int, ...] | None = None
    replicates: int = 1
    seed: int = 20261015
    stream: int = 0
    emit_labels: bool = False
    r_max: int = DEFAULT_RMAX
    output_dir: str | None = None
    format: str = "csv"
    kind: str = "K"
    r: int = 1
    fn: str = "I_alpha"
    x: float | None = None
    x_min: float = 0.0
    x_max: float = 1.0
    x_num: int = 11
    suites: tuple[str, ...] = ("oracle",)
    grid: tuple[int, ...] | None = None
    c: float = 100.0
    level: float = 0.01
    x_list: tuple[float, ...] = (0.5,)
    workers: int | None = None
    input: str | None = None

    @property
    def resolved_case(self) -> str:
        if self.case is not None:
            return self.case
        return CASES[2 * (self.alpha0 > 0) + (self.beta > 0)]

    def epm(self) -> EpmParams:
        return EpmParams(self.alpha0, self.theta0)

    def hier(self) -> HierParams:
        return HierParams.make(self.alpha0, self.theta0, self.beta, self.theta, self.d)

    def design(self) -> GroupDesign:
        if self.weights is None:
            return GroupDesign.equal(self.d)
        return GroupDesign(self.weights)

    def group_sizes(self) -> list[int]:
        if self.sizes is not None:
            return list(self.sizes)
        return resolve_sizes(self.design(), int(self.N))

    def single_n(self) -> int:
        return int(self.n if self.n is not None else self.N)

    def thread_count(self) -> int:
        if self.workers is not None:
            return self.workers
        env = os.environ.get("HSSM_THREADS")
        return max(1, int(env)) if env else 1


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_INT = {"d", "N", "n", "replicates", "seed", "stream", "r_max", "r", "x_num", "workers"}
_FLOAT = {"alpha0", "theta0", "beta", "theta", "x", "x_min", "x_max", "c", "level"}
_STR = {"subcommand", "case", "output_dir", "format", "kind", "fn", "input"}
_INT_LIST = {"sizes", "grid"}
_FLOAT_LIST = {"weights", "x_list"}


def _coerce(key: str, value: Any) -> Any:
    """Convert one raw config value (JSON value or flag text) to its field type."""
    if value is None:
        return None
    try:
        if key in _INT:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if key in _FLOAT:
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if key in _STR:
            if not isinstance(value, str):
                raise ValueError(value)
            return value
        if key == "emit_labels":
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
                return value.lower() in ("true", "1")
            raise ValueError(value)
        if key == "suites":
            items = value.split(",") if isinstance(value, str) else list(value)
            return tuple(str(s) for s in items)
        if key in _INT_LIST | _FLOAT_LIST:
            items = value.split(",") if isinstance(value, str) else list(value)
            conv = int if key in _INT_LIST else float
            if key in _INT_LIST and any(isinstance(v, float) and not v.is_integer() for v in items):
                raise ValueError(value)
            return tuple(conv(v) for v in items)
    except (TypeError, ValueError):
        raise ParseError(f"field {key!r}: cannot read {value!r}") from None
    raise ParseError(f"unknown key {key!r}")


def _check(ok: bool, constraint: str, detail: str) -> None:
    if not ok:
        raise ValidationError(f"{constraint} violated: {detail}")


def validate_config(cfg: RunConfig) -> RunConfig:
    """Check every constraint before any computation; raise ValidationError."""
    _check(cfg.subcommand in SUBCOMMANDS, "subcommand in " + "|".join(SUBCOMMANDS),
           repr(cfg.subcommand))
    _check(cfg.format in ("csv", "json"), "format in csv|json", repr(cfg.format))
    case = cfg.resolved_case
    _check(case in CASES + (SINGLE,), "case in single|" + "|".join(CASES), repr(case))
    _check(cfg.alpha0 < 1, "alpha < 1", f"alpha0 = {cfg.alpha0}")
    _check(cfg.theta0 > -cfg.alpha0, "theta > -alpha",
           f"theta0 = {cfg.theta0}, alpha0 = {cfg.alpha0}")
    if case != SINGLE:
        _check(cfg.alpha0 >= 0 and cfg.beta >= 0, "discounts >= 0",
               f"alpha0 = {cfg.alpha0}, beta = {cfg.beta}")
        _check(cfg.beta < 1, "beta < 1", f"beta = {cfg.beta}")
        _check(cfg.theta > -cfg.beta, "theta > -alpha", f"theta = {cfg.theta}, beta = {cfg.beta}")
        _check(cfg.d >= 1, "d >= 1", f"d = {cfg.d}")
        expect = CASES[2 * (cfg.alpha0 > 0) + (cfg.beta > 0)]
        _check(case == expect, f"case matches discounts ({expect})", f"case = {case}")
        if cfg.weights is not None:
            _check(len(cfg.weights) == cfg.d, "len(weights) = d", f"{len(cfg.weights)} != {cfg.d}")
            _check(all(w > 0 for w in cfg.weights), "weights > 0", str(cfg.weights))
            _check(abs(math.fsum(cfg.weights) - 1) <= 1e-9, "sum(weights) = 1",
                   str(math.fsum(cfg.weights)))
        if cfg.sizes is not None:
            _check(len(cfg.sizes) == cfg.d, "len(sizes) = d", f"{len(cfg.sizes)} != {cfg.d}")
            _check(all(s >= 1 for s in cfg.sizes), "sizes >= 1", str(cfg.sizes))
    try:
        validate_params(cfg.epm())
        if case != SINGLE:
            cfg.hier().validate()
    except InvalidParams as exc:
        raise ValidationError(str(exc)) from None
    _check(cfg.replicates >= 1, "replicates >= 1", str(cfg.replicates))
    _check(cfg.seed >= 0, "seed >= 0", str(cfg.seed))
    _check(cfg.stream >= 0, "stream >= 0", str(cfg.stream))
    _check(cfg.r_max >= 1, "r_max >= 1", str(cfg.r_max))
    _check(cfg.r >= 1, "r >= 1", str(cfg.r))
    _check(cfg.workers is None or cfg.workers >= 1, "workers >= 1", str(cfg.workers))
    _check(0 < cfg.level < 1, "0 < level < 1", str(cfg.level))
    sub = cfg.subcommand
    if sub in ("simulate", "pmf"):
        if case == SINGLE or (sub == "pmf" and cfg.kind in ("K", "joint")):
            _check(cfg.n is not None or cfg.N is not None, "n given", "missing n")
            _check(cfg.single_n() >= 1, "n >= 1", str(cfg.single_n()))
        else:
            _check(cfg.sizes is not None or cfg.N is not None, "N or sizes given", "missing N")
            _check(cfg.sizes is not None or cfg.N >= cfg.d, "N >= d", f"N = {cfg.N}, d = {cfg.d}")
    if sub == "pmf":
        _check(cfg.kind in PMF_KINDS, "kind in " + "|".join(PMF_KINDS), repr(cfg.kind))
    if sub == "rates":
        _check(cfg.fn in RATE_FUNCTIONS, "fn in " + "|".join(RATE_FUNCTIONS), repr(cfg.fn))
        _check(cfg.x is not None or cfg.x_num >= 1, "x_num >= 1", str(cfg.x_num))
    if sub == "verify":
        bad = [s for s in cfg.suites if s not in SUITES]
        _check(not bad, "suites in " + "|".join(SUITES), str(bad))
    if sub == "estimate":
        _check(cfg.input is not None, "input given", "missing input")
    return cfg


def parse_config(source: str | Path | Mapping | None = None,
                 overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a JSON config (path or mapping), apply overrides, validate.

    Raises ParseError for unreadable JSON, unknown keys or ill-typed values,
    and ValidationError for values that break a constraint.
    """
    raw: dict[str, Any] = {}
    if isinstance(source, Mapping):
        raw.update(source)
    elif source is not None:
        path = Path(source)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"{path}: {exc.strerror}") from None
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise ParseError(f"{path}: top level must be a JSON object")
        raw.update(obj)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(raw) - set(FIELDS))
    if unknown:
        raise ParseError(f"unknown key {unknown[0]!r}")
    if "subcommand" not in raw:
        raise ParseError("field 'subcommand' is required")
    values = {k: _coerce(k, v) for k, v in raw.items()}
    return validate_config(RunConfig(**values))


# ------------------------------------------------------------- ingestion


@dataclass(frozen=True)
class IngestedPartition:
    """Observed labels per group and the statistics they induce.

    ``groups[i]`` counts distinct labels within group i + 1; ``pooled`` counts
    distinct labels across all groups with frequencies pooled over groups.
    """

    groups: tuple[PartitionStats, ...]
    pooled: PartitionStats

    @property
    def group_K(self) -> tuple[int, ...]:
        return tuple(g.K for g in self.groups)

    def to_json(self) -> dict:
        return {"groups": [g.to_json() for g in self.groups], "pooled": self.pooled.to_json(),
                "group_K": list(self.group_K)}


def _freq_stats(labels: Sequence[str]) -> PartitionStats:
    freq: dict[str, int] = {}
    for lab in labels:
        freq[lab] = freq.get(lab, 0) + 1
    return PartitionStats.from_block_sizes(freq.values())


def ingest_partition(path: str | Path) -> IngestedPartition:
    """Read ``group,observation,label`` rows; group ids must be 1..d."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise MalformedRow(f"{path}: {exc.strerror}") from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MalformedRow(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header != ["group", "observation", "label"]:
        raise MalformedRow(f"{path}: line 1: header must be group,observation,label")
    by_group: dict[int, list[str]] = {}
    seen: set[tuple[int, str]] = set()
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise MalformedRow(f"{path}: line {line}: expected 3 fields, got {len(row)}")
        g, obs, lab = (v.strip() for v in row)
        try:
            gi = int(g)
        except ValueError:
            raise MalformedRow(f"{path}: line {line}: group {g!r} is not an integer") from None
        if gi < 1:
            raise MalformedRow(f"{path}: line {line}: group ids start at 1")
        if not obs or not lab:
            raise MalformedRow(f"{path}: line {line}: empty observation or label")
        if (gi, obs) in seen:
            raise DuplicateObservation(f"{path}: line {line}: observation {obs} repeated in group {gi}")
        seen.add((gi, obs))
        by_group.setdefault(gi, []).append(lab)
    if not by_group:
        raise MalformedRow(f"{path}: no data rows")
    d = max(by_group)
    missing = [i for i in range(1, d + 1) if i not in by_group]
    if missing:
        raise MalformedRow(f"{path}: group ids must form 1..{d}; missing {missing}")
    groups = tuple(_freq_stats(by_group[i]) for i in range(1, d + 1))
    pooled = _freq_stats([lab for i in range(1, d + 1) for lab in by_group[i]])
    return IngestedPartition(groups, pooled)


# ------------------------------------------------------------- subcommands


@dataclass
class Table:
    name: str
    header: list[str]
    rows: list[list]
    summary: dict = field(default_factory=dict)


def _label_rows(labels: Sequence[np.ndarray]) -> list[list]:
    return [[g + 1, j + 1, f"c{int(lab)}"] for g, arr in enumerate(labels)
            for j, lab in enumerate(arr)]


def cmd_simulate(cfg: RunConfig) -> list[Table]:
    """Per-replicate K and spectrum; optional per-observation labels."""
    case = cfg.resolved_case
    rng = RngSpec(cfg.seed, cfg.stream)
    R, rmax, workers = cfg.replicates, cfg.r_max, cfg.thread_count()
    spec_cols = [f"M_{r}" for r in range(1, rmax + 1)] + ["overflow"]
    tables = []
    if case == SINGLE:
        n = cfg.single_n()
        K, M = sample_k_batch([n], cfg.epm(), R, rng, full=True, r_max=rmax, workers=workers)
        rows = [[rep, n, int(K[rep, 0])] + M[rep, 0].tolist() for rep in range(R)]
        tables.append(Table("simulate", ["replicate", "n", "K"] + spec_cols, rows))
        if cfg.emit_labels:
            for rep in range(R):
                st = SeatingState(record_labels=n).advance(n, cfg.epm(), rng.replicate(rep).stream_obj())
                tables.append(Table(f"labels_r{rep}", ["group", "observation", "label"],
                                    _label_rows([st.labels])))
        return tables
    hp = cfg.hier()
    sizes = cfg.group_sizes()
    b = hier_batch([sizes], hp, R, rng, group_full=True, top_full=True, r_max=rmax,
                   workers=workers)
    gcols = [f"K_{i + 1}" for i in range(hp.d)]
    rows = [[rep, int(b.N[0]), int(b.xi[rep, 0]), int(b.K[rep, 0])] + b.group_K[rep, 0].tolist()
            + b.spectrum[rep, 0].tolist() for rep in range(R)]
    tables.append(Table("simulate", ["replicate", "N", "xi", "K"] + gcols + spec_cols, rows,
                        {"sizes": sizes, "case": case}))
    if cfg.emit_labels:
        for rep in range(R):
            hs = sample_hier(sizes, None, hp, rng.replicate(rep), emit_labels=True)
            tables.append(Table(f"labels_r{rep}", ["group", "observation", "label"],
                                _label_rows(hs.labels)))
    return tables


def cmd_pmf(cfg: RunConfig) -> list[Table]:
    kind = cfg.kind
    if kind == "K":
        pmf = exact_K_pmf(cfg.single_n(), cfg.epm())
        return [Table("pmf_K", ["k", "p"], pmf.rows())]
    if kind == "joint":
        law = enumerate_joint(cfg.single_n(), cfg.epm())
        rows = [[sum(m for _, m in key), " ".join(f"{r}:{m}" for r, m in key), p]
                for key, p in sorted(law.table.items())]
        return [Table("pmf_joint", ["K", "spectrum", "p"], rows)]
    hp = cfg.hier()
    sizes = cfg.group_sizes()
    if kind == "hier_K":
        return [Table("pmf_hier_K", ["k", "p"], exact_hier_K_pmf(sizes, hp).rows(),
                      {"sizes": sizes})]
    if kind == "xi":
        return [Table("pmf_xi", ["xi", "p"], exact_xi_pmf(sizes, hp.bottom).rows(),
                      {"sizes": sizes})]
    return [Table(f"pmf_M{cfg.r}", ["m", "p"], exact_hier_Mr_pmf(sizes, hp, cfg.r).rows(),
                  {"sizes": sizes})]


def _rate_params(cfg: RunConfig) -> dict:
    weights = cfg.weights if cfg.weights is not None else GroupDesign.equal(cfg.d).weights
    return {"alpha": cfg.alpha0, "theta0": cfg.theta0, "beta": cfg.beta, "theta": cfg.theta,
            "d": cfg.d, "r": cfg.r, "weights": weights}


def cmd_rates(cfg: RunConfig) -> list[Table]:
    if cfg.x is not None:
        xs = [cfg.x]
    else:
        xs = np.linspace(cfg.x_min, cfg.x_max, cfg.x_num).tolist()
    params = _rate_params(cfg)
    rows = []
    for x in xs:
        res = evaluate_rate(cfg.fn, x, **params)
        rows.append([x, res.value, res.argmax, res.converged, res.reason])
    return [Table(f"rates_{cfg.fn}", ["x", "value", "argmax", "converged", "reason"], rows,
                  {"fn": cfg.fn, "params": {k: params[k] for k in RATE_FUNCTIONS[cfg.fn]}})]


def experiment_config(cfg: RunConfig) -> ExperimentConfig:
    case = cfg.resolved_case
    grid = cfg.grid
    if grid is None:
        size = cfg.N if cfg.N is not None else cfg.n
        grid = (size,) if size is not None else (10_000,)
    common = dict(case=case, grid=grid, replicates=cfg.replicates, seed=cfg.seed,
                  stream=cfg.stream, c=cfg.c, level=cfg.level, x_list=cfg.x_list,
                  workers=cfg.thread_count())
    if case == SINGLE:
        return ExperimentConfig(alpha=cfg.alpha0, theta=cfg.theta0, **common)
    return ExperimentConfig(alpha=cfg.alpha0, theta0=cfg.theta0, beta=cfg.beta, theta=cfg.theta,
                            d=cfg.d, weights=cfg.weights, **common)


def cmd_verify(cfg: RunConfig) -> dict:
    ecfg = experiment_config(cfg)
    out_dir = Path(cfg.output_dir or "verify_out")
    results = {}
    for name in cfg.suites:
        res = run_suite(name, ecfg, out_dir)
        results[name] = res.passed
    return results


def cmd_estimate(cfg: RunConfig) -> dict:
    ing = ingest_partition(cfg.input)
    return {**ing.to_json(), "K": ing.pooled.K, "n": ing.pooled.n,
            "alpha_hat": estimate_alpha(ing.pooled)}


# ------------------------------------------------------------- driver


def _emit(tables: list[Table], cfg: RunConfig, out) -> None:
    if cfg.output_dir is None:
        for t in tables:
            if cfg.format == "json":
                out.write(json_text({"name": t.name, "header": t.header, "rows": t.rows,
                                     "summary": t.summary}))
            else:
                out.write(csv_text(t.header, t.rows))
        return
    root = Path(cfg.output_dir)
    for t in tables:
        if cfg.format == "json":
            write_text(root / f"{t.name}.json",
                       json_text({"name": t.name, "header": t.header, "rows": t.rows,
                                  "summary": t.summary}))
        else:
            write_text(root / f"{t.name}.csv", csv_text(t.header, t.rows))


class _Parser(argparse.ArgumentParser):
    """Argument errors become ParseError so they map to the validation exit code."""

    def error(self, message):
        raise ParseError(message)


def build_parser() -> argparse.ArgumentParser:
    # unset flags stay absent so subcommand options never mask top-level ones
    opts = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    opts.add_argument("--config", help="JSON config file; flags override its keys")
    for name, f in FIELDS.items():
        if name == "subcommand":
            continue
        default = f.default if f.default is not dataclasses.MISSING else None
        if name in _INT_LIST | _FLOAT_LIST or name == "suites":
            hint = "comma-separated list"
        else:
            hint = ""
        opts.add_argument(f"--{name.replace('_', '-')}", dest=name,
                          help=f"{hint + '; ' if hint else ''}default: {default}")
    parser = _Parser(
        prog="hssm", description="Simulate, tabulate and verify hierarchical species sampling models.",
        epilog="With --config alone the subcommand is read from the file.")
    parser.add_argument("--config", help="JSON config file; flags override its keys")
    sub = parser.add_subparsers(dest="subcommand")
    helps = {
        "simulate": "sample K and the frequency spectrum per replicate",
        "pmf": "exact pmfs (kind: K, hier_K, xi, Mr, joint)",
        "rates": "evaluate a rate function at x or on a grid",
        "verify": "run verification suites; writes <suite>.csv and <suite>.json",
        "estimate": "ingest a group,observation,label CSV and estimate the discount",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[opts], help=helps[name])
    return parser


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    try:
        args = vars(build_parser().parse_args(argv))
        path = args.pop("config", None)
        cfg = parse_config(path, args)
        if cfg.subcommand == "simulate":
            _emit(cmd_simulate(cfg), cfg, out)
        elif cfg.subcommand == "pmf":
            _emit(cmd_pmf(cfg), cfg, out)
        elif cfg.subcommand == "rates":
            _emit(cmd_rates(cfg), cfg, out)
        elif cfg.subcommand == "verify":
            for name, ok in cmd_verify(cfg).items():
                status = "n/a" if ok is None else ("PASS" if ok else "FAIL")
                out.write(f"{name}: {status}\n")
        else:
            report = cmd_estimate(cfg)
            if cfg.output_dir is not None:
                write_text(Path(cfg.output_dir) / "estimate.json", json_text(report))
            else:
                out.write(json_text(report))
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (HssmError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

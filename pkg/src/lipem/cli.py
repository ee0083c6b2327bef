"""Command-line front end: config loading, ingestion, dispatch, reports.

Exit codes: 0 success, 2 usage errors (argparse), 3 configuration
validation failures (the offending key is named), 1 anything else, with
a single machine-parseable ``error: <kind>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import warnings
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import bench
from .bench import (
    BenchReport,
    GaussianExperimentConfig,
    HierarchicalSpec,
    NullGen,
    cmapss_experiment,
    consistency_check,
    dichotomy_check,
    gaussian_experiment,
    oracle_mse_check,
)
from .em import EmConfig, NullSpec, run_em, write_em_report
from .errors import (
    DataNotFoundError,
    InvalidConfigurationError,
    LipemError,
    ParseError,
)
from .judge import HttpTransport, ReplayLog, TransportConfig, elicit_records
from .likelihood import Dataset, GaussianMeanModel, SplineGlmModel
from .lip import (
    Lip,
    WorthVector,
    fit_lip,
    read_records,
    simulate_elicitation,
    write_records,
)

__all__ = [
    "RunConfig",
    "dispatch",
    "main",
    "ingest_cmapss",
    "load_dataset",
    "write_report",
]

SECTION_SCHEMAS: Mapping[str, frozenset] = {
    "em": frozenset(
        {
            "tau",
            "nu",
            "variant",
            "null_kind",
            "null_table",
            "max_iters",
            "tol",
            "patience",
            "tempering_mode",
            "init_at_target_mle",
        }
    ),
    "model": frozenset({"kind", "covariance", "knots", "noise_variance", "ridge"}),
    "generator": frozenset(
        {
            "n_sources",
            "relevant",
            "theta0",
            "tau",
            "sigma",
            "n_target",
            "n_source",
            "seed",
            "offset",
            "shell",
            "spread",
        }
    ),
    "experiment": frozenset(
        f.name for f in dataclasses.fields(GaussianExperimentConfig)
    ),
    "lip": frozenset({"p0", "eps", "tol", "max_iters"}),
    "oracle": frozenset({"replications", "taus", "n_weight_vectors"}),
    "dichotomy": frozenset({"n_sweep", "priors", "replications"}),
    "consistency": frozenset({"n0_sweep", "replications", "nu"}),
    "cmapss": frozenset({"cutoffs", "engines", "tau", "nu", "ridge", "p0", "knots"}),
}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Validated key-value document grouped into known sections."""

    sections: Mapping[str, Mapping[str, object]] = dataclasses.field(
        default_factory=dict
    )

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls({})
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InvalidConfigurationError(
                f"cannot read config file {path}: {exc}", key="config"
            ) from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfigurationError(
                f"config file {path} is not valid JSON: {exc}", key="config"
            ) from exc
        if not isinstance(raw, dict):
            raise InvalidConfigurationError(
                "config document must be a JSON object", key="config"
            )
        for section, body in raw.items():
            if section not in SECTION_SCHEMAS:
                raise InvalidConfigurationError(
                    f"unknown config section {section!r}", key=section
                )
            if not isinstance(body, dict):
                raise InvalidConfigurationError(
                    f"section {section!r} must be an object", key=section
                )
            for k in body:
                if k not in SECTION_SCHEMAS[section]:
                    raise InvalidConfigurationError(
                        f"unknown key {k!r} in section {section!r}",
                        key=f"{section}.{k}",
                    )
        return cls(raw)

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))


def load_dataset(path) -> Dataset:
    """Read a whitespace-delimited numeric matrix as a Dataset."""
    try:
        arr = np.loadtxt(path, ndmin=2)
    except OSError as exc:
        raise ParseError(f"cannot read dataset file {path}: {exc}") from exc
    except ValueError as exc:
        raise ParseError(f"dataset file {path} is not numeric: {exc}") from exc
    if arr.size == 0:
        arr = arr.reshape(0, max(arr.shape[1], 1) if arr.ndim == 2 else 1)
    return Dataset(arr)


def ingest_cmapss(path) -> dict[int, Dataset]:
    """Parse a C-MAPSS trajectory file into per-engine datasets.

    Each row holds 26 whitespace-delimited values: unit id, cycle,
    three operational settings, then 21 sensor channels. The returned
    datasets carry (cycle, sensor 9) pairs ordered by cycle. A file
    with other than 100 engines only warns, so subsets work in tests.
    """
    path = Path(path)
    if not path.exists():
        raise DataNotFoundError(bench.FD001_INSTRUCTIONS)
    rows: dict[int, list[tuple[float, float]]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 26:
                raise ParseError(
                    f"expected 26 columns, found {len(fields)}",
                    line_number=lineno,
                )
            try:
                unit = int(float(fields[0]))
                cycle = float(fields[1])
                sensor9 = float(fields[13])
            except ValueError as exc:
                raise ParseError(
                    f"non-numeric field: {exc}", line_number=lineno
                ) from exc
            rows.setdefault(unit, []).append((cycle, sensor9))
    engines: dict[int, Dataset] = {}
    for unit in sorted(rows):
        pts = np.asarray(rows[unit], dtype=float)
        pts = pts[np.argsort(pts[:, 0], kind="stable")]
        engines[unit] = Dataset(pts)
    if len(engines) != 100:
        warnings.warn(
            f"expected 100 engines, found {len(engines)}",
            RuntimeWarning,
            stacklevel=2,
        )
    return engines


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def write_report(
    reports: Sequence[BenchReport],
    out_dir,
    stem: str,
    *,
    config_echo: Mapping | None = None,
    curves: Mapping | None = None,
) -> list[Path]:
    """Emit the CSV table, JSON sidecar, and optional plot-data CSV.

    Deterministic: rows are sorted, JSON keys are sorted, numbers are
    rendered with a fixed format, and nothing time-dependent is
    written, so identical inputs give byte-identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    param_names = {r.param_name for r in reports}
    param_col = param_names.pop() if len(param_names) == 1 else "param"
    csv_path = out_dir / f"{stem}.csv"
    lines = [f"method,{param_col},mean,stderr,replications"]
    for r in sorted(reports, key=lambda r: (r.method, r.param_value)):
        lines.append(
            f"{r.method},{_fmt(r.param_value)},{_fmt(r.mean)},"
            f"{_fmt(r.stderr)},{r.replications}"
        )
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths.append(csv_path)

    sidecar = {
        "config": config_echo if config_echo is not None else {},
        "reports": [
            {
                "method": r.method,
                "metric": r.metric,
                "param_name": r.param_name,
                "param_value": r.param_value,
                "mean": r.mean,
                "stderr": r.stderr,
                "replications": r.replications,
                "values": list(r.values),
            }
            for r in sorted(reports, key=lambda r: (r.method, r.param_value))
        ],
    }
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    paths.append(json_path)

    if curves:
        curve_path = out_dir / f"{stem}_curves.csv"
        names = sorted(curves["series"])
        header = "x," + ",".join(names)
        rows = [header]
        x = np.asarray(curves["x"], dtype=float)
        cols = [np.asarray(curves["series"][n], dtype=float) for n in names]
        for i in range(x.size):
            rows.append(
                ",".join([_fmt(x[i])] + [_fmt(col[i]) for col in cols])
            )
        curve_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        paths.append(curve_path)
    return paths


def _echo(obj) -> dict:
    out = dataclasses.asdict(obj)

    def clean(v):
        if isinstance(v, dict):
            return {str(k): clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.generic):
            return v.item()
        return v

    return clean(out)


def _build_em_config(section: dict, **overrides) -> EmConfig:
    body = dict(section)
    null_kind = body.pop("null_kind", "empirical_bayes_mixture")
    null_table = body.pop("null_table", None)
    if null_table is not None and isinstance(null_table, dict):
        null_table = {int(k): float(v) for k, v in null_table.items()}
    body["null_spec"] = NullSpec(null_kind, null_table)
    body.update(overrides)
    return EmConfig(**body)


def _build_model(section: dict, width: int):
    kind = section.get("kind", "gaussian")
    if kind == "gaussian":
        return GaussianMeanModel(width, covariance=section.get("covariance", 1.0))
    if kind == "spline_glm":
        if "knots" not in section:
            raise InvalidConfigurationError(
                "spline_glm model needs knots", key="model.knots"
            )
        return SplineGlmModel(
            np.asarray(section["knots"], dtype=float),
            noise_variance=section.get("noise_variance", 1.0),
            ridge=section.get("ridge", 0.0),
        )
    raise InvalidConfigurationError(
        f"unknown model kind {kind!r}", key="model.kind"
    )


def _build_generator(section: dict, seed: int | None) -> HierarchicalSpec:
    body = dict(section)
    null_kwargs = {}
    for k in ("offset", "shell", "spread"):
        if k in body:
            val = body.pop(k)
            null_kwargs[k] = tuple(val) if isinstance(val, list) else val
    if seed is not None:
        body["seed"] = seed
    for k in ("relevant", "theta0"):
        if k in body:
            body[k] = tuple(body[k])
    return HierarchicalSpec(null_gen=NullGen(**null_kwargs), **body)


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _cmd_fit_lip(args) -> int:
    cfg = RunConfig.load(args.config).section("lip")
    records = read_records(args.records)
    worths, lip = fit_lip(
        records,
        args.sources,
        p0=cfg.get("p0", 0.01),
        eps=cfg.get("eps", 0.1),
        tol=cfg.get("tol", 1e-8),
        max_iters=cfg.get("max_iters", 200),
    )
    lip.write(args.out)
    print(f"wrote {args.out} ({lip.n_sources} sources)")
    return 0


def _cmd_simulate_oracle(args) -> int:
    alpha = np.asarray(_parse_floats(args.alpha), dtype=float)
    worths = WorthVector(alpha)
    sizes = _parse_ints(args.sizes)
    seed = args.seed if args.seed is not None else 42
    rng = np.random.default_rng(seed)
    records = simulate_elicitation(worths, sizes, args.count, rng)
    write_records(args.out, records)
    print(f"wrote {args.out} ({len(records)} records)")
    return 0


def _cmd_elicit(args) -> int:
    raw = json.loads(Path(args.summaries).read_text(encoding="utf-8"))
    summaries = {int(k): str(v) for k, v in raw.items()}
    n_sources = args.sources or max(summaries)
    if args.context_file:
        context = Path(args.context_file).read_text(encoding="utf-8")
    else:
        context = args.context or ""
    if not context.strip():
        raise InvalidConfigurationError(
            "an elicitation needs a target description; pass --context "
            "or --context-file",
            key="context",
        )
    transport = HttpTransport(
        TransportConfig(model=args.model, temperature=args.temperature)
    )
    replay = ReplayLog(args.replay) if args.replay else None
    seed = args.seed if args.seed is not None else 42
    rng = np.random.default_rng(seed)
    records, telemetry = elicit_records(
        transport,
        context,
        summaries,
        n_sources,
        _parse_ints(args.sizes),
        args.count,
        rng,
        replay=replay,
        jobs=args.jobs,
    )
    write_records(args.out, records)
    print(
        f"wrote {args.out} ({len(records)} records; "
        f"queries={telemetry.queries} cache_hits={telemetry.cache_hits} "
        f"retries={telemetry.retries} malformed={telemetry.malformed})"
    )
    return 0


def _cmd_run_em(args) -> int:
    cfg = RunConfig.load(args.config)
    target = load_dataset(args.target)
    sources = [load_dataset(p) for p in args.sources]
    model = _build_model(cfg.section("model"), target.width)
    em_config = _build_em_config(cfg.section("em"))
    if args.lip == "uniform":
        p0 = cfg.section("lip").get("p0", 0.01)
        pi = np.full(len(sources), p0)
    else:
        lip = Lip.read(args.lip)
        if lip.n_sources != len(sources):
            raise InvalidConfigurationError(
                f"prior covers {lip.n_sources} sources but {len(sources)} "
                "source datasets were given",
                key="lip",
            )
        pi = lip.pi
    state, report = run_em([target, *sources], model, pi, em_config)
    write_em_report(report, args.out)
    weights = " ".join(_fmt(w) for w in state.weights)
    print(
        f"wrote {args.out} (converged={report.converged} "
        f"iterations={report.iterations} weights=[{weights}])"
    )
    return 0


def _cmd_bench_gaussian(args) -> int:
    body = RunConfig.load(args.config).section("experiment")
    for k in ("dims",):
        if k in body:
            body[k] = tuple(body[k])
    if args.seed is not None:
        body["seed"] = args.seed
    config = GaussianExperimentConfig(**body)
    reports, curves = gaussian_experiment(config)
    paths = write_report(
        reports, args.out, "gaussian", config_echo=_echo(config), curves=curves
    )
    for p in paths:
        print(p)
    return 0


def _cmd_bench_cmapss(args) -> int:
    cfg = RunConfig.load(args.config).section("cmapss")
    cutoffs = (
        _parse_floats(args.cutoff)
        if args.cutoff
        else cfg.get("cutoffs", [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1])
    )
    engines = (
        _parse_ints(args.engines)
        if args.engines
        else cfg.get("engines", list(bench.CMAPSS_ENGINES))
    )
    kwargs = {}
    for k in ("tau", "nu", "ridge", "p0"):
        if k in cfg:
            kwargs[k] = cfg[k]
    if "knots" in cfg:
        kwargs["knots"] = cfg["knots"]
    reports, curves = cmapss_experiment(
        args.data, args.lip, tuple(cutoffs), tuple(engines), **kwargs
    )
    echo = {
        "lip_source": args.lip,
        "cutoffs": list(cutoffs),
        "engines": list(engines),
        **{k: kwargs[k] for k in sorted(kwargs) if k != "knots"},
    }
    if "knots" in kwargs:
        echo["knots"] = list(kwargs["knots"])
    paths = write_report(
        reports, args.out, "cmapss", config_echo=echo, curves=curves
    )
    for p in paths:
        print(p)
    return 0


def _cmd_bench_oracle_mse(args) -> int:
    cfg = RunConfig.load(args.config)
    oracle_cfg = cfg.section("oracle")
    gen = cfg.section("generator")
    gen.setdefault("n_sources", 3)
    gen.setdefault("relevant", [1, 2, 3])
    taus = oracle_cfg.get("taus", [0.0, 0.1])
    replications = int(oracle_cfg.get("replications", 10**5))
    n_w = int(oracle_cfg.get("n_weight_vectors", 5))
    records = []
    for tau in taus:
        spec = _build_generator({**gen, "tau": float(tau)}, args.seed)
        records.append(
            oracle_mse_check(spec, replications, n_weight_vectors=n_w)
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "oracle_mse.json"
    json_path.write_text(
        json.dumps([_echo(r) for r in records], sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    csv_path = out_dir / "oracle_mse.csv"
    lines = ["method,tau,mean,stderr,replications"]
    for r in records:
        lines.append(f"closed_form,{_fmt(r.tau)},{_fmt(r.closed_form)},0,0")
        lines.append(
            f"mc_estimate,{_fmt(r.tau)},{_fmt(r.mc_mean)},"
            f"{_fmt(r.mc_stderr)},{r.replications}"
        )
        for i, chk in enumerate(r.fixed_weight_checks, start=1):
            lines.append(
                f"fixed_w{i}_predicted,{_fmt(r.tau)},{_fmt(chk.predicted)},0,0"
            )
            lines.append(
                f"fixed_w{i}_mc,{_fmt(r.tau)},{_fmt(chk.mc_mean)},"
                f"{_fmt(chk.mc_stderr)},{r.replications}"
            )
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(csv_path)
    print(json_path)
    for r in records:
        print(
            f"tau={_fmt(r.tau)} closed_form={_fmt(r.closed_form)} "
            f"mc={_fmt(r.mc_mean)} z={_fmt(r.z_score)}"
        )
    return 0


def _cmd_bench_dichotomy(args) -> int:
    cfg = RunConfig.load(args.config)
    body = cfg.section("dichotomy")
    gen = cfg.section("generator")
    if gen:
        spec = _build_generator(gen, args.seed)
    else:
        spec = HierarchicalSpec(
            n_sources=3,
            relevant=(1,),
            theta0=(0.0,),
            tau=0.0,
            null_gen=NullGen(offset=(5.0,), spread=1.0),
            seed=args.seed if args.seed is not None else 42,
        )
    reports = dichotomy_check(
        spec,
        tuple(body.get("n_sweep", (10, 100, 1000, 10000))),
        priors=tuple(body.get("priors", (0.1, 0.9))),
        replications=int(body.get("replications", 100)),
    )
    paths = write_report(
        reports, args.out, "dichotomy", config_echo={"spec": _echo(spec), **body}
    )
    for p in paths:
        print(p)
    return 0


def _cmd_bench_consistency(args) -> int:
    cfg = RunConfig.load(args.config)
    body = cfg.section("consistency")
    gen = cfg.section("generator")
    if gen:
        spec = _build_generator(gen, args.seed)
    else:
        spec = HierarchicalSpec(
            n_sources=3,
            relevant=(1,),
            theta0=(0.0,),
            tau=0.0,
            null_gen=NullGen(offset=(5.0,), spread=1.0),
            seed=args.seed if args.seed is not None else 42,
        )
    reports = consistency_check(
        spec,
        tuple(body.get("n0_sweep", (100, 1000, 10000, 100000))),
        replications=int(body.get("replications", 50)),
        nu=float(body.get("nu", 0.05)),
    )
    paths = write_report(
        reports, args.out, "consistency", config_echo={"spec": _echo(spec), **body}
    )
    for p in paths:
        print(p)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipem",
        description="Prior-aided EM for multi-source parameter estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default=out_default)
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("fit-lip", help="fit a prior from choice records")
    p.add_argument("--records", required=True)
    p.add_argument("--sources", type=int, required=True)
    common(p, "lip.txt")
    p.set_defaults(handler=_cmd_fit_lip)

    p = sub.add_parser("simulate-oracle", help="simulate judge records")
    p.add_argument("--alpha", required=True, help="comma-separated worths, null first")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--sizes", default="3,4,5")
    common(p, "records.txt")
    p.set_defaults(handler=_cmd_simulate_oracle)

    p = sub.add_parser("elicit", help="query the live judge for records")
    p.add_argument("--summaries", required=True, help="JSON map index -> text")
    p.add_argument("--context", default=None)
    p.add_argument("--context-file", default=None)
    p.add_argument("--sources", type=int, default=None)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--sizes", default="3,4,5")
    p.add_argument("--replay", default=None, help="JSONL replay cache path")
    p.add_argument("--model", default="")
    p.add_argument("--temperature", type=float, default=0.0)
    common(p, "records.txt")
    p.set_defaults(handler=_cmd_elicit)

    p = sub.add_parser("run-em", help="run EM on dataset files")
    p.add_argument("--target", required=True)
    p.add_argument("--sources", nargs="+", required=True)
    p.add_argument("--lip", default="uniform", help="'uniform' or a prior file")
    common(p, "em_report.txt")
    p.set_defaults(handler=_cmd_run_em)

    b = sub.add_parser("bench", help="benchmark drivers")
    bsub = b.add_subparsers(dest="bench_command", required=True)

    p = bsub.add_parser("gaussian", help="scarce-target Gaussian study")
    common(p, "reports")
    p.set_defaults(handler=_cmd_bench_gaussian)

    p = bsub.add_parser("cmapss", help="turbofan sensor prediction study")
    p.add_argument("--data", required=True, help="directory with train_FD001.txt")
    p.add_argument(
        "--lip", default="uniform", help="'uniform', 'fast-decay', or a file"
    )
    p.add_argument("--cutoff", default=None, help="comma-separated cutoffs")
    p.add_argument("--engines", default=None, help="comma-separated engine ids")
    common(p, "reports")
    p.set_defaults(handler=_cmd_bench_cmapss)

    p = bsub.add_parser("oracle-mse", help="closed-form MSE identity check")
    common(p, "reports")
    p.set_defaults(handler=_cmd_bench_oracle_mse)

    p = bsub.add_parser("dichotomy", help="weight commitment sweep")
    common(p, "reports")
    p.set_defaults(handler=_cmd_bench_dichotomy)

    p = bsub.add_parser("consistency", help="target-size consistency sweep")
    common(p, "reports")
    p.set_defaults(handler=_cmd_bench_consistency)

    return parser


def dispatch(argv: Sequence[str] | None = None) -> int:
    """Parse arguments and run one subcommand, mapping errors to codes."""
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except InvalidConfigurationError as exc:
        line = f"error: {exc}"
        if exc.key:
            line += f" [key: {exc.key}]"
        print(line, file=sys.stderr)
        return 3
    except LipemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io_error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())

"""Command-line front end.

Commands
--------
distmat       pairwise distance matrix of a series file
cluster-k     farthest-first clustering into a known number of clusters
cluster-auto  threshold clustering, number of clusters unknown
bound         error bound for threshold clustering
simulate      draw a labelled series file from a process config
experiment    run a consistency experiment from a config

Every output file starts with a one-line JSON header whose first key is
``schema``.  Series files are JSON lines (``{"id": ..., "series": [...]}``)
or headerless CSV (one series per row, ids ``row-<k>``).  Config files are
YAML or JSON mappings with a ``schema`` key.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np
import yaml

from .clustering import Clustering, cluster_known_k, cluster_threshold
from .distance import THREADS_ENV, PartitionScheme, Sample, TruncationParams, distance_matrix
from .errors import InvalidInputError, InvalidParameterError, InvalidSpecError, ProcclustError
from .generators import MarkovSpec, markov_alpha_bound, spec_from_dict
from .harness import ExperimentConfig, Source, draw_corpus, run_experiment
from .mixing import Algo2Params, MixingBound, default_params, error_bound

SERIES_SCHEMA = "procclust.series/1"
MATRIX_SCHEMA = "procclust.distmat/1"
CLUSTERING_SCHEMA = "procclust.clustering/1"
BOUND_SCHEMA = "procclust.bound/1"
REPORT_SCHEMA = "procclust.report/1"
SIMULATE_CONFIG = "procclust.simulate/1"
EXPERIMENT_CONFIG = "procclust.experiment/1"
MIXING_CONFIG = "procclust.mixing/1"


def _header(schema: str, **meta) -> str:
    return json.dumps({"schema": schema, **meta}, sort_keys=False)


def _num(x: float) -> str:
    return "%.17g" % x


# ---------------------------------------------------------------- ingest


def _parse_jsonl(text: str, path: str) -> list:
    samples = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise InvalidInputError(f"{path}:{lineno}: expected a JSON object")
        if "schema" in rec and "series" not in rec:
            if rec["schema"] != SERIES_SCHEMA:
                raise InvalidInputError(f"{path}:{lineno}: unsupported schema {rec['schema']!r}")
            continue
        if "id" not in rec or "series" not in rec:
            raise InvalidInputError(f"{path}:{lineno}: record needs 'id' and 'series'")
        sid, series = str(rec["id"]), rec["series"]
        if not isinstance(series, list) or not series:
            raise InvalidInputError(f"{path}:{lineno}: series of {sid!r} must be a nonempty array")
        samples.append(_make_sample(sid, series, f"{path}:{lineno}", seen))
    return samples


def _parse_csv(text: str, path: str) -> list:
    samples = []
    seen = set()
    for k, row in enumerate(csv.reader(io.StringIO(text))):
        cells = [c.strip() for c in row]
        while cells and cells[-1] == "":
            cells.pop()
        if not cells:
            raise InvalidInputError(f"{path}:{k + 1}: empty series")
        samples.append(_make_sample(f"row-{k}", cells, f"{path}:{k + 1}", seen))
    return samples


def _make_sample(sid, raw, where, seen) -> Sample:
    if sid in seen:
        raise InvalidInputError(f"{where}: duplicate id {sid!r}")
    seen.add(sid)
    values = []
    for pos, v in enumerate(raw):
        try:
            if isinstance(v, bool):
                raise ValueError
            x = float(v)
        except (TypeError, ValueError):
            raise InvalidInputError(f"{where}: id {sid!r} position {pos}: not a number: {v!r}") from None
        if not math.isfinite(x):
            raise InvalidInputError(f"{where}: id {sid!r} position {pos}: non-finite value {v!r}")
        values.append(x)
    return Sample(sid, values)


def ingest(path: str, fmt: str | None = None) -> list:
    """Read a series file into a list of :class:`Sample` in file order.

    ``fmt`` is ``"jsonl"`` or ``"csv"``; by default it follows the file
    extension (``.csv`` means CSV, anything else JSON lines).
    """
    if fmt is None:
        fmt = "csv" if str(path).lower().endswith(".csv") else "jsonl"
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if fmt == "jsonl":
        samples = _parse_jsonl(text, path)
    elif fmt == "csv":
        samples = _parse_csv(text, path)
    else:
        raise InvalidParameterError(f"unknown series format {fmt!r}")
    if not samples:
        raise InvalidInputError(f"{path}: no series found")
    return samples


def format_series(samples, labels=None, **meta) -> str:
    lines = [_header(SERIES_SCHEMA, **meta)]
    for i, s in enumerate(samples):
        rec = {"id": s.id, "series": [float(v) for v in s.values]}
        if labels is not None:
            rec["label"] = labels[i]
        lines.append(json.dumps(rec))
    return "\n".join(lines) + "\n"


def format_matrix(ids, D, **meta) -> str:
    lines = [_header(MATRIX_SCHEMA, ids=list(ids), **meta)]
    for row in np.asarray(D):
        lines.append(" ".join(_num(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def read_matrix(path: str):
    """Ids and matrix from a file written by ``distmat``."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise InvalidInputError(f"{path}: empty matrix file")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError:
        raise InvalidInputError(f"{path}:1: missing schema header") from None
    if not isinstance(head, dict) or head.get("schema") != MATRIX_SCHEMA:
        raise InvalidInputError(f"{path}:1: expected schema {MATRIX_SCHEMA!r}")
    ids = [str(i) for i in head.get("ids", [])]
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rows.append([float(v) for v in line.split()])
        except ValueError:
            raise InvalidInputError(f"{path}:{lineno}: malformed matrix row") from None
    if len(rows) != len(ids) or any(len(r) != len(ids) for r in rows):
        raise InvalidInputError(f"{path}: matrix shape does not match the {len(ids)} ids")
    return ids, np.array(rows, dtype=np.float64).reshape(len(ids), len(ids))


def format_clustering(ids, clustering: Clustering, **meta) -> str:
    lines = [_header(CLUSTERING_SCHEMA, k=clustering.k, **meta)]
    for c in clustering.clusters:
        lines.append(json.dumps([ids[i] for i in c]))
    return "\n".join(lines) + "\n"


def load_config(path: str, schema: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        # JSON first: PyYAML reads exponents such as 1e-3 as strings
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise InvalidInputError(f"{path}: cannot parse config ({exc})") from None
    if not isinstance(data, dict):
        raise InvalidInputError(f"{path}: config must be a mapping")
    if data.get("schema") != schema:
        raise InvalidInputError(f"{path}: expected schema {schema!r}, got {data.get('schema')!r}")
    return data


# ---------------------------------------------------------------- helpers


def parse_mixing(text: str) -> MixingBound:
    """``zero``, ``geometric:C,RATE`` or ``markov:PATH``.

    A markov config lists one or more chains under ``chains``; the bound
    for their independent product is the sum of the per-chain bounds.
    """
    kind, _, arg = text.partition(":")
    if kind == "zero" and not arg:
        return MixingBound.zero()
    if kind == "geometric":
        try:
            scale, rate = (float(v) for v in arg.split(","))
        except ValueError:
            raise InvalidParameterError(f"expected geometric:C,RATE, got {text!r}") from None
        return MixingBound.geometric(scale, rate)
    if kind == "markov" and arg:
        data = load_config(arg, MIXING_CONFIG)
        chains = data.get("chains")
        if not isinstance(chains, list) or not chains:
            raise InvalidSpecError(f"{arg}: 'chains' must be a nonempty list")
        bounds = []
        for c in chains:
            spec = spec_from_dict(c)
            if not isinstance(spec, MarkovSpec):
                raise InvalidSpecError(f"{arg}: only markov chains have a computable mixing bound")
            bounds.append(markov_alpha_bound(spec))
        bound = bounds[0] if len(bounds) == 1 else MixingBound.total(bounds)
        bound.name = f"markov:{os.path.basename(arg)}"
        return bound
    raise InvalidParameterError(f"unknown mixing spec {text!r}")


def _estimator(args):
    if args.estimator == "exact":
        return "exact", {"estimator": "exact"}
    if args.m_max is None or args.l_max is None:
        raise InvalidParameterError("the truncated estimator needs --m-max and --l-max")
    t = TruncationParams(args.m_max, args.l_max, args.cell_cap)
    return t, {"estimator": "truncated", "m_max": t.m_max, "l_max": t.l_max, "cell_cap": t.cell_cap}


def _rescale(samples, allowed: bool):
    lo = min(float(s.values.min()) for s in samples)
    hi = max(float(s.values.max()) for s in samples)
    if lo >= 0.0 and hi <= 1.0:
        return samples, None
    if not allowed:
        raise InvalidInputError(
            f"values span [{lo!r}, {hi!r}] but threshold clustering needs [0, 1]; pass --rescale"
        )
    span = hi - lo
    out = []
    for s in samples:
        v = (s.values - lo) / span if span > 0 else np.zeros_like(s.values)
        out.append(Sample(s.id, np.clip(v, 0.0, 1.0)))
    return out, {"min": lo, "max": hi}


def _write(text: str, path: str | None):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _load_points(args):
    """Ids plus either a matrix (``--matrix``) or samples."""
    if args.matrix is not None:
        if args.input is not None:
            raise InvalidParameterError("give either a series file or --matrix, not both")
        ids, D = read_matrix(args.matrix)
        return ids, D, None
    if args.input is None:
        raise InvalidParameterError("a series file or --matrix is required")
    samples = ingest(args.input, args.format)
    return [s.id for s in samples], None, samples


# ---------------------------------------------------------------- commands


def cmd_distmat(args):
    samples = ingest(args.input, args.format)
    est, meta = _estimator(args)
    D = distance_matrix(samples, est, args.scheme, n_jobs=args.threads)
    _write(format_matrix([s.id for s in samples], D, scheme=args.scheme, **meta), args.output)


def cmd_cluster_k(args):
    ids, D, samples = _load_points(args)
    meta = {"algorithm": "known-k"}
    if D is None:
        est, emeta = _estimator(args)
        meta.update(emeta, scheme=args.scheme)
        D = distance_matrix(samples, est, args.scheme, n_jobs=args.threads)
    result = cluster_known_k(D, args.k)
    meta["representatives"] = [ids[r] for r in result.representatives]
    _write(format_clustering(ids, result, **meta), args.output)


def cmd_cluster_auto(args):
    if args.delta is None and args.mixing is None:
        raise InvalidParameterError("cluster-auto needs --mixing or --delta")
    if args.delta is not None and not 0.0 <= args.delta:
        raise InvalidParameterError("--delta must be nonnegative")
    ids, D, samples = _load_points(args)
    meta = {"algorithm": "threshold"}
    delta = args.delta
    if D is None:
        samples, scaling = _rescale(samples, args.rescale)
        meta["rescale"] = scaling
        n = min(len(s) for s in samples)
        if delta is None:
            ab = parse_mixing(args.mixing)
            p = default_params(n, ab, cell_cap=args.cell_cap)
            est = TruncationParams(p.m_max, p.l_max, p.cell_cap)
            delta = p.delta
            report = error_bound(len(samples), p, n, ab)
            meta.update(
                estimator="truncated",
                m_max=p.m_max,
                l_max=p.l_max,
                cell_cap=p.cell_cap,
                q=p.q,
                mixing=ab.name,
                threshold_term=report.threshold_term,
            )
        else:
            est, emeta = _estimator(args)
            meta.update(emeta)
        meta["scheme"] = args.scheme
        D = distance_matrix(samples, est, args.scheme, n_jobs=args.threads)
    elif delta is None:
        raise InvalidParameterError("with --matrix the threshold must be given by --delta")
    meta["delta"] = delta
    result = cluster_threshold(D, delta)
    _write(format_clustering(ids, result, **meta), args.output)


def cmd_bound(args):
    ab = parse_mixing(args.mixing)
    base = default_params(args.n, ab, cell_cap=args.cell_cap)
    p = Algo2Params(
        delta=base.delta if args.delta is None else args.delta,
        q=base.q if args.q is None else args.q,
        m_max=base.m_max if args.m_max is None else args.m_max,
        l_max=base.l_max if args.l_max is None else args.l_max,
        b=base.b if args.b is None else args.b,
        cell_cap=args.cell_cap,
    )
    report = error_bound(args.N, p, args.n, ab, args.eps_rho).to_dict()
    report["params"]["b"] = str(p.b) if p.b.bit_length() > 53 else p.b
    _write(_header(BOUND_SCHEMA, **report) + "\n", args.output)


def _sources(data) -> list:
    raw = data.get("sources")
    if not isinstance(raw, list) or not raw:
        raise InvalidSpecError("config needs a nonempty 'sources' list")
    try:
        return [Source(spec_from_dict(s["spec"]), int(s.get("count", 1)), str(s.get("label", ""))) for s in raw]
    except (KeyError, TypeError, AttributeError) as exc:
        raise InvalidSpecError(f"malformed source entry ({exc!r})") from None


def cmd_simulate(args):
    data = load_config(args.config, SIMULATE_CONFIG)
    n = int(args.n if args.n is not None else data.get("n", 0))
    if n < 1:
        raise InvalidParameterError("series length n must be positive")
    seed = int(args.seed if args.seed is not None else data.get("seed", 0))
    cfg = ExperimentConfig(_sources(data), [n], seed=seed)
    samples, labels = draw_corpus(cfg, n, 0)
    _write(format_series(samples, labels, n=n, seed=seed), args.output)


def cmd_experiment(args):
    data = load_config(args.config, EXPERIMENT_CONFIG)
    data = {k: v for k, v in data.items() if k != "schema"}
    if args.seed is not None:
        data["seed"] = args.seed
    try:
        cfg = ExperimentConfig.from_dict(data)
    except (KeyError, TypeError, AttributeError) as exc:
        raise InvalidSpecError(f"{args.config}: malformed experiment config ({exc!r})") from None
    report = run_experiment(cfg, n_jobs=args.jobs)
    lines = [_header(REPORT_SCHEMA, config=cfg.to_dict(), warnings=report.warnings)]
    for rec in report.records:
        lines.append(json.dumps(rec.to_dict(timing=args.timing)))
    _write("\n".join(lines) + "\n", args.output)
    if args.summary is not None:
        _write(report.summary_table() + "\n", args.summary)


# ---------------------------------------------------------------- parser


def _threads_default() -> int | None:
    value = os.environ.get(THREADS_ENV)
    return int(value) if value and value.isdigit() else None


def _add_series_input(p, required=True):
    p.add_argument("input", nargs=None if required else "?", help="series file (JSON lines or CSV)")
    p.add_argument("--format", choices=["jsonl", "csv"], help="series format (default: by extension)")


def _add_estimator(p):
    p.add_argument("--estimator", choices=["exact", "truncated"], default="exact")
    p.add_argument("--m-max", type=int, help="largest gram length (truncated)")
    p.add_argument("--l-max", type=int, help="finest grid level (truncated)")
    p.add_argument("--cell-cap", type=int, help="cells kept per (m, l) (truncated)")
    p.add_argument("--scheme", choices=[s.value for s in PartitionScheme], default="dyadic")
    p.add_argument(
        "--threads",
        type=int,
        default=_threads_default(),
        help=f"worker threads for the distance kernel (default: ${THREADS_ENV} or 1)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="procclust", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distmat", help="pairwise distance matrix")
    _add_series_input(p)
    _add_estimator(p)
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.set_defaults(func=cmd_distmat)

    p = sub.add_parser("cluster-k", help="clustering with a known number of clusters")
    _add_series_input(p, required=False)
    p.add_argument("--matrix", help="cluster a matrix written by distmat instead of series")
    p.add_argument("--k", type=int, required=True, help="number of clusters")
    _add_estimator(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_cluster_k)

    p = sub.add_parser("cluster-auto", help="threshold clustering, unknown number of clusters")
    _add_series_input(p, required=False)
    p.add_argument("--matrix", help="cluster a matrix written by distmat (needs --delta)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--mixing", help="zero | geometric:C,RATE | markov:CONFIG")
    group.add_argument("--delta", type=float, help="fixed threshold")
    p.add_argument("--rescale", action="store_true", help="min-max rescale values into [0, 1]")
    _add_estimator(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_cluster_auto)

    p = sub.add_parser("bound", help="error bound for threshold clustering")
    p.add_argument("--N", type=int, required=True, help="number of samples")
    p.add_argument("--n", type=int, required=True, help="shortest sample length")
    p.add_argument("--mixing", required=True, help="zero | geometric:C,RATE | markov:CONFIG")
    p.add_argument("--eps-rho", type=float, help="separation constant of the generating law")
    p.add_argument("--delta", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--m-max", type=int)
    p.add_argument("--l-max", type=int)
    p.add_argument("--b", type=int)
    p.add_argument("--cell-cap", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("simulate", help="draw a labelled series file")
    p.add_argument("config", help=f"YAML/JSON config with schema {SIMULATE_CONFIG}")
    p.add_argument("--n", type=int, help="series length (overrides the config)")
    p.add_argument("--seed", type=int, help="seed (overrides the config)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run a consistency experiment")
    p.add_argument("config", help=f"YAML/JSON config with schema {EXPERIMENT_CONFIG}")
    p.add_argument("--seed", type=int, help="seed (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes over trials")
    p.add_argument("--timing", action="store_true", help="include wall time (not reproducible)")
    p.add_argument("--summary", help="also write a plain-text summary table here ('-' for stdout)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ProcclustError, OSError) as exc:
        print(f"procclust {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline: simulate -> fit -> rank -> pvalue -> fdr, plus ttest and benchmark.

Every subcommand writes into its own ``--out`` directory and leaves a
``manifest.json`` there recording the command, the full configuration, the
seed, library versions, SHA-256 digests of inputs and outputs, and wall
time.  Downstream stages read the upstream manifest and refuse to run when
an input file no longer matches the digest recorded when it was consumed.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .contrast import ContrastScorer, estimate_blups, rank_genes
from .data import (
    FLOAT_FORMAT,
    ExpressionMatrix,
    column_standardize,
    file_digest,
    load_expression_matrix,
    write_expression_matrix,
)
from .em import EmConfig, fit_mixture, select_g
from .errors import DataError, NumericalError
from .fdr import evaluate_against_truth, evaluate_selection, fdp_curve, infer
from .mixture import MixtureModel
from .permutation import fit_t_df, p_values, permute_labels, replicate_statistics
from .simulate import PRESETS, SimConfig, SimulationTruth, generate_dataset, preset
from .ttest import pooled_t

log = logging.getLogger("mixcontrast")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
MANIFEST = "manifest.json"


class UsageError(Exception):
    """Bad flag values detected after argparse accepted them."""


def _fmt(x: float) -> str:
    return format(float(x), FLOAT_FORMAT)


# -- manifests -----------------------------------------------------------------


def _versions() -> dict:
    return {
        "mixcontrast": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _write_manifest(out: Path, command: str, args: argparse.Namespace, inputs: dict, outputs: list[str],
                    started: float, extra: dict | None = None) -> None:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    doc = {
        "command": command,
        "argv": sys.argv[1:],
        "config": json.loads(json.dumps(config, default=str)),
        "seed": args.seed,
        "versions": _versions(),
        "inputs": {name: {"path": str(Path(p).resolve()), "sha256": file_digest(p)} for name, p in inputs.items()},
        "outputs": {name: file_digest(out / name) for name in outputs},
        "wall_time_s": round(time.perf_counter() - started, 3),
        **(extra or {}),
    }
    (out / MANIFEST).write_text(json.dumps(doc, indent=2) + "\n")


def _read_manifest(directory: Path, expected: str | tuple[str, ...]) -> dict:
    path = directory / MANIFEST
    if not path.is_file():
        raise DataError(f"{directory}: no {MANIFEST}; not an output directory of a previous stage")
    doc = json.loads(path.read_text())
    expected = (expected,) if isinstance(expected, str) else expected
    if doc.get("command") not in expected:
        raise DataError(f"{directory}: produced by {doc.get('command')!r}, expected one of {expected}")
    return doc


def _check_outputs(directory: Path, manifest: dict, names) -> None:
    """Refuse files of an upstream stage that changed after it finished."""
    for name in names:
        recorded = manifest["outputs"].get(name)
        if recorded is None:
            raise DataError(f"{directory / MANIFEST} does not list {name}")
        if file_digest(directory / name) != recorded:
            raise DataError(f"{directory / name} was modified after the {manifest['command']} stage wrote it")


def _check_inputs(manifest: dict, names, where: Path) -> dict[str, Path]:
    """Paths of the inputs an upstream stage consumed, verified against their digests."""
    paths = {}
    for name in names:
        entry = manifest["inputs"].get(name)
        if entry is None:
            raise DataError(f"{where / MANIFEST} does not record input {name!r}")
        path = Path(entry["path"])
        if not path.is_file():
            raise DataError(f"{path} (input {name!r} of {where}) no longer exists")
        if file_digest(path) != entry["sha256"]:
            raise DataError(
                f"stale model: {path} changed since {where} was produced "
                f"(recorded sha256 {entry['sha256'][:12]}..., now {file_digest(path)[:12]}...); re-run fit"
            )
        paths[name] = path
    return paths


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- shared loading ------------------------------------------------------------


def _load_fit(fit_dir: Path) -> tuple[MixtureModel, ExpressionMatrix, dict, dict[str, Path]]:
    """Fitted model plus the data it was fitted on, prepared exactly as during the fit."""
    manifest = _read_manifest(fit_dir, "fit")
    _check_outputs(fit_dir, manifest, ["model.json", "tau.tsv"])
    paths = _check_inputs(manifest, ["matrix", "labels"], fit_dir)
    data = load_expression_matrix(paths["matrix"], paths["labels"])
    model = MixtureModel.from_json(fit_dir / "model.json")
    if model.meta.get("standardized", True):
        data = column_standardize(data)
    if model.tau is None or model.tau.shape[0] != data.n:
        raise DataError(f"{fit_dir}: posterior table does not match the {data.n} features of the data")
    if data.m != 2:
        raise DataError(f"the contrast statistic needs two classes, data has {data.m}")
    return model, data, manifest, paths


def _score(model: MixtureModel, data: ExpressionMatrix):
    estimates = estimate_blups(data, model)
    scorer = ContrastScorer(model, estimates.c_hat)
    W, S, tau = scorer.score(data.values)
    return estimates, W, tau


def _write_ranked(path: Path, feature_ids, W, map_cluster, tau, extra: dict | None = None) -> None:
    """Ranked TSV: ``feature_id, rank, W, direction, map_cluster, tau_1..tau_g`` (+ extra columns)."""
    table = rank_genes(W)
    ranks, direction = table.ranks, table.direction
    extra = extra or {}
    header = ["feature_id", "rank", "W", "direction", "map_cluster"]
    header += [f"tau_{i + 1}" for i in range(tau.shape[1])] + list(extra)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(header)
        for j in table.order:
            row = [feature_ids[j], ranks[j], _fmt(W[j]), direction[j], int(map_cluster[j])]
            row += [_fmt(t) for t in tau[j]] + [_fmt(col[j]) for col in extra.values()]
            writer.writerow(row)


def _read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter="\t") if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    return rows[0], rows[1:]


def _column(header: list[str], rows: list[list[str]], name: str, path: Path) -> list[str]:
    if name not in header:
        raise DataError(f"{path}: missing column {name!r}")
    k = header.index(name)
    return [r[k] for r in rows]


def _floats(values: list[str], path: Path, name: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in values])
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry in column {name!r}: {exc}") from None


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args) -> None:
    started = time.perf_counter()
    overrides = {
        k: v for k, v in {
            "n": args.n, "p1": args.p1, "p2": args.p2, "block_size": args.block_size, "n_blocks": args.n_blocks,
            "base_mean": args.base_mean, "sigma_sq": args.sigma_sq, "rho_sim": args.rho, "delta": args.delta,
            "de_fraction": args.de_fraction,
        }.items() if v is not None
    }
    if args.stratify_blocks:
        overrides["stratify_blocks"] = True
    if "n" in overrides and "n_blocks" not in overrides and "block_size" not in overrides:
        raise UsageError("--n needs --block-size or --n-blocks so that n = block_size * n_blocks")
    if "n" in overrides:
        if "block_size" in overrides and "n_blocks" not in overrides:
            overrides["n_blocks"] = overrides["n"] // overrides["block_size"]
        elif "n_blocks" in overrides and "block_size" not in overrides:
            overrides["block_size"] = overrides["n"] // overrides["n_blocks"]
    config = preset(args.preset, **overrides) if args.preset else SimConfig(**overrides)
    out = _prepare_out(args)
    data, truth = generate_dataset(config, args.seed)
    write_expression_matrix(data, out / "matrix.tsv", out / "labels.tsv")
    truth.write(out / "truth.tsv")
    _write_manifest(out, "simulate", args, {}, ["matrix.tsv", "labels.tsv", "truth.tsv"], started,
                    {"simulation": config.to_dict()})
    log.info("wrote %d x %d matrix with %d DE features to %s", data.n, data.p, int(truth.is_de.sum()), out)


def _parse_g(text: str) -> tuple[int, int]:
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise UsageError(f"--g expects an integer or a range like 3..15, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise UsageError(f"--g range {text!r} is empty or starts below 1")
    return lo, hi


def cmd_fit(args) -> None:
    started = time.perf_counter()
    g_lo, g_hi = _parse_g(args.g)
    data = load_expression_matrix(args.matrix, args.labels)
    if not args.no_standardize:
        data = column_standardize(data)
    config = EmConfig(max_iter=args.max_iter, rel_tol=args.tol, n_starts=args.starts, seed=args.seed,
                      g_range=(g_lo, g_hi), n_jobs=args.threads)
    out = _prepare_out(args)
    if g_lo == g_hi:
        model, trace = fit_mixture(data, g_lo, config)
        table = [{"g": g_lo, "loglik": model.log_likelihood, "bic": model.bic, "converged": trace.converged,
                  "iters": trace.iterations}]
        if model.g != g_lo:
            log.warning("g=%d fit lost empty components; %d remain", g_lo, model.g)
    else:
        model, table = select_g(data, config)
        for row in table:
            if row.get("status", "ok") != "ok":
                log.warning("g=%d: %s", row["g"], row["status"])
    model = model.with_(meta={"standardized": not args.no_standardize})
    model.to_json(out / "model.json", out / "tau.tsv")
    with open(out / "bic.tsv", "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["g", "loglik", "bic", "converged", "iters"])
        for row in table:
            writer.writerow([row["g"], _fmt(row["loglik"]), _fmt(row["bic"]), str(row["converged"]).lower(),
                             row["iters"]])
    _write_manifest(out, "fit", args, {"matrix": args.matrix, "labels": args.labels},
                    ["model.json", "tau.tsv", "bic.tsv"], started, {"selected_g": model.g})
    log.info("fitted g=%d, log-likelihood %.6g, BIC %.6g", model.g, model.log_likelihood, model.bic)


def cmd_rank(args) -> None:
    started = time.perf_counter()
    fit_dir = Path(args.model)
    model, data, _, paths = _load_fit(fit_dir)
    out = _prepare_out(args)
    _, W, tau = _score(model, data)
    _write_ranked(out / "ranked.tsv", data.feature_ids, W, model.z_map + 1, tau)
    inputs = {"model": fit_dir / "model.json", "tau": fit_dir / "tau.tsv", **paths}
    _write_manifest(out, "rank", args, inputs, ["ranked.tsv"], started)


def cmd_pvalue(args) -> None:
    started = time.perf_counter()
    if args.perms < 1:
        raise UsageError(f"--perms must be at least 1, got {args.perms}")
    fit_dir = Path(args.model)
    model, data, _, paths = _load_fit(fit_dir)
    out = _prepare_out(args)
    estimates, W, tau = _score(model, data)
    plan = permute_labels(data.class_of_sample, args.perms, args.seed)
    if plan.with_replacement:
        log.warning("only %d distinct non-identity arrangements; drawing %d with replacement",
                    len({a.tobytes() for a in plan.arrangements}), args.perms)
    reps = replicate_statistics(data, model, estimates, plan)
    null = fit_t_df(reps.ravel())
    P = p_values(W, null)
    outputs = ["pvalues.tsv", "null.json"]
    _write_ranked(out / "pvalues.tsv", data.feature_ids, W, model.z_map + 1, tau, {"P": P})
    (out / "null.json").write_text(json.dumps({
        "mu": null.mu, "s": null.s, "nu": null.nu, "loglik": null.loglik, "n_values": null.n_values,
        "perms": plan.B, "with_replacement": plan.with_replacement,
        "arrangements": plan.arrangements.tolist(),
    }, indent=2) + "\n")
    if args.dump_null:
        with open(out / "null_replicates.tsv", "w", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            writer.writerow(["feature_id"] + [f"perm_{b + 1}" for b in range(plan.B)])
            for fid, row in zip(data.feature_ids, reps):
                writer.writerow([fid] + [_fmt(x) for x in row])
        outputs.append("null_replicates.tsv")
    inputs = {"model": fit_dir / "model.json", "tau": fit_dir / "tau.tsv", **paths}
    _write_manifest(out, "pvalue", args, inputs, outputs, started)
    log.info("null t: mu=%.4g s=%.4g nu=%.4g from %d values", null.mu, null.s, null.nu, null.n_values)


def _read_pvalues(path: Path) -> tuple[list[str], np.ndarray]:
    header, rows = _read_table(path)
    ids = _column(header, rows, "feature_id", path)
    P = _floats(_column(header, rows, "P", path), path, "P")
    return ids, P


def cmd_fdr(args) -> None:
    started = time.perf_counter()
    if not 0 < args.alpha < 1:
        raise UsageError(f"--alpha must lie in (0, 1), got {args.alpha}")
    if not 0 < args.c0 < 1:
        raise UsageError(f"--c0 must lie in (0, 1), got {args.c0}")
    src = Path(args.pvalues)
    if src.is_dir():
        manifest = _read_manifest(src, ("pvalue", "ttest"))
        name = "pvalues.tsv" if manifest["command"] == "pvalue" else "ranked.tsv"
        _check_outputs(src, manifest, [name])
        src = src / name
    ids, P = _read_pvalues(src)
    if len(P) < 100:
        raise DataError(f"{src}: local-FDR mixture needs at least 100 P-values, got {len(P)}")
    res = infer(P, args.method, alpha=args.alpha, c0=args.c0, theoretical_null=args.theoretical_null)
    out = _prepare_out(args)
    with open(out / "fdr.tsv", "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["feature_id", "P", "z", "local_fdr", "bh_q", "selected"])
        for k, fid in enumerate(ids):
            writer.writerow([fid, _fmt(res.P[k]), _fmt(res.z[k]), _fmt(res.local_fdr[k]), _fmt(res.bh_q[k]),
                             int(res.selected[k])])
    fit = res.mixture
    summary = {
        "method": res.method, "alpha": args.alpha, "c0": args.c0, "n_selected": int(res.selected.sum()),
        "implied_fdr": res.implied_fdr,
        "mixture": {"pi0": fit.pi0, "mu0": fit.mu0, "sd0": fit.sd0, "mu1": fit.mu1, "sd1": fit.sd1,
                    "flagged": fit.flagged, "converged": fit.converged, "collapsed": fit.collapsed},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _write_manifest(out, "fdr", args, {"pvalues": src}, ["fdr.tsv", "summary.json"], started)
    log.info("%s selected %d of %d features", res.method, summary["n_selected"], len(P))


def cmd_ttest(args) -> None:
    started = time.perf_counter()
    data = load_expression_matrix(args.matrix, args.labels)
    res = pooled_t(data)
    out = _prepare_out(args)
    # infinite statistics (zero variance) go first; the written W keeps the sentinel
    key = res.ranking_key() * np.sign(res.t)
    _write_ranked_t(out / "ranked.tsv", data.feature_ids, res.t, key, res.P)
    _write_manifest(out, "ttest", args, {"matrix": args.matrix, "labels": args.labels}, ["ranked.tsv"], started,
                    {"zero_variance": int(res.zero_variance.sum())})


def _write_ranked_t(path: Path, feature_ids, t, key, P) -> None:
    table = rank_genes(key)
    ranks = table.ranks
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["feature_id", "rank", "W", "direction", "map_cluster", "tau_1", "P"])
        for j in table.order:
            direction = "down" if t[j] > 0 else "up"
            writer.writerow([feature_ids[j], ranks[j], _fmt(t[j]), direction, 1, _fmt(1.0), _fmt(P[j])])


def _ranking_from_file(path: Path, ids_index: dict[str, int]) -> np.ndarray:
    """0-based feature order from a ranked TSV or a plain ``feature_id, score`` table."""
    header, rows = _read_table(path)
    ids = _column(header, rows, "feature_id", path)
    missing = [f for f in ids if f not in ids_index]
    if missing:
        raise DataError(f"{path}: {len(missing)} feature id(s) not in the truth table, e.g. {missing[0]!r}")
    idx = np.array([ids_index[f] for f in ids])
    if len(set(idx.tolist())) != len(idx):
        raise DataError(f"{path}: duplicate feature ids")
    if "rank" in header:
        rank = _floats(_column(header, rows, "rank", path), path, "rank")
        return idx[np.argsort(rank, kind="stable")]
    score_col = next((c for c in ("W", "score", "t", "statistic") if c in header), header[-1])
    score = _floats(_column(header, rows, score_col, path), path, score_col)
    key = np.where(np.isinf(score), np.inf, np.abs(score))
    return idx[np.lexsort((idx, -key))]


def cmd_benchmark(args) -> None:
    started = time.perf_counter()
    truth = SimulationTruth.read(args.truth)
    ids_index = {f: k for k, f in enumerate(truth.feature_ids)}
    n = len(truth.feature_ids)
    if not 1 <= args.top <= n:
        raise UsageError(f"--top must lie in 1..{n}, got {args.top}")
    names = [_label(p) for p in args.scores]
    files = []
    for p in args.scores:
        path = Path(p)
        if path.is_dir():
            manifest = _read_manifest(path, ("rank", "pvalue", "ttest"))
            name = "pvalues.tsv" if manifest["command"] == "pvalue" else "ranked.tsv"
            _check_outputs(path, manifest, [name])
            path = path / name
        files.append(path)
    out = _prepare_out(args)
    curves, rows = [], []
    for label, path in zip(_unique(names), files):
        order = _ranking_from_file(path, ids_index)
        curves.append(fdp_curve(order, truth, args.top))
        metrics, _ = evaluate_against_truth(truth, order=order, top=args.top)
        rows.append([label, "top", args.top, metrics])
    for label, p in zip(_unique([_label(s) for s in args.selections]), args.selections):
        path = Path(p)
        if path.is_dir():
            _check_outputs(path, _read_manifest(path, "fdr"), ["fdr.tsv"])
            path = path / "fdr.tsv"
        header, body = _read_table(path)
        ids = _column(header, body, "feature_id", path)
        flags = _column(header, body, "selected", path)
        selected = np.zeros(n, dtype=bool)
        for fid, flag in zip(ids, flags):
            if fid not in ids_index:
                raise DataError(f"{path}: feature id {fid!r} not in the truth table")
            selected[ids_index[fid]] = flag.strip() in ("1", "true", "True")
        rows.append([label, "selection", int(selected.sum()), evaluate_selection(selected, truth)])
    labels = _unique(names)
    with open(out / "curves.tsv", "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["k"] + [f"fdp_{lab}" for lab in labels])
        for k in range(args.top):
            writer.writerow([k + 1] + [_fmt(c[k]) for c in curves])
    with open(out / "metrics.tsv", "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["name", "mode", "k", "n_selected", "fdp", "fndp", "power"])
        for label, mode, k, m in rows:
            writer.writerow([label, mode, k, m.n_selected, _fmt(m.fdp), _fmt(m.fndp), _fmt(m.power)])
    inputs = {"truth": args.truth, **{f"scores_{i + 1}": f for i, f in enumerate(files)}}
    _write_manifest(out, "benchmark", args, inputs, ["curves.tsv", "metrics.tsv"], started)
    for label, mode, k, m in rows:
        print(f"{label}\t{mode}\tk={k}\tN_r={m.n_selected}\tFDP={m.fdp:.4f}\tpower={m.power:.4f}")


def _label(path: str) -> str:
    p = Path(path)
    return p.name if p.is_dir() else p.stem


def _unique(names: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for name in names:
        seen[name] = seen.get(name, 0) + 1
        out.append(name if seen[name] == 1 else f"{name}_{seen[name]}")
    return out


# -- argument parsing ------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="maximum parallel workers; results do not depend on it")
    common.add_argument("--out", required=True, help="output directory (created if missing)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixcontrast", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p = sub.add_parser("simulate", parents=[common], help="draw a correlated-block dataset with known DE genes")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--n", type=int)
    p.add_argument("--p1", type=int)
    p.add_argument("--p2", type=int)
    p.add_argument("--block-size", type=int)
    p.add_argument("--n-blocks", type=int)
    p.add_argument("--base-mean", type=float)
    p.add_argument("--sigma-sq", type=float)
    p.add_argument("--rho", type=float, help="within-block correlation")
    p.add_argument("--delta", type=float, help="absolute class-2 shift of DE genes")
    p.add_argument("--de-fraction", type=float)
    p.add_argument("--stratify-blocks", action="store_true", help="spread DE genes evenly over blocks")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit the mixture of linear mixed models")
    p.add_argument("--matrix", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--g", default="3", help="number of components, or a range like 3..15 chosen by BIC")
    p.add_argument("--starts", type=int, default=10, help="random starts per g (default 10)")
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-8, help="relative log-likelihood change for convergence")
    p.add_argument("--no-standardize", action="store_true", help="fit the matrix without column standardization")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("rank", parents=[common], help="score and rank features with a fitted model")
    p.add_argument("--model", required=True, help="output directory of fit")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("pvalue", parents=[common], help="permutation null, t fit and P-values")
    p.add_argument("--model", required=True, help="output directory of fit")
    p.add_argument("--perms", type=int, default=50, help="number of label permutations B (default 50)")
    p.add_argument("--dump-null", action="store_true", help="also write the n x B replicate matrix")
    p.set_defaults(func=cmd_pvalue)

    p = sub.add_parser("fdr", parents=[common], help="Benjamini-Hochberg or local-FDR selection")
    p.add_argument("--pvalues", required=True, help="output directory of pvalue/ttest, or a TSV with feature_id and P")
    p.add_argument("--method", choices=("bh", "localfdr"), default="localfdr")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--c0", type=float, default=0.1)
    p.add_argument("--theoretical-null", action="store_true", help="fix the null z component at N(0, 1)")
    p.set_defaults(func=cmd_fdr)

    p = sub.add_parser("ttest", parents=[common], help="pooled two-sample t baseline ranking")
    p.add_argument("--matrix", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=cmd_ttest)

    p = sub.add_parser("benchmark", parents=[common], help="FDP curves and metrics against a truth table")
    p.add_argument("--truth", required=True)
    p.add_argument("--scores", nargs="+", default=[], help="ranked/score TSVs or stage output directories")
    p.add_argument("--selections", nargs="*", default=[], help="fdr output directories or TSVs with a selected column")
    p.add_argument("--top", type=int, default=600, help="cut-off k for the metric rows (default 600)")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    if args.command == "benchmark" and not (args.scores or args.selections):
        parser.error("benchmark needs --scores and/or --selections")
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DataError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
        print(f"mixcontrast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"mixcontrast: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"mixcontrast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

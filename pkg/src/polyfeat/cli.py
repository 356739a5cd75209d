"""Command-line front end: configs in, CSV/JSON artifacts out.

Exit codes: 0 success, 1 config or input error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from math import comb
from pathlib import Path

import numpy as np
import scipy

from . import __version__, bench, grouped

SCHEMA_VERSION = "1"


class ConfigError(Exception):
    pass


_BENCH_KEYS = {
    "a": int, "m": int, "n_x": list, "n_y": int, "n_test": int,
    "realizations": int, "degree": int, "methods": list, "seed": int,
    "d": int, "baseline_max_iter": int, "record_timing": bool,
}
_FEATURES_KEYS = {
    "a": int, "m": int, "n_x": int, "n_y": int, "degree": int,
    "seed": int, "d": int,
}


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _check_keys(doc: dict, schema: dict) -> None:
    unknown = set(doc) - set(schema)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, typ in schema.items():
        if key in doc:
            val = doc[key]
            if typ is int and (isinstance(val, bool) or not isinstance(val, int)):
                raise ConfigError(f"config key {key!r} must be an integer")
            if typ is bool and not isinstance(val, bool):
                raise ConfigError(f"config key {key!r} must be a boolean")
            if typ is list and not isinstance(val, list):
                raise ConfigError(f"config key {key!r} must be a list")


def _dictionary_size(d: int, degree: int) -> int:
    return comb(d + degree, d) - 1


def load_bench_config(path: str, seed_override: int | None = None) -> bench.ExperimentConfig:
    doc = _load_json(path)
    _check_keys(doc, _BENCH_KEYS)
    n_x = doc.get("n_x", [50])
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in n_x):
        raise ConfigError("config key 'n_x' must be a list of integers")
    methods = doc.get("methods", [bench.METHOD_SUR, bench.METHOD_BASELINE])
    try:
        cfg = bench.ExperimentConfig(
            a=doc.get("a", 3),
            m=doc.get("m", 3),
            n_x_list=tuple(n_x),
            n_y=doc.get("n_y", 5),
            n_test=doc.get("n_test", 1000),
            realizations=doc.get("realizations", 20),
            degree_bound=doc.get("degree", 2),
            methods=tuple(methods),
            seed=doc.get("seed", 0) if seed_override is None else seed_override,
            d=doc.get("d", 8),
            baseline_max_iter=doc.get("baseline_max_iter", 200),
            record_timing=doc.get("record_timing", False),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    K = _dictionary_size(cfg.d, cfg.degree_bound)
    if cfg.m > K:
        raise ConfigError(f"m = {cfg.m} exceeds the dictionary size K = {K}")
    if min(cfg.n_x_list) * cfg.n_y < 10:
        raise ConfigError("training size n_x * n_y must be at least 10 for 10-fold CV")
    return cfg


def _manifest(cfg_doc: dict, seed: int, out_dir: Path) -> None:
    doc = {
        "schema-version": SCHEMA_VERSION,
        "config": cfg_doc,
        "seeds": {
            "root": seed,
            "derivation": "PCG64 SeedSequence((seed, realization, size_index, role[, method_index]))",
        },
        "versions": {
            "polyfeat": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def cmd_bench(args) -> int:
    try:
        cfg = load_bench_config(args.config, args.seed_override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
    results_path = out_dir / "results.csv"
    try:
        with open(results_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(bench.RESULT_COLUMNS)
            fh.flush()

            def flush_rows(rows):
                for row in rows:
                    writer.writerow(bench.result_row_to_csv(row))
                fh.flush()

            result = bench.run_experiment(cfg, on_rows=flush_rows, threads=threads)
        bench.write_quantiles_csv(result.quantiles, out_dir / "quantiles.csv")
        _manifest(_load_json(args.config), cfg.seed, out_dir)
    except Exception as exc:  # noqa: BLE001 - surface as exit code 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_features(args) -> int:
    try:
        doc = _load_json(args.config)
        _check_keys(doc, _FEATURES_KEYS)
        n_x = doc.get("n_x", 50)
        if isinstance(n_x, bool) or not isinstance(n_x, int):
            raise ConfigError("config key 'n_x' must be an integer")
        try:
            cfg = bench.ExperimentConfig(
                a=doc.get("a", 3),
                m=doc.get("m", 3),
                n_x_list=(n_x,),
                n_y=doc.get("n_y", 5),
                realizations=1,
                degree_bound=doc.get("degree", 2),
                methods=(bench.METHOD_SUR,),
                seed=doc.get("seed", 0) if args.seed_override is None else args.seed_override,
                d=doc.get("d", 8),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        K = _dictionary_size(cfg.d, cfg.degree_bound)
        if cfg.m > K:
            raise ConfigError(f"m = {cfg.m} exceeds the dictionary size K = {K}")
        if n_x * cfg.n_y < 10:
            raise ConfigError("training size n_x * n_y must be at least 10 for 10-fold CV")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        run = bench.run_sur(cfg, n_x, cfg.seed, cfg.seed + 1, cfg.seed + 2)
        run.feature_map.save(args.out)
        print(f"wrote feature map ({run.feature_map.m} features, "
              f"K = {run.feature_map.basis.K}) to {args.out}")
        print(f"training loss {run.loss_train:.6e}, test loss {run.loss_test:.6e}")
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_demo_feature_rank(args) -> int:
    try:
        report = bench.feature_rank_demo()
        print("one-feature covariance tail over the group (x1, x2):")
        for e in report.entries:
            rel = "<=" if e.want_below else ">"
            verdict = "pass" if e.passed else "FAIL"
            print(f"  {e.name:24s} eps1 = {e.epsilon1:.3e}  (want {rel} {e.threshold:g})  {verdict}")
        if args.out:
            doc = {
                "entries": [
                    {"name": e.name, "epsilon1": e.epsilon1, "threshold": e.threshold,
                     "want_below": e.want_below, "passed": e.passed}
                    for e in report.entries
                ],
                "passed": report.passed,
            }
            with open(args.out, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=1)
                fh.write("\n")
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0 if report.passed else 2


def _load_tensor(path: str) -> grouped.CoefficientTensor:
    try:
        return grouped.CoefficientTensor.load(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"tensor file not found: {path}") from exc
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"malformed tensor file: {exc}") from exc


def cmd_svd2(args) -> int:
    try:
        tensor = _load_tensor(args.tensor)
        left = [int(v) for v in args.left_modes.split(",")] if args.left_modes else [0]
        if any(not 0 <= v < tensor.order for v in left) or len(set(left)) != len(left):
            raise ConfigError("left modes must be distinct valid mode indices")
        if len(left) >= tensor.order:
            raise ConfigError("left modes must leave at least one right mode")
        right = [k for k in range(tensor.order) if k not in left]
        A = np.moveaxis(tensor.data, left, range(len(left))).reshape(
            int(np.prod([tensor.dims[k] for k in left])), -1)
        if not 1 <= args.m <= min(A.shape):
            raise ConfigError(f"m must satisfy 1 <= m <= {min(A.shape)}")
    except ConfigError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    try:
        red = grouped.two_group_svd(A, args.m)
        print(f"two-group SVD, split {left} | {right}")
        print("singular values:", " ".join(f"{s:.6e}" for s in red.singular_values))
        print(f"tail energy: {red.tail_energy:.6e}")
        if args.out:
            doc = {
                "left_modes": left,
                "m": args.m,
                "singular_values": red.singular_values.tolist(),
                "tail_energy": red.tail_energy,
                "left_vectors": red.left_vectors.tolist(),
                "right_vectors": red.right_vectors.tolist(),
            }
            with open(args.out, "w", encoding="utf-8") as fh:
                json.dump(doc, fh)
                fh.write("\n")
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_hosvd(args) -> int:
    try:
        tensor = _load_tensor(args.tensor)
        ranks = [int(v) for v in args.ranks.split(",")]
        if len(ranks) != tensor.order:
            raise ConfigError(f"need {tensor.order} ranks, got {len(ranks)}")
        for k, r in enumerate(ranks):
            if not 1 <= r <= tensor.dims[k]:
                raise ConfigError(f"rank {r} out of range for mode {k} of size {tensor.dims[k]}")
    except ConfigError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    try:
        result = grouped.hosvd(tensor, ranks)
        print(f"HOSVD ranks {ranks}: reconstruction error {result.error:.6e}")
        print("per-mode tail energies:", " ".join(f"{t:.6e}" for t in result.mode_tails))
        if args.out:
            doc = {
                "ranks": ranks,
                "dims": list(tensor.dims),
                "error": result.error,
                "mode_tails": list(result.mode_tails),
                "factors": [f.tolist() for f in result.factors],
            }
            with open(args.out, "w", encoding="utf-8") as fh:
                json.dump(doc, fh)
                fh.write("\n")
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polyfeat",
        description="Learn low-dimensional polynomial feature maps and run the benchmark suite.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="run the quantile benchmark sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed-override", type=int, default=None)
    p.add_argument("--threads", type=int, default=1, help="worker threads (0 = auto)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("features", help="single surrogate solve, writes a feature-map JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output JSON path")
    p.add_argument("--seed-override", type=int, default=None)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("demo-feature-rank",
                       help="covariance-tail demo: projection can raise the needed feature count")
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=cmd_demo_feature_rank)

    p = sub.add_parser("svd2", help="two-group SVD of a coefficient tensor")
    p.add_argument("--tensor", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--left-modes", default="0", help="comma-separated modes of the left group")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_svd2)

    p = sub.add_parser("hosvd", help="per-mode SVD truncation of a coefficient tensor")
    p.add_argument("--tensor", required=True)
    p.add_argument("--ranks", required=True, help="comma-separated per-mode ranks")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_hosvd)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

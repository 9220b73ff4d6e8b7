"""Experiment harness: config-driven subcommands that chain dataset
generation, training, baselines, evaluation, and trade-off reporting.

    generate  write synthetic score matrices (CSV + JSON sidecar)
    run       evaluate every configured method into solutions.csv
    report    Pareto fronts, hypervolumes, and min(phi | t) tables
    check     fast self-validation of the closed forms and oracles
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import baselines, datagen, losses, metrics, pareto
from .core import ScorePair, load_scores, save_matrix, top_k, write_sidecar
from .losses import LossWeights
from .optim import Scaling, TrainConfig, default_weight_grid, fit

SOLUTION_COLUMNS = [
    "method", "w1", "w2", "w3", "w4", "d", "epsilon", "tau", "k", "seed",
    "utility", "utility_norm", "envy", "inferiority", "inferiority_norm",
    "overall_norm", "mean_rank", "mean_gap", "gini", "status",
]

DEFAULT_KS = [1, 5, 10, 20, 50, 100]

DEFAULT_REPORT_AXES = [
    {"x": "overall_norm", "y": "utility_norm", "ref": [1.0, 0.95], "threshold": 0.95},
    {"x": "inferiority_norm", "y": "utility_norm", "ref": [1.0, 0.95], "threshold": 0.95},
    {"x": "mean_rank", "y": "utility_norm", "ref": [50.0, 0.9], "threshold": 0.9},
    {"x": "mean_gap", "y": "utility_norm", "ref": [0.03, 0.9], "threshold": 0.9},
]

UNDEFINED_CELL = "—"  # em dash for no-qualifying-point, distinct from 0


def derive_seed(master_seed: int, method: str, params: dict, k: int) -> int:
    """Reproducible but decorrelated per-run seed."""
    payload = json.dumps(
        {"seed": master_seed, "method": method, "params": params, "k": k},
        sort_keys=True, separators=(",", ":"),
    )
    digest = hashlib.sha256(payload.encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _dataset_scores(config: dict) -> tuple[ScorePair, str]:
    ds = config["dataset"]
    if "u_path" in ds:
        u_path = Path(ds["u_path"])
        if not u_path.exists():
            raise FileNotFoundError(f"dataset file {u_path} does not exist")
        s_path = ds.get("s_path")
        if s_path is not None and not Path(s_path).exists():
            raise FileNotFoundError(f"dataset file {s_path} does not exist")
        return load_scores(u_path, s_path), u_path.stem
    spec = _gen_spec(ds, config.get("seed", 0))
    return datagen.generate(spec), spec.family


def _gen_spec(ds: dict, master_seed: int) -> datagen.GenSpec:
    return datagen.GenSpec(
        family=ds["family"],
        m=ds.get("m"),
        n=ds.get("n"),
        seed=ds.get("seed", master_seed),
        group_fraction=ds.get("group_fraction", 0.5),
        group_boost=ds.get("group_boost", 0.3),
    )


def cmd_generate(config: dict, out_dir: Path) -> list[Path]:
    """Write the configured synthetic dataset as CSV files plus sidecars."""
    ds = config["dataset"]
    if "family" not in ds:
        raise ValueError("generate needs a dataset with a 'family' entry")
    spec = _gen_spec(ds, config.get("seed", 0))
    scores = datagen.generate(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    u_path = out_dir / f"{spec.family}_U.csv"
    save_matrix(scores.U, u_path)
    write_sidecar(u_path, scores.m, scores.n, seed=spec.seed, generator=spec.label())
    written.append(u_path)
    if not scores.shared:
        s_path = out_dir / f"{spec.family}_S.csv"
        save_matrix(scores.S, s_path)
        write_sidecar(s_path, scores.m, scores.n, seed=spec.seed, generator=spec.label())
        written.append(s_path)
    return written


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _point_row(p: pareto.SolutionPoint) -> dict:
    row = {c: "" for c in SOLUTION_COLUMNS}
    row.update(
        method=p.method, k=str(p.k), seed=str(p.seed), status=p.status,
        utility=_format_cell(p.utility), utility_norm=_format_cell(p.utility_norm),
        envy=_format_cell(p.envy), inferiority=_format_cell(p.inferiority),
        inferiority_norm=_format_cell(p.inferiority_norm),
        overall_norm=_format_cell(p.overall_norm),
        mean_rank=_format_cell(p.mean_rank), mean_gap=_format_cell(p.mean_gap),
        gini=_format_cell(p.gini),
    )
    for name in ("w1", "w2", "w3", "w4", "d", "epsilon", "tau"):
        if name in p.params:
            row[name] = _format_cell(float(p.params[name]))
    return row


def _row_key(row: dict) -> tuple:
    return tuple(row[c] for c in ("method", "w1", "w2", "w3", "w4", "d", "epsilon", "tau", "k", "seed"))


def _read_solutions_csv(path: Path) -> list[dict]:
    import csv

    with open(path, "r", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _write_solutions_csv(path: Path, rows: list[dict]) -> None:
    import csv

    rows = sorted(rows, key=lambda r: (int(r["k"]), r["method"], _row_key(r)))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SOLUTION_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def _feir_points(scores, method_cfg, k, master_seed, save_dir):
    naive_sys = metrics.system_metrics(scores.U, scores.S, top_k(scores.U, k))
    grid_cfg = method_cfg.get("weight_grid")
    grid = (
        [LossWeights(*w) for w in grid_cfg] if grid_cfg is not None else default_weight_grid()
    )
    base = TrainConfig(
        k=k,
        weights=grid[0],
        learning_rate=method_cfg.get("learning_rate", 10.0),
        max_steps=method_cfg.get("max_steps", 2000),
        convergence_tol=method_cfg.get("convergence_tol", 1e-6),
        parametrization=method_cfg.get("parametrization", "logits"),
        scaling=Scaling.from_dict(method_cfg.get("scaling", {"kind": "none"})),
    )
    points = []
    for weights in grid:
        params = {"w1": weights.w1, "w2": weights.w2, "w3": weights.w3, "w4": weights.w4}
        seed = derive_seed(master_seed, "feir", params, k)
        config = replace(base, weights=weights, seed=seed)
        try:
            trace = fit(scores, config)
            counts = top_k(trace.final_policy.P, k)
            point = pareto.make_solution("feir", params, k, seed, scores, counts, naive_sys)
            _save_artifacts(save_dir, point, counts=counts, policy=trace.final_policy)
        except Exception as exc:  # noqa: BLE001
            point = pareto.failed_solution("feir", params, k, seed, f"error: {exc}")
        points.append(point)
    return points


def _save_artifacts(save_dir, point, counts=None, policy=None):
    if save_dir is None:
        return
    stem = f"{point.method}_k{point.k}_" + hashlib.sha256(
        point.params_json().encode()
    ).hexdigest()[:8]
    save_dir.mkdir(parents=True, exist_ok=True)
    if counts is not None:
        save_matrix(counts.C, save_dir / f"{stem}_counts.csv")
    if policy is not None:
        save_matrix(policy.P, save_dir / f"{stem}_policy.csv")


def cmd_run(config: dict, out_dir: Path, save_matrices: bool = False) -> Path:
    """Evaluate every configured (method, hyperparameters, k) combination.

    Appends one solutions.csv row per run; rows are keyed by method, params,
    k, and seed, so rerunning after an interruption never duplicates work.
    Failures become rows with an error status and the run continues.
    """
    methods = config.get("methods", {})
    if not methods:
        raise ValueError("config enables no methods")
    scores, _ = _dataset_scores(config)
    master_seed = config.get("seed", 0)
    ks = config.get("ks", DEFAULT_KS)
    ks = sorted({k for k in ks if 1 <= k <= scores.n})
    if not ks:
        raise ValueError(f"no valid k for n={scores.n}")
    out_dir.mkdir(parents=True, exist_ok=True)
    solutions_path = out_dir / "solutions.csv"
    existing = _read_solutions_csv(solutions_path) if solutions_path.exists() else []
    seen = {_row_key(r) for r in existing}
    save_dir = out_dir / "matrices" if save_matrices else None

    new_rows = []
    for k in ks:
        naive_counts = top_k(scores.U, k)
        naive_sys = metrics.system_metrics(scores.U, scores.S, naive_counts)
        points = []
        if "naive" in methods:
            points.append(
                pareto.make_solution("naive", {}, k, master_seed, scores, naive_counts, naive_sys)
            )
            _save_artifacts(save_dir, points[-1], counts=naive_counts)
        if "feir" in methods:
            points.extend(_feir_points(scores, methods["feir"], k, master_seed, save_dir))
        if "shuffle" in methods:
            cfg = methods["shuffle"]
            d = cfg.get("d") or min(3 * k, scores.n)
            params = {"d": d}
            seed = derive_seed(master_seed, "shuffle", params, k)
            try:
                counts = baselines.shuffle(scores, k, d=d, seed=seed)
                point = pareto.make_solution("shuffle", params, k, seed, scores, counts, naive_sys)
                _save_artifacts(save_dir, point, counts=counts)
            except Exception as exc:  # noqa: BLE001
                point = pareto.failed_solution("shuffle", params, k, seed, f"error: {exc}")
            points.append(point)
        if "ca" in methods:
            cfg = methods["ca"]
            for eps in cfg.get("epsilons", [0.001, 0.003, 0.01, 0.03, 0.1]):
                params = {"epsilon": eps}
                seed = derive_seed(master_seed, "ca", params, k)
                try:
                    ca_cfg = baselines.CAConfig(
                        epsilon=eps,
                        max_iters=cfg.get("max_iters", 20000),
                        marginal_tol=cfg.get("marginal_tol", 1e-9),
                    )
                    policy = baselines.congestion_alleviation(scores, k, ca_cfg)
                    counts = top_k(policy.P, k)
                    point = pareto.make_solution("ca", params, k, seed, scores, counts, naive_sys)
                    _save_artifacts(save_dir, point, counts=counts, policy=policy)
                except Exception as exc:  # noqa: BLE001
                    point = pareto.failed_solution("ca", params, k, seed, f"error: {exc}")
                points.append(point)
        if "rr" in methods:
            cfg = methods["rr"]
            params = {"tau": cfg.get("tau", 0.0)}
            seed = derive_seed(master_seed, "rr", params, k)
            try:
                rr_cfg = baselines.RRConfig(
                    tau=params["tau"], seed=seed, exclusive=cfg.get("exclusive", True)
                )
                counts = baselines.round_robin(scores.U, scores.S, k, rr_cfg)
                point = pareto.make_solution("rr", params, k, seed, scores, counts, naive_sys)
                _save_artifacts(save_dir, point, counts=counts)
            except Exception as exc:  # noqa: BLE001
                point = pareto.failed_solution("rr", params, k, seed, f"error: {exc}")
            points.append(point)

        for p in points:
            row = _point_row(p)
            if _row_key(row) not in seen:
                seen.add(_row_key(row))
                new_rows.append(row)

    _write_solutions_csv(solutions_path, existing + new_rows)
    return solutions_path


def _rows_to_points(rows: list[dict]) -> list[pareto.SolutionPoint]:
    points = []
    for r in rows:
        params = {
            name: float(r[name])
            for name in ("w1", "w2", "w3", "w4", "d", "epsilon", "tau")
            if r.get(name)
        }

        def num(col):
            return float(r[col]) if r.get(col) else None

        points.append(
            pareto.SolutionPoint(
                method=r["method"], params=params, k=int(r["k"]), seed=int(r["seed"]),
                utility=num("utility"), envy=num("envy"), inferiority=num("inferiority"),
                overall_fairness=None, utility_norm=num("utility_norm"),
                inferiority_norm=num("inferiority_norm"), overall_norm=num("overall_norm"),
                mean_rank=num("mean_rank"), mean_gap=num("mean_gap"), gini=num("gini"),
                status=r.get("status", "ok"),
            )
        )
    return points


def cmd_report(solutions_path: Path, report_config: dict | None, out_dir: Path) -> tuple[Path, Path]:
    """Summarize solutions.csv into pareto.csv and hv_table.csv.

    For each k and configured axis pair the report holds every method's
    Pareto front, its hypervolume against the configured reference point, and
    the minimum unfairness among solutions above the utility threshold.
    """
    if not Path(solutions_path).exists():
        raise FileNotFoundError(solutions_path)
    rows = _read_solutions_csv(Path(solutions_path))
    required = set(SOLUTION_COLUMNS)
    if rows:
        missing = required - set(rows[0])
        if missing:
            raise ValueError(f"solutions file lacks columns: {sorted(missing)}")
    axes = (report_config or {}).get("axes", DEFAULT_REPORT_AXES)
    points = _rows_to_points(rows)
    ks = sorted({p.k for p in points})
    methods = sorted({p.method for p in points})
    out_dir.mkdir(parents=True, exist_ok=True)

    import csv

    pareto_path = out_dir / "pareto.csv"
    hv_path = out_dir / "hv_table.csv"
    with open(pareto_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "x_metric", "y_metric", "method", "x", "y", "params", "seed"])
        hv_rows = []
        for k in ks:
            at_k = [p for p in points if p.k == k]
            for axis in axes:
                x_m, y_m = axis["x"], axis["y"]
                ref = axis.get("ref")
                threshold = axis.get("threshold")
                hv_row = {"k": str(k), "axis": f"{x_m}_vs_{y_m}"}
                for method in methods:
                    mine = [p for p in at_k if p.method == method]
                    try:
                        front = pareto.pareto_front(mine, x_m, y_m)
                    except ValueError:
                        hv_row[f"hv_{method}"] = UNDEFINED_CELL
                        hv_row[f"min_{method}"] = UNDEFINED_CELL
                        continue
                    for p in front.points:
                        writer.writerow([
                            k, x_m, y_m, method,
                            _format_cell(p.metric(x_m)), _format_cell(p.metric(y_m)),
                            p.params_json(), p.seed,
                        ])
                    hv = pareto.hypervolume_2d(front, ref) if ref else None
                    hv_row[f"hv_{method}"] = _format_cell(hv) if hv is not None else UNDEFINED_CELL
                    if threshold is not None:
                        phi = pareto.min_fairness_above_threshold(mine, x_m, threshold)
                        hv_row[f"min_{method}"] = (
                            _format_cell(phi) if phi is not None else UNDEFINED_CELL
                        )
                hv_rows.append(hv_row)

    columns = ["k", "axis"]
    for method in methods:
        columns += [f"hv_{method}", f"min_{method}"]
    with open(hv_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in hv_rows:
            fh.write(",".join(row.get(c, UNDEFINED_CELL) for c in columns) + "\n")
    return pareto_path, hv_path


def cmd_check(fast: bool = False) -> int:
    """Quick self-validation: closed forms vs Monte Carlo, analytic gradients
    vs finite differences, hypervolume vs area sampling, transport marginals.
    Prints one line per check; returns a process exit code."""
    failures = 0

    def report(name: str, ok: bool, detail: str = ""):
        nonlocal failures
        status = "PASS" if ok else "FAIL"
        print(f"{status}: {name}" + (f" ({detail})" if detail else ""))
        failures += 0 if ok else 1

    rng = np.random.default_rng(2024)
    samples = 20_000 if fast else 100_000

    # closed-form expectations vs Monte Carlo
    ok = True
    worst = 0.0
    for _ in range(2 if fast else 5):
        m, n, k = 3, 5, 2
        pair = ScorePair(rng.uniform(0.05, 0.95, (m, n)), rng.uniform(0.05, 0.95, (m, n)))
        P = np.apply_along_axis(lambda r: r / r.sum(), 1, rng.uniform(0.05, 1.0, (m, n)))
        est = losses.mc_estimate(pair.U, pair.S, P, k, samples, seed=int(rng.integers(2**31)))
        for i in range(m):
            z = abs(est.utility_mean[i] - losses.expected_user_utility(i, pair.U, P, k))
            se = max(est.utility_se[i], 1e-12)
            worst = max(worst, z / se)
            for t in range(m):
                if t == i:
                    continue
                z = abs(est.envy_mean[i, t] - losses.expected_pair_envy(i, t, pair.U, P, k))
                worst = max(worst, z / max(est.envy_se[i, t], 1e-12))
                z = abs(
                    est.inferiority_mean[i, t]
                    - losses.expected_pair_inferiority(i, t, pair.S, P, k)
                )
                worst = max(worst, z / max(est.inferiority_se[i, t], 1e-12))
    ok = worst < 4.0
    report("closed-form expectations within 4 std errors of Monte Carlo", ok, f"worst z={worst:.2f}")

    # analytic gradient vs central differences
    weights = LossWeights(1.0, 1.0, 1.0, 0.5)
    max_rel = 0.0
    for parametrization in ("logits", "direct"):
        U = rng.uniform(0.05, 0.95, (4, 6))
        S = rng.uniform(0.05, 0.95, (4, 6))
        params = rng.normal(0.0, 1.0, (4, 6)) if parametrization == "logits" else (
            np.apply_along_axis(lambda r: r / r.sum(), 1, rng.uniform(0.05, 1.0, (4, 6)))
        )

        def loss_fn(x, _p=parametrization):
            from .core import row_softmax

            P = row_softmax(x) if _p == "logits" else x
            bd = losses.total_loss(U, S, P, 2, weights)
            if _p == "logits":
                return bd.total - weights.w4 * bd.penalty_loss
            return bd.total

        analytic = losses.grad_total_loss(U, S, params, 2, weights, parametrization)
        numeric = losses.finite_diff_grad(loss_fn, params, 1e-5)
        scale = max(np.abs(numeric).max(), 1e-12)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-3 * scale)
        max_rel = max(max_rel, float(rel.max()))
    report("analytic gradients match finite differences", max_rel < 1e-5, f"max rel={max_rel:.2e}")

    # hypervolume vs Monte-Carlo area
    hv_ok = True
    for _ in range(3):
        pts = rng.uniform(0.0, 1.0, (6, 2))
        ref = (1.0, 0.0)
        hv = pareto.hypervolume_2d(pts, ref)
        samples_xy = rng.uniform(0.0, 1.0, (200_000, 2))
        covered = np.zeros(len(samples_xy), dtype=bool)
        for x, y in pts:
            covered |= (samples_xy[:, 0] >= x) & (samples_xy[:, 1] <= y)
        hv_mc = covered.mean()
        hv_ok &= abs(hv - hv_mc) < 5e-3
    report("hypervolume matches Monte-Carlo area estimate", hv_ok)

    # transport marginals and dual ascent
    pair = ScorePair.single(rng.uniform(0.05, 0.95, (8, 12)))
    policy, info = baselines.congestion_alleviation(
        pair, 3, baselines.CAConfig(epsilon=0.01), return_info=True
    )
    rows_ok = np.abs(policy.P.sum(axis=1) - 1.0).max() < 1e-6
    cols_ok = np.abs(policy.P.sum(axis=0) - 8 / 12).max() < 1e-6
    dual_ok = bool(np.all(np.diff(info.dual_history) >= -1e-9))
    report("transport marginals satisfied and dual non-decreasing", rows_ok and cols_ok and dual_ok)

    print(f"{4 - failures}/4 checks passed")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="feir", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write synthetic dataset CSVs")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", default=None, help="output directory (overrides config)")
    p_gen.add_argument("--seed", type=int, default=None, help="master seed override")

    p_run = sub.add_parser("run", help="run configured methods into solutions.csv")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--save-matrices", action="store_true",
                       help="also write count/policy CSVs per solution")

    p_rep = sub.add_parser("report", help="summarize solutions.csv")
    p_rep.add_argument("--solutions", required=True)
    p_rep.add_argument("--config", default=None, help="report config JSON (axes/refs)")
    p_rep.add_argument("--out", default=None)

    p_chk = sub.add_parser("check", help="run the oracle validation suite")
    p_chk.add_argument("--fast", action="store_true")

    args = parser.parse_args(argv)

    if args.command == "check":
        return cmd_check(fast=args.fast)

    if args.command == "report":
        report_config = load_config(args.config) if args.config else None
        out_dir = Path(args.out) if args.out else Path(args.solutions).parent
        pareto_path, hv_path = cmd_report(Path(args.solutions), report_config, out_dir)
        print(f"wrote {pareto_path} and {hv_path}")
        return 0

    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    out_dir = Path(args.out or config.get("output_dir", "out"))

    if args.command == "generate":
        for path in cmd_generate(config, out_dir):
            print(f"wrote {path}")
        return 0

    solutions = cmd_run(config, out_dir, save_matrices=args.save_matrices)
    print(f"wrote {solutions}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

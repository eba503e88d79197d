"""Command-line harness: dataset generation, evaluation runs, ablation
sweeps, coverage studies, timing benchmarks, and planning runs.

Every CSV/JSON report embeds the command line, the seed, and a checksum of
each input dataset, so a run is reproducible from its artifact alone.
Exit codes: 0 success, 2 usage error, 3 data error, 4 empty retrieval.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import statistics
import sys

import numpy as np

from . import _kernels
from .core import ContractError, LatentDataset
from .ltd import LtdError, load_dataset, save_dataset
from .metrics import (
    UndefinedCorrelationError,
    bounding_box,
    coverage_ratio,
    l1_distance,
    load_image_array,
    pearson,
    project_state_mus,
    ssim,
)
from .planner import PlanConfig, run_planning_eval
from .predictor import Method, evaluate_long_horizon, evaluate_one_step
from .retrieval import EmptyRetrievalError, scan_time
from .synthworld import SynthConfig, generate, save_state_log, state_log_path

PROG = "latentdyn"

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RETRIEVAL = 4


class DataError(Exception):
    """Input files are missing, malformed, or mutually incompatible."""


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _meta(argv: list[str], seed, inputs: list[str]) -> dict:
    return {
        "cmd": " ".join([PROG] + argv),
        "seed": seed,
        "inputs": {os.path.basename(p): _sha256(p) for p in sorted(inputs)},
    }


def _write_csv(path: str, meta: dict, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# cmd: {meta['cmd']}\n")
        f.write(f"# seed: {meta['seed']}\n")
        for name, digest in meta["inputs"].items():
            f.write(f"# sha256 {name}: {digest}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path: str, meta: dict, payload: dict) -> None:
    payload = dict(payload)
    payload["_meta"] = meta
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


def _load(path: str) -> LatentDataset:
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    return load_dataset(path)


def _load_pair(data_path: str, test_path: str):
    ds = _load(data_path)
    test = _load(test_path)
    if ds.d != test.d or ds.n_actions != test.n_actions:
        raise DataError(
            f"incompatible datasets: d {ds.d} vs {test.d}, "
            f"A {ds.n_actions} vs {test.n_actions}"
        )
    if ds.source and ds.source == test.source:
        print(
            f"{PROG}: warning: train and test datasets share source tag "
            f"{ds.source!r}",
            file=sys.stderr,
        )
    return ds, test


def _method(name: str, k: int) -> Method:
    return {"rollout": Method.rollout(), "l2": Method.replay_l2(k),
            "kl": Method.replay_kl()}[name]


def _load_image_any(path_base: str):
    """Image by basename: flat f32 + JSON header, or PNG."""
    if os.path.exists(path_base + ".bin"):
        return load_image_array(path_base + ".bin")
    if os.path.exists(path_base + ".png"):
        from PIL import Image

        with Image.open(path_base + ".png") as im:
            arr = np.asarray(im, dtype=np.float64) / 255.0
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return arr, 1.0
    raise DataError(f"no image found for {path_base} (.bin or .png)")


def _image_series(images_dir: str, n_starts: int, horizon: int):
    """Per-step mean/var of L1 and SSIM over externally supplied decoded
    frames laid out as <dir>/{true,pred}/s<start>_t<step>.{bin,png}."""
    l1 = np.empty((n_starts, horizon))
    ss = np.empty((n_starts, horizon))
    for s in range(n_starts):
        for t in range(horizon):
            name = f"s{s:03d}_t{t:02d}"
            true_img, rng_true = _load_image_any(
                os.path.join(images_dir, "true", name)
            )
            pred_img, _ = _load_image_any(os.path.join(images_dir, "pred", name))
            l1[s, t] = l1_distance(true_img, pred_img)
            ss[s, t] = ssim(true_img, pred_img, value_range=rng_true)
    return l1.mean(0), l1.var(0), ss.mean(0), ss.var(0)


# ---------------------------------------------------------------- commands


def cmd_synth(args, argv) -> int:
    cfg = SynthConfig(
        d=args.d,
        n_actions=args.actions,
        noise=args.noise,
        sigma_obs=args.sigma_obs,
        seed=args.seed,
    )
    ds, state_log = generate(
        cfg,
        n_traj=args.trajectories,
        length=args.length,
        policy=args.policy,
        episodes_seed=args.episodes_seed,
    )
    save_dataset(ds, args.out)
    save_state_log(state_log, state_log_path(args.out))
    print(
        f"{PROG}: wrote {ds.n_trajectories} trajectories "
        f"({ds.total} transitions, d={ds.d}) to {args.out}",
        file=sys.stderr,
    )
    return 0


def cmd_eval(args, argv) -> int:
    ds, test = _load_pair(args.data, args.test)
    method = _method(args.method, args.k)
    rng = np.random.default_rng(args.seed)
    evaluate = evaluate_one_step if args.mode == "onestep" else evaluate_long_horizon
    series = evaluate(
        ds, method, test, args.starts, args.horizon, args.conditioned, rng,
        use_mean=args.mean,
    )
    if args.images:
        l1_mean, l1_var, ss_mean, ss_var = _image_series(
            args.images, args.starts, args.horizon
        )
        img_cols = list(zip(l1_mean, l1_var, ss_mean, ss_var))
    else:
        img_cols = [(None, None, None, None)] * args.horizon
    rows = [
        [i, series.kl_mean[i], series.kl_var[i], *img_cols[i]]
        for i in range(args.horizon)
    ]
    meta = _meta(argv, args.seed, [args.data, args.test])
    _write_csv(
        args.out,
        meta,
        ["step", "kl_mean", "kl_var", "l1_mean", "l1_var", "ssim_mean", "ssim_var"],
        rows,
    )
    return 0


def cmd_ablate(args, argv) -> int:
    counts = [int(c) for c in args.counts.split(",")]
    methods = args.methods.split(",")
    pairs = []
    for name in sorted(os.listdir(args.data_dir)):
        if name.startswith("train") and name.endswith(".ltd"):
            tag = name[len("train") : -len(".ltd")]
            test_name = f"test{tag}.ltd"
            test_path = os.path.join(args.data_dir, test_name)
            if not os.path.exists(test_path):
                raise DataError(f"missing test set {test_name} for {name}")
            pairs.append((tag.lstrip("_") or "0", os.path.join(args.data_dir, name),
                          test_path))
    if not pairs:
        raise DataError(f"no train*.ltd files in {args.data_dir}")
    modes = ["onestep", "rollout"] if args.mode == "both" else [args.mode]
    rows = []
    inputs = []
    for tag, train_path, test_path in pairs:
        inputs.extend([train_path, test_path])
        master, test = _load_pair(train_path, test_path)
        for count in counts:
            if count > master.n_trajectories:
                raise DataError(
                    f"{train_path} has {master.n_trajectories} trajectories, "
                    f"cannot ablate at {count}"
                )
            subset = master.take(count)
            for mode in modes:
                evaluate = (
                    evaluate_one_step if mode == "onestep" else evaluate_long_horizon
                )
                for name in methods:
                    series = evaluate(
                        subset,
                        _method(name, args.k),
                        test,
                        args.starts,
                        args.horizon,
                        args.conditioned,
                        np.random.default_rng(args.seed),
                    )
                    rows.append(
                        [
                            tag,
                            mode,
                            name,
                            count,
                            float(series.kl_mean.mean()),
                            float(series.kl_var.mean()),
                        ]
                    )
    meta = _meta(argv, args.seed, inputs)
    _write_csv(
        args.out,
        meta,
        ["seed_tag", "mode", "method", "count", "kl_mean", "kl_var"],
        rows,
    )
    return 0


def cmd_coverage(args, argv) -> int:
    ds = _load(args.data)
    inputs = [args.data]
    box = None
    if args.box_from:
        ref = _load(args.box_from)
        if ref.d != ds.d:
            raise DataError(f"box reference d {ref.d} != dataset d {ds.d}")
        box = bounding_box(project_state_mus(ref, args.projection_seed))
        inputs.append(args.box_from)
    ratio = coverage_ratio(
        ds, projection_seed=args.projection_seed, grid=args.grid, box=box
    )
    payload = {
        "coverage_ratio": ratio,
        "grid": args.grid,
        "projection_seed": args.projection_seed,
        "sectors": args.grid * args.grid,
        "occupied": round(ratio * args.grid * args.grid),
    }
    _write_json(args.out, _meta(argv, args.projection_seed, inputs), payload)
    return 0


def cmd_correlate(args, argv) -> int:
    if not os.path.exists(args.pairs):
        raise DataError(f"no such file: {args.pairs}")
    xs, ys = [], []
    with open(args.pairs, newline="") as f:
        reader = csv.DictReader(row for row in f if not row.startswith("#"))
        if reader.fieldnames is None or len(reader.fieldnames) < 2:
            raise DataError("pairs CSV needs a header with at least two columns")
        x_col = args.x_col or reader.fieldnames[0]
        y_col = args.y_col or reader.fieldnames[1]
        for record in reader:
            try:
                xs.append(float(record[x_col]))
                ys.append(float(record[y_col]))
            except (KeyError, TypeError, ValueError) as e:
                raise DataError(f"bad pairs row {record}: {e}") from e
    try:
        r = pearson(xs, ys)
    except (UndefinedCorrelationError, ContractError) as e:
        raise DataError(str(e)) from e
    payload = {"pearson_r": r, "n": len(xs), "x_col": x_col, "y_col": y_col}
    _write_json(args.out, _meta(argv, None, [args.pairs]), payload)
    return 0


def cmd_bench(args, argv) -> int:
    ds = _load(args.data)
    methods = args.methods.split(",")
    if args.sizes:
        sizes = sorted(int(s) for s in args.sizes.split(","))
    else:
        sizes = sorted({max(ds.total // f, 1) for f in (8, 4, 2, 1)})
    backends = (
        ["numpy", "numba"]
        if args.backend == "both"
        else [_kernels.active_backend() if args.backend == "auto" else args.backend]
    )
    rng = np.random.default_rng(args.seed)
    rows = []
    for backend in backends:
        for name in methods:
            method = _method(name, args.k)
            for n in sizes:
                if n > ds.total:
                    raise DataError(f"size {n} exceeds dataset total {ds.total}")
                subset = ds.take_transitions(n)
                picks = rng.integers(0, subset.total, size=args.repeats + 3)
                queries = []
                for row in picks:
                    if name == "kl":
                        t, i = subset.locate(int(row))
                        queries.append(subset.dist_at(t, i))
                    else:
                        queries.append(subset.z[int(row)].astype(np.float64))
                for q in queries[:3]:  # warm up jit and caches
                    scan_time(subset, q, method, backend=backend)
                times = [
                    scan_time(subset, q, method, backend=backend)
                    for q in queries[3:]
                ]
                rows.append(
                    [
                        backend,
                        name,
                        subset.total,
                        args.repeats,
                        statistics.median(times),
                    ]
                )
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    meta = _meta(argv, args.seed, [args.data])
    _write_csv(
        args.out, meta, ["backend", "method", "n", "repeats", "median_s"], rows
    )
    return 0


def cmd_plan(args, argv) -> int:
    if not os.path.exists(args.env_config):
        raise DataError(f"no such file: {args.env_config}")
    with open(args.env_config) as f:
        try:
            env_cfg = SynthConfig.from_dict(json.load(f))
        except (TypeError, ValueError, ContractError) as e:
            raise DataError(f"bad env config: {e}") from e
    ds = _load(args.data)
    method = _method(args.method, args.k)
    plan_cfg = PlanConfig(
        horizon=args.horizon, episodes=args.episodes, seed=args.seed
    )
    try:
        result = run_planning_eval(env_cfg, ds, method, plan_cfg)
    except ContractError as e:
        raise DataError(str(e)) from e
    rows = [
        [e, float(result.returns[e]), float(result.random_returns[e])]
        for e in range(plan_cfg.episodes)
    ]
    meta = _meta(argv, args.seed, [args.data, args.env_config])
    _write_csv(args.out, meta, ["episode", "return", "random_return"], rows)
    base = args.out[: -len(".csv")] if args.out.endswith(".csv") else args.out
    _write_json(base + ".summary.json", meta, result.summary())
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Latent dynamics prediction by similarity search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic-world dataset")
    p.add_argument("--out", required=True, help="output LTD path")
    p.add_argument("--trajectories", type=int, required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--noise", type=float, default=SynthConfig.noise)
    p.add_argument("--d", type=int, default=SynthConfig.d)
    p.add_argument("--sigma-obs", type=float, default=SynthConfig.sigma_obs)
    p.add_argument("--actions", type=int, default=SynthConfig.n_actions)
    p.add_argument("--policy", choices=["random", "scripted"], default="random")
    p.add_argument(
        "--episodes-seed",
        type=int,
        default=None,
        help="episode stream seed (default: --seed); vary it to draw "
        "disjoint splits from the same world",
    )
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="run a prediction-quality evaluation")
    p.add_argument("--data", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--method", choices=["rollout", "l2", "kl"], required=True)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--mode", choices=["onestep", "rollout"], default="onestep")
    p.add_argument("--horizon", type=int, default=20)
    p.add_argument("--starts", type=int, default=20)
    p.add_argument("--conditioned", action="store_true")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--images",
        default=None,
        help="directory of externally decoded frames (true/, pred/) to score "
        "with L1 and SSIM",
    )
    p.add_argument(
        "--mean",
        action="store_true",
        help="debugging: advance rollouts with the distribution mean instead "
        "of sampling",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="sweep trajectory counts")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--counts", default="5,6,7,8,9,10,15,20,30")
    p.add_argument("--methods", default="rollout,l2,kl")
    p.add_argument("--mode", choices=["onestep", "rollout", "both"], default="both")
    p.add_argument("--horizon", type=int, default=20)
    p.add_argument("--starts", type=int, default=20)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--conditioned", action="store_true")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("coverage", help="latent-space coverage ratio")
    p.add_argument("--data", required=True)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--projection-seed", type=int, default=0)
    p.add_argument(
        "--box-from",
        default=None,
        help="dataset whose projected bounds define the sector box",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("correlate", help="Pearson r over a pairs CSV")
    p.add_argument("--pairs", required=True)
    p.add_argument("--x-col", default=None)
    p.add_argument("--y-col", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("bench", help="median search times per size and method")
    p.add_argument("--data", required=True)
    p.add_argument("--methods", default="rollout,l2,kl")
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--sizes", default=None, help="comma-separated transition counts")
    p.add_argument("--k", type=int, default=16)
    p.add_argument(
        "--backend", choices=["auto", "numpy", "numba", "both"], default="auto"
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plan", help="open-loop planning evaluation")
    p.add_argument("--env-config", required=True, help="environment config JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=["rollout", "l2", "kl"], required=True)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--horizon", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except (DataError, LtdError, FileNotFoundError, ContractError) as e:
        print(f"{PROG}: error: data: {e}", file=sys.stderr)
        return EXIT_DATA
    except EmptyRetrievalError as e:
        print(f"{PROG}: error: retrieval: {e}", file=sys.stderr)
        return EXIT_RETRIEVAL


if __name__ == "__main__":
    sys.exit(main())

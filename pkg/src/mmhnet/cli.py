"""Operator surface: data generation, training, sampling, evaluation,
ablation sweeps, and kernel benchmarks.

Commands: ``data gen``, ``train``, ``generate``, ``eval``, ``ablate``,
``bench``.  ``MMHNET_THREADS`` caps worker parallelism (all built-in paths
run single-threaded for determinism, so it is an upper bound, not a target).
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import storage
from .config import RunConfig
from .data import make_split, episode_arrays
from .evaluation import CSV_COLUMNS, evaluate_pairs
from .flow import conditions_of, sample_euler
from .kernels import MixerMode, SsmParams, build_mask, noncausal_fast, scan_causal, ssd_matrix_form
from .train import load_checkpoint, train, validation_loss


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MMHNET_THREADS", "1")))
    except ValueError:
        return 1


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.set("train.seed", args.seed)
    return cfg


# -- data gen ---------------------------------------------------------------

def cmd_data_gen(args):
    cfg = _load_config(args)
    out = args.out or "data"
    if os.path.isdir(out) and os.listdir(out) and not args.force:
        raise SystemExit(f"refusing to write into non-empty {out!r} (use --force)")
    os.makedirs(out, exist_ok=True)
    manifest = ["split,index,seed,length,n_events"]
    for split, seed_key, size_key, length in (
            ("train", "data.train_seed", "data.train_size", cfg["data.train_length"]),
            ("test", "data.test_seed", "data.test_size", max(cfg.test_lengths()))):
        eps = make_split(cfg[seed_key], cfg[size_key], length,
                         cfg["data.n_events"], cfg["data.redundancy"])
        for i, ep in enumerate(eps):
            storage.save_arrays(os.path.join(out, f"{split}-{i:05d}"), episode_arrays(ep))
            manifest.append(f"{split},{i},{ep.seed},{ep.length},{len(ep.events)}")
    storage.save_text(os.path.join(out, "manifest.csv"), "\n".join(manifest) + "\n")
    storage.save_text(os.path.join(out, "config.txt"), cfg.serialize())
    print(f"wrote {out}/manifest.csv")


# -- train ------------------------------------------------------------------

def cmd_train(args):
    cfg = _load_config(args)
    out = args.out or os.path.join(cfg["paths.out"], "train")
    train(cfg, out, quiet=False)
    print(f"checkpoint at {os.path.join(out, 'checkpoint')}")


# -- generate ---------------------------------------------------------------

def cmd_generate(args):
    cfg = _load_config(args)
    if not os.path.isdir(args.checkpoint):
        raise SystemExit(f"missing checkpoint {args.checkpoint!r}")
    model = load_checkpoint(cfg, args.checkpoint)
    ep = make_split(cfg["data.test_seed"], args.episode + 1, args.length,
                    cfg["data.n_events"], cfg["data.redundancy"])[args.episode]
    steps = args.steps or cfg["flow.steps"]
    cfg_scale = cfg["flow.cfg_scale"] if args.cfg is None else args.cfg
    latent = sample_euler(model, conditions_of(ep), args.length, steps, cfg_scale,
                          seed=args.seed if args.seed is not None else 0)
    out = args.out or "generated"
    storage.save_arrays(out, {
        "latent": latent,
        "meta": np.array([float(args.seed or 0), float(steps), float(cfg_scale)]),
    })
    print(f"wrote {out}")


# -- eval -------------------------------------------------------------------

def _eval_checkpoint(cfg: RunConfig, model, lengths, shuffle_conditions: bool = False):
    rows = []
    for L in lengths:
        eps = make_split(cfg["data.test_seed"], cfg["data.test_size"], L,
                         cfg["data.n_events"], cfg["data.redundancy"])
        cond_eps = list(eps)
        if shuffle_conditions:
            cond_eps = cond_eps[1:] + cond_eps[:1]
        gens = [sample_euler(model, conditions_of(ce), L, cfg["flow.steps"],
                             cfg["flow.cfg_scale"], seed=10_000 + i)
                for i, ce in enumerate(cond_eps)]
        rep = evaluate_pairs(gens, eps, cfg["eval.chunk_len"], cfg["eval.embedder_seed"])
        vloss = validation_loss(model, eps)
        rows.append((L, rep, vloss))
    return rows


def cmd_eval(args):
    cfg = _load_config(args)
    model = load_checkpoint(cfg, args.checkpoint)
    lengths = [int(s) for s in args.lengths.split(",")] if args.lengths else cfg.test_lengths()
    rows = _eval_checkpoint(cfg, model, lengths)
    out = args.out or "eval.csv"
    lines = ["length," + ",".join(CSV_COLUMNS) + ",val_loss"]
    for L, rep, vloss in rows:
        lines.append(f"{L},{rep.csv_row()},{vloss:.10g}")
    storage.save_text(out, "\n".join(lines) + "\n")
    print("\n".join(lines))


# -- ablate -----------------------------------------------------------------

ABLATION_SUITES = ("core_network", "hierarchy", "threshold", "routing", "cfg",
                   "distance_metric", "pilot")


def _variants(suite: str):
    if suite == "core_network":
        return [(f"mixer={m}", {"model.mixer": m}) for m in ("attention", "causal", "noncausal")]
    if suite == "hierarchy":
        return [("non_hierarchical", {"model.hierarchical": False}),
                ("hierarchical", {"model.hierarchical": True})]
    if suite == "threshold":
        return [(f"tau={t}", {"routing.tau_temporal": t, "routing.tau_mm": t})
                for t in (0.3, 0.4, 0.5, 0.6, 0.7)]
    if suite == "routing":
        return [("no_routing", {"model.hierarchical": False}),
                ("temporal_only", {"model.mm_routing": False}),
                ("temporal_and_mm", {})]
    if suite == "cfg":
        return [(f"cfg={s}", {"flow.cfg_scale": float(s)}) for s in (2, 3, 4, 5, 6)]
    if suite == "distance_metric":
        return [(f"metric={m}", {"routing.metric": m}) for m in ("euclidean", "dot", "cosine")]
    if suite == "pilot":
        return [("attention_no_posemb", {"model.mixer": "attention",
                                         "model.hierarchical": False})]
    raise SystemExit(f"unknown suite {suite!r}; choose from {', '.join(ABLATION_SUITES)}")


def cmd_ablate(args):
    base = _load_config(args)
    out_root = args.out or os.path.join(base["paths.out"], f"ablate-{args.suite}")
    os.makedirs(out_root, exist_ok=True)
    lines = ["variant,length," + ",".join(CSV_COLUMNS) + ",val_loss"]
    # cfg sweep varies only the sampling scale, so it can share one checkpoint
    share_checkpoint = args.suite == "cfg"
    shared_model = None
    for name, overrides in _variants(args.suite):
        cfg = RunConfig(dict(base.values))
        for k, v in overrides.items():
            cfg.set(k, v)
        run_dir = os.path.join(out_root, name.replace("=", "-"))
        ckpt = os.path.join(run_dir, "checkpoint")
        if share_checkpoint and shared_model is not None:
            model = shared_model
        elif os.path.isdir(ckpt):
            model = load_checkpoint(cfg, ckpt)
        else:
            model = train(cfg, run_dir)
        if share_checkpoint and shared_model is None:
            shared_model = model
        for L, rep, vloss in _eval_checkpoint(cfg, model, cfg.test_lengths()):
            lines.append(f"{name},{L},{rep.csv_row()},{vloss:.10g}")
    path = os.path.join(out_root, "ablation.csv")
    storage.save_text(path, "\n".join(lines) + "\n")
    print("\n".join(lines))


# -- bench ------------------------------------------------------------------

BENCH_KERNELS = ("causal_scan", "noncausal_fast", "dense_mask")


def bench_kernel(kernel: str, lengths: list[int], reps: int = 5,
                 n_state: int = 4, d: int = 4) -> list[tuple[int, float]]:
    rng = np.random.default_rng(0)
    results = []
    for L in lengths:
        p = SsmParams.random(rng, L, n_state)
        X = rng.normal(size=(L, d))
        if kernel == "causal_scan":
            fn = lambda: scan_causal(p, X)
        elif kernel == "noncausal_fast":
            fn = lambda: noncausal_fast(p, X)
        elif kernel == "dense_mask":
            fn = lambda: ssd_matrix_form(p, X, MixerMode.NONCAUSAL)
        else:
            raise SystemExit(f"unknown kernel {kernel!r}; choose from {', '.join(BENCH_KERNELS)}")
        fn()  # warmup
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        results.append((L, float(np.median(times))))
    return results


def cmd_bench(args):
    lengths = [int(s) for s in args.lengths.split(",")]
    lines = ["kernel,length,median_seconds"]
    for kernel in (args.kernel.split(",") if args.kernel else BENCH_KERNELS):
        for L, t in bench_kernel(kernel, lengths):
            lines.append(f"{kernel},{L},{t:.6g}")
    out = args.out or "bench.csv"
    storage.save_text(out, "\n".join(lines) + "\n")
    print("\n".join(lines))


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmhnet")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="path to a section.key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--force", action="store_true")

    data = sub.add_parser("data").add_subparsers(dest="subcommand", required=True)
    gen = data.add_parser("gen")
    common(gen)
    gen.set_defaults(fn=cmd_data_gen)

    tr = sub.add_parser("train")
    common(tr)
    tr.set_defaults(fn=cmd_train)

    ge = sub.add_parser("generate")
    common(ge)
    ge.add_argument("checkpoint")
    ge.add_argument("--length", type=int, default=32)
    ge.add_argument("--episode", type=int, default=0)
    ge.add_argument("--steps", type=int)
    ge.add_argument("--cfg", type=float)
    ge.set_defaults(fn=cmd_generate)

    ev = sub.add_parser("eval")
    common(ev)
    ev.add_argument("checkpoint")
    ev.add_argument("--lengths")
    ev.set_defaults(fn=cmd_eval)

    ab = sub.add_parser("ablate")
    common(ab)
    ab.add_argument("suite", choices=ABLATION_SUITES)
    ab.set_defaults(fn=cmd_ablate)

    be = sub.add_parser("bench")
    common(be)
    be.add_argument("--kernel")
    be.add_argument("--lengths", default="1024,2048,4096,8192")
    be.set_defaults(fn=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    _threads()
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())

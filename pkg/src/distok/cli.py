"""Command-line front end.

Exit codes: 0 ok, 2 config/usage error, 3 training divergence,
4 verification failure.  Machine-readable output goes to stdout or files;
human summaries go to stderr.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__, serialize
from .config import config_doc, load_config
from .errors import ConfigError, DistokError
from .gradcheck import run_suite
from .lab import (
    EVAL_SEED_STREAM,
    EvalReport,
    SamplerKind,
    evaluate_suite,
    fuse_pair,
    generate_from_distribution,
    kl_input_vs_oracle,
    make_eval_distributions,
    run_ablation,
    sample_unconditional,
)
from .model import init_model, load_model, save_model
from .pool import load_pool, save_pool
from .trainer import DivergenceError, run_training
from .world import ClassDistribution, build_world, classify, load_world, render_image, save_world

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_VERIFY = 4

WORLD_FILE = "world.json"
MODEL_FILE = "model.json"
POOL_FILE = "pool.pool.json"
METRICS_FILE = "metrics.jsonl"
MANIFEST_FILE = "manifest.json"


def _info(msg):
    print(msg, file=sys.stderr)


def _emit(doc, out_path):
    text = serialize.canonical_dumps(doc) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _default_outdir(given):
    return given or os.environ.get("DISTOK_OUT_DIR") or "."


def _load_run(run_dir):
    world = load_world(os.path.join(run_dir, WORLD_FILE))
    model = load_model(os.path.join(run_dir, MODEL_FILE))
    pool = load_pool(os.path.join(run_dir, POOL_FILE))
    return world, model, pool


def _load_aliases(path):
    if not path:
        return {}
    with open(path) as fh:
        aliases = json.load(fh)
    if not isinstance(aliases, dict):
        raise ConfigError("/aliases", "alias file must map names to concept ids")
    return aliases


def _resolve_name(name, aliases, valid):
    cid = aliases.get(name, name)
    if cid not in valid:
        raise ConfigError(
            "/dist", f"unknown concept {name!r}; valid names: {', '.join(valid)}")
    return cid


def _parse_dist(spec, world, aliases):
    """Parse "name:weight,name:weight" into a ClassDistribution.

    Weights summing within [0.99, 1.01] are normalized; anything else is
    a usage error."""
    support, weights = [], []
    for part in spec.split(","):
        if ":" not in part:
            raise ConfigError("/dist", f"malformed entry {part!r}, want name:weight")
        name, _, w = part.partition(":")
        try:
            weight = float(w)
        except ValueError:
            raise ConfigError("/dist", f"bad weight {w!r}") from None
        support.append(_resolve_name(name.strip(), aliases, world.concept_names))
        weights.append(weight)
    total = sum(weights)
    if not 0.99 <= total <= 1.01:
        raise ConfigError("/dist", f"weights sum to {total:g}, outside [0.99, 1.01]")
    probs = np.array(weights) / total
    dist = ClassDistribution(support, probs)
    dist.validate()
    return dist


def _token_report(world, token):
    predicted = classify(world, render_image(world, token, noise_std=0.0))
    return {
        "token": serialize.arr2j(token),
        "classified": {
            "support": predicted.support,
            "probabilities": serialize.arr2j(predicted.probabilities),
        },
    }


# ------------------------------------------------------------------ commands

def cmd_init_world(args):
    (world_cfg, model_cfg, train_cfg), raw = load_config(args.config)
    world = build_world(world_cfg)
    save_world(world, args.out)
    manifest = {
        "config_digest": serialize.digest(config_doc(world_cfg, model_cfg, train_cfg)),
        "artifacts": {"world": args.out},
        "tool_version": __version__,
    }
    _emit(manifest, None)
    return EXIT_OK


def cmd_train(args):
    (world_cfg, model_cfg, train_cfg), raw = load_config(args.config)
    out_dir = _default_outdir(args.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    if args.world:
        world = load_world(args.world)
    else:
        world = build_world(world_cfg)
    model = init_model(model_cfg)
    start = time.monotonic()
    try:
        model, pool, records = run_training(
            world, model, train_cfg,
            metrics_path=os.path.join(out_dir, METRICS_FILE))
    except DivergenceError as exc:
        replay_path = os.path.join(out_dir, "replay.json")
        serialize.dump_json(exc.replay, replay_path)
        _info(f"training diverged: {exc}; replay bundle at {replay_path}")
        return EXIT_DIVERGED
    duration = time.monotonic() - start
    save_world(world, os.path.join(out_dir, WORLD_FILE))
    save_model(model, os.path.join(out_dir, MODEL_FILE))
    save_pool(pool, os.path.join(out_dir, POOL_FILE))
    manifest = {
        "config_digest": serialize.digest(config_doc(world_cfg, model_cfg, train_cfg)),
        "artifacts": {
            "world": WORLD_FILE, "model": MODEL_FILE,
            "pool": POOL_FILE, "metrics": METRICS_FILE,
        },
        "tool_version": __version__,
        "duration_seconds": serialize.f2s(duration),
    }
    serialize.dump_json(manifest, os.path.join(out_dir, MANIFEST_FILE))
    if records:
        last = records[-1]
        _info(f"trained {len(records)} steps in {duration:.1f}s; "
              f"final total loss {last.total_loss:.4f}, "
              f"novel concepts {last.pool_novel_count}")
    else:
        _info("0 training steps requested; checkpoint equals initialization")
    return EXIT_OK


def cmd_fuse(args):
    world, model, pool = _load_run(args.run_dir)
    aliases = _load_aliases(args.aliases)
    parts = args.pair.split(",")
    if len(parts) != 2:
        raise ConfigError("/pair", "expected exactly two comma-separated names")
    valid = [e.id for e in pool.entries]
    id_a = _resolve_name(parts[0].strip(), aliases, valid)
    id_b = _resolve_name(parts[1].strip(), aliases, valid)
    token = fuse_pair(world, model, pool, id_a, id_b)
    doc = _token_report(world, token)
    doc["pair"] = [id_a, id_b]
    _emit(doc, args.out)
    return EXIT_OK


def cmd_gen_dist(args):
    world, model, pool = _load_run(args.run_dir)
    aliases = _load_aliases(args.aliases)
    dist = _parse_dist(args.dist, world, aliases)
    token = generate_from_distribution(world, model, pool, dist)
    doc = _token_report(world, token)
    doc["input_distribution"] = {
        "support": dist.support,
        "probabilities": serialize.arr2j(dist.probabilities),
    }
    doc["kl_input_vs_oracle"] = serialize.f2s(kl_input_vs_oracle(world, model, pool, dist))
    _emit(doc, args.out)
    return EXIT_OK


def cmd_sample(args):
    world, model, pool = _load_run(args.run_dir)
    try:
        kind = SamplerKind(args.kind)
    except ValueError:
        raise ConfigError(
            "/kind", f"unknown sampler {args.kind!r}; "
            f"valid: {', '.join(k.value for k in SamplerKind)}") from None
    rng = np.random.default_rng(args.seed)
    result = sample_unconditional(model, kind, args.count, rng)
    doc = {
        "kind": kind.value,
        "count": args.count,
        "seed": args.seed,
        "clip_rate": serialize.f2s(result.clip_rate),
        "samples": [_token_report(world, t) for t in result.tokens],
    }
    _emit(doc, args.out)
    return EXIT_OK


def cmd_eval_kl(args):
    world, model, pool = _load_run(args.run_dir)
    if args.suite == "builtin":
        rng = np.random.default_rng([0, EVAL_SEED_STREAM])
        suite = make_eval_distributions(world, 30, rng)
    else:
        with open(args.suite) as fh:
            cases = json.load(fh)
        suite = []
        for case in cases:
            dist = ClassDistribution(list(case["support"]),
                                     np.array(case["probabilities"], dtype=np.float64))
            dist.validate()
            suite.append(dist)
    kls = evaluate_suite(world, model, pool, suite)
    report = EvalReport(kls, config_digest="")
    _emit(report.to_doc(), args.out)
    _info(f"evaluated {len(kls)} distributions: mean KL {report.mean:.4f}, "
          f"median {report.median:.4f}")
    return EXIT_OK


def cmd_ablate(args):
    (world_cfg, model_cfg, train_cfg), raw = load_config(args.config)
    seeds = [int(s) for s in args.seeds.split(",")]
    if len(seeds) < 5:
        raise ConfigError("/seeds", "need at least 5 seeds")
    out_dir = _default_outdir(args.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    world = build_world(world_cfg)
    report = run_ablation(world, model_cfg, train_cfg, seeds)
    serialize.dump_json(report.to_doc(), os.path.join(out_dir, "ablation.json"))
    with open(os.path.join(out_dir, "ablation.csv"), "w") as fh:
        fh.write(report.to_csv())
    _info(f"ablation over {len(seeds)} seeds: mean KL full {report.mean_full:.4f} "
          f"vs no-consistency {report.mean_no_cst:.4f} "
          f"(full wins {report.wins()}/{len(seeds)})")
    return EXIT_OK


def cmd_gradcheck(args):
    fault = 1.1 if args.inject_grad_fault else 1.0
    cases = run_suite(num_configs=args.configs, fault_scale=fault)
    worst = max(cases, key=lambda c: c.report.max_rel_err)
    for case in cases:
        _info(f"{case.name}: {'ok' if case.passed else 'FAIL'} "
              f"(max rel err {case.report.max_rel_err:.2e})")
    _emit({
        "cases": len(cases),
        "failures": sum(1 for c in cases if not c.passed),
        "worst": {"name": worst.name, "report": str(worst.report)},
    }, None)
    if any(not c.passed for c in cases):
        return EXIT_VERIFY
    return EXIT_OK


# --------------------------------------------------------------------- main

def build_parser():
    parser = argparse.ArgumentParser(
        prog="distok",
        description="Distribution-conditional creative token generation "
                    "against a synthetic semantic oracle.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-world", help="build and save a world from a config")
    p.add_argument("config")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_init_world)

    p = sub.add_parser("train", help="run training, write artifacts")
    p.add_argument("config")
    p.add_argument("-o", "--out-dir")
    p.add_argument("--world", help="use a previously saved world file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fuse", help="fuse two pool concepts into one token")
    p.add_argument("run_dir")
    p.add_argument("--pair", required=True, metavar="A,B")
    p.add_argument("--aliases")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("gen-dist", help="generate a token from a class distribution")
    p.add_argument("run_dir")
    p.add_argument("--dist", required=True, metavar="NAME:W,NAME:W")
    p.add_argument("--aliases")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_dist)

    p = sub.add_parser("sample", help="sample tokens unconditionally")
    p.add_argument("run_dir")
    p.add_argument("--kind", default="gaussian")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval-kl", help="input-vs-oracle KL over a suite")
    p.add_argument("run_dir")
    p.add_argument("--suite", default="builtin")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_kl)

    p = sub.add_parser("ablate", help="paired consistency-supervision ablation")
    p.add_argument("config")
    p.add_argument("--seeds", required=True, metavar="S1,S2,...")
    p.add_argument("-o", "--out-dir")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference verification suite")
    p.add_argument("config", nargs="?")
    p.add_argument("--configs", type=int, default=20)
    p.add_argument("--inject-grad-fault", action="store_true",
                   help="test hook: scale analytic gradients by 1.1")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _info(f"config error: {exc}")
        return EXIT_CONFIG
    except DistokError as exc:
        _info(f"error: {exc}")
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        _info(f"missing file: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end acceptance suite.

Each test prints one PASS/FAIL line for its criterion (to the real stderr,
so the lines survive pytest's capture) and asserts it.  The expensive
five-seed paired training study is run once and shared.
"""

import sys
import time

import numpy as np
import pytest

from distok.config import TOY_PRESET, parse_config
from distok.gradcheck import PIPELINE_TOL, PRIMITIVE_TOL, run_suite
from distok.lab import (
    SamplerKind,
    fuse_pair,
    generate_from_distribution,
    run_ablation_seed,
    sample_latents,
    sample_unconditional,
)
from distok.model import (
    ModelConfig,
    VARIANCE_FLOOR,
    init_model,
    mix_loss,
    model_params,
    reg_loss,
    save_model,
)
from distok.ndmath import finite_diff_check
from distok.pool import init_pool, try_admit
from distok.trainer import TrainConfig, run_training
from distok.world import ClassDistribution, WorldConfig, build_world

SEEDS = [1, 2, 3, 4, 5]


def report(criterion, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}" + (f" — {detail}" if detail else "")
    print(line, file=sys.__stderr__, flush=True)
    assert ok, line


@pytest.fixture(scope="session")
def toy_setup():
    (world_cfg, model_cfg, train_cfg) = parse_config(TOY_PRESET)
    return build_world(world_cfg), model_cfg, train_cfg


@pytest.fixture(scope="session")
def ablation(toy_setup):
    """Five paired toy-preset trainings (full vs no-consistency), shared by
    the directional, learning-effect and runtime criteria."""
    world, model_cfg, train_cfg = toy_setup
    start = time.monotonic()
    results = [run_ablation_seed(world, model_cfg, train_cfg, s) for s in SEEDS]
    return results, time.monotonic() - start


def test_criterion_01_gradient_correctness():
    start = time.monotonic()
    pipeline = run_suite(num_configs=20, tol=PIPELINE_TOL)
    elapsed = time.monotonic() - start
    worst = max(c.report.max_rel_err for c in pipeline)
    pipeline_ok = all(c.passed for c in pipeline)

    # Isolated primitives at the tighter tolerance.
    rng = np.random.default_rng(0)
    from distok.ndmath import init_mlp, mlp_backward, mlp_forward, mlp_params
    prim_ok = True
    worst_prim = 0.0
    for i in range(20):
        net = init_mlp(10, 14, 6, np.random.default_rng(500 + i))
        x = rng.standard_normal(10)
        target = rng.standard_normal(6)

        def loss():
            y, _ = mlp_forward(net, x)
            return 0.5 * float(np.sum((y - target) ** 2))

        y, cache = mlp_forward(net, x)
        _, grads = mlp_backward(net, cache, y - target)
        rep = finite_diff_check(loss, mlp_params(net), grads, tolerance=PRIMITIVE_TOL)
        worst_prim = max(worst_prim, rep.max_rel_err)
        prim_ok = prim_ok and rep.passed

    report("criterion 1: gradient correctness",
           pipeline_ok and prim_ok and elapsed < 60,
           f"pipeline max rel err {worst:.2e} (<1e-4), primitive {worst_prim:.2e} "
           f"(<1e-6), {elapsed:.1f}s (<60s)")


def test_criterion_02_threshold_semantics():
    world = build_world(WorldConfig(6, 16, 16, 16, 0.5, 0.0, 40))
    rng = np.random.default_rng(41)
    ok = True
    checked_clamped = 0
    for i in range(25):
        model = init_model(ModelConfig(token_dim=16, hidden_dim=20, latent_dim=5,
                                       seed=600 + i))
        ta = rng.standard_normal(16)
        tb = rng.standard_normal(16)

        import dataclasses

        def with_thetas(t1, t2):
            cfg = dataclasses.replace(model.config, theta1=t1, theta2=t2)
            return mix_loss(world, dataclasses.replace(model, config=cfg), ta, tb)

        open_res = with_thetas(1.0, 1.0)
        c1, c2 = open_res.cos_restrictive, open_res.cos_aux
        # Thresholds at 1: thresholded value equals the raw two-cosine value
        # exactly on every input.
        ok &= open_res.loss == (1.0 - c1) + (1.0 - c2)

        if c1 > 0 and c2 > 0:
            # Both branches clamped: exactly zero gradient everywhere.
            both = with_thetas(c1 / 2, c2 / 2)
            ok &= both.clamped_restrictive and both.clamped_aux
            ok &= all(np.all(g == 0) for g in both.grads)
            # One branch clamped: remaining gradient is exactly the other
            # branch's share (gradients are additive across branches).
            only2 = with_thetas(c1 / 2, 1.0)
            only1 = with_thetas(1.0, c2 / 2)
            for gf, g1, g2 in zip(open_res.grads, only1.grads, only2.grads):
                ok &= bool(np.allclose(gf, g1 + g2, atol=1e-12))
            checked_clamped += 1
        elif c1 > 0:
            only2 = with_thetas(c1 / 2, 1.0)
            ok &= only2.clamped_restrictive
            checked_clamped += 1
        elif c2 > 0:
            only1 = with_thetas(1.0, c2 / 2)
            ok &= only1.clamped_aux
            checked_clamped += 1
    report("criterion 2: threshold semantics", ok and checked_clamped >= 5,
           f"25 random inputs, {checked_clamped} clamped cases, "
           "theta=1 equality exact")


def test_criterion_03_regularizer_identities():
    rng = np.random.default_rng(42)
    ok = True
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 9)) * 2
        dim = int(rng.integers(2, 9))
        latents = [rng.standard_normal(dim) for _ in range(n)]

        # Two-pass scalar oracle.
        mu = [sum(z[d] for z in latents) / n for d in range(dim)]
        var = sum((z[d] - mu[d]) ** 2 for z in latents for d in range(dim)) / (n * dim)
        var = max(var, VARIANCE_FLOOR)
        oracle = sum(m * m for m in mu) / var
        value = reg_loss(latents).value
        worst = max(worst, abs(value - oracle))
        ok &= abs(value - oracle) < 1e-10

        # Centered batch {z, -z, ...}: exactly zero for a single pair; for
        # larger batches the mean cancels to summation-order roundoff, so
        # the value is bounded by (d * eps * |z|)^2 ~ 1e-30.
        ok &= reg_loss([latents[0], -latents[0]]).value == 0.0
        half = latents[: n // 2]
        centered = half + [-z for z in half]
        ok &= reg_loss(centered).value < 1e-28

        # Negation-invariant exactly; permutation-invariant to rounding.
        ok &= reg_loss([-z for z in latents]).value == value
        perm = [latents[i] for i in rng.permutation(n)]
        ok &= abs(reg_loss(perm).value - value) <= 1e-12 * max(1.0, abs(value))
    report("criterion 3: regularizer identities", ok,
           f"100 batches, worst oracle gap {worst:.1e} (<1e-10)")


def test_criterion_04_admission_boundary():
    world = build_world(WorldConfig(8, 32, 32, 32, 0.5, 0.0, 7))
    tau = 0.85

    def dist(max_prob):
        probs = np.full(8, (1.0 - max_prob) / 7)
        probs[0] = max_prob
        return ClassDistribution(world.concept_names, probs)

    pool = init_pool(world)
    token = np.ones(32)
    r84 = try_admit(pool, token, dist(0.84), tau, 0)
    r85 = try_admit(pool, token, dist(0.85), tau, 0)
    r86 = try_admit(pool, token, dist(0.86), tau, 0)
    report("criterion 4: admission boundary",
           r84 is True and r85 is False and r86 is False,
           "0.84 admitted, 0.85 rejected, 0.86 rejected at tau=0.85")


def test_criterion_05_directional_ablation(ablation):
    results, elapsed = ablation
    wins = sum(1 for r in results if r.kl_full < r.kl_no_cst)
    diff = float(np.mean([r.kl_no_cst - r.kl_full for r in results]))
    report("criterion 5: consistency supervision lowers held-out KL",
           wins >= 4 and diff > 0 and elapsed < 3600,
           f"wins {wins}/5, paired mean diff {diff:.3f} (>0), "
           f"{elapsed / 60:.1f} min (<60)")


def test_criterion_06_learning_effect(ablation):
    results, _ = ablation
    ratios = [r.median_full / r.median_init for r in results]
    passing = sum(1 for x in ratios if x <= 0.5)
    report("criterion 6: trained median KL <= half of initialization",
           passing >= 4,
           f"{passing}/5 seeds, ratios " + ", ".join(f"{x:.2f}" for x in ratios))


def test_criterion_07_pair_fusion_equivalence():
    import itertools

    world = build_world(WorldConfig(8, 32, 32, 32, 0.5, 0.0, 7))
    pool = init_pool(world)
    model = init_model(ModelConfig(token_dim=32, hidden_dim=48, latent_dim=8,
                                   seed=70, normalize_pair_input=True))
    ok = True
    for a, b in itertools.combinations(world.concept_names, 2):
        fused = fuse_pair(world, model, pool, a, b)
        uniform = ClassDistribution([a, b], np.array([0.5, 0.5]))
        generated = generate_from_distribution(world, model, pool, uniform)
        ok &= np.array_equal(fused, generated)
    report("criterion 7: pair fusion = uniform two-class generation",
           ok, "28/28 pairs bitwise identical")


def test_criterion_08_determinism(toy_setup, tmp_path):
    world, model_cfg, train_cfg = toy_setup
    import dataclasses
    cfg = dataclasses.replace(train_cfg, total_steps=800)
    files = []
    for tag in ("a", "b"):
        model = init_model(model_cfg)
        d = tmp_path / tag
        d.mkdir()
        _, pool, _ = run_training(world, model, cfg, metrics_path=d / "metrics.jsonl")
        save_model(model, d / "model.json")
        from distok.pool import save_pool
        save_pool(pool, d / "run.pool.json")
        files.append(d)
    same = all((files[0] / n).read_bytes() == (files[1] / n).read_bytes()
               for n in ("metrics.jsonl", "model.json", "run.pool.json"))
    report("criterion 8: byte-identical repeat runs", same,
           "metrics, checkpoint and pool files identical over 800 steps")


def test_criterion_09_sampler_standardization():
    dim = 8
    ok = True
    details = []
    for kind in (SamplerKind.GAUSSIAN, SamplerKind.LAPLACE, SamplerKind.UNIFORM):
        z, clipped = sample_latents(kind, 10000, dim, np.random.default_rng(90))
        mean_err = float(np.max(np.abs(z.mean(axis=0))))
        var_err = float(np.max(np.abs(z.var(axis=0) - 1.0)))
        ok &= clipped == 0 and mean_err < 0.05 and var_err < 0.05
        details.append(f"{kind.value} |mean|<={mean_err:.3f} |var-1|<={var_err:.3f}")
    model = init_model(ModelConfig(token_dim=32, hidden_dim=48, latent_dim=dim, seed=91))
    res = sample_unconditional(model, SamplerKind.CAUCHY, 10000,
                               np.random.default_rng(92))
    finite = all(np.isfinite(t).all() for t in res.tokens)
    ok &= finite and res.clip_rate >= 0.0
    details.append(f"cauchy clip rate {res.clip_rate:.4f}, all tokens finite")
    report("criterion 9: sampler standardization", ok, "; ".join(details))


def test_criterion_10_pool_growth(toy_setup):
    world, model_cfg, train_cfg = toy_setup
    import dataclasses
    grew = 0
    all_below = True
    for seed in SEEDS:
        cfg = dataclasses.replace(train_cfg, total_steps=2000, seed=seed)
        model = init_model(dataclasses.replace(model_cfg, seed=seed))
        _, pool, _ = run_training(world, model, cfg)
        if pool.novel_count >= 1:
            grew += 1
        all_below &= all(e.max_oracle_prob < 0.85 for e in pool.novel_entries)
    report("criterion 10: pool growth under default sampling period",
           grew >= 4 and all_below,
           f"{grew}/5 seeds admitted a novel concept within 2000 steps; "
           "all stored max oracle probs < 0.85")

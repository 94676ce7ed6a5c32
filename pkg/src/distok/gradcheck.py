"""End-to-end gradient verification: analytic gradients of the three
losses through the encoder, decoder and world text-encoder pipeline are
checked against central finite differences."""

from dataclasses import dataclass

import numpy as np

from .model import (
    ModelConfig,
    consistency_loss,
    init_model,
    mix_loss,
    model_params,
    reg_loss,
)
from .ndmath import finite_diff_check, mlp_backward, mlp_forward, zeros_like_params
from .world import WorldConfig, build_world

PIPELINE_TOL = 1e-4
PRIMITIVE_TOL = 1e-6


@dataclass
class CheckCase:
    name: str
    report: object

    @property
    def passed(self):
        return self.report.passed


def _check_config(i):
    wc = WorldConfig(num_known_concepts=4, token_dim=12, embed_dim=12,
                     feature_dim=12, classifier_temperature=0.5, seed=10_000 + i)
    mc = ModelConfig(token_dim=12, hidden_dim=16, latent_dim=4, seed=20_000 + i)
    return wc, mc


def check_mix(world, model, rng, h=1e-5, tol=PIPELINE_TOL, fault_scale=1.0):
    ta = world.known_tokens[int(rng.integers(world.config.num_known_concepts))]
    tb = rng.standard_normal(world.config.token_dim) * 0.5
    params = model_params(model)
    res = mix_loss(world, model, ta, tb)
    grads = [fault_scale * g for g in res.grads]
    return finite_diff_check(lambda: mix_loss(world, model, ta, tb).loss,
                             params, grads, h=h, tolerance=tol)


def check_consistency(world, model, rng, h=1e-5, tol=PIPELINE_TOL, fault_scale=1.0):
    k = world.config.num_known_concepts
    probs = rng.dirichlet(np.ones(k))
    target = rng.standard_normal(world.config.token_dim)
    known = list(world.known_tokens)
    params = model_params(model)
    res = consistency_loss(world, model, probs, known, target)
    grads = [fault_scale * g for g in res.grads]
    return finite_diff_check(
        lambda: consistency_loss(world, model, probs, known, target).loss,
        params, grads, h=h, tolerance=tol)


def check_reg(world, model, rng, batch=4, h=1e-5, tol=PIPELINE_TOL, fault_scale=1.0):
    """Regularizer through the encoder: a batch of token-space inputs is
    encoded and the batch-statistics penalty differentiated back to the
    encoder parameters."""
    inputs = [rng.standard_normal(world.config.token_dim) for _ in range(batch)]
    enc = model.encoder
    params = model_params(model)[:4]

    def loss_value():
        latents = [mlp_forward(enc, x)[0] for x in inputs]
        return reg_loss(latents).value

    latents, caches = [], []
    for x in inputs:
        z, cache = mlp_forward(enc, x)
        latents.append(z)
        caches.append(cache)
    reg = reg_loss(latents)
    grads = zeros_like_params(params)
    for dz, cache in zip(reg.dlatents, caches):
        _, enc_grads = mlp_backward(enc, cache, dz)
        for g_acc, g in zip(grads, enc_grads):
            g_acc += g
    grads = [fault_scale * g for g in grads]
    return finite_diff_check(loss_value, params, grads, h=h, tolerance=tol)


def run_suite(num_configs=20, tol=PIPELINE_TOL, fault_scale=1.0):
    """Check all three losses on ``num_configs`` seeded world/model pairs.
    Returns a list of CheckCase."""
    cases = []
    for i in range(num_configs):
        wc, mc = _check_config(i)
        world = build_world(wc)
        model = init_model(mc)
        rng = np.random.default_rng(30_000 + i)
        cases.append(CheckCase(f"mix[{i}]", check_mix(world, model, rng, tol=tol,
                                                      fault_scale=fault_scale)))
        cases.append(CheckCase(f"cst[{i}]", check_consistency(world, model, rng, tol=tol,
                                                              fault_scale=fault_scale)))
        cases.append(CheckCase(f"reg[{i}]", check_reg(world, model, rng, tol=tol,
                                                      fault_scale=fault_scale)))
    return cases

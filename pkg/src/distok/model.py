"""The encoder-decoder pair and its three training losses.

The distribution encoder maps a weighted token combination to a low-dim
latent; the creative decoder maps latents back to token space.  Losses:

* mix: thresholded-cosine fusion of a concept pair against the restrictive
  and aesthetic-prior prompts.
* consistency: cosine alignment of the generated token's bare-text
  embedding with a stored novel token's embedding.
* reg: batch-statistics penalty ||mean||^2 / variance keeping the latent
  space compatible with standardized sampling at inference.

All gradients are exact reverse-mode; each loss returns the parameter
gradients in ``model_params`` order plus the latent and encoder cache so
the trainer can route the regularizer's gradient back through the same
encoder pass.
"""

from dataclasses import dataclass

import numpy as np

from . import serialize
from .errors import ConfigError, SchemaError
from .ndmath import (
    Mlp2,
    cosine_similarity_grad,
    init_mlp,
    mlp_backward,
    mlp_forward,
    mlp_params,
)
from .world import Template, encode_prompt, encode_pair_prompt, encode_prompt_fwd, \
    encode_prompt_backward, aux_pet_embedding

VARIANCE_FLOOR = 1e-8
_MODEL_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    token_dim: int
    hidden_dim: int = 64
    latent_dim: int = 8
    theta1: float = 0.8
    theta2: float = 0.7
    normalize_pair_input: bool = False
    seed: int = 0

    def validate(self, path="/model"):
        if self.token_dim < 2:
            raise ConfigError(f"{path}/token_dim", "must be >= 2")
        if not self.latent_dim < self.token_dim:
            raise ConfigError(f"{path}/latent_dim", "must be < token_dim")
        if self.hidden_dim < self.latent_dim:
            raise ConfigError(f"{path}/hidden_dim", "must be >= latent_dim")
        for name in ("theta1", "theta2"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigError(f"{path}/{name}", "must be in (0, 1]")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"{path}/seed", "must fit in 64 bits unsigned")


@dataclass
class DistokModel:
    config: ModelConfig
    encoder: Mlp2  # d -> hidden -> latent
    decoder: Mlp2  # latent -> hidden -> d


# Decoder output layer starts small so freshly decoded tokens read as
# near-uniform to the oracle: admissions begin immediately and early
# training is stable.
DECODER_OUT_INIT_SCALE = 0.1


def init_model(config):
    config.validate()
    rng = np.random.default_rng(config.seed)
    enc = init_mlp(config.token_dim, config.hidden_dim, config.latent_dim, rng)
    dec = init_mlp(config.latent_dim, config.hidden_dim, config.token_dim, rng)
    dec.layer2.weight *= DECODER_OUT_INIT_SCALE
    return DistokModel(config, enc, dec)


def model_params(model):
    """Encoder params then decoder params; order shared with all gradients."""
    return mlp_params(model.encoder) + mlp_params(model.decoder)


def combine_tokens(probabilities, tokens):
    """Weighted token combination sum_i p_i t_i.

    Accumulates in list order with a fixed loop so callers that agree on
    ordering get bit-identical results.
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if probabilities.shape[0] != len(tokens):
        raise ValueError("distribution/token list length mismatch")
    acc = probabilities[0] * np.asarray(tokens[0], dtype=np.float64)
    for p, t in zip(probabilities[1:], tokens[1:]):
        acc = acc + p * np.asarray(t, dtype=np.float64)
    return acc


def encode(model, combined_token):
    z, _ = mlp_forward(model.encoder, combined_token)
    return z


def decode(model, z):
    t, _ = mlp_forward(model.decoder, z)
    return t


def _forward_token(model, token_in):
    z, enc_cache = mlp_forward(model.encoder, token_in)
    t_crt, dec_cache = mlp_forward(model.decoder, z)
    return z, enc_cache, t_crt, dec_cache


def _backward_token(model, enc_cache, dec_cache, dt_crt):
    dz, dec_grads = mlp_backward(model.decoder, dec_cache, dt_crt)
    _, enc_grads = mlp_backward(model.encoder, enc_cache, dz)
    return enc_grads + dec_grads


@dataclass
class MixResult:
    loss: float
    grads: list
    latent: np.ndarray
    enc_cache: tuple
    cos_restrictive: float
    cos_aux: float
    clamped_restrictive: bool
    clamped_aux: bool


def mix_loss(world, model, token_a, token_b, aux_embedding=None):
    """Thresholded fusion loss for a concept pair.

    loss = (1 - min[cos(e_r, e_a), theta1]) + (1 - min[cos(e_s, e_a), theta2])
    where e_a embeds "a photo of a <generated token>", e_r the restrictive
    pair prompt and e_s the aesthetic prior.  A branch whose cosine reaches
    its threshold is clamped and contributes zero gradient.
    """
    token_a = np.asarray(token_a, dtype=np.float64)
    token_b = np.asarray(token_b, dtype=np.float64)
    pair_sum = token_a + token_b
    token_in = 0.5 * pair_sum if model.config.normalize_pair_input else pair_sum
    z, enc_cache, t_crt, dec_cache = _forward_token(model, token_in)

    e_a, pa_cache = encode_prompt_fwd(world, Template.ADAPTIVE_PHOTO, t_crt)
    e_r = encode_pair_prompt(world, token_a, token_b)
    e_s = aux_embedding if aux_embedding is not None else aux_pet_embedding(world)

    c1, _, dc1_dea = cosine_similarity_grad(e_r, e_a)
    c2, _, dc2_dea = cosine_similarity_grad(e_s, e_a)
    clamp1 = c1 >= model.config.theta1
    clamp2 = c2 >= model.config.theta2
    loss = (1.0 - min(c1, model.config.theta1)) + (1.0 - min(c2, model.config.theta2))

    de_a = np.zeros_like(e_a)
    if not clamp1:
        de_a -= dc1_dea
    if not clamp2:
        de_a -= dc2_dea
    dt_crt = encode_prompt_backward(world, pa_cache, de_a)
    grads = _backward_token(model, enc_cache, dec_cache, dt_crt)
    return MixResult(loss, grads, z, enc_cache, c1, c2, clamp1, clamp2)


@dataclass
class ConsistencyResult:
    loss: float
    grads: list
    latent: np.ndarray
    enc_cache: tuple
    cos: float


def consistency_loss(world, model, distribution, known_tokens, target_token):
    """1 - cos of the bare-text embeddings of generated and target tokens.

    The conditioning input is the distribution-weighted combination of
    known tokens; gradients flow through encoder and decoder only, never
    into the target token.
    """
    token_in = combine_tokens(distribution, known_tokens)
    z, enc_cache, t_crt, dec_cache = _forward_token(model, token_in)
    e_gen, cache = encode_prompt_fwd(world, Template.NEUTRAL, t_crt)
    e_tgt = encode_prompt(world, Template.NEUTRAL, target_token)
    c, de_gen, _ = cosine_similarity_grad(e_gen, e_tgt)
    dt_crt = encode_prompt_backward(world, cache, -de_gen)
    grads = _backward_token(model, enc_cache, dec_cache, dt_crt)
    return ConsistencyResult(1.0 - c, grads, z, enc_cache, c)


@dataclass
class LatentBatchStats:
    mean: np.ndarray
    variance: float  # dimension-averaged population variance
    floored: bool = False


@dataclass
class RegResult:
    stats: LatentBatchStats
    value: float
    dlatents: list


def reg_loss(latents):
    """||batch mean||^2 / batch variance, with the variance floored at 1e-8.

    Variance is the population variance per dimension, averaged over
    dimensions.  Gradients are returned per latent; the floor, when
    engaged, blocks the variance path (subgradient zero).
    """
    if len(latents) < 2:
        raise ValueError("need at least 2 latents for a defined variance")
    zs = np.asarray(latents, dtype=np.float64)
    n, dim = zs.shape
    mu = zs.mean(axis=0)
    centered = zs - mu
    var_raw = float((centered ** 2).mean())
    floored = var_raw < VARIANCE_FLOOR
    var = VARIANCE_FLOOR if floored else var_raw
    mu_sq = float(np.dot(mu, mu))
    value = mu_sq / var

    dlatents = []
    for i in range(n):
        g = (2.0 / n) * mu / var
        if not floored:
            g = g - (mu_sq / var ** 2) * (2.0 / (n * dim)) * centered[i]
        dlatents.append(g)
    return RegResult(LatentBatchStats(mu, var, floored), value, dlatents)


def variance_anchor_loss(latents):
    """(sigma^2 - 1)^2 on the batch's dimension-averaged population
    variance: an optional pull toward unit variance so standardized
    sampling distributions match the latent scale at inference.  Returns
    a RegResult; disabled unless the trainer is given a positive weight.
    """
    if len(latents) < 2:
        raise ValueError("need at least 2 latents for a defined variance")
    zs = np.asarray(latents, dtype=np.float64)
    n, dim = zs.shape
    mu = zs.mean(axis=0)
    centered = zs - mu
    var = float((centered ** 2).mean())
    value = (var - 1.0) ** 2
    scale = 2.0 * (var - 1.0) * 2.0 / (n * dim)
    dlatents = [scale * centered[i] for i in range(n)]
    return RegResult(LatentBatchStats(mu, var, False), value, dlatents)


# ------------------------------------------------------------- serialization

def _mlp_to_doc(net):
    return {
        "w1": serialize.arr2j(net.layer1.weight),
        "b1": serialize.arr2j(net.layer1.bias),
        "w2": serialize.arr2j(net.layer2.weight),
        "b2": serialize.arr2j(net.layer2.bias),
        "activation": "tanh",
    }


def _mlp_from_doc(doc):
    from .ndmath import DenseLayer
    return Mlp2(
        DenseLayer(serialize.j2arr(doc["w1"]), serialize.j2arr(doc["b1"])),
        DenseLayer(serialize.j2arr(doc["w2"]), serialize.j2arr(doc["b2"])),
    )


def model_to_doc(model):
    c = model.config
    return {
        "version": _MODEL_VERSION,
        "config": {
            "token_dim": c.token_dim,
            "hidden_dim": c.hidden_dim,
            "latent_dim": c.latent_dim,
            "theta1": serialize.f2s(c.theta1),
            "theta2": serialize.f2s(c.theta2),
            "normalize_pair_input": c.normalize_pair_input,
            "seed": c.seed,
        },
        "encoder": _mlp_to_doc(model.encoder),
        "decoder": _mlp_to_doc(model.decoder),
    }


def save_model(model, path):
    serialize.dump_json(model_to_doc(model), path)


def model_from_doc(doc):
    if doc.get("version") != _MODEL_VERSION:
        raise SchemaError(f"unsupported model version {doc.get('version')!r}")
    try:
        c = doc["config"]
        config = ModelConfig(
            token_dim=int(c["token_dim"]),
            hidden_dim=int(c["hidden_dim"]),
            latent_dim=int(c["latent_dim"]),
            theta1=serialize.s2f(c["theta1"]),
            theta2=serialize.s2f(c["theta2"]),
            normalize_pair_input=bool(c["normalize_pair_input"]),
            seed=int(c["seed"]),
        )
        encoder = _mlp_from_doc(doc["encoder"])
        decoder = _mlp_from_doc(doc["decoder"])
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"malformed model document: {exc}") from exc
    config.validate()
    return DistokModel(config, encoder, decoder)


def load_model(path):
    return model_from_doc(serialize.load_json(path))

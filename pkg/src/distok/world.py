"""Synthetic semantic oracle: text encoder, renderer and classifier stand-ins.

The world replaces a pretrained CLIP/diffusion/VLM stack with fixed seeded
linear maps and a softmax prototype classifier, so every downstream loss and
metric is analytically checkable.  A built world is immutable.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels, serialize
from .errors import ConfigError, DegenerateInputError, NonFiniteError, SchemaError
from .ndmath import softmax

MAX_PAIRWISE_COS = 0.5  # separation target for known tokens
_WORLD_VERSION = 1


class Template(Enum):
    ADAPTIVE_PHOTO = "adaptive_photo"    # "a photo of a <token>"
    RESTRICTIVE_PAIR = "restrictive_pair"  # "a <c1> <c2>"
    AUXILIARY_PET = "auxiliary_pet"      # aesthetic prior
    NEUTRAL = "neutral"                  # bare token, zero context


@dataclass(frozen=True)
class WorldConfig:
    num_known_concepts: int
    token_dim: int
    embed_dim: int
    feature_dim: int
    classifier_temperature: float
    render_noise_std: float = 0.0
    seed: int = 0

    def validate(self, path="/world"):
        if self.num_known_concepts < 2:
            raise ConfigError(f"{path}/num_known_concepts", "must be >= 2")
        for name in ("token_dim", "embed_dim", "feature_dim"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{path}/{name}", "must be >= 2")
        if self.classifier_temperature <= 0:
            raise ConfigError(f"{path}/classifier_temperature", "must be > 0")
        if self.render_noise_std < 0:
            raise ConfigError(f"{path}/render_noise_std", "must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"{path}/seed", "must fit in 64 bits unsigned")


@dataclass
class ClassDistribution:
    """A point on the simplex over known-concept ids."""

    support: list
    probabilities: np.ndarray

    def validate(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if len(self.support) != p.shape[0]:
            raise ValueError("support/probability length mismatch")
        if len(set(self.support)) != len(self.support):
            raise ValueError("duplicate ids in support")
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be a simplex point")

    def max_prob(self):
        return float(np.max(self.probabilities))

    def argmax_id(self):
        return self.support[int(np.argmax(self.probabilities))]


@dataclass
class World:
    config: WorldConfig
    w_e: np.ndarray          # (m, d) text-encoder map
    w_g: np.ndarray          # (f, d) renderer map
    known_tokens: np.ndarray  # (K, d) unit-norm, well separated
    templates: dict          # Template -> context vector (d,)
    prototypes: np.ndarray   # (f, ) x K derived: u_k = w_g @ t_k, shape (K, f)

    @property
    def concept_names(self):
        return [f"c{k}" for k in range(self.config.num_known_concepts)]

    def token_of(self, name):
        return self.known_tokens[self.concept_names.index(name)]


def build_world(config):
    """Deterministically build a world from its config.

    Known tokens are rejection-sampled to pairwise cosine < 0.5 and the
    resulting prototype classifier is verified to put its argmax on the
    right concept for every clean render; the draw budget is 10*K*1000.
    """
    config.validate()
    k, d = config.num_known_concepts, config.token_dim
    rng = np.random.default_rng(config.seed)
    w_e = rng.standard_normal((config.embed_dim, d)) / math.sqrt(d)
    w_g = rng.standard_normal((config.feature_dim, d)) / math.sqrt(d)
    templates = {
        Template.ADAPTIVE_PHOTO: rng.standard_normal(d) / math.sqrt(d),
        Template.RESTRICTIVE_PAIR: rng.standard_normal(d) / math.sqrt(d),
        Template.AUXILIARY_PET: rng.standard_normal(d) / math.sqrt(d),
        Template.NEUTRAL: np.zeros(d),
    }

    budget = 10 * k * 1000
    draws = 0
    while True:
        tokens = []
        while len(tokens) < k:
            if draws >= budget:
                raise ConfigError(
                    "/world/num_known_concepts",
                    f"could not place {k} tokens with pairwise cosine < "
                    f"{MAX_PAIRWISE_COS} in token_dim={d} within {budget} draws",
                )
            draws += 1
            cand = rng.standard_normal(d)
            cand /= np.linalg.norm(cand)
            if all(float(np.dot(cand, t)) < MAX_PAIRWISE_COS for t in tokens):
                tokens.append(cand)
        tokens = np.array(tokens)
        # Same kernel as render_image so clean renders hit prototypes bit-exactly.
        prototypes = np.array([kernels.matvec(w_g, t) for t in tokens])
        logits = prototypes @ prototypes.T  # (K, K): classify clean render of t_k
        if (np.argmax(logits, axis=1) == np.arange(k)).all():
            break
        # Separation in token space did not survive the renderer; redraw.
    return World(config, w_e, w_g, tokens, templates, prototypes)


def _embed(world, context, token):
    token = np.asarray(token, dtype=np.float64)
    if token.shape[0] != world.config.token_dim:
        raise ValueError("token length mismatch")
    u = kernels.matvec(world.w_e, context + token)
    norm = float(np.linalg.norm(u))
    if norm < 1e-12:
        raise DegenerateInputError("prompt collapsed to the zero vector")
    return u / norm, norm


def encode_prompt(world, template, token):
    """E(q) = normalize(W_E (context + token)); unit norm."""
    e, _ = _embed(world, world.templates[template], token)
    return e


def encode_prompt_fwd(world, template, token):
    """encode_prompt plus the cache needed for its backward pass."""
    e, norm = _embed(world, world.templates[template], token)
    return e, (e, norm)


def encode_prompt_backward(world, cache, dout):
    """Gradient of encode_prompt w.r.t. the token argument."""
    e, norm = cache
    du = (dout - float(np.dot(dout, e)) * e) / norm
    return kernels.matvec_t(world.w_e, du)


def encode_pair_prompt(world, token_a, token_b):
    """Restrictive pair prompt; symmetric in its two tokens."""
    e, _ = _embed(world, world.templates[Template.RESTRICTIVE_PAIR],
                  np.asarray(token_a, dtype=np.float64) + np.asarray(token_b, dtype=np.float64))
    return e


def aux_pet_embedding(world):
    """Aesthetic-prior target: the generic pet centroid under the pet template."""
    centroid = world.known_tokens.mean(axis=0)
    return encode_prompt(world, Template.AUXILIARY_PET, centroid)


def render_image(world, token, rng=None, noise_std=None):
    """x = W_G token (+ Gaussian noise when the noise level is > 0).

    ``noise_std`` overrides the world's configured render_noise_std
    (evaluation forces it to 0 for determinism)."""
    token = np.asarray(token, dtype=np.float64)
    if token.shape[0] != world.config.token_dim:
        raise ValueError("token length mismatch")
    std = world.config.render_noise_std if noise_std is None else noise_std
    x = kernels.matvec(world.w_g, token)
    if std > 0:
        if rng is None:
            raise ValueError("rng required when rendering with noise")
        x = x + std * rng.standard_normal(x.shape[0])
    return x


def classify(world, image):
    """Softmax over prototype inner products at the configured temperature."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape[0] != world.config.feature_dim:
        raise ValueError("image length mismatch")
    if not np.isfinite(image).all():
        raise NonFiniteError("non-finite image feature")
    logits = (world.prototypes @ image) / world.config.classifier_temperature
    return ClassDistribution(world.concept_names, softmax(logits))


# ------------------------------------------------------------- serialization

def world_to_doc(world):
    return {
        "version": _WORLD_VERSION,
        "config": {
            "num_known_concepts": world.config.num_known_concepts,
            "token_dim": world.config.token_dim,
            "embed_dim": world.config.embed_dim,
            "feature_dim": world.config.feature_dim,
            "classifier_temperature": serialize.f2s(world.config.classifier_temperature),
            "render_noise_std": serialize.f2s(world.config.render_noise_std),
            "seed": world.config.seed,
        },
        "w_e": serialize.arr2j(world.w_e),
        "w_g": serialize.arr2j(world.w_g),
        "known_tokens": serialize.arr2j(world.known_tokens),
        "templates": {t.value: serialize.arr2j(v) for t, v in world.templates.items()},
    }


def save_world(world, path):
    serialize.dump_json(world_to_doc(world), path)


def world_from_doc(doc):
    if doc.get("version") != _WORLD_VERSION:
        raise SchemaError(f"unsupported world version {doc.get('version')!r}")
    try:
        c = doc["config"]
        config = WorldConfig(
            num_known_concepts=int(c["num_known_concepts"]),
            token_dim=int(c["token_dim"]),
            embed_dim=int(c["embed_dim"]),
            feature_dim=int(c["feature_dim"]),
            classifier_temperature=serialize.s2f(c["classifier_temperature"]),
            render_noise_std=serialize.s2f(c["render_noise_std"]),
            seed=int(c["seed"]),
        )
        w_e = serialize.j2arr(doc["w_e"])
        w_g = serialize.j2arr(doc["w_g"])
        tokens = serialize.j2arr(doc["known_tokens"])
        templates = {Template(k): serialize.j2arr(v) for k, v in doc["templates"].items()}
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"malformed world document: {exc}") from exc
    config.validate()
    prototypes = np.array([kernels.matvec(w_g, t) for t in tokens])
    return World(config, w_e, w_g, tokens, templates, prototypes)


def load_world(path):
    return world_from_doc(serialize.load_json(path))

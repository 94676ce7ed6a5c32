"""Inference and evaluation: pair fusion, distribution-conditional
generation, unconditional multi-distribution sampling, input-vs-oracle KL,
and the consistency-supervision ablation."""

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import serialize
from .model import combine_tokens, decode, encode, init_model
from .ndmath import cosine_similarity, kl_divergence
from .trainer import run_training
from .world import ClassDistribution, classify, render_image

CAUCHY_CLIP = 10.0
KL_EPSILON = 1e-8


class SamplerKind(Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    UNIFORM = "uniform"
    CAUCHY = "cauchy"


def sample_latents(kind, count, dim, rng):
    """i.i.d. latent draws, standardized to zero mean / unit variance
    where defined.  Cauchy has no variance; its draws are clipped per
    coordinate at +-10 and the clip count is reported."""
    if count < 1:
        raise ValueError("count must be >= 1")
    clipped = 0
    if kind is SamplerKind.GAUSSIAN:
        z = rng.standard_normal((count, dim))
    elif kind is SamplerKind.LAPLACE:
        z = rng.laplace(0.0, 1.0 / math.sqrt(2.0), (count, dim))
    elif kind is SamplerKind.UNIFORM:
        z = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), (count, dim))
    elif kind is SamplerKind.CAUCHY:
        z = rng.standard_cauchy((count, dim))
        clipped = int(np.sum(np.abs(z) > CAUCHY_CLIP))
        z = np.clip(z, -CAUCHY_CLIP, CAUCHY_CLIP)
    else:
        raise ValueError(f"unknown sampler kind {kind!r}")
    return z, clipped


@dataclass
class SampleResult:
    tokens: list
    latents: np.ndarray
    clip_rate: float  # fraction of clipped coordinates (Cauchy only)


def sample_unconditional(model, kind, count, rng):
    z, clipped = sample_latents(kind, count, model.config.latent_dim, rng)
    tokens = [decode(model, zi) for zi in z]
    return SampleResult(tokens, z, clipped / z.size)


def _canonical_over_known(world, dist):
    """Validate and reorder a distribution's support into known-id order."""
    dist.validate()
    names = world.concept_names
    for cid in dist.support:
        if cid not in names:
            raise ValueError(f"unknown concept id {cid!r}")
    order = sorted(range(len(dist.support)), key=lambda i: names.index(dist.support[i]))
    support = [dist.support[i] for i in order]
    probs = np.asarray(dist.probabilities, dtype=np.float64)[order]
    return support, probs


def generate_from_distribution(world, model, pool, dist):
    """Decode the latent of the distribution-weighted known-token sum."""
    support, probs = _canonical_over_known(world, dist)
    known = dict(zip(pool.known_ids, pool.known_tokens()))
    tokens = [known[cid] for cid in support]
    return decode(model, encode(model, combine_tokens(probs, tokens)))


def fuse_pair(world, model, pool, id_a, id_b):
    """Two-concept fusion.  With normalize_pair_input the encoder input is
    the pair mean, built through the same combination path as
    generate_from_distribution so the uniform two-class case is
    bit-identical; otherwise it is the literal token sum."""
    if id_a == id_b:
        raise ValueError("fuse_pair needs two distinct concepts")
    positions = {e.id: i for i, e in enumerate(pool.entries)}
    for cid in (id_a, id_b):
        if cid not in positions:
            raise ValueError(f"unknown concept id {cid!r}")
    first, second = sorted((id_a, id_b), key=positions.get)
    t1, t2 = pool.get(first).token, pool.get(second).token
    if model.config.normalize_pair_input:
        token_in = combine_tokens(np.array([0.5, 0.5]), [t1, t2])
    else:
        token_in = t1 + t2
    return decode(model, encode(model, token_in))


def kl_input_vs_oracle(world, model, pool, dist):
    """KL(input distribution || classifier output on the clean render of
    the generated token).  Rendering noise is forced to 0."""
    support, probs = _canonical_over_known(world, dist)
    token = generate_from_distribution(world, model, pool, dist)
    predicted = classify(world, render_image(world, token, noise_std=0.0))
    full = np.zeros(world.config.num_known_concepts)
    for cid, p in zip(support, probs):
        full[world.concept_names.index(cid)] = p
    return kl_divergence(full, predicted.probabilities, KL_EPSILON)


def diversity_score(tokens):
    """Mean pairwise cosine distance over all unordered token pairs."""
    if len(tokens) < 2:
        raise ValueError("need at least 2 tokens")
    total, pairs = 0.0, 0
    for i in range(len(tokens)):
        for j in range(i + 1, len(tokens)):
            total += 1.0 - cosine_similarity(tokens[i], tokens[j])
            pairs += 1
    return total / pairs


# ------------------------------------------------------------------ eval set

EVAL_SEED_STREAM = 0x5EED0EA1


def make_eval_distributions(world, count, rng):
    """Held-out conditioning distributions: 2-4 classes chosen at random,
    Dirichlet(1,...,1) weights over the chosen support."""
    names = world.concept_names
    out = []
    for _ in range(count):
        k = int(rng.integers(2, 5))
        idx = sorted(rng.choice(len(names), size=k, replace=False).tolist())
        probs = rng.dirichlet(np.ones(k))
        probs = probs / probs.sum()
        out.append(ClassDistribution([names[i] for i in idx], probs))
    return out


def evaluate_suite(world, model, pool, distributions):
    return [kl_input_vs_oracle(world, model, pool, d) for d in distributions]


@dataclass
class EvalReport:
    kl_values: list
    seeds: list = field(default_factory=list)
    config_digest: str = ""

    @property
    def mean(self):
        return float(np.mean(self.kl_values))

    @property
    def median(self):
        return float(np.median(self.kl_values))

    @property
    def std(self):
        return float(np.std(self.kl_values))

    def to_doc(self):
        return {
            "kl_values": serialize.arr2j(np.asarray(self.kl_values)),
            "mean": serialize.f2s(self.mean),
            "median": serialize.f2s(self.median),
            "std": serialize.f2s(self.std),
            "seeds": list(self.seeds),
            "config_digest": self.config_digest,
        }


# ------------------------------------------------------------------ ablation

@dataclass
class AblationSeedResult:
    seed: int
    kl_full: float       # mean held-out KL, consistency supervision on
    kl_no_cst: float     # same with beta = 0
    kl_init: float       # same metric at step 0 (untrained)
    median_full: float
    median_init: float


@dataclass
class AblationReport:
    per_seed: list
    eval_count: int

    @property
    def mean_full(self):
        return float(np.mean([r.kl_full for r in self.per_seed]))

    @property
    def mean_no_cst(self):
        return float(np.mean([r.kl_no_cst for r in self.per_seed]))

    @property
    def paired_mean_diff(self):
        """mean(kl_no_cst - kl_full); positive means consistency helps."""
        return float(np.mean([r.kl_no_cst - r.kl_full for r in self.per_seed]))

    def wins(self):
        return sum(1 for r in self.per_seed if r.kl_full < r.kl_no_cst)

    def to_doc(self):
        return {
            "eval_count": self.eval_count,
            "mean_full": serialize.f2s(self.mean_full),
            "mean_no_cst": serialize.f2s(self.mean_no_cst),
            "paired_mean_diff": serialize.f2s(self.paired_mean_diff),
            "wins_full": self.wins(),
            "per_seed": [
                {
                    "seed": r.seed,
                    "kl_full": serialize.f2s(r.kl_full),
                    "kl_no_cst": serialize.f2s(r.kl_no_cst),
                    "kl_init": serialize.f2s(r.kl_init),
                    "median_full": serialize.f2s(r.median_full),
                    "median_init": serialize.f2s(r.median_init),
                }
                for r in self.per_seed
            ],
        }

    def to_csv(self):
        lines = ["seed,kl_full,kl_no_cst,diff"]
        for r in self.per_seed:
            lines.append(f"{r.seed},{serialize.f2s(r.kl_full)},"
                         f"{serialize.f2s(r.kl_no_cst)},"
                         f"{serialize.f2s(r.kl_no_cst - r.kl_full)}")
        return "\n".join(lines) + "\n"


def run_ablation_seed(world, model_config, train_config, seed, eval_count=30):
    """One paired comparison: full training vs beta=0, identical world,
    identical seeds, identical held-out evaluation set."""
    from .pool import init_pool

    eval_rng = np.random.default_rng([seed, EVAL_SEED_STREAM])
    suite = make_eval_distributions(world, eval_count, eval_rng)
    base_pool = init_pool(world)

    model_cfg = dataclasses.replace(model_config, seed=seed)
    init_kls = evaluate_suite(world, init_model(model_cfg), base_pool, suite)

    full_cfg = dataclasses.replace(train_config, seed=seed)
    model_full, pool_full, _ = run_training(world, init_model(model_cfg), full_cfg)
    full_kls = evaluate_suite(world, model_full, pool_full, suite)

    nocst_cfg = dataclasses.replace(train_config, seed=seed, beta=0.0)
    model_nc, pool_nc, _ = run_training(world, init_model(model_cfg), nocst_cfg)
    nocst_kls = evaluate_suite(world, model_nc, pool_nc, suite)

    return AblationSeedResult(
        seed=seed,
        kl_full=float(np.mean(full_kls)),
        kl_no_cst=float(np.mean(nocst_kls)),
        kl_init=float(np.mean(init_kls)),
        median_full=float(np.median(full_kls)),
        median_init=float(np.median(init_kls)),
    )


def run_ablation(world, model_config, train_config, seeds, eval_count=30):
    if len(seeds) < 5:
        raise ValueError("ablation needs at least 5 seeds")
    per_seed = [run_ablation_seed(world, model_config, train_config, s, eval_count)
                for s in seeds]
    return AblationReport(per_seed, eval_count)

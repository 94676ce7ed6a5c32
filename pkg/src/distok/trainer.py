"""Iterative training loop: per-sub-step choice of mix vs consistency
objective, gradient accumulation over a window of n sub-steps, one latent
regularizer evaluation per window, and periodic latent sampling with
oracle labeling and pool admission."""

from dataclasses import dataclass, field

import numpy as np

from . import serialize
from .errors import ConfigError, NonFiniteError
from .model import (
    consistency_loss,
    mix_loss,
    model_params,
    reg_loss,
    variance_anchor_loss,
)
from .ndmath import (
    AdamState,
    LrSchedule,
    adam_step,
    cosine_lr,
    init_adam,
    mlp_backward,
    zeros_like_params,
)
from .pool import init_pool, sample_novel, sample_pair, try_admit
from .world import aux_pet_embedding, classify, render_image

MIX = "mix"
CONSISTENCY = "cst"


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.001
    # Optional pull of the latent batch variance toward 1; 0 disables.
    variance_anchor: float = 0.0
    tau: float = 0.85
    n_accumulation: int = 8
    total_steps: int = 5000
    mix_probability: float = 0.5
    sample_period: int = 50
    samples_per_period: int = 4
    initial_lr: float = 5e-4
    capacity_novel: int = 512
    seed: int = 0

    def validate(self, path="/train"):
        for name in ("alpha", "beta", "gamma", "variance_anchor"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{path}/{name}", "must be >= 0")
        if not 0 < self.tau <= 1:
            raise ConfigError(f"{path}/tau", "must be in (0, 1]")
        if self.n_accumulation < 2:
            raise ConfigError(f"{path}/n_accumulation",
                              "must be >= 2 (regularizer variance undefined)")
        if self.total_steps < 0:
            raise ConfigError(f"{path}/total_steps", "must be >= 0")
        if not 0 <= self.mix_probability <= 1:
            raise ConfigError(f"{path}/mix_probability", "must be in [0, 1]")
        if self.sample_period < 1:
            raise ConfigError(f"{path}/sample_period", "must be >= 1")
        if self.samples_per_period < 1:
            raise ConfigError(f"{path}/samples_per_period", "must be >= 1")
        if self.initial_lr <= 0:
            raise ConfigError(f"{path}/initial_lr", "must be > 0")
        if self.capacity_novel < 1:
            raise ConfigError(f"{path}/capacity_novel", "must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"{path}/seed", "must fit in 64 bits unsigned")


@dataclass
class StepRecord:
    step: int
    kind_counts: tuple  # (mix, cst), sums to n_accumulation
    mix_loss: float     # mean over mix sub-steps, None if none
    cst_loss: float     # mean over consistency sub-steps, None if none
    reg_loss: float
    total_loss: float
    grad_norm: float
    lr: float
    pool_novel_count: int
    admissions_this_step: int
    sampling: list = field(default_factory=list)
    variance_floored: bool = False

    def to_doc(self):
        return {
            "step": self.step,
            "kind_counts": list(self.kind_counts),
            "mix_loss": None if self.mix_loss is None else serialize.f2s(self.mix_loss),
            "cst_loss": None if self.cst_loss is None else serialize.f2s(self.cst_loss),
            "reg_loss": serialize.f2s(self.reg_loss),
            "total_loss": serialize.f2s(self.total_loss),
            "grad_norm": serialize.f2s(self.grad_norm),
            "lr": serialize.f2s(self.lr),
            "pool_novel_count": self.pool_novel_count,
            "admissions_this_step": self.admissions_this_step,
            "sampling": self.sampling,
            "variance_floored": self.variance_floored,
        }


class DivergenceError(NonFiniteError):
    """Training produced a non-finite loss; carries a replay description."""

    def __init__(self, message, replay):
        super().__init__(message)
        self.replay = replay


@dataclass
class TrainState:
    world: object
    model: object
    pool: object
    adam: AdamState
    config: TrainConfig
    schedule: LrSchedule
    aux_embedding: np.ndarray
    step: int = 0
    # Hook for the gradcheck negative control: scales all gradients.
    grad_fault_scale: float = 1.0


def init_train_state(world, model, train_config):
    train_config.validate()
    pool = init_pool(world, capacity_novel=train_config.capacity_novel)
    adam = init_adam(model_params(model))
    schedule = LrSchedule(train_config.initial_lr, max(1, train_config.total_steps))
    return TrainState(world, model, pool, adam, train_config, schedule,
                      aux_pet_embedding(world))


def select_step_kind(rng, mix_probability, pool):
    """Bernoulli(mix_probability); forced to mix while no novel concept
    exists (consistency needs a novel target).  The draw is consumed either
    way so trajectories stay aligned across pool histories."""
    draw = rng.random()
    if pool.novel_count == 0:
        return MIX
    return MIX if draw < mix_probability else CONSISTENCY


def train_step(state, rng):
    """One optimizer step = one accumulation window of n sub-steps."""
    cfg = state.config
    n = cfg.n_accumulation
    params = model_params(state.model)
    acc_grads = zeros_like_params(params)
    latents, enc_caches = [], []
    mix_vals, cst_vals = [], []
    sub_kinds = []
    known_tokens = state.pool.known_tokens()

    for _ in range(n):
        kind = select_step_kind(rng, cfg.mix_probability, state.pool)
        sub_kinds.append(kind)
        if kind == MIX:
            a, b = sample_pair(state.pool, rng)
            res = mix_loss(state.world, state.model, a.token, b.token,
                           aux_embedding=state.aux_embedding)
            weight = cfg.alpha
            mix_vals.append(res.loss)
        else:
            entry = sample_novel(state.pool, rng)
            res = consistency_loss(state.world, state.model,
                                   entry.distribution.probabilities,
                                   known_tokens, entry.token)
            weight = cfg.beta
            cst_vals.append(res.loss)
        if weight != 0.0:
            for g_acc, g in zip(acc_grads, res.grads):
                g_acc += weight * g
        latents.append(res.latent)
        enc_caches.append(res.enc_cache)

    for g in acc_grads:
        g /= n

    reg = reg_loss(latents)
    if cfg.gamma != 0.0:
        for dz, cache in zip(reg.dlatents, enc_caches):
            _, enc_grads = mlp_backward(state.model.encoder, cache, cfg.gamma * dz)
            for g_acc, g in zip(acc_grads[:4], enc_grads):
                g_acc += g

    anchor_value = 0.0
    if cfg.variance_anchor != 0.0:
        anchor = variance_anchor_loss(latents)
        anchor_value = anchor.value
        for dz, cache in zip(anchor.dlatents, enc_caches):
            _, enc_grads = mlp_backward(state.model.encoder, cache,
                                        cfg.variance_anchor * dz)
            for g_acc, g in zip(acc_grads[:4], enc_grads):
                g_acc += g

    total = (cfg.alpha * sum(mix_vals) + cfg.beta * sum(cst_vals)) / n \
        + cfg.gamma * reg.value + cfg.variance_anchor * anchor_value
    if not np.isfinite(total):
        raise DivergenceError(
            f"non-finite loss at step {state.step}",
            replay={"step": state.step, "kinds": sub_kinds,
                    "mix_losses": mix_vals, "cst_losses": cst_vals,
                    "reg_loss": reg.value, "seed": cfg.seed})

    if state.grad_fault_scale != 1.0:
        for g in acc_grads:
            g *= state.grad_fault_scale

    lr = cosine_lr(state.schedule, state.step)
    adam_step(params, acc_grads, state.adam, lr)
    grad_norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in acc_grads)))

    record = StepRecord(
        step=state.step,
        kind_counts=(len(mix_vals), len(cst_vals)),
        mix_loss=float(np.mean(mix_vals)) if mix_vals else None,
        cst_loss=float(np.mean(cst_vals)) if cst_vals else None,
        reg_loss=reg.value,
        total_loss=float(total),
        grad_norm=grad_norm,
        lr=lr,
        pool_novel_count=state.pool.novel_count,
        admissions_this_step=0,
        variance_floored=reg.stats.floored,
    )
    state.step += 1
    return record


def periodic_latent_sampling(state, rng):
    """Sample standard-Gaussian latents, decode, render, classify, and try
    to admit each candidate.  Returns (admissions, candidate log)."""
    from .model import decode  # local import to avoid cycle at module load

    cfg = state.config
    admissions = 0
    candidates = []
    for _ in range(cfg.samples_per_period):
        z = rng.standard_normal(state.model.config.latent_dim)
        token = decode(state.model, z)
        image = render_image(state.world, token, rng)
        dist = classify(state.world, image)
        admitted = try_admit(state.pool, token, dist, cfg.tau, state.step)
        admissions += int(admitted)
        candidates.append({
            "admitted": admitted,
            "max_prob": serialize.f2s(dist.max_prob()),
            "distribution": serialize.arr2j(dist.probabilities),
        })
    return admissions, candidates


def run_training(world, model, train_config, metrics_path=None):
    """Full run: total_steps optimizer steps interleaved with periodic
    sampling.  Returns (model, pool, records); the model is trained in
    place."""
    state = init_train_state(world, model, train_config)
    rng = np.random.default_rng(train_config.seed)
    records = []
    for step in range(train_config.total_steps):
        if step % train_config.sample_period == 0:
            admissions, candidates = periodic_latent_sampling(state, rng)
        else:
            admissions, candidates = 0, []
        record = train_step(state, rng)
        record.admissions_this_step = admissions
        record.sampling = candidates
        record.pool_novel_count = state.pool.novel_count
        records.append(record)
    if metrics_path is not None:
        with open(metrics_path, "w") as fh:
            for rec in records:
                fh.write(serialize.canonical_dumps(rec.to_doc()))
                fh.write("\n")
    return state.model, state.pool, records

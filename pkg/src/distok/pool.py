"""Dynamic concept pool: known concepts at init, novel concepts admitted
when the oracle's max class probability falls strictly below tau."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import serialize
from .errors import PoolError, SchemaError
from .world import ClassDistribution

KNOWN = "known"
NOVEL = "novel"
_POOL_VERSION = 1
DEFAULT_CAPACITY_NOVEL = 512


@dataclass
class ConceptEntry:
    id: str
    kind: str  # KNOWN or NOVEL
    token: np.ndarray
    distribution: ClassDistribution  # over known ids; one-hot for known
    created_step: int = 0
    max_oracle_prob: float = 1.0


@dataclass
class ConceptPool:
    entries: list = field(default_factory=list)
    known_ids: list = field(default_factory=list)
    capacity_novel: int = DEFAULT_CAPACITY_NOVEL

    def __len__(self):
        return len(self.entries)

    @property
    def novel_entries(self):
        return [e for e in self.entries if e.kind == NOVEL]

    @property
    def novel_count(self):
        return len(self.novel_entries)

    def get(self, entry_id):
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise PoolError(f"unknown concept id {entry_id!r}")

    def known_tokens(self):
        """Known tokens in known-id order (conditioning basis)."""
        by_id = {e.id: e.token for e in self.entries if e.kind == KNOWN}
        return [by_id[i] for i in self.known_ids]


def init_pool(world, capacity_novel=DEFAULT_CAPACITY_NOVEL):
    """One known entry per world concept, one-hot distributions."""
    names = world.concept_names
    k = len(names)
    entries = []
    for i, name in enumerate(names):
        onehot = np.zeros(k)
        onehot[i] = 1.0
        entries.append(ConceptEntry(
            id=name, kind=KNOWN, token=world.known_tokens[i].copy(),
            distribution=ClassDistribution(list(names), onehot),
            created_step=0, max_oracle_prob=1.0,
        ))
    return ConceptPool(entries, list(names), capacity_novel)


def sample_pair(pool, rng):
    """Two distinct entries, uniform without replacement over the full pool."""
    if len(pool) < 2:
        raise PoolError("need at least 2 pool entries to sample a pair")
    i, j = rng.choice(len(pool.entries), size=2, replace=False)
    return pool.entries[int(i)], pool.entries[int(j)]


def sample_novel(pool, rng):
    """Uniform draw over novel entries only."""
    novel = pool.novel_entries
    if not novel:
        raise PoolError("pool has no novel entries")
    return novel[int(rng.integers(len(novel)))]


def try_admit(pool, token, oracle_distribution, tau, step):
    """Admit a candidate as novel iff max oracle prob < tau (strict) and
    there is capacity.  Returns True on admission."""
    if not 0 < tau <= 1:
        raise ValueError("tau must be in (0, 1]")
    oracle_distribution.validate()
    max_prob = oracle_distribution.max_prob()
    if max_prob >= tau or pool.novel_count >= pool.capacity_novel:
        return False
    entry_id = f"novel{pool.novel_count}"
    pool.entries.append(ConceptEntry(
        id=entry_id, kind=NOVEL, token=np.asarray(token, dtype=np.float64).copy(),
        distribution=oracle_distribution, created_step=step,
        max_oracle_prob=max_prob,
    ))
    return True


# ------------------------------------------------------------- serialization

def pool_to_doc(pool):
    return {
        "version": _POOL_VERSION,
        "known_ids": list(pool.known_ids),
        "capacity_novel": pool.capacity_novel,
        "entries": [
            {
                "id": e.id,
                "kind": e.kind,
                "token": serialize.arr2j(e.token),
                "support": list(e.distribution.support),
                "probabilities": serialize.arr2j(e.distribution.probabilities),
                "created_step": e.created_step,
                "max_oracle_prob": serialize.f2s(e.max_oracle_prob),
            }
            for e in pool.entries
        ],
    }


def save_pool(pool, path):
    serialize.dump_json(pool_to_doc(pool), path)


def pool_from_doc(doc, tau=None):
    if doc.get("version") != _POOL_VERSION:
        raise SchemaError(f"unsupported pool version {doc.get('version')!r}")
    try:
        entries = []
        for e in doc["entries"]:
            dist = ClassDistribution(list(e["support"]), serialize.j2arr(e["probabilities"]))
            dist.validate()
            entries.append(ConceptEntry(
                id=e["id"], kind=e["kind"], token=serialize.j2arr(e["token"]),
                distribution=dist, created_step=int(e["created_step"]),
                max_oracle_prob=serialize.s2f(e["max_oracle_prob"]),
            ))
        pool = ConceptPool(entries, list(doc["known_ids"]), int(doc["capacity_novel"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"malformed pool document: {exc}") from exc
    ids = [e.id for e in pool.entries]
    if len(set(ids)) != len(ids):
        raise SchemaError("duplicate concept ids in pool document")
    known = [e.id for e in pool.entries if e.kind == KNOWN]
    if sorted(known) != sorted(pool.known_ids):
        raise SchemaError("known entries do not match known_ids")
    if pool.novel_count > pool.capacity_novel:
        raise SchemaError("novel count exceeds capacity_novel")
    if tau is not None:
        for e in pool.novel_entries:
            if e.max_oracle_prob >= tau:
                # Historical tau may differ from the current one; keep the
                # entry but surface the mismatch.
                warnings.warn(
                    f"novel entry {e.id} has max_oracle_prob "
                    f"{e.max_oracle_prob:.4f} >= tau {tau}", stacklevel=2)
    return pool


def load_pool(path, tau=None):
    return pool_from_doc(serialize.load_json(path), tau=tau)

"""Synthetic contextual-bandit instances, behavior policies, and batch data.

States are represented uniformly through StateHandle / StateBatch so the
same pipeline runs on finite tabular problems and on infinite state spaces
with per-action Gaussian feature vectors.  All sampling takes explicit
seeds and derives independent sub-streams, so trials can run concurrently.
"""
from __future__ import annotations

import csv
import io
import zlib
from dataclasses import dataclass

import numpy as np

_SEED_MASK = (1 << 64) - 1


def rng_stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Independent generator for a (seed, purpose tag, trial index) tuple."""
    code = zlib.crc32(purpose.encode("utf-8"))
    return np.random.default_rng(
        np.random.SeedSequence([int(seed) & _SEED_MASK, code, int(index)])
    )


def derive_seed(seed: int, purpose: str, index: int = 0) -> int:
    """Stable 64-bit sub-seed for a (seed, purpose, index) tuple."""
    code = zlib.crc32(purpose.encode("utf-8"))
    ss = np.random.SeedSequence([int(seed) & _SEED_MASK, code, int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


class InfiniteCoverageError(ValueError):
    """Behavior policy puts zero mass on some action."""


@dataclass(frozen=True)
class TabularState:
    index: int


@dataclass(frozen=True)
class FeatureState:
    """Per-action ambient feature vectors, shape (action_count, ambient_dim)."""

    features: np.ndarray


class StateBatch:
    """A batch of i.i.d. states, stored columnar for vectorized evaluation."""

    def __init__(self, indices=None, features=None):
        if (indices is None) == (features is None):
            raise ValueError("exactly one of indices/features must be given")
        self.indices = None if indices is None else np.asarray(indices, dtype=int)
        self.features = None if features is None else np.asarray(features, dtype=float)

    @property
    def kind(self) -> str:
        return "tabular" if self.indices is not None else "feature"

    def __len__(self) -> int:
        arr = self.indices if self.indices is not None else self.features
        return arr.shape[0]

    def __getitem__(self, i):
        if self.indices is not None:
            return TabularState(int(self.indices[i]))
        return FeatureState(self.features[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


@dataclass(frozen=True)
class TabularModel:
    state_probs: np.ndarray  # (|X|,)
    means: np.ndarray  # (|X|, |A|)


@dataclass(frozen=True)
class GaussianModel:
    chol_factors: np.ndarray  # (|A|, d, d), lower Cholesky of each Sigma_a
    theta_true: np.ndarray  # (d,)
    true_dim: int


@dataclass(frozen=True)
class BanditInstance:
    action_count: int
    model: object  # TabularModel or GaussianModel
    noise_scale: float = 1.0

    @property
    def is_tabular(self) -> bool:
        return isinstance(self.model, TabularModel)

    def mean_rewards(self, states: StateBatch) -> np.ndarray:
        """True mean reward f(x, a) for every state in the batch, shape (m, |A|)."""
        if self.is_tabular:
            if states.indices is None:
                raise ValueError("tabular instance needs tabular states")
            return self.model.means[states.indices]
        if states.features is None:
            raise ValueError("feature instance needs feature states")
        return states.features @ self.model.theta_true

    def sample_state_batch(self, count: int, rng: np.random.Generator) -> StateBatch:
        if count < 1:
            raise ValueError("count must be positive")
        if self.is_tabular:
            idx = rng.choice(len(self.model.state_probs), size=count, p=self.model.state_probs)
            return StateBatch(indices=idx)
        n_act, d, _ = self.model.chol_factors.shape
        z = rng.standard_normal((count, n_act, d))
        feats = np.einsum("adk,mak->mad", self.model.chol_factors, z)
        return StateBatch(features=feats)


@dataclass(frozen=True)
class BehaviorPolicy:
    """State-independent stochastic logging policy mu."""

    action_probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.action_probs, dtype=float)
        object.__setattr__(self, "action_probs", probs)
        if np.any(probs <= 0):
            raise InfiniteCoverageError("behavior policy must be strictly positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("behavior probabilities must sum to one")


class Dataset:
    """Batch of logged (state, action, reward) rows, stored as arrays."""

    def __init__(self, states: StateBatch, actions, rewards, true_means=None):
        self.states = states
        self.actions = np.asarray(actions, dtype=int)
        self.rewards = np.asarray(rewards, dtype=float)
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("rewards must be finite")
        self.true_means = None if true_means is None else np.asarray(true_means, dtype=float)
        n = len(states)
        if self.actions.shape != (n,) or self.rewards.shape != (n,):
            raise ValueError("actions/rewards must have one entry per state")

    @property
    def n(self) -> int:
        return len(self.states)

    def subset(self, idx: np.ndarray) -> "Dataset":
        if self.states.indices is not None:
            sub_states = StateBatch(indices=self.states.indices[idx])
        else:
            sub_states = StateBatch(features=self.states.features[idx])
        tm = None if self.true_means is None else self.true_means[idx]
        return Dataset(sub_states, self.actions[idx], self.rewards[idx], tm)


def dirichlet_behavior(action_count: int, rng_seed: int) -> BehaviorPolicy:
    """Behavior probabilities drawn from Dirichlet(1, ..., 1)."""
    if action_count < 2:
        raise ValueError("need at least two actions")
    rng = rng_stream(rng_seed, "dirichlet-behavior")
    return BehaviorPolicy(rng.dirichlet(np.ones(action_count)))


def make_tabular_instance(state_count: int, action_count: int, rng_seed: int) -> BanditInstance:
    """Random tabular instance: Gaussian mean table rescaled to max |f| = 1."""
    if state_count < 1 or action_count < 1:
        raise ValueError("state_count and action_count must be positive")
    rng = rng_stream(rng_seed, "tabular-instance")
    means = rng.standard_normal((state_count, action_count))
    means = means / np.max(np.abs(means))
    probs = np.full(state_count, 1.0 / state_count)
    return BanditInstance(action_count, TabularModel(probs, means), noise_scale=1.0)


def make_gaussian_instance(
    ambient_dim: int, true_dim: int, action_count: int, rng_seed: int
) -> BanditInstance:
    """Gaussian-feature instance with sparse true parameter.

    Per-action covariances are G G^T / d + 0.1 I.  theta_true is supported on
    the first `true_dim` coordinates and rescaled so the empirical 99th
    percentile of |<phi, theta>| over 10^4 sampled (state, action) pairs is 1.
    """
    if not (1 <= true_dim <= ambient_dim):
        raise ValueError("need 1 <= true_dim <= ambient_dim")
    rng = rng_stream(rng_seed, "gaussian-instance")
    chols = np.empty((action_count, ambient_dim, ambient_dim))
    for a in range(action_count):
        g = rng.standard_normal((ambient_dim, ambient_dim))
        sigma = g @ g.T / ambient_dim + 0.1 * np.eye(ambient_dim)
        chols[a] = np.linalg.cholesky(sigma)
    theta = np.zeros(ambient_dim)
    theta[:true_dim] = rng.standard_normal(true_dim)

    probe = 10_000
    z = rng.standard_normal((probe, ambient_dim))
    arms = rng.integers(action_count, size=probe)
    feats = np.empty((probe, ambient_dim))
    for a in range(action_count):
        mask = arms == a
        feats[mask] = z[mask] @ chols[a].T
    q99 = np.quantile(np.abs(feats @ theta), 0.99)
    theta = theta / q99
    return BanditInstance(action_count, GaussianModel(chols, theta, true_dim), noise_scale=1.0)


def sample_states(instance: BanditInstance, count: int, rng_seed: int) -> StateBatch:
    """I.i.d. unlabeled states for test, validation, or Monte-Carlo means."""
    rng = rng_stream(rng_seed, "states")
    return instance.sample_state_batch(count, rng)


def sample_dataset(
    instance: BanditInstance, mu: BehaviorPolicy, n: int, rng_seed: int
) -> Dataset:
    """Draw n logged rows: x ~ D, a ~ mu independent of rewards, y = f + noise.

    States, actions, and reward noise consume three disjoint sub-streams, so
    the conditional-independence contract holds by construction.
    """
    if n < 1:
        raise ValueError("n must be positive")
    states = instance.sample_state_batch(n, rng_stream(rng_seed, "dataset-states"))
    action_rng = rng_stream(rng_seed, "dataset-actions")
    actions = action_rng.choice(instance.action_count, size=n, p=mu.action_probs)
    noise_rng = rng_stream(rng_seed, "dataset-noise")
    means = instance.mean_rewards(states)[np.arange(n), actions]
    rewards = means + instance.noise_scale * noise_rng.standard_normal(n)
    return Dataset(states, actions, rewards, true_means=means)


def concentrability(mu: BehaviorPolicy) -> float:
    """Worst-case density ratio sup pi(a|x)/mu(a|x) = 1 / min_a mu(a)."""
    probs = mu.action_probs
    if np.any(probs <= 0):
        raise InfiniteCoverageError("behavior policy has a zero-probability action")
    return float(1.0 / probs.min())


def dataset_to_csv(dataset: Dataset) -> str:
    """Serialize rows as `state_id_or_blob,action,reward,true_mean`.

    Feature states are hex blobs of little-endian float64 values, prefixed
    with their (action_count x dim) shape.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["state_id_or_blob", "action", "reward", "true_mean"])
    tabular = dataset.states.indices is not None
    for i in range(dataset.n):
        if tabular:
            blob = str(int(dataset.states.indices[i]))
        else:
            feats = dataset.states.features[i]
            blob = "{}x{}:{}".format(
                feats.shape[0], feats.shape[1], feats.astype("<f8").tobytes().hex()
            )
        mean = "" if dataset.true_means is None else repr(float(dataset.true_means[i]))
        writer.writerow([blob, int(dataset.actions[i]), repr(float(dataset.rewards[i])), mean])
    return buf.getvalue()


def dataset_from_csv(text: str) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != ["state_id_or_blob", "action", "reward", "true_mean"]:
        raise ValueError("unexpected dataset CSV header")
    blobs, actions, rewards, means = [], [], [], []
    for row in reader:
        blobs.append(row[0])
        actions.append(int(row[1]))
        rewards.append(float(row[2]))
        means.append(float(row[3]) if row[3] else None)
    true_means = None if any(m is None for m in means) else np.array(means)
    if blobs and ":" in blobs[0]:
        feats = []
        for blob in blobs:
            shape, hexdata = blob.split(":")
            n_act, dim = (int(v) for v in shape.split("x"))
            feats.append(np.frombuffer(bytes.fromhex(hexdata), dtype="<f8").reshape(n_act, dim))
        states = StateBatch(features=np.array(feats))
    else:
        states = StateBatch(indices=np.array([int(b) for b in blobs]))
    return Dataset(states, actions, rewards, true_means)

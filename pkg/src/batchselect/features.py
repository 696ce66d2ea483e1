"""Linear model classes: feature maps, nested families, and nestedness checks."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .env import BanditInstance, FeatureState, StateBatch, TabularState, rng_stream

REALIZABILITY_TOL = 1e-8


class RepresentationMismatchError(TypeError):
    """A feature map was given an incompatible state representation."""


class ConstructionError(RuntimeError):
    """A randomly constructed family failed its realizability check."""


@dataclass(frozen=True)
class TabularMap:
    """Explicit table of feature vectors, shape (|X|, |A|, d)."""

    table: np.ndarray


@dataclass(frozen=True)
class TruncationMap:
    """Keep the first `dim` coordinates of ambient per-action feature vectors."""

    ambient_dim: int


@dataclass(frozen=True)
class ModelClass:
    dim: int
    map: object  # TabularMap or TruncationMap


def evaluate_features(model_class: ModelClass, state, action: int) -> np.ndarray:
    """phi_k(x, a) for a single state handle."""
    m = model_class.map
    if isinstance(m, TabularMap):
        if not isinstance(state, TabularState):
            raise RepresentationMismatchError("tabular map needs a tabular state")
        return m.table[state.index, action]
    if not isinstance(state, FeatureState):
        raise RepresentationMismatchError("truncation map needs a feature state")
    return state.features[action, : model_class.dim]


def features_all_actions(model_class: ModelClass, states: StateBatch) -> np.ndarray:
    """phi_k for every (state, action) pair in the batch, shape (m, |A|, d_k)."""
    m = model_class.map
    if isinstance(m, TabularMap):
        if states.indices is None:
            raise RepresentationMismatchError("tabular map needs tabular states")
        return m.table[states.indices]
    if states.features is None:
        raise RepresentationMismatchError("truncation map needs feature states")
    return states.features[:, :, : model_class.dim]


def design_matrix(model_class: ModelClass, states: StateBatch, actions: np.ndarray) -> np.ndarray:
    """Feature rows phi_k(x_i, a_i), shape (n, d_k)."""
    m = model_class.map
    actions = np.asarray(actions, dtype=int)
    if isinstance(m, TabularMap):
        if states.indices is None:
            raise RepresentationMismatchError("tabular map needs tabular states")
        return m.table[states.indices, actions]
    if states.features is None:
        raise RepresentationMismatchError("truncation map needs feature states")
    return states.features[np.arange(len(states)), actions, : model_class.dim]


def realizable_family(
    instance: BanditInstance, hidden_dims, rng_seed: int
) -> list[ModelClass]:
    """Random realizable feature maps for a tabular instance.

    For each hidden dimension, d_hid - 1 random vectors over the (x, a) grid
    are drawn and the last is solved so the all-ones combination equals the
    flattened mean-reward table; the hidden map is then lifted to ambient
    dimension |X||A| by a random Gaussian matrix.  Realizability is verified
    by a least-squares fit at construction.
    """
    if not instance.is_tabular:
        raise ValueError("realizable families require a tabular instance")
    means = instance.model.means
    n_states, n_actions = means.shape
    flat = means.reshape(-1)
    ambient = n_states * n_actions
    classes = []
    for j, d_hid in enumerate(hidden_dims):
        if d_hid < 1:
            raise ValueError("hidden dimensions must be positive")
        rng = rng_stream(rng_seed, "realizable-family", j)
        hidden = rng.standard_normal((ambient, d_hid))
        hidden[:, d_hid - 1] = flat - hidden[:, : d_hid - 1].sum(axis=1)
        lift = rng.standard_normal((ambient, d_hid))
        table = (hidden @ lift.T).reshape(n_states, n_actions, ambient)
        theta, _, _, _ = np.linalg.lstsq(table.reshape(ambient, ambient), flat, rcond=None)
        residual = np.linalg.norm(table.reshape(ambient, ambient) @ theta - flat)
        if residual > REALIZABILITY_TOL:
            raise ConstructionError(
                f"hidden dim {d_hid}: realizability residual {residual:.3e}"
            )
        classes.append(ModelClass(ambient, TabularMap(table)))
    return classes


def truncation_family(ambient_dim: int, dims) -> list[ModelClass]:
    """Nested family of prefix-truncation maps."""
    dims = list(dims)
    if any(b <= a for a, b in zip(dims, dims[1:])):
        raise ValueError("dims must be strictly ascending")
    if dims[-1] > ambient_dim:
        raise ValueError("dims may not exceed the ambient dimension")
    return [ModelClass(d, TruncationMap(ambient_dim)) for d in dims]


def check_nested(classes, probe_states: StateBatch | None = None, probe_count: int = 256) -> bool:
    """True iff each phi_{k+1} extends phi_k coordinate-wise.

    Tabular maps are compared over all (state, action) pairs; feature maps
    over `probe_count` sampled pairs from `probe_states`.
    """
    if len(classes) < 1:
        raise ValueError("need at least one class")
    for small, large in zip(classes, classes[1:]):
        if small.dim > large.dim:
            return False
        sm, lm = small.map, large.map
        if isinstance(sm, TabularMap) and isinstance(lm, TabularMap):
            if not np.array_equal(sm.table, lm.table[:, :, : small.dim]):
                return False
        elif isinstance(sm, TruncationMap) and isinstance(lm, TruncationMap):
            if sm.ambient_dim != lm.ambient_dim:
                return False
            if probe_states is not None:
                feats_small = features_all_actions(small, probe_states)
                feats_large = features_all_actions(large, probe_states)
                flat_s = feats_small.reshape(-1, small.dim)[:probe_count]
                flat_l = feats_large.reshape(-1, large.dim)[:probe_count]
                if not np.array_equal(flat_s, flat_l[:, : small.dim]):
                    return False
        else:
            return False
    return True


def tabular_map_to_csv(model_class: ModelClass) -> str:
    """Flat CSV of a tabular map: state, action, then d_k feature values."""
    if not isinstance(model_class.map, TabularMap):
        raise ValueError("only tabular maps serialize to CSV")
    table = model_class.map.table
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["state", "action"] + [f"f{i}" for i in range(model_class.dim)])
    for x in range(table.shape[0]):
        for a in range(table.shape[1]):
            writer.writerow([x, a] + [repr(float(v)) for v in table[x, a]])
    return buf.getvalue()

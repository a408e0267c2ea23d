"""Canonical correlation forest training and prediction.

Trees use oblique hyperplane splits: each node draws a small feature
subset, runs CCA between a with-replacement resample of the node (the
projection bootstrap) and the one-hot labels, then scans every candidate
threshold on the full node's projections for the weighted-Gini minimum.
There is no bagging of the data itself; every tree sees every sample and
all randomness comes from the per-node draws of an independent per-tree
RNG stream, which makes training deterministic for a given seed no
matter how many workers run.

Numeric conventions that matter for reproducibility:
  * projections are computed as (x * direction).sum(axis=1), the same
    reduction prediction uses, so a training-time partition and a
    prediction-time routing agree bit for bit;
  * thresholds are midpoints of consecutive distinct projected values,
    searched on the uncentered projection;
  * Gini terms accumulate class by class, left to right.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .cca import ColumnStats, cca, standardize
from .errors import DataError
from .pipeline import SampleSet

MODEL_FORMAT_VERSION = "ccf-1"

_PREDICT_CHUNK = 1 << 18


def default_feature_subsample(n_bands: int) -> int:
    """ceil(log2(d)) + 1 features per node, never more than d."""
    if n_bands < 1:
        raise DataError(f"n_bands must be >= 1, got {n_bands}")
    return min(n_bands, int(math.ceil(math.log2(n_bands))) + 1)


@dataclass(frozen=True)
class TrainConfig:
    """Forest hyperparameters; n_trees is the only knob that usually
    needs touching, the rest are sane defaults."""

    n_trees: int = 10
    min_node_size: int = 2
    max_depth: int | None = None
    feature_subsample: int | None = None
    gamma: float = 1e-8
    seed: int = 0

    def resolved(self, n_bands: int) -> "TrainConfig":
        """Validate and fill the feature_subsample default for n_bands."""
        if not isinstance(self.n_trees, (int, np.integer)) or self.n_trees < 1:
            raise DataError(f"n_trees must be >= 1, got {self.n_trees!r}")
        if not isinstance(self.min_node_size, (int, np.integer)) or self.min_node_size < 1:
            raise DataError(f"min_node_size must be >= 1, got {self.min_node_size!r}")
        if self.max_depth is not None and (
            not isinstance(self.max_depth, (int, np.integer)) or self.max_depth < 0
        ):
            raise DataError(f"max_depth must be None or >= 0, got {self.max_depth!r}")
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise DataError(f"gamma must be finite and >= 0, got {self.gamma!r}")
        if not isinstance(self.seed, (int, np.integer)) or not (0 <= self.seed < 2**64):
            raise DataError(f"seed must be a 64-bit non-negative integer, got {self.seed!r}")
        fs = self.feature_subsample
        if fs is None:
            fs = default_feature_subsample(n_bands)
        elif not isinstance(fs, (int, np.integer)) or not (1 <= fs <= n_bands):
            raise DataError(
                f"feature_subsample must be in [1, {n_bands}], got {fs!r}"
            )
        return replace(
            self,
            n_trees=int(self.n_trees),
            min_node_size=int(self.min_node_size),
            max_depth=None if self.max_depth is None else int(self.max_depth),
            feature_subsample=int(fs),
            gamma=float(self.gamma),
            seed=int(self.seed),
        )


@dataclass
class Leaf:
    class_counts: np.ndarray  # (k,) int64 training tallies, never all zero
    class_probs: np.ndarray  # (k,) float64, counts normalized


@dataclass
class Internal:
    feature_indices: np.ndarray  # (fs,) int64, ascending
    projection: np.ndarray  # (fs,) float64 hyperplane direction
    threshold: float  # route left iff projection <= threshold
    left: "Internal | Leaf"
    right: "Internal | Leaf"


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


def best_split(projections, labels, n_classes: int):
    """Exhaustive weighted-Gini scan over every candidate split.

    Candidates are midpoints of consecutive distinct values in each
    projection column. Returns (component, threshold, gini) minimizing
    the children's weighted Gini impurity, ties broken toward the lower
    component index and then the lower threshold; None when no column has
    two distinct values. Per-class terms accumulate in fixed class order
    so the result is bit-reproducible against a scalar reference loop.
    """
    z = np.asarray(projections, dtype=np.float64)
    y = np.asarray(labels)
    if z.ndim != 2 or z.shape[0] != y.shape[0]:
        raise DataError(
            f"projections must be (n, r) paired with n labels, got "
            f"{z.shape} and {y.shape}"
        )
    n = y.shape[0]
    best = None
    for j in range(z.shape[1]):
        col = z[:, j]
        order = np.argsort(col, kind="stable")
        zs = col[order]
        boundary = np.flatnonzero(zs[:-1] < zs[1:]) + 1  # candidate left sizes
        if boundary.size == 0:
            continue
        onehot = _one_hot(y[order], n_classes)
        cum = np.cumsum(onehot, axis=0)
        left_counts = cum[boundary - 1]  # (m, k)
        total = cum[-1]
        n_left = boundary.astype(np.float64)
        n_right = float(n) - n_left
        gini_left = np.zeros(boundary.size)
        gini_right = np.zeros(boundary.size)
        for c in range(n_classes):
            p = left_counts[:, c] / n_left
            gini_left += p * p
            q = (total[c] - left_counts[:, c]) / n_right
            gini_right += q * q
        gini = (n_left * (1.0 - gini_left) + n_right * (1.0 - gini_right)) / float(n)
        i = int(np.argmin(gini))  # first minimum = lowest threshold
        gi = float(gini[i])
        if best is None or gi < best[2]:
            lo = float(zs[boundary[i] - 1])
            hi = float(zs[boundary[i]])
            t = 0.5 * (lo + hi)
            if not (t < hi):  # midpoint rounded up; fall back to the low value
                t = lo
            best = (j, t, gi)
    return best


def _project_columns(x_sub: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Project rows onto each direction with the same reduction prediction
    uses, keeping training and inference bit-identical."""
    return np.stack(
        [(x_sub * a[:, j]).sum(axis=1) for j in range(a.shape[1])], axis=1
    )


def _try_split(x, y, k, config, rng):
    """One split attempt; None means the node collapses to a leaf.

    The rng is consumed identically (one feature draw, one bootstrap
    draw) whether or not the attempt succeeds, so downstream nodes are
    unaffected by local degeneracies.
    """
    n, d = x.shape
    feats = np.sort(rng.choice(d, size=config.feature_subsample, replace=False))
    x_sub = x[:, feats]
    boot = rng.integers(0, n, size=n)

    choice = None
    res = cca(x_sub[boot], _one_hot(y[boot], k), config.gamma)
    if res.n_components:
        z = _project_columns(x_sub, res.a)
        choice = best_split(z, y, k)
    if choice is None:
        # bootstrap came out degenerate (single class or constant draw):
        # retry the CCA on the full node so separable nodes still split
        res = cca(x_sub, _one_hot(y, k), config.gamma)
        if res.n_components:
            z = _project_columns(x_sub, res.a)
            choice = best_split(z, y, k)
    if choice is None:
        return None
    j, threshold, _ = choice
    go_left = z[:, j] <= threshold
    return feats, res.a[:, j].copy(), threshold, go_left


def _grow(x, y, k, depth, config, rng):
    """Iterative preorder tree growth; equivalent to the recursive
    procedure (node, then left subtree, then right) including rng order,
    but immune to Python recursion limits on deep trees."""
    root = None
    stack = [(x, y, depth, None, False)]
    while stack:
        xn, yn, level, parent, is_left = stack.pop()
        counts = np.bincount(yn, minlength=k).astype(np.int64)
        node = None
        stop = (
            int((counts > 0).sum()) <= 1
            or yn.size < 2 * config.min_node_size
            or (config.max_depth is not None and level >= config.max_depth)
        )
        if not stop:
            attempt = _try_split(xn, yn, k, config, rng)
            if attempt is not None:
                feats, direction, threshold, go_left = attempt
                node = Internal(
                    feature_indices=feats.astype(np.int64),
                    projection=direction,
                    threshold=float(threshold),
                    left=None,
                    right=None,
                )
                stack.append((xn[~go_left], yn[~go_left], level + 1, node, False))
                stack.append((xn[go_left], yn[go_left], level + 1, node, True))
        if node is None:
            node = Leaf(class_counts=counts, class_probs=counts / counts.sum())
        if parent is None:
            root = node
        elif is_left:
            parent.left = node
        else:
            parent.right = node
    return root


def grow_node(samples: SampleSet, depth: int, config: TrainConfig, rng) -> Internal | Leaf:
    """Grow the subtree for one node's samples.

    Returns a Leaf when the node is pure, smaller than 2*min_node_size,
    at max_depth, or admits no valid split; otherwise an Internal node
    whose children each received at least one training sample.
    """
    cfg = config.resolved(samples.n_bands)
    return _grow(samples.features, samples.labels, samples.n_classes, depth, cfg, rng)


@dataclass
class FlatTree:
    """One tree as parallel node arrays, preorder; node 0 is the root."""

    kind: np.ndarray  # (m,) uint8: 1 split, 0 leaf
    features: np.ndarray  # (m, fs) int64, -1 on leaf rows
    projections: np.ndarray  # (m, fs) float64, 0 on leaf rows
    thresholds: np.ndarray  # (m,) float64
    left: np.ndarray  # (m,) int64 child ids, -1 on leaves
    right: np.ndarray
    counts: np.ndarray  # (m, k) int64 leaf tallies, 0 on split rows
    probs: np.ndarray  # (m, k) float64

    @property
    def n_nodes(self) -> int:
        return self.kind.shape[0]


def flatten_tree(root, n_classes: int, feature_subsample: int) -> FlatTree:
    order = []
    stack = [root]
    while stack:
        node = stack.pop()
        order.append(node)
        if isinstance(node, Internal):
            stack.append(node.right)
            stack.append(node.left)
    index = {id(node): i for i, node in enumerate(order)}

    m = len(order)
    tree = FlatTree(
        kind=np.zeros(m, dtype=np.uint8),
        features=np.full((m, feature_subsample), -1, dtype=np.int64),
        projections=np.zeros((m, feature_subsample)),
        thresholds=np.zeros(m),
        left=np.full(m, -1, dtype=np.int64),
        right=np.full(m, -1, dtype=np.int64),
        counts=np.zeros((m, n_classes), dtype=np.int64),
        probs=np.zeros((m, n_classes)),
    )
    for i, node in enumerate(order):
        if isinstance(node, Internal):
            tree.kind[i] = 1
            tree.features[i] = node.feature_indices
            tree.projections[i] = node.projection
            tree.thresholds[i] = node.threshold
            tree.left[i] = index[id(node.left)]
            tree.right[i] = index[id(node.right)]
        else:
            tree.counts[i] = node.class_counts
            tree.probs[i] = node.class_probs
    return tree


@dataclass
class CcfModel:
    """A trained forest plus everything prediction needs: the scaler
    fitted on the training region, band count, class names, and the
    resolved config snapshot."""

    trees: list
    scaler: ColumnStats
    n_bands: int
    class_names: tuple[str, ...]
    config: TrainConfig
    format_version: str = MODEL_FORMAT_VERSION

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(0, tree_index))
    )


def _build_tree(payload):
    features, labels, k, config, tree_index = payload
    rng = _tree_rng(config.seed, tree_index)
    root = _grow(features, labels, k, 0, config, rng)
    return flatten_tree(root, k, config.feature_subsample)


def _worker_count(n_trees: int) -> int:
    cap = os.cpu_count() or 1
    env = os.environ.get("CCF_THREADS", "").strip()
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            pass  # unparseable cap: fall back to hardware parallelism
    return min(n_trees, cap)


def train_forest(samples: SampleSet, config: TrainConfig | None = None,
                 scaler: ColumnStats | None = None) -> CcfModel:
    """Train n_trees oblique trees on the full sample set.

    samples.features are expected already standardized by the pipeline;
    pass the fitted scaler so the model can standardize raw spectra at
    prediction time (an identity scaler is recorded when omitted).
    """
    cfg = (config if config is not None else TrainConfig()).resolved(samples.n_bands)
    counts = samples.class_counts()
    if int((counts > 0).sum()) < 2:
        raise DataError("degenerate labels: need at least 2 classes present")
    if len(samples) < 2 * cfg.min_node_size:
        raise DataError(
            f"need at least {2 * cfg.min_node_size} samples, got {len(samples)}"
        )
    if scaler is None:
        scaler = ColumnStats(
            mean=np.zeros(samples.n_bands), stddev=np.ones(samples.n_bands)
        )
    else:
        mean = np.asarray(scaler.mean, dtype=np.float64)
        stddev = np.asarray(scaler.stddev, dtype=np.float64)
        if mean.shape != (samples.n_bands,) or stddev.shape != (samples.n_bands,):
            raise DataError(
                f"scaler covers {mean.shape} band(s), samples have {samples.n_bands}"
            )
        scaler = ColumnStats(mean=mean, stddev=stddev)

    payloads = [
        (samples.features, samples.labels, samples.n_classes, cfg, t)
        for t in range(cfg.n_trees)
    ]
    workers = _worker_count(cfg.n_trees)
    if workers <= 1:
        trees = [_build_tree(p) for p in payloads]
    else:
        # per-tree RNG streams make the result independent of scheduling
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(_build_tree, payloads))
    return CcfModel(
        trees=trees,
        scaler=scaler,
        n_bands=samples.n_bands,
        class_names=samples.class_names,
        config=cfg,
        format_version=MODEL_FORMAT_VERSION,
    )


def _apply_tree(tree: FlatTree, feats: np.ndarray) -> np.ndarray:
    """Route standardized rows down one flat tree; returns leaf probs."""
    n = feats.shape[0]
    out = np.empty((n, tree.probs.shape[1]))
    stack = [(0, np.arange(n))]
    while stack:
        nid, idx = stack.pop()
        if tree.kind[nid] == 0:
            out[idx] = tree.probs[nid]
            continue
        sub = feats[idx][:, tree.features[nid]]
        z = (sub * tree.projections[nid]).sum(axis=1)
        go_left = z <= tree.thresholds[nid]
        left_idx = idx[go_left]
        right_idx = idx[~go_left]
        if right_idx.size:
            stack.append((int(tree.right[nid]), right_idx))
        if left_idx.size:
            stack.append((int(tree.left[nid]), left_idx))
    return out


def predict_proba_batch(model: CcfModel, spectra) -> np.ndarray:
    """Ensemble class distribution for each row of raw spectra."""
    m = np.asarray(spectra, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != model.n_bands:
        raise DataError(
            f"spectra must be (n, {model.n_bands}), got {m.shape}"
        )
    z = standardize(m, model.scaler)
    out = np.zeros((m.shape[0], model.n_classes))
    for tree in model.trees:
        out += _apply_tree(tree, z)
    out /= len(model.trees)
    return out


def predict_proba(model: CcfModel, spectrum) -> np.ndarray:
    """Class distribution for one B-dim spectrum; sums to 1."""
    v = np.asarray(spectrum, dtype=np.float64)
    if v.shape != (model.n_bands,):
        raise DataError(
            f"spectrum must have {model.n_bands} band(s), got shape {v.shape}"
        )
    return predict_proba_batch(model, v[None, :])[0]


def predict_class_batch(model: CcfModel, spectra) -> np.ndarray:
    probs = predict_proba_batch(model, spectra)
    return np.argmax(probs, axis=1)  # ties resolve to the lowest index


def predict_class(model: CcfModel, spectrum) -> int:
    return int(np.argmax(predict_proba(model, spectrum)))


def predict_raster(model: CcfModel, raster):
    """Per-pixel prediction over a full raster.

    Returns (mask, informal_prob): an H x W uint8 label mask, 255 where
    any band equals the raster's nodata value, and an H x W float32 map
    of the class-1 probability (-1 on nodata pixels).
    """
    values = np.asarray(raster.values)
    if values.ndim != 3:
        raise DataError(f"raster values must be H x W x B, got ndim={values.ndim}")
    h, w, b = values.shape
    if b != model.n_bands:
        raise DataError(
            f"band mismatch: raster has {b} band(s), model expects {model.n_bands}"
        )
    flat = values.reshape(-1, b)
    nodata = getattr(raster, "nodata", None)
    if nodata is None:
        valid = np.ones(h * w, dtype=bool)
    else:
        nd = np.asarray(nodata, dtype=values.dtype)
        valid = ~(flat == nd).any(axis=1)

    mask = np.full(h * w, 255, dtype=np.uint8)
    prob = np.full(h * w, -1.0, dtype=np.float32)
    idx = np.flatnonzero(valid)
    for start in range(0, idx.size, _PREDICT_CHUNK):
        chunk = idx[start : start + _PREDICT_CHUNK]
        p = predict_proba_batch(model, flat[chunk].astype(np.float64))
        mask[chunk] = np.argmax(p, axis=1).astype(np.uint8)
        prob[chunk] = p[:, 1].astype(np.float32)
    return mask.reshape(h, w), prob.reshape(h, w)

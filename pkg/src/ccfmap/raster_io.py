"""File formats plus the synthetic scene generator used by tests.

Rasters are stored as a JSON sidecar header (<name>.json) next to a raw
payload (<name>.bin): little-endian float32 band-sequential planes for
spectra, a single u8 plane for label masks. Models and evaluation
reports are single JSON documents. Writers emit deterministic bytes so
repeated runs can be compared with cmp, and every reader rejects
malformed input with a specific error instead of crashing or guessing.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .cca import ColumnStats
from .errors import DataError
from .forest import MODEL_FORMAT_VERSION, CcfModel, FlatTree, TrainConfig
from .metrics import EvalReport

RASTER_DTYPE = "f32le"
MASK_DTYPE = "u8"
LAYOUT = "band-sequential"

UNLABELED = 255
_MASK_VALUES = (0, 1, 255)

PRESETS = ("blobs", "oblique", "ring")


@dataclass(frozen=True)
class MultispectralRaster:
    """In-memory H x W x B float32 image, one spectrum per pixel."""

    values: np.ndarray
    nodata: float | None = None
    band_names: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise DataError(f"raster values must be H x W x B, got ndim={v.ndim}")
        if min(v.shape) < 1:
            raise DataError(f"empty raster: shape {v.shape}")
        if not np.isfinite(v).all():
            raise DataError("raster values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.nodata is not None:
            nd = float(self.nodata)
            if not math.isfinite(nd):
                raise DataError(f"nodata must be finite, got {nd!r}")
            object.__setattr__(self, "nodata", nd)
        if self.band_names is not None:
            names = tuple(str(n) for n in self.band_names)
            if len(names) != v.shape[2]:
                raise DataError(
                    f"{len(names)} band name(s) for {v.shape[2]} band(s)"
                )
            object.__setattr__(self, "band_names", names)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]


def _sidecar_paths(path) -> tuple[str, str]:
    """Map a header/payload/base path to the (.json, .bin) pair."""
    p = os.fspath(path)
    if p.endswith(".json"):
        base = p[:-5]
    elif p.endswith(".bin"):
        base = p[:-4]
    else:
        base = p
    return base + ".json", base + ".bin"


def _write_json(doc: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed header {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError(f"malformed header {path}: expected a JSON object")
    return doc


def _header_dims(doc: dict, path, *, bands_fixed=None) -> tuple[int, int, int]:
    out = []
    for key in ("width", "height", "bands"):
        if key == "bands" and bands_fixed is not None and key not in doc:
            out.append(bands_fixed)
            continue
        v = doc.get(key)
        if not isinstance(v, int) or isinstance(v, bool):
            raise DataError(f"malformed header {path}: {key} must be an integer")
        if v < 1:
            raise DataError(f"empty raster: {path} has {key}={v}")
        out.append(v)
    w, h, b = out
    return w, h, b


def write_raster(raster: MultispectralRaster, path) -> tuple[str, str]:
    """Write <base>.json + <base>.bin; returns the two paths."""
    header_path, payload_path = _sidecar_paths(path)
    header = {
        "width": raster.width,
        "height": raster.height,
        "bands": raster.bands,
        "dtype": RASTER_DTYPE,
        "layout": LAYOUT,
    }
    if raster.nodata is not None:
        header["nodata"] = raster.nodata
    if raster.band_names is not None:
        header["band_names"] = list(raster.band_names)
    _write_json(header, header_path)
    payload = raster.values.transpose(2, 0, 1).astype("<f4").tobytes()
    with open(payload_path, "wb") as fh:
        fh.write(payload)
    return header_path, payload_path


def read_raster(header_path, payload_path=None) -> MultispectralRaster:
    """Read a raster written by write_raster, validating everything."""
    header_path, default_payload = _sidecar_paths(header_path)
    if payload_path is None:
        payload_path = default_payload
    doc = _load_json(header_path)
    w, h, b = _header_dims(doc, header_path)
    dtype = doc.get("dtype")
    if dtype != RASTER_DTYPE:
        raise DataError(
            f"{header_path}: unsupported dtype {dtype!r}, expected {RASTER_DTYPE!r}"
        )
    layout = doc.get("layout")
    if layout != LAYOUT:
        raise DataError(
            f"{header_path}: unsupported layout {layout!r}, expected {LAYOUT!r}"
        )
    nodata = doc.get("nodata")
    if nodata is not None:
        if not isinstance(nodata, (int, float)) or isinstance(nodata, bool) \
                or not math.isfinite(float(nodata)):
            raise DataError(f"{header_path}: nodata must be a finite number")
        nodata = float(nodata)
    band_names = doc.get("band_names")
    if band_names is not None:
        if (
            not isinstance(band_names, list)
            or len(band_names) != b
            or not all(isinstance(n, str) for n in band_names)
        ):
            raise DataError(
                f"{header_path}: band_names must list {b} strings"
            )
        band_names = tuple(band_names)

    try:
        with open(payload_path, "rb") as fh:
            payload = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {payload_path}: {exc}") from exc
    expected = w * h * b * 4
    if len(payload) != expected:
        raise DataError(
            f"payload length mismatch: expected {expected} bytes, "
            f"got {len(payload)} ({payload_path})"
        )
    raw = np.frombuffer(payload, dtype="<f4")
    finite = np.isfinite(raw)
    if not finite.all():
        i = int(np.flatnonzero(~finite)[0])
        raise DataError(
            f"{payload_path}: non-finite value at byte offset {i * 4}"
        )
    values = raw.reshape(b, h, w).transpose(1, 2, 0)
    return MultispectralRaster(values=values, nodata=nodata, band_names=band_names)


def write_mask(mask, path) -> tuple[str, str]:
    """Write an H x W label mask (values 0, 1, or 255) as u8 sidecar files."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise DataError(f"mask must be 2-D, got ndim={m.ndim}")
    if min(m.shape) < 1:
        raise DataError(f"empty raster: mask shape {m.shape}")
    bad = ~np.isin(m, _MASK_VALUES)
    if bad.any():
        i = int(np.flatnonzero(bad.ravel())[0])
        raise DataError(
            f"mask contains illegal value {m.ravel()[i]} at pixel index {i}"
        )
    header_path, payload_path = _sidecar_paths(path)
    header = {
        "width": m.shape[1],
        "height": m.shape[0],
        "bands": 1,
        "dtype": MASK_DTYPE,
        "layout": LAYOUT,
    }
    _write_json(header, header_path)
    with open(payload_path, "wb") as fh:
        fh.write(m.astype(np.uint8).tobytes())
    return header_path, payload_path


def read_mask(header_path, payload_path=None) -> np.ndarray:
    """Read a u8 label mask, enforcing the {0, 1, 255} value domain."""
    header_path, default_payload = _sidecar_paths(header_path)
    if payload_path is None:
        payload_path = default_payload
    doc = _load_json(header_path)
    w, h, b = _header_dims(doc, header_path, bands_fixed=1)
    if b != 1:
        raise DataError(f"{header_path}: masks are single-band, got bands={b}")
    dtype = doc.get("dtype")
    if dtype != MASK_DTYPE:
        raise DataError(
            f"{header_path}: unsupported dtype {dtype!r}, expected {MASK_DTYPE!r}"
        )
    try:
        with open(payload_path, "rb") as fh:
            payload = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {payload_path}: {exc}") from exc
    expected = w * h
    if len(payload) != expected:
        raise DataError(
            f"payload length mismatch: expected {expected} bytes, "
            f"got {len(payload)} ({payload_path})"
        )
    m = np.frombuffer(payload, dtype=np.uint8)
    bad = ~np.isin(m, _MASK_VALUES)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DataError(
            f"mask contains illegal value {m[i]} at pixel index {i}"
        )
    return m.reshape(h, w).copy()


# --- model serialization -------------------------------------------------


def save_model(model: CcfModel, path) -> str:
    """Serialize a trained model to one JSON document (full float
    precision; floats round-trip exactly)."""
    cfg = model.config
    doc = {
        "format_version": model.format_version,
        "n_bands": model.n_bands,
        "class_names": list(model.class_names),
        "scaler": {
            "mean": [float(v) for v in model.scaler.mean],
            "stddev": [float(v) for v in model.scaler.stddev],
        },
        "config": {
            "n_trees": cfg.n_trees,
            "min_node_size": cfg.min_node_size,
            "max_depth": cfg.max_depth,
            "feature_subsample": cfg.feature_subsample,
            "gamma": cfg.gamma,
            "seed": cfg.seed,
        },
        "trees": [_tree_doc(t) for t in model.trees],
    }
    p = os.fspath(path)
    with open(p, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"), allow_nan=False)
        fh.write("\n")
    return p


def _tree_doc(tree: FlatTree) -> dict:
    nodes = []
    for i in range(tree.n_nodes):
        if tree.kind[i] == 1:
            nodes.append(
                {
                    "kind": "split",
                    "feature_indices": [int(f) for f in tree.features[i]],
                    "projection": [float(v) for v in tree.projections[i]],
                    "threshold": float(tree.thresholds[i]),
                    "left": int(tree.left[i]),
                    "right": int(tree.right[i]),
                }
            )
        else:
            nodes.append(
                {
                    "kind": "leaf",
                    "class_counts": [int(c) for c in tree.counts[i]],
                }
            )
    return {"nodes": nodes}


def _expect(cond: bool, msg: str):
    if not cond:
        raise DataError(msg)


def _int_list(values, length, name, path):
    _expect(
        isinstance(values, list) and len(values) == length
        and all(isinstance(v, int) and not isinstance(v, bool) for v in values),
        f"{path}: {name} must be a list of {length} integer(s)",
    )
    return values


def _float_list(values, length, name, path):
    _expect(
        isinstance(values, list) and len(values) == length
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values),
        f"{path}: {name} must be a list of {length} number(s)",
    )
    out = [float(v) for v in values]
    _expect(all(math.isfinite(v) for v in out), f"{path}: {name} must be finite")
    return out


def load_model(path) -> CcfModel:
    """Parse and structurally validate a saved model."""
    p = os.fspath(path)
    doc = _load_json(p)
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(
            f"{p}: unsupported model format_version {version!r}, "
            f"expected {MODEL_FORMAT_VERSION!r}"
        )
    n_bands = doc.get("n_bands")
    _expect(
        isinstance(n_bands, int) and not isinstance(n_bands, bool) and n_bands >= 1,
        f"{p}: n_bands must be a positive integer",
    )
    class_names = doc.get("class_names")
    _expect(
        isinstance(class_names, list) and len(class_names) >= 2
        and all(isinstance(c, str) for c in class_names),
        f"{p}: class_names must list at least 2 strings",
    )
    k = len(class_names)

    scaler_doc = doc.get("scaler")
    _expect(isinstance(scaler_doc, dict), f"{p}: missing scaler")
    scaler = ColumnStats(
        mean=np.array(_float_list(scaler_doc.get("mean"), n_bands, "scaler.mean", p)),
        stddev=np.array(
            _float_list(scaler_doc.get("stddev"), n_bands, "scaler.stddev", p)
        ),
    )
    _expect(
        bool((scaler.stddev >= 0).all()), f"{p}: scaler.stddev must be >= 0"
    )

    cfg_doc = doc.get("config")
    _expect(isinstance(cfg_doc, dict), f"{p}: missing config")
    try:
        config = TrainConfig(
            n_trees=cfg_doc.get("n_trees"),
            min_node_size=cfg_doc.get("min_node_size"),
            max_depth=cfg_doc.get("max_depth"),
            feature_subsample=cfg_doc.get("feature_subsample"),
            gamma=cfg_doc.get("gamma"),
            seed=cfg_doc.get("seed"),
        ).resolved(n_bands)
    except DataError as exc:
        raise DataError(f"{p}: bad config: {exc}") from exc
    _expect(
        cfg_doc.get("feature_subsample") == config.feature_subsample,
        f"{p}: config.feature_subsample must be explicit in a saved model",
    )

    trees_doc = doc.get("trees")
    _expect(
        isinstance(trees_doc, list) and len(trees_doc) == config.n_trees,
        f"{p}: expected {config.n_trees} tree(s) per config",
    )
    trees = [
        _parse_tree(t, i, k, n_bands, config.feature_subsample, p)
        for i, t in enumerate(trees_doc)
    ]
    return CcfModel(
        trees=trees,
        scaler=scaler,
        n_bands=n_bands,
        class_names=tuple(class_names),
        config=config,
        format_version=version,
    )


def _parse_tree(doc, tree_index: int, k: int, n_bands: int, fs: int, path) -> FlatTree:
    where = f"{path}: tree {tree_index}"
    _expect(isinstance(doc, dict), f"{where} must be an object")
    nodes = doc.get("nodes")
    _expect(isinstance(nodes, list) and len(nodes) >= 1, f"{where}: empty node list")
    m = len(nodes)
    tree = FlatTree(
        kind=np.zeros(m, dtype=np.uint8),
        features=np.full((m, fs), -1, dtype=np.int64),
        projections=np.zeros((m, fs)),
        thresholds=np.zeros(m),
        left=np.full(m, -1, dtype=np.int64),
        right=np.full(m, -1, dtype=np.int64),
        counts=np.zeros((m, k), dtype=np.int64),
        probs=np.zeros((m, k)),
    )
    for i, nd in enumerate(nodes):
        at = f"{where} node {i}"
        _expect(isinstance(nd, dict), f"{at} must be an object")
        kind = nd.get("kind")
        if kind == "split":
            feats = _int_list(nd.get("feature_indices"), fs, "feature_indices", at)
            _expect(
                all(0 <= f < n_bands for f in feats),
                f"{at}: feature index out of range [0, {n_bands})",
            )
            proj = _float_list(nd.get("projection"), fs, "projection", at)
            thr = nd.get("threshold")
            _expect(
                isinstance(thr, (int, float)) and not isinstance(thr, bool)
                and math.isfinite(float(thr)),
                f"{at}: threshold must be a finite number",
            )
            left, right = nd.get("left"), nd.get("right")
            for name, child in (("left", left), ("right", right)):
                _expect(
                    isinstance(child, int) and not isinstance(child, bool)
                    and 0 <= child < m,
                    f"{at}: {name} child index out of range [0, {m})",
                )
            tree.kind[i] = 1
            tree.features[i] = feats
            tree.projections[i] = proj
            tree.thresholds[i] = float(thr)
            tree.left[i] = left
            tree.right[i] = right
        elif kind == "leaf":
            counts = _int_list(nd.get("class_counts"), k, "class_counts", at)
            _expect(all(c >= 0 for c in counts), f"{at}: negative class count")
            total = sum(counts)
            _expect(total > 0, f"{at}: leaf class_counts all zero")
            tree.counts[i] = counts
            tree.probs[i] = tree.counts[i] / total
        else:
            raise DataError(f"{at}: unknown node kind {kind!r}")

    # structural pass: every node reachable from the root exactly once
    seen = np.zeros(m, dtype=bool)
    stack = [0]
    while stack:
        i = stack.pop()
        _expect(not seen[i], f"{where}: node {i} referenced more than once")
        seen[i] = True
        if tree.kind[i] == 1:
            stack.append(int(tree.left[i]))
            stack.append(int(tree.right[i]))
    _expect(
        bool(seen.all()),
        f"{where}: {int((~seen).sum())} unreachable node(s)",
    )
    return tree


# --- evaluation reports ---------------------------------------------------


def write_report(report: EvalReport, path, region: str | None = None,
                 class_names=None) -> str:
    """Serialize an EvalReport as JSON: percent figures rounded to one
    decimal for readability, raw fractions alongside for tooling."""
    def pct(v):
        return None if v is None else round(v * 100.0, 1)

    doc = {
        "region": region,
        "pixel_accuracy_percent": pct(report.pixel_accuracy),
        "mean_iou_percent": pct(report.mean_iou),
        "pixel_accuracy": report.pixel_accuracy,
        "mean_iou": report.mean_iou,
        "iou_per_class": list(report.iou_per_class),
        "iou_per_class_percent": [pct(v) for v in report.iou_per_class],
        "class_names": None if class_names is None else list(class_names),
        "confusion": [[int(v) for v in row] for row in report.confusion.counts],
        "abstain": [int(v) for v in report.confusion.abstain],
        "evaluated_pixels": report.evaluated_pixels,
        "skipped_pixels": report.skipped_pixels,
    }
    p = os.fspath(path)
    _write_json(doc, p)
    return p


def read_report(path) -> dict:
    return _load_json(path)


# --- synthetic scenes ------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Parameters for a deterministic synthetic scene.

    class_separation is the Euclidean distance between the two class
    means in spectral space ("blobs"/"ring") or the margin pushed around
    the decision line ("oblique"); noise_std scales the per-band noise.
    """

    preset: str = "blobs"
    width: int = 64
    height: int = 64
    bands: int = 10
    class_separation: float = 4.0
    noise_std: float = 1.0
    seed: int = 0
    unlabeled_border: int = 0

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise DataError(
                f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}"
            )
        if not isinstance(self.width, (int, np.integer)) \
                or not isinstance(self.height, (int, np.integer)) \
                or self.width < 1 or self.height < 1:
            raise DataError(
                f"zero-area scene: width={self.width!r}, height={self.height!r}"
            )
        if not isinstance(self.bands, (int, np.integer)) or self.bands < 1:
            raise DataError(f"bands must be >= 1, got {self.bands!r}")
        if not math.isfinite(self.class_separation) or self.class_separation < 0:
            raise DataError(
                f"class_separation must be >= 0, got {self.class_separation!r}"
            )
        if not math.isfinite(self.noise_std) or self.noise_std < 0:
            raise DataError(f"noise_std must be >= 0, got {self.noise_std!r}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise DataError(f"seed must be a non-negative integer, got {self.seed!r}")
        if not isinstance(self.unlabeled_border, (int, np.integer)) \
                or self.unlabeled_border < 0:
            raise DataError(
                f"unlabeled_border must be >= 0, got {self.unlabeled_border!r}"
            )


def _grid(spec: SyntheticSceneSpec):
    """Pixel-center coordinates normalized to [0, 1] per axis."""
    ys = (np.arange(spec.height) + 0.5) / spec.height
    xs = (np.arange(spec.width) + 0.5) / spec.width
    return np.meshgrid(ys, xs, indexing="ij")


def generate_scene(spec: SyntheticSceneSpec):
    """Deterministic (raster, mask) pair for one scene spec.

    blobs   : a few random ellipses form class 1; class means differ by
              class_separation in spectral space.
    oblique : the label is the sign of band0+band1 noise, pushed apart by
              class_separation along that diagonal; no axis-aligned
              threshold can separate it.
    ring    : class 1 is a centered annulus, spectra as in blobs.

    Per-band affine scale/offset decorates all presets so the spectra
    are not pre-standardized. The RNG draw order is fixed: spatial
    parameters first (blobs only), then one noise block.
    """
    rng = np.random.default_rng(spec.seed)
    h, w, b = spec.height, spec.width, spec.bands

    if spec.preset == "blobs":
        n_blobs = int(rng.integers(3, 7))
        cx = rng.uniform(0.1, 0.9, n_blobs)
        cy = rng.uniform(0.1, 0.9, n_blobs)
        rx = rng.uniform(0.08, 0.3, n_blobs)
        ry = rng.uniform(0.08, 0.3, n_blobs)
        yy, xx = _grid(spec)
        label = np.zeros((h, w), dtype=bool)
        for i in range(n_blobs):
            label |= ((xx - cx[i]) / rx[i]) ** 2 + ((yy - cy[i]) / ry[i]) ** 2 <= 1.0
        values = rng.standard_normal((h, w, b)) * spec.noise_std
        values += label[..., None] * (spec.class_separation / math.sqrt(b))
    elif spec.preset == "ring":
        yy, xx = _grid(spec)
        rr = np.sqrt((xx - 0.5) ** 2 + (yy - 0.5) ** 2)
        label = (rr >= 0.18) & (rr <= 0.42)
        values = rng.standard_normal((h, w, b)) * spec.noise_std
        values += label[..., None] * (spec.class_separation / math.sqrt(b))
    else:  # oblique
        values = rng.standard_normal((h, w, b)) * spec.noise_std
        label = values[..., 0] + values[..., 1] > 0.0
        push = np.where(label, 1.0, -1.0) * (
            spec.class_separation / (2.0 * math.sqrt(2.0))
        )
        values[..., 0] += push
        values[..., 1] += push

    scale = np.linspace(0.75, 1.5, b)
    offset = np.linspace(-2.0, 3.0, b)
    values = values * scale + offset

    mask = label.astype(np.uint8)
    border = spec.unlabeled_border
    if border > 0:
        mask[:border, :] = UNLABELED
        mask[-border:, :] = UNLABELED
        mask[:, :border] = UNLABELED
        mask[:, -border:] = UNLABELED
    raster = MultispectralRaster(values=values.astype(np.float32))
    return raster, mask


def bayes_accuracy_estimate(spec: SyntheticSceneSpec) -> float:
    """Accuracy of the optimal classifier on balanced classes.

    For the Gaussian presets (blobs, ring) two isotropic classes at
    distance s with noise sigma give Phi(s / (2 sigma)); the per-band
    affine decoration is invertible and changes nothing. The oblique
    preset's labels are a deterministic function of the spectrum, so its
    Bayes accuracy is 1. Spatial layout is ignored: the estimate assumes
    a pixel's class prior is 1/2, matching the balanced training setup.
    """
    if spec.preset == "oblique":
        return 1.0
    if spec.noise_std == 0.0:
        return 1.0 if spec.class_separation > 0 else 0.5
    t = spec.class_separation / (2.0 * spec.noise_std)
    return 0.5 * (1.0 + math.erf(t / math.sqrt(2.0)))

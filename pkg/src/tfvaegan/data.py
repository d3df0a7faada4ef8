"""Zero-shot datasets: in-memory model, loaders, scaling and a synthetic generator."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

SPLITS = ("train_seen", "test_seen", "test_unseen")

# dtype tag -> numpy little-endian dtype
DTYPES = {
    "f32le": np.dtype("<f4"),
    "f64le": np.dtype("<f8"),
    "i32le": np.dtype("<i4"),
    "i64le": np.dtype("<i8"),
    "u8": np.dtype("u1"),
}


def dtype_tag(arr: np.ndarray) -> str:
    for tag, dt in DTYPES.items():
        if arr.dtype.kind == dt.kind and arr.dtype.itemsize == dt.itemsize:
            return tag
    raise FormatError(f"unsupported array dtype {arr.dtype}")


@dataclass(frozen=True)
class ZSLDataset:
    """Features, labels and class embeddings with a seen/unseen split.

    ``features`` is ``N x d_x``, ``labels`` holds dense 0-based class ids and
    ``attributes`` has one row per class id. Split index arrays select rows of
    ``features``. Construction does not validate; loaders call :meth:`validate`.
    """

    features: np.ndarray
    labels: np.ndarray
    attributes: np.ndarray
    seen_classes: np.ndarray
    unseen_classes: np.ndarray
    train_seen: np.ndarray
    test_seen: np.ndarray
    test_unseen: np.ndarray
    name: str = "dataset"

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_attributes(self) -> int:
        return int(self.attributes.shape[1])

    @property
    def n_classes(self) -> int:
        return int(self.attributes.shape[0])

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise KeyError(name)
        return getattr(self, name)

    def validate(self) -> "ZSLDataset":
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise ValidationError("features must be a 2-d matrix")
        if self.labels.shape != (n,):
            raise ValidationError(f"labels shape {self.labels.shape} does not match {n} features")
        if self.attributes.ndim != 2:
            raise ValidationError("attributes must be a 2-d matrix")
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("features contain non-finite values")
        if not np.all(np.isfinite(self.attributes)):
            raise ValidationError("attributes contain non-finite values")

        seen = set(int(c) for c in self.seen_classes)
        unseen = set(int(c) for c in self.unseen_classes)
        if seen & unseen:
            raise ValidationError(f"seen and unseen classes overlap: {sorted(seen & unseen)[:10]}")
        for c in seen | unseen:
            if not 0 <= c < self.n_classes:
                raise ValidationError(f"class {c} has no attribute row")

        used: set[int] = set()
        for name in SPLITS:
            idx = self.split(name)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ValidationError(f"split {name} has indices outside [0, {n})")
            s = set(int(i) for i in idx)
            if len(s) != idx.size:
                raise ValidationError(f"split {name} has repeated indices")
            if used & s:
                raise ValidationError(f"split {name} overlaps another split")
            used |= s

        for name, allowed, kind in (
            ("train_seen", seen, "seen"),
            ("test_seen", seen, "seen"),
            ("test_unseen", unseen, "unseen"),
        ):
            labels = self.labels[self.split(name)]
            bad = set(int(c) for c in np.unique(labels)) - allowed
            if bad:
                raise ValidationError(f"split {name} contains labels outside the {kind} set: {sorted(bad)[:10]}")
        return self

    def with_features(self, features: np.ndarray) -> "ZSLDataset":
        return dataclasses.replace(self, features=features)


def make_dataset(features, labels, attributes, seen_classes, unseen_classes,
                 train_seen, test_seen, test_unseen, name="dataset") -> ZSLDataset:
    """Build and validate a dataset, coercing arrays to the canonical dtypes."""
    ds = ZSLDataset(
        features=np.ascontiguousarray(features, dtype=np.float32),
        labels=np.ascontiguousarray(labels, dtype=np.int64),
        attributes=np.ascontiguousarray(attributes, dtype=np.float32),
        seen_classes=np.unique(np.asarray(seen_classes, dtype=np.int64)),
        unseen_classes=np.unique(np.asarray(unseen_classes, dtype=np.int64)),
        train_seen=np.asarray(train_seen, dtype=np.int64).reshape(-1),
        test_seen=np.asarray(test_seen, dtype=np.int64).reshape(-1),
        test_unseen=np.asarray(test_unseen, dtype=np.int64).reshape(-1),
        name=name,
    )
    return ds.validate()


# ---------------------------------------------------------------------------
# benchmark (proposed-splits) layout


def _read_mapping(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"file not found: {path}")
    if path.suffix == ".npz":
        with np.load(path, allow_pickle=False) as f:
            return {k: f[k] for k in f.files}
    from scipy.io import loadmat

    try:
        return loadmat(str(path))
    except Exception as exc:  # scipy raises several unrelated types
        raise FormatError(f"cannot read {path}: {exc}") from exc


def _field(mapping: dict, key: str, path) -> np.ndarray:
    if key not in mapping:
        raise FormatError(f"{path}: missing field '{key}'")
    return np.asarray(mapping[key])


def load_benchmark_bundle(features_path, splits_path) -> ZSLDataset:
    """Read the conventional two-file layout.

    The feature file holds ``features`` (``d_x x N``) and ``labels`` (N class
    ids, 1-based). The split file holds ``att`` (``d_a x C``) and the 1-based
    location vectors ``trainval_loc``, ``test_seen_loc`` and ``test_unseen_loc``.
    Both ``.mat`` and ``.npz`` containers are accepted.
    """
    fmap = _read_mapping(features_path)
    smap = _read_mapping(splits_path)
    feats = _field(fmap, "features", features_path)
    labels = _field(fmap, "labels", features_path).reshape(-1).astype(np.int64) - 1
    att = _field(smap, "att", splits_path)
    locs = {}
    for key in ("trainval_loc", "test_seen_loc", "test_unseen_loc"):
        locs[key] = _field(smap, key, splits_path).reshape(-1).astype(np.int64) - 1

    if feats.ndim != 2 or feats.shape[1] != labels.size:
        raise FormatError(f"features shape {feats.shape} does not match {labels.size} labels")
    n = labels.size
    for key, loc in locs.items():
        if loc.size and (loc.min() < 0 or loc.max() >= n):
            raise ValidationError(f"{key} has locations outside [1, {n}]")
    if labels.size and labels.min() < 0:
        raise ValidationError("labels must be 1-based")
    if labels.size and labels.max() >= att.shape[1]:
        raise ValidationError(f"label {labels.max() + 1} has no attribute column")

    seen = np.unique(labels[locs["trainval_loc"]])
    unseen = np.unique(labels[locs["test_unseen_loc"]])
    return make_dataset(
        features=feats.T,
        labels=labels,
        attributes=att.T,
        seen_classes=seen,
        unseen_classes=unseen,
        train_seen=locs["trainval_loc"],
        test_seen=locs["test_seen_loc"],
        test_unseen=locs["test_unseen_loc"],
        name=Path(features_path).stem,
    )


# ---------------------------------------------------------------------------
# native bundle: manifest.json + raw little-endian arrays


def write_array_bundle(directory, arrays: dict[str, np.ndarray], extra: dict | None = None) -> Path:
    """Write named arrays as raw row-major little-endian files plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        tag = dtype_tag(arr)
        fname = f"{name}.bin"
        (directory / fname).write_bytes(np.ascontiguousarray(arr, dtype=DTYPES[tag]).tobytes())
        entries.append({"name": name, "dtype": tag, "shape": list(arr.shape), "path": fname})
    manifest = {"arrays": entries}
    manifest.update(extra or {})
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return directory


def decode_array(entry: dict, raw: bytes) -> np.ndarray:
    for key in ("name", "dtype", "shape", "path"):
        if key not in entry:
            raise FormatError(f"array entry missing field '{key}'")
    if entry["dtype"] not in DTYPES:
        raise FormatError(f"array '{entry['name']}': unknown dtype {entry['dtype']!r}")
    dt = DTYPES[entry["dtype"]]
    shape = tuple(int(s) for s in entry["shape"])
    expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if len(raw) != expected:
        raise FormatError(
            f"array '{entry['name']}': manifest shape {list(shape)} needs {expected} bytes, file has {len(raw)}"
        )
    return np.frombuffer(raw, dtype=dt).reshape(shape).copy()


def read_array_bundle(directory) -> tuple[dict[str, np.ndarray], dict]:
    """Return ``(arrays, manifest)`` for a directory written by :func:`write_array_bundle`."""
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.exists():
        raise FormatError(f"{directory}: missing manifest.json")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: {exc}") from exc
    if "arrays" not in manifest:
        raise FormatError(f"{mpath}: missing field 'arrays'")
    arrays = {}
    for entry in manifest["arrays"]:
        path = directory / entry.get("path", "")
        if not path.is_file():
            raise FormatError(f"{directory}: array file {entry.get('path')!r} not found")
        arrays[entry["name"]] = decode_array(entry, path.read_bytes())
    return arrays, manifest


def save_native_bundle(dataset: ZSLDataset, directory, extra_arrays: dict | None = None,
                       meta: dict | None = None) -> Path:
    arrays = {
        "features": dataset.features.astype(np.float32),
        "labels": dataset.labels.astype(np.int32),
        "attributes": dataset.attributes.astype(np.float32),
    }
    arrays.update(extra_arrays or {})
    fields = {
        "dataset": dataset.name,
        "splits": {name: dataset.split(name).tolist() for name in SPLITS},
        "seen_classes": dataset.seen_classes.tolist(),
        "unseen_classes": dataset.unseen_classes.tolist(),
        **(meta or {}),
    }
    return write_array_bundle(directory, arrays, fields)


def load_native_bundle(directory) -> ZSLDataset:
    arrays, manifest = read_array_bundle(directory)
    for key in ("features", "labels", "attributes"):
        if key not in arrays:
            raise FormatError(f"{directory}: manifest lacks array '{key}'")
    for key in ("splits", "seen_classes", "unseen_classes"):
        if key not in manifest:
            raise FormatError(f"{directory}: manifest missing field '{key}'")
    splits = manifest["splits"]
    for key in SPLITS:
        if key not in splits:
            raise FormatError(f"{directory}: manifest splits missing '{key}'")
    ds = ZSLDataset(
        features=arrays["features"],
        labels=arrays["labels"].astype(np.int64),
        attributes=arrays["attributes"],
        seen_classes=np.asarray(manifest["seen_classes"], dtype=np.int64),
        unseen_classes=np.asarray(manifest["unseen_classes"], dtype=np.int64),
        train_seen=np.asarray(splits["train_seen"], dtype=np.int64),
        test_seen=np.asarray(splits["test_seen"], dtype=np.int64),
        test_unseen=np.asarray(splits["test_unseen"], dtype=np.int64),
        name=manifest.get("dataset", Path(directory).name),
    )
    return ds.validate()


# ---------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class FeatureScaler:
    minimum: np.ndarray
    maximum: np.ndarray

    def __call__(self, features: np.ndarray) -> np.ndarray:
        return apply_scaler(self, features)


def fit_scaler(dataset: ZSLDataset) -> FeatureScaler:
    """Per-dimension min/max over the seen training rows only."""
    x = np.asarray(dataset.features[dataset.train_seen], dtype=np.float64)
    if x.shape[0] == 0:
        raise ValidationError("cannot fit a scaler on an empty train_seen split")
    return FeatureScaler(minimum=x.min(axis=0), maximum=x.max(axis=0))


def apply_scaler(scaler: FeatureScaler, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    span = scaler.maximum - scaler.minimum
    degenerate = span <= 0
    safe = np.where(degenerate, 1.0, span)
    out = np.clip((x - scaler.minimum) / safe, 0.0, 1.0)
    out[..., degenerate] = 0.0
    return out.astype(np.float32)


def scale_dataset(dataset: ZSLDataset, scaler: FeatureScaler | None = None) -> tuple[ZSLDataset, FeatureScaler]:
    scaler = scaler or fit_scaler(dataset)
    return dataset.with_features(apply_scaler(scaler, dataset.features)), scaler


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticOracle:
    """Ground truth of :func:`make_synthetic`: the latent linear map and class attributes."""

    weight: np.ndarray  # d_x x d_a
    bias: np.ndarray  # d_x
    attributes: np.ndarray

    def embed(self, features: np.ndarray) -> np.ndarray:
        """Least-squares attribute estimate from features (inverts the squashing and the map)."""
        x = np.clip(np.asarray(features, dtype=np.float64), 1e-7, 1 - 1e-7)
        pre = np.log(x) - np.log1p(-x) - self.bias
        sol, *_ = np.linalg.lstsq(self.weight, pre.T, rcond=None)
        return sol.T

    def predict(self, features: np.ndarray, class_ids) -> np.ndarray:
        class_ids = np.asarray(class_ids)
        est = self.embed(features)
        cand = self.attributes[class_ids]
        d = ((est[:, None, :] - cand[None, :, :]) ** 2).sum(-1)
        return class_ids[np.argmin(d, axis=1)]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def make_synthetic(seed: int = 0, n_seen_classes: int = 10, n_unseen_classes: int = 5, d_a: int = 16,
                   d_x: int = 32, samples_per_class: int = 100, noise_sigma: float = 0.1,
                   test_seen_fraction: float = 0.2, weight_scale: float = 3.0) -> tuple[ZSLDataset, SyntheticOracle]:
    """Sample a desk-scale dataset with known structure.

    Class attributes are uniform on the unit cube and features are
    ``sigmoid(W a + b + noise_sigma * eps)`` for a fixed random ``W``.
    Seen classes are split into train/test rows; all unseen rows are test.
    """
    if d_x < d_a:
        raise ValueError("d_x must be >= d_a")
    if min(n_seen_classes, n_unseen_classes, samples_per_class) < 1:
        raise ValueError("class and sample counts must be >= 1")
    rng = np.random.default_rng(seed)
    n_classes = n_seen_classes + n_unseen_classes
    attributes = rng.uniform(0.0, 1.0, size=(n_classes, d_a))
    weight = rng.normal(0.0, weight_scale / np.sqrt(d_a), size=(d_x, d_a))
    # centre the pre-activation of an average class on zero
    bias = -weight @ np.full(d_a, 0.5)

    labels = np.repeat(np.arange(n_classes), samples_per_class)
    pre = attributes[labels] @ weight.T + bias
    pre = pre + noise_sigma * rng.normal(size=pre.shape)
    features = _sigmoid(pre)

    classes = rng.permutation(n_classes)
    seen, unseen = np.sort(classes[:n_seen_classes]), np.sort(classes[n_seen_classes:])
    train_seen, test_seen, test_unseen = [], [], []
    n_test = int(round(test_seen_fraction * samples_per_class))
    for c in range(n_classes):
        rows = np.flatnonzero(labels == c)
        if c in set(unseen.tolist()):
            test_unseen.append(rows)
        else:
            rows = rng.permutation(rows)
            test_seen.append(np.sort(rows[:n_test]))
            train_seen.append(np.sort(rows[n_test:]))

    ds = make_dataset(
        features=features,
        labels=labels,
        attributes=attributes,
        seen_classes=seen,
        unseen_classes=unseen,
        train_seen=np.concatenate(train_seen),
        test_seen=np.concatenate(test_seen) if test_seen else [],
        test_unseen=np.concatenate(test_unseen),
        name=f"synthetic-{seed}",
    )
    return ds, SyntheticOracle(weight=weight, bias=bias, attributes=attributes)


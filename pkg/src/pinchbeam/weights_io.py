"""Portable JSON weight documents for the inference network.

Layout: a header with the format version, layer count, bound scenario
dimensions and the allowed activation vocabulary, plus a flat tensor table
keyed "layer{l}/{F_t|F_r|F_beta|F_xi|F_p|F_V}/{w|b}{depth}" with explicit
shapes and row-major double values.  Per-bundle activation tags live in the
header so a reader can reconstruct each FNN without guessing.

Round-trips are bit-identical: values are serialized with Python's repr
(shortest float round-trip) via the stock json module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1
ACTIVATIONS = ("sigmoid", "tanh", "softplus", "identity")
FNN_NAMES = ("F_t", "F_r", "F_beta", "F_xi", "F_p", "F_V")


class WeightFormatError(ValueError):
    """Base class for weight-document problems."""


class WeightVersionError(WeightFormatError):
    pass


class WeightDimensionError(WeightFormatError):
    pass


class WeightActivationError(WeightFormatError):
    pass


class WeightNameError(WeightFormatError):
    pass


@dataclass
class FnnBundle:
    """One feed-forward net: affine stages with tagged activations."""

    weights: list  # np.ndarray (out, in) per stage
    biases: list   # np.ndarray (out,) per stage
    activations: list  # tag per stage

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise WeightDimensionError("bundle stage counts disagree")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise WeightActivationError(f"unknown activation tag {a!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise WeightDimensionError(f"stage {i} weight/bias shapes disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise WeightDimensionError(f"stage {i} input width mismatch")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]


@dataclass
class GnnWeights:
    n_layers: int
    S: int
    M: int
    N_t: int
    N_r: int
    layers: list  # per layer: dict FNN name -> FnnBundle
    provenance: str = ""
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if len(self.layers) != self.n_layers:
            raise WeightDimensionError("layer list length != n_layers")
        for layer in self.layers:
            missing = set(FNN_NAMES) - set(layer)
            if missing:
                raise WeightDimensionError(f"missing bundles: {sorted(missing)}")

    def bundle(self, layer: int, name: str) -> FnnBundle:
        return self.layers[layer][name]


def save_weights(weights: GnnWeights) -> dict:
    doc = {
        "format_version": weights.format_version,
        "n_layers": weights.n_layers,
        "S": weights.S, "M": weights.M,
        "N_t": weights.N_t, "N_r": weights.N_r,
        "activations": list(ACTIVATIONS),
        "provenance": weights.provenance,
        "bundles": {},
        "tensors": {},
    }
    for li, layer in enumerate(weights.layers):
        for name in FNN_NAMES:
            bundle = layer[name]
            doc["bundles"][f"layer{li}/{name}"] = list(bundle.activations)
            for di, (w, b) in enumerate(zip(bundle.weights, bundle.biases)):
                doc["tensors"][f"layer{li}/{name}/w{di}"] = {
                    "shape": list(w.shape), "data": w.ravel().tolist()}
                doc["tensors"][f"layer{li}/{name}/b{di}"] = {
                    "shape": list(b.shape), "data": b.ravel().tolist()}
    return doc


def load_weights(doc: dict) -> GnnWeights:
    if not isinstance(doc, dict):
        raise WeightFormatError("weight document must be a mapping")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise WeightVersionError(f"unsupported format_version {version!r}")
    for key in ("n_layers", "S", "M", "N_t", "N_r", "bundles", "tensors"):
        if key not in doc:
            raise WeightFormatError(f"missing key {key!r}")
    n_layers = int(doc["n_layers"])

    tensors: dict[str, np.ndarray] = {}
    for name, spec in doc["tensors"].items():
        parts = name.split("/")
        if len(parts) != 3 or not parts[0].startswith("layer") \
                or parts[1] not in FNN_NAMES \
                or parts[2][0] not in "wb" or not parts[2][1:].isdigit():
            raise WeightNameError(f"unknown tensor name {name!r}")
        try:
            layer_idx = int(parts[0][5:])
        except ValueError:
            raise WeightNameError(f"unknown tensor name {name!r}") from None
        if not 0 <= layer_idx < n_layers:
            raise WeightNameError(f"tensor {name!r} outside layer range")
        arr = np.asarray(spec["data"], float)
        shape = tuple(spec["shape"])
        if arr.size != int(np.prod(shape)):
            raise WeightDimensionError(f"tensor {name!r} data/shape mismatch")
        tensors[name] = arr.reshape(shape)

    layers = []
    for li in range(n_layers):
        layer = {}
        for fname in FNN_NAMES:
            tag_key = f"layer{li}/{fname}"
            if tag_key not in doc["bundles"]:
                raise WeightDimensionError(f"missing activation tags for {tag_key}")
            tags = list(doc["bundles"][tag_key])
            ws, bs = [], []
            for di in range(len(tags)):
                wk, bk = f"{tag_key}/w{di}", f"{tag_key}/b{di}"
                if wk not in tensors or bk not in tensors:
                    raise WeightDimensionError(f"missing tensors for {tag_key} stage {di}")
                ws.append(tensors[wk])
                bs.append(tensors[bk])
            layer[fname] = FnnBundle(ws, bs, tags)
        layers.append(layer)
    extra = set(tensors) - {
        f"layer{li}/{fname}/{ab}{di}"
        for li in range(n_layers) for fname in FNN_NAMES
        for di in range(len(doc["bundles"][f"layer{li}/{fname}"]))
        for ab in "wb"}
    if extra:
        raise WeightNameError(f"unexpected tensors: {sorted(extra)[:3]}")
    return GnnWeights(n_layers=n_layers, S=int(doc["S"]), M=int(doc["M"]),
                      N_t=int(doc["N_t"]), N_r=int(doc["N_r"]), layers=layers,
                      provenance=str(doc.get("provenance", "")),
                      format_version=version)


def save_weights_file(weights: GnnWeights, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(save_weights(weights), fh)


def load_weights_file(path: str) -> GnnWeights:
    with open(path) as fh:
        return load_weights(json.load(fh))

"""Convolutional feature backbone: weight loading, named-layer extraction,
and Gram statistics.

A backbone is declared by an ordered list of layer specs (conv3x3 / relu /
maxpool2x2) and bound to tensors from a :class:`~livestyle.archive.WeightArchive`.
The 16-conv classic recognition stack ships as the ``vgg19`` preset; tests
and the desk-scale service run tiny random backbones built from the same
machinery. Models are immutable after load and safe to share across
concurrent extractions.

Gram matrices are unnormalized here (``G = F @ F.T``); each loss applies
its own normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .archive import WeightArchive
from .errors import MissingTensor, RangeMismatch, ShapeMismatch, UnknownLayer
from .images import ImageTensor, PreprocessSpec, Range

CONV3X3 = "conv3x3"
RELU = "relu"
MAXPOOL2X2 = "maxpool2x2"


@dataclass(frozen=True)
class LayerSpec:
    layer_id: str
    kind: str  # conv3x3 | relu | maxpool2x2
    in_channels: int | None = None  # conv only
    out_channels: int | None = None  # conv only
    stride: int = 1


@dataclass
class FeatureMap:
    """Flattened activations of one layer: (channels, spatial)."""

    layer_id: str
    channels: int
    spatial: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64).reshape(self.channels, self.spatial)


@dataclass
class GramMatrix:
    size: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64).reshape(self.size, self.size)


class BackboneModel:
    """Immutable bound backbone; weights live as read-only float64 arrays."""

    def __init__(
        self,
        layer_specs: list[LayerSpec],
        weights: dict[str, np.ndarray],
        biases: dict[str, np.ndarray],
        input_spec: PreprocessSpec,
    ):
        self.layer_specs = list(layer_specs)
        self.input_spec = input_spec
        self._weights = {}
        self._biases = {}
        for lid, w in weights.items():
            w = np.ascontiguousarray(w, dtype=np.float64)
            w.flags.writeable = False
            self._weights[lid] = w
        for lid, b in biases.items():
            b = np.ascontiguousarray(b, dtype=np.float64)
            b.flags.writeable = False
            self._biases[lid] = b
        self.layer_ids = [s.layer_id for s in self.layer_specs]

    def has_layer(self, layer_id: str) -> bool:
        return layer_id in self.layer_ids

    def weight(self, layer_id: str) -> np.ndarray:
        return self._weights[layer_id]

    def bias(self, layer_id: str) -> np.ndarray:
        return self._biases[layer_id]

    def forward_graph(self, x: ad.Var, want: set[str]) -> dict[str, ad.Var]:
        """Run the stack on an autodiff Var, recording the wanted layer outputs."""
        unknown = set(want) - set(self.layer_ids)
        if unknown:
            raise UnknownLayer(f"unknown layer(s): {sorted(unknown)}")
        out: dict[str, ad.Var] = {}
        cur = x
        remaining = set(want)
        for spec in self.layer_specs:
            if spec.kind == CONV3X3:
                cur = ad.conv3x3(
                    cur,
                    ad.const(self._weights[spec.layer_id]),
                    ad.const(self._biases[spec.layer_id]),
                    stride=spec.stride,
                )
            elif spec.kind == RELU:
                cur = ad.relu(cur)
            elif spec.kind == MAXPOOL2X2:
                cur = ad.maxpool2x2(cur)
            else:  # pragma: no cover - specs are validated at load
                raise ValueError(f"unknown layer kind {spec.kind!r}")
            if spec.layer_id in remaining:
                out[spec.layer_id] = cur
                remaining.discard(spec.layer_id)
                if not remaining:
                    break
        return out

    def forward_arrays(self, x: np.ndarray, want: set[str]) -> dict[str, np.ndarray]:
        """Gradient-free forward pass; returns (C,H,W) arrays per wanted layer."""
        graph = self.forward_graph(ad.const(np.asarray(x, dtype=np.float64)), want)
        return {lid: v.value for lid, v in graph.items()}


def load_weights(
    archive: WeightArchive,
    expected_spec: list[LayerSpec],
    input_spec: PreprocessSpec | None = None,
) -> BackboneModel:
    """Bind archive tensors to the expected layer list.

    Conv layers look up ``<layer_id>.weight`` with shape
    (out_ch, in_ch, 3, 3) and ``<layer_id>.bias`` with shape (out_ch,).
    """
    ids = [s.layer_id for s in expected_spec]
    if len(set(ids)) != len(ids):
        raise ShapeMismatch("duplicate layer ids in expected spec")
    weights: dict[str, np.ndarray] = {}
    biases: dict[str, np.ndarray] = {}
    for spec in expected_spec:
        if spec.kind != CONV3X3:
            continue
        wname, bname = f"{spec.layer_id}.weight", f"{spec.layer_id}.bias"
        for name in (wname, bname):
            if name not in archive:
                raise MissingTensor(name)
        w = archive.tensor(wname)
        b = archive.tensor(bname)
        expected_w = (spec.out_channels, spec.in_channels, 3, 3)
        if w.shape != expected_w:
            raise ShapeMismatch(
                f"layer {spec.layer_id!r}: weight shape {w.shape} != expected {expected_w}"
            )
        if b.shape != (spec.out_channels,):
            raise ShapeMismatch(
                f"layer {spec.layer_id!r}: bias shape {b.shape} != expected ({spec.out_channels},)"
            )
        weights[spec.layer_id] = w
        biases[spec.layer_id] = b
    if input_spec is None:
        input_spec = PreprocessSpec(target_size=64)
    return BackboneModel(expected_spec, weights, biases, input_spec)


def extract_features(
    model: BackboneModel, img: ImageTensor, layers: set[str]
) -> dict[str, FeatureMap]:
    """Extract named-layer feature maps from a BACKBONE-range image."""
    if img.range is not Range.BACKBONE:
        raise RangeMismatch("extract_features expects a BACKBONE-range tensor")
    x = np.asarray(img.data, dtype=np.float64).transpose(2, 0, 1)
    arrays = model.forward_arrays(x, set(layers))
    out = {}
    for lid, arr in arrays.items():
        c = arr.shape[0]
        out[lid] = FeatureMap(layer_id=lid, channels=c, spatial=arr.shape[1] * arr.shape[2], data=arr.reshape(c, -1))
    return out


def gram_matrix(f: FeatureMap) -> GramMatrix:
    """Unnormalized channel Gram matrix, exactly symmetric by construction."""
    g = f.data @ f.data.T
    g = np.triu(g)
    g = g + np.triu(g, 1).T
    return GramMatrix(size=f.channels, data=g)


# ---------------------------------------------------------------------------
# presets


def tiny_backbone_spec(channels: tuple[int, ...] = (8, 16, 16), pool_after: tuple[int, ...] = (2,)) -> list[LayerSpec]:
    """Small conv/relu stack for desk-scale runs and tests.

    ``channels[i]`` is conv ``i+1``'s output width; a maxpool is inserted
    after each 1-based conv index listed in ``pool_after``.
    """
    specs: list[LayerSpec] = []
    in_ch = 3
    for i, out_ch in enumerate(channels, start=1):
        specs.append(LayerSpec(f"conv{i}", CONV3X3, in_channels=in_ch, out_channels=out_ch))
        specs.append(LayerSpec(f"relu{i}", RELU))
        if i in pool_after:
            specs.append(LayerSpec(f"pool{i}", MAXPOOL2X2))
        in_ch = out_ch
    return specs


def vgg19_spec() -> list[LayerSpec]:
    """The 16-conv / 5-pool recognition stack used by the classic method."""
    blocks = [(2, 64), (2, 128), (4, 256), (4, 512), (4, 512)]
    specs: list[LayerSpec] = []
    in_ch = 3
    for bi, (n_convs, width) in enumerate(blocks, start=1):
        for ci in range(1, n_convs + 1):
            specs.append(
                LayerSpec(f"conv{bi}_{ci}", CONV3X3, in_channels=in_ch, out_channels=width)
            )
            specs.append(LayerSpec(f"relu{bi}_{ci}", RELU))
            in_ch = width
        specs.append(LayerSpec(f"pool{bi}", MAXPOOL2X2))
    return specs


VGG19_CONTENT_LAYERS = ("conv4_2",)
VGG19_STYLE_LAYERS = ("conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1")

TINY_CONTENT_LAYERS = ("conv3",)
TINY_STYLE_LAYERS = ("conv1", "conv2", "conv3")


def random_weight_archive(
    spec: list[LayerSpec], seed: int = 0, scale: float = 1.0
) -> WeightArchive:
    """He-initialized random conv weights for a layer spec (biases zero)."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for s in spec:
        if s.kind != CONV3X3:
            continue
        std = scale * np.sqrt(2.0 / (s.in_channels * 9))
        tensors[f"{s.layer_id}.weight"] = rng.normal(
            0.0, std, size=(s.out_channels, s.in_channels, 3, 3)
        ).astype(np.float32)
        tensors[f"{s.layer_id}.bias"] = np.zeros(s.out_channels, dtype=np.float32)
    return WeightArchive.from_tensors(tensors)


def random_backbone(
    spec: list[LayerSpec] | None = None,
    seed: int = 0,
    input_spec: PreprocessSpec | None = None,
    scale: float = 1.0,
) -> BackboneModel:
    if spec is None:
        spec = tiny_backbone_spec()
    return load_weights(random_weight_archive(spec, seed=seed, scale=scale), spec, input_spec)

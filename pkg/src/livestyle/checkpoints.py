"""Checkpoint conventions on top of the weight-archive container.

Prefixes identify the owning network inside one archive:

* AST:      ``predictor.<tensor>`` and ``transfer.<tensor>``
* CycleGAN: ``g_xy.<tensor>`` (X->Y) and ``f_yx.<tensor>`` (Y->X)
* Backbone: bare ``<layer_id>.weight`` / ``<layer_id>.bias`` tensors for a
  named structural preset ("tiny" or "vgg19"); channel widths are read
  from the stored shapes.
"""

from __future__ import annotations

import numpy as np

from .archive import WeightArchive
from .ast_transfer import StylePredictor, TransferNetwork
from .backbone import (
    BackboneModel,
    LayerSpec,
    load_weights,
    tiny_backbone_spec,
    vgg19_spec,
)
from .cyclegan import Generator
from .errors import CorruptArchive
from .images import PreprocessSpec


def _collect(archive: WeightArchive, prefix: str) -> dict[str, np.ndarray]:
    plen = len(prefix)
    return {name[plen:]: archive.tensor(name) for name in archive.names if name.startswith(prefix)}


def save_ast_checkpoint(predictor: StylePredictor, net: TransferNetwork) -> WeightArchive:
    tensors: dict[str, np.ndarray] = {}
    for name, arr in predictor.to_tensors().items():
        tensors[f"predictor.{name}"] = arr
    for name, arr in net.to_tensors().items():
        tensors[f"transfer.{name}"] = arr
    return WeightArchive.from_tensors(tensors)


def load_ast_checkpoint(archive: WeightArchive) -> tuple[StylePredictor, TransferNetwork]:
    pred_tensors = _collect(archive, "predictor.")
    net_tensors = _collect(archive, "transfer.")
    if not pred_tensors or not net_tensors:
        raise CorruptArchive("archive lacks predictor./transfer. tensors")
    return StylePredictor(pred_tensors), TransferNetwork(net_tensors)


def save_cyclegan_checkpoint(g: Generator, f: Generator) -> WeightArchive:
    tensors: dict[str, np.ndarray] = {}
    for name, arr in g.to_tensors().items():
        tensors[f"g_xy.{name}"] = arr
    for name, arr in f.to_tensors().items():
        tensors[f"f_yx.{name}"] = arr
    return WeightArchive.from_tensors(tensors)


def load_cyclegan_generator(archive: WeightArchive, direction: str = "g_xy") -> Generator:
    tensors = _collect(archive, f"{direction}.")
    if not tensors:
        raise CorruptArchive(f"archive lacks {direction}. tensors")
    return Generator(tensors)


def _tiny_spec_from_archive(archive: WeightArchive) -> list[LayerSpec]:
    # channel widths come from the stored shapes; pool placement follows
    # the tiny preset
    n = 0
    channels = []
    while f"conv{n + 1}.weight" in archive:
        channels.append(archive.tensor(f"conv{n + 1}.weight").shape[0])
        n += 1
    if n == 0:
        raise CorruptArchive("archive has no conv1.weight; not a tiny-backbone checkpoint")
    return tiny_backbone_spec(channels=tuple(channels))


def load_backbone_checkpoint(
    archive: WeightArchive,
    preset: str = "tiny",
    input_spec: PreprocessSpec | None = None,
) -> BackboneModel:
    if preset == "tiny":
        spec = _tiny_spec_from_archive(archive)
    elif preset == "vgg19":
        spec = vgg19_spec()
    else:
        raise ValueError(f"unknown backbone preset {preset!r}")
    return load_weights(archive, spec, input_spec)

#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the numpy fallback.

Times the conv/pool primitives that dominate every pipeline, plus one full
optimization-transfer iteration (forward + backward + step) end to end.

    python benchmarks/bench_kernels.py [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from livestyle import kernels
from livestyle.backbone import (
    TINY_CONTENT_LAYERS,
    TINY_STYLE_LAYERS,
    random_backbone,
    tiny_backbone_spec,
)
from livestyle.gatys import GatysConfig, run_gatys
from livestyle.images import ImageTensor, PreprocessSpec, Range, normalize


def _time(fn, repeats: int) -> float:
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_primitives(repeats: int) -> list[tuple[str, dict[str, float]]]:
    rng = np.random.default_rng(0)
    cases = [
        ("conv3x3 fwd 16x64x64", lambda k: k.conv3x3_forward(x1, w1, b1, 1)),
        ("conv3x3 fwd s2 32x64x64", lambda k: k.conv3x3_forward(x2, w2, b2, 2)),
        ("conv3x3 input grad", lambda k: k.conv3x3_input_grad(g1, w1, 1, 64, 64)),
        ("conv3x3 weight grad", lambda k: k.conv3x3_weight_grad(g1, x1, 1)),
        ("maxpool2x2 fwd 32x64x64", lambda k: k.maxpool2x2_forward(x2)),
    ]
    x1 = rng.normal(size=(16, 64, 64))
    w1 = rng.normal(size=(16, 16, 3, 3))
    b1 = rng.normal(size=16)
    g1 = rng.normal(size=(16, 64, 64))
    x2 = rng.normal(size=(32, 64, 64))
    w2 = rng.normal(size=(32, 32, 3, 3))
    b2 = rng.normal(size=32)

    rows = []
    for name, fn in cases:
        timings = {}
        for backend in kernels.available_backends():
            kernels.use_backend(backend)
            timings[backend] = _time(lambda: fn(kernels), repeats)
        rows.append((name, timings))
    return rows


def bench_transfer_iteration(repeats: int) -> tuple[str, dict[str, float]]:
    spec = PreprocessSpec(target_size=64)
    model = random_backbone(tiny_backbone_spec(), seed=0, input_spec=spec)
    rng = np.random.default_rng(1)
    content = normalize(
        ImageTensor.from_array(rng.uniform(0, 1, (64, 64, 3)), Range.UNIT), spec
    )
    style = normalize(
        ImageTensor.from_array(rng.uniform(0, 1, (64, 64, 3)), Range.UNIT), spec
    )
    cfg = GatysConfig(
        content_layers=TINY_CONTENT_LAYERS,
        style_layers=TINY_STYLE_LAYERS,
        layer_weights=(1 / 3, 1 / 3, 1 / 3),
        iterations=5,
        step_size=0.02,
        seed=0,
    )
    timings = {}
    for backend in kernels.available_backends():
        kernels.use_backend(backend)
        timings[backend] = _time(lambda: run_gatys(content, style, model, cfg), repeats) / cfg.iterations
    return "gatys iteration 64x64 (tiny)", timings


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"available backends: {', '.join(backends)}")
    rows = bench_primitives(args.repeats)
    rows.append(bench_transfer_iteration(args.repeats))

    width = max(len(name) for name, _ in rows) + 2
    header = f"{'case':<{width}}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, timings in rows:
        line = f"{name:<{width}}"
        for b in backends:
            line += f"{timings[b] * 1e3:>10.3f}ms"
        if len(backends) > 1 and "native" in timings and "numpy" in timings:
            line += f"{timings['numpy'] / timings['native']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()

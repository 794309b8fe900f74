"""Desk-scale unpaired image-to-image translation.

Two generators (X->Y and Y->X) and two patch discriminators trained with a
least-squares adversarial loss plus a lambda-weighted bidirectional L1
cycle-consistency loss:

    total_G = adv(G) + adv(F) + lambda * (|F(G(x)) - x| + |G(F(y)) - y|)

Generators map [-1, 1] images to [-1, 1] via a tanh head; the public
translate() converts UNIT range in and out. Training alternates generator
and discriminator Adam updates, one image pair per step, deterministic
given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DivergedLoss, EmptyDataset, ShapeMismatch
from .images import ImageTensor, Range

__all__ = [
    "CycleGanConfig",
    "DomainDataset",
    "TrainStep",
    "TrainReport",
    "Generator",
    "Discriminator",
    "adversarial_loss",
    "cycle_consistency_loss",
    "cyclegan_total_loss",
    "train_cyclegan",
    "translate",
]


@dataclass
class CycleGanConfig:
    steps: int
    cycle_weight: float = 10.0  # lambda
    step_size: float = 1e-3
    image_side: int = 32
    residual_blocks: int = 2
    seed: int = 0
    base_channels: int = 8

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.cycle_weight < 0:
            raise ValueError("cycle_weight must be >= 0")
        if self.image_side < 16:
            raise ValueError("image_side must be >= 16")


@dataclass
class DomainDataset:
    images: list[ImageTensor]

    def __post_init__(self):
        if not self.images:
            raise EmptyDataset("domain dataset is empty")
        shape = (self.images[0].height, self.images[0].width)
        for img in self.images:
            if (img.height, img.width) != shape:
                raise ShapeMismatch("domain images must share one shape")
            if img.range is not Range.UNIT:
                raise ShapeMismatch("domain images must be UNIT range")


@dataclass
class TrainStep:
    adv_G: float
    adv_F: float
    disc_X: float
    disc_Y: float
    cycle: float
    total: float


@dataclass
class TrainReport:
    steps: list[TrainStep] = field(default_factory=list)


def _he_conv(rng: np.random.Generator, out_ch: int, in_ch: int, scale: float = 1.0) -> np.ndarray:
    std = scale * np.sqrt(2.0 / (in_ch * 9))
    return rng.normal(0.0, std, size=(out_ch, in_ch, 3, 3))


class Generator:
    """Encoder (2 stride-2 convs), R residual blocks, decoder (2 upsample
    convs), tanh head. Output spatial size equals input spatial size."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        if "enc1.weight" not in tensors or "enc2.weight" not in tensors:
            raise ShapeMismatch("generator missing encoder tensors")
        res_ids = sorted(
            {int(k.split(".")[0][3:]) for k in tensors if k.startswith("res")}
        )
        if res_ids != list(range(len(res_ids))):
            raise ShapeMismatch("residual block tensors must be res0..resN-1")
        c1 = tensors["enc1.weight"].shape[0]
        c2 = tensors["enc2.weight"].shape[0]
        names = ["enc1", "enc2"]
        names += [f"res{i}.conv1" for i in res_ids] + [f"res{i}.conv2" for i in res_ids]
        names += ["dec1", "dec2", "head"]
        expected: dict[str, tuple[tuple[int, ...], tuple[int, ...]]] = {
            "enc1": ((c1, 3, 3, 3), (c1,)),
            "enc2": ((c2, c1, 3, 3), (c2,)),
            "dec1": ((c1, c2, 3, 3), (c1,)),
            "dec2": ((c1, c1, 3, 3), (c1,)),
            "head": ((3, c1, 3, 3), (3,)),
        }
        for i in res_ids:
            expected[f"res{i}.conv1"] = ((c2, c2, 3, 3), (c2,))
            expected[f"res{i}.conv2"] = ((c2, c2, 3, 3), (c2,))
        self.p: dict[str, ad.Var] = {}
        self._names: list[str] = []
        for name in names:
            wname, bname = f"{name}.weight", f"{name}.bias"
            if wname not in tensors or bname not in tensors:
                raise ShapeMismatch(f"generator missing tensors for {name!r}")
            w = np.asarray(tensors[wname], dtype=np.float64)
            b = np.asarray(tensors[bname], dtype=np.float64)
            ws, bs = expected[name]
            if w.shape != ws or b.shape != bs:
                raise ShapeMismatch(
                    f"generator tensor {name!r}: {w.shape}/{b.shape} != {ws}/{bs}"
                )
            self.p[wname] = ad.param(w.copy())
            self.p[bname] = ad.param(b.copy())
            self._names.extend([wname, bname])
        self.residual_blocks = len(res_ids)
        self.channels = (c1, c2)

    @classmethod
    def random(
        cls, seed: int = 0, residual_blocks: int = 2, base_channels: int = 8
    ) -> "Generator":
        rng = np.random.default_rng(seed)
        c1, c2 = base_channels, 2 * base_channels
        tensors = {
            "enc1.weight": _he_conv(rng, c1, 3),
            "enc1.bias": np.zeros(c1),
            "enc2.weight": _he_conv(rng, c2, c1),
            "enc2.bias": np.zeros(c2),
        }
        for i in range(residual_blocks):
            tensors[f"res{i}.conv1.weight"] = _he_conv(rng, c2, c2, scale=0.5)
            tensors[f"res{i}.conv1.bias"] = np.zeros(c2)
            tensors[f"res{i}.conv2.weight"] = _he_conv(rng, c2, c2, scale=0.5)
            tensors[f"res{i}.conv2.bias"] = np.zeros(c2)
        tensors.update(
            {
                "dec1.weight": _he_conv(rng, c1, c2),
                "dec1.bias": np.zeros(c1),
                "dec2.weight": _he_conv(rng, c1, c1),
                "dec2.bias": np.zeros(c1),
                "head.weight": _he_conv(rng, 3, c1, scale=0.5),
                "head.bias": np.zeros(3),
            }
        )
        return cls(tensors)

    @classmethod
    def near_identity(
        cls, seed: int = 0, residual_blocks: int = 2, base_channels: int = 8
    ) -> "Generator":
        """Structured init approximating a (blocky) passthrough.

        Positive/negative copies of the RGB planes ride through the
        encoder/decoder on center-tap kernels, so G(x) starts close to
        tanh(1.5 x); useful as a content-preserving warm start. Requires
        base_channels >= 6.
        """
        if base_channels < 6:
            raise ShapeMismatch("near_identity init needs base_channels >= 6")
        rng = np.random.default_rng(seed)
        c1, c2 = base_channels, 2 * base_channels
        noise = 0.02

        def jitter(shape):
            return rng.normal(0.0, noise * np.sqrt(2.0 / (shape[1] * 9)), size=shape)

        enc1 = jitter((c1, 3, 3, 3))
        for c in range(3):
            enc1[c, c, 1, 1] += 1.0
            enc1[c + 3, c, 1, 1] -= 1.0
        enc2 = jitter((c2, c1, 3, 3))
        for c in range(6):
            enc2[c, c, 1, 1] += 1.0
        dec1 = jitter((c1, c2, 3, 3))
        for c in range(6):
            dec1[c, c, 1, 1] += 1.0
        dec2 = jitter((c1, c1, 3, 3))
        for c in range(6):
            dec2[c, c, 1, 1] += 1.0
        head = jitter((3, c1, 3, 3))
        for c in range(3):
            head[c, c, 1, 1] += 1.5
            head[c, c + 3, 1, 1] -= 1.5
        tensors = {
            "enc1.weight": enc1,
            "enc1.bias": np.zeros(c1),
            "enc2.weight": enc2,
            "enc2.bias": np.zeros(c2),
            "dec1.weight": dec1,
            "dec1.bias": np.zeros(c1),
            "dec2.weight": dec2,
            "dec2.bias": np.zeros(c1),
            "head.weight": head,
            "head.bias": np.zeros(3),
        }
        for i in range(residual_blocks):
            tensors[f"res{i}.conv1.weight"] = _he_conv(rng, c2, c2, scale=0.05)
            tensors[f"res{i}.conv1.bias"] = np.zeros(c2)
            tensors[f"res{i}.conv2.weight"] = _he_conv(rng, c2, c2, scale=0.05)
            tensors[f"res{i}.conv2.bias"] = np.zeros(c2)
        return cls(tensors)

    def params(self) -> list[ad.Var]:
        return [self.p[n] for n in self._names]

    def to_tensors(self) -> dict[str, np.ndarray]:
        return {n: self.p[n].value.copy() for n in self._names}

    def forward(self, x: ad.Var) -> ad.Var:
        """x: (3,H,W) in [-1,1]; returns (3,H,W) in tanh range."""
        _, h_in, w_in = x.value.shape
        h = ad.relu(ad.conv3x3(x, self.p["enc1.weight"], self.p["enc1.bias"], stride=2))
        h = ad.relu(ad.conv3x3(h, self.p["enc2.weight"], self.p["enc2.bias"], stride=2))
        for i in range(self.residual_blocks):
            r = ad.relu(
                ad.conv3x3(h, self.p[f"res{i}.conv1.weight"], self.p[f"res{i}.conv1.bias"])
            )
            r = ad.conv3x3(r, self.p[f"res{i}.conv2.weight"], self.p[f"res{i}.conv2.bias"])
            h = ad.add(h, r)
        h = ad.upsample2x(h)
        h = ad.relu(ad.conv3x3(h, self.p["dec1.weight"], self.p["dec1.bias"]))
        h = ad.crop2d(h, (h_in + 1) // 2, (w_in + 1) // 2)
        h = ad.upsample2x(h)
        h = ad.relu(ad.conv3x3(h, self.p["dec2.weight"], self.p["dec2.bias"]))
        h = ad.crop2d(h, h_in, w_in)
        h = ad.conv3x3(h, self.p["head.weight"], self.p["head.bias"])
        return ad.tanh(h)


class Discriminator:
    """Patch classifier: stacked stride-2 convs to a score map."""

    NAMES = ("conv1", "conv2", "head")

    def __init__(self, tensors: dict[str, np.ndarray]):
        if "conv1.weight" not in tensors or "conv2.weight" not in tensors:
            raise ShapeMismatch("discriminator missing conv tensors")
        c1 = tensors["conv1.weight"].shape[0]
        c2 = tensors["conv2.weight"].shape[0]
        expected = {
            "conv1": ((c1, 3, 3, 3), (c1,)),
            "conv2": ((c2, c1, 3, 3), (c2,)),
            "head": ((1, c2, 3, 3), (1,)),
        }
        self.p: dict[str, ad.Var] = {}
        self._names: list[str] = []
        for name in self.NAMES:
            wname, bname = f"{name}.weight", f"{name}.bias"
            if wname not in tensors or bname not in tensors:
                raise ShapeMismatch(f"discriminator missing tensors for {name!r}")
            w = np.asarray(tensors[wname], dtype=np.float64)
            b = np.asarray(tensors[bname], dtype=np.float64)
            ws, bs = expected[name]
            if w.shape != ws or b.shape != bs:
                raise ShapeMismatch(
                    f"discriminator tensor {name!r}: {w.shape}/{b.shape} != {ws}/{bs}"
                )
            self.p[wname] = ad.param(w.copy())
            self.p[bname] = ad.param(b.copy())
            self._names.extend([wname, bname])

    @classmethod
    def random(cls, seed: int = 0, base_channels: int = 8) -> "Discriminator":
        rng = np.random.default_rng(seed)
        c1, c2 = base_channels, 2 * base_channels
        return cls(
            {
                "conv1.weight": _he_conv(rng, c1, 3),
                "conv1.bias": np.zeros(c1),
                "conv2.weight": _he_conv(rng, c2, c1),
                "conv2.bias": np.zeros(c2),
                "head.weight": _he_conv(rng, 1, c2),
                "head.bias": np.zeros(1),
            }
        )

    def params(self) -> list[ad.Var]:
        return [self.p[n] for n in self._names]

    def to_tensors(self) -> dict[str, np.ndarray]:
        return {n: self.p[n].value.copy() for n in self._names}

    def forward(self, x: ad.Var) -> ad.Var:
        h = ad.leaky_relu(ad.conv3x3(x, self.p["conv1.weight"], self.p["conv1.bias"], stride=2))
        h = ad.leaky_relu(ad.conv3x3(h, self.p["conv2.weight"], self.p["conv2.bias"], stride=2))
        return ad.conv3x3(h, self.p["head.weight"], self.p["head.bias"])


# ---------------------------------------------------------------------------
# losses


def adversarial_loss(scores: np.ndarray, target_real: bool) -> float:
    """Least-squares adversarial loss: mean((scores - t)^2), t = 1 real / 0 fake."""
    scores = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    t = 1.0 if target_real else 0.0
    d = scores - t
    return float((d * d).mean())


def cycle_consistency_loss(x: ImageTensor, x_rec: ImageTensor) -> float:
    """Mean absolute elementwise difference (L1)."""
    if x.data.shape != x_rec.data.shape:
        raise ShapeMismatch(f"shapes differ: {x.data.shape} vs {x_rec.data.shape}")
    return float(np.abs(x.data.astype(np.float64) - x_rec.data.astype(np.float64)).mean())


def cyclegan_total_loss(adv: float, cycle: float, cycle_weight: float) -> float:
    return adv + cycle_weight * cycle


# ---------------------------------------------------------------------------
# training and translation


def _to_signed(img: ImageTensor) -> np.ndarray:
    return (img.data.astype(np.float64) * 2.0 - 1.0).transpose(2, 0, 1)


def _from_signed(arr: np.ndarray) -> ImageTensor:
    data = np.clip((arr.transpose(1, 2, 0) + 1.0) * 0.5, 0.0, 1.0)
    return ImageTensor.from_array(data, Range.UNIT)


def translate(g: Generator, img: ImageTensor) -> ImageTensor:
    """Translate a UNIT-range image through a frozen generator."""
    if img.range is not Range.UNIT:
        raise ShapeMismatch("translate expects a UNIT-range image")
    out = g.forward(ad.const(_to_signed(img)))
    return _from_signed(out.value)


def train_cyclegan(
    x_domain: DomainDataset,
    y_domain: DomainDataset,
    cfg: CycleGanConfig,
    models: tuple[Generator, Generator, Discriminator, Discriminator] | None = None,
) -> tuple[Generator, Generator, TrainReport]:
    """Adversarial + cycle-consistency training of the generator pair.

    ``models`` can inject pre-built (G, F, D_X, D_Y); by default they are
    seeded from cfg.seed. Returns (G: X->Y, F: Y->X, report).
    """
    if models is not None:
        g, f, d_x, d_y = models
    else:
        g = Generator.random(cfg.seed, cfg.residual_blocks, cfg.base_channels)
        f = Generator.random(cfg.seed + 1, cfg.residual_blocks, cfg.base_channels)
        d_x = Discriminator.random(cfg.seed + 2, cfg.base_channels)
        d_y = Discriminator.random(cfg.seed + 3, cfg.base_channels)

    report = TrainReport()
    if cfg.steps == 0:
        return g, f, report

    gen_params = list(g.params()) + list(f.params())
    disc_params = list(d_x.params()) + list(d_y.params())
    opt_gen = ad.Adam(gen_params, lr=cfg.step_size)
    opt_disc = ad.Adam(disc_params, lr=cfg.step_size)

    xs = [_to_signed(img) for img in x_domain.images]
    ys = [_to_signed(img) for img in y_domain.images]
    rng = np.random.default_rng(cfg.seed)

    for it in range(cfg.steps):
        xi = int(rng.integers(len(xs)))
        yi = int(rng.integers(len(ys)))
        x = ad.const(xs[xi])
        y = ad.const(ys[yi])

        # generator update (discriminators frozen for this pass)
        ad.zero_grads(gen_params)
        fake_y = g.forward(x)
        fake_x = f.forward(y)
        rec_x = f.forward(fake_y)
        rec_y = g.forward(fake_x)
        adv_g = ad.mean_sq_const(d_y.forward(fake_y), 1.0)
        adv_f = ad.mean_sq_const(d_x.forward(fake_x), 1.0)
        cyc = ad.add(ad.mean_abs_diff(rec_x, x), ad.mean_abs_diff(rec_y, y))
        gen_total = ad.weighted_sum([(1.0, adv_g), (1.0, adv_f), (cfg.cycle_weight, cyc)])
        values = TrainStep(
            adv_G=adv_g.item(),
            adv_F=adv_f.item(),
            disc_X=0.0,
            disc_Y=0.0,
            cycle=cyc.item(),
            total=gen_total.item(),
        )
        if not np.isfinite(values.total):
            raise DivergedLoss(f"generator loss diverged at step {it}", iteration=it)
        ad.backward(gen_total)
        ad.zero_grads(disc_params)  # discard grads leaked through frozen critics
        opt_gen.step()

        # discriminator update on detached fakes
        ad.zero_grads(disc_params)
        fake_y_c = fake_y.detach()
        fake_x_c = fake_x.detach()
        d_y_loss = ad.weighted_sum(
            [
                (0.5, ad.mean_sq_const(d_y.forward(y), 1.0)),
                (0.5, ad.mean_sq_const(d_y.forward(fake_y_c), 0.0)),
            ]
        )
        d_x_loss = ad.weighted_sum(
            [
                (0.5, ad.mean_sq_const(d_x.forward(x), 1.0)),
                (0.5, ad.mean_sq_const(d_x.forward(fake_x_c), 0.0)),
            ]
        )
        values.disc_X = d_x_loss.item()
        values.disc_Y = d_y_loss.item()
        if not (np.isfinite(values.disc_X) and np.isfinite(values.disc_Y)):
            raise DivergedLoss(f"discriminator loss diverged at step {it}", iteration=it)
        ad.backward(d_y_loss)
        ad.backward(d_x_loss)
        opt_disc.step()

        report.steps.append(values)

    return g, f, report

"""Feed-forward arbitrary style transfer.

A style-prediction network maps a style image to a vector of per-channel
normalization parameters (the style embedding); the transfer network
stylizes a content image by applying those parameters at its conditional
instance-normalization sites. Embeddings are plain vectors, so styles can
be blended by weighted average and stylization strength is an
interpolation between the content image's and the style image's
embeddings.

Loss conventions (per layer ``i`` of the frozen feature backbone):

* style term:   ``||G[f_i(x)] - G[f_i(s)]||_F^2 / n_i``
* content term: ``||f_j(x) - f_j(c)||_2^2 / n_j``

with ``n`` the layer's ``channels * spatial`` count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .backbone import BackboneModel, FeatureMap, GramMatrix, gram_matrix, extract_features
from .errors import (
    DimensionMismatch,
    DivergedLoss,
    InvalidStrength,
    InvalidWeights,
    RangeMismatch,
    ShapeMismatch,
)
from .images import ImageTensor, Range, normalize

INSTANCE_NORM_EPS = 1e-5


@dataclass
class StyleEmbedding:
    """Concatenated per-channel (scale, shift) pairs across all sites."""

    dimension: int
    scales: np.ndarray  # gamma, shape (dimension,)
    shifts: np.ndarray  # beta, shape (dimension,)

    def __post_init__(self):
        self.scales = np.asarray(self.scales, dtype=np.float64).reshape(self.dimension)
        self.shifts = np.asarray(self.shifts, dtype=np.float64).reshape(self.dimension)
        if not (np.isfinite(self.scales).all() and np.isfinite(self.shifts).all()):
            raise ValueError("style embedding contains NaN or infinity")


@dataclass
class BlendSpec:
    entries: list[tuple[StyleEmbedding, float]]


def blend_embeddings(spec: BlendSpec) -> StyleEmbedding:
    """Coordinate-wise convex combination of embeddings."""
    if not spec.entries:
        raise InvalidWeights("blend spec has no entries")
    dim = spec.entries[0][0].dimension
    for emb, _ in spec.entries:
        if emb.dimension != dim:
            raise DimensionMismatch(
                f"embedding dimensions differ: {emb.dimension} vs {dim}"
            )
    weights = [w for _, w in spec.entries]
    if any(w < 0 for w in weights):
        raise InvalidWeights("blend weights must be >= 0")
    if abs(sum(weights) - 1.0) > 1e-6:
        raise InvalidWeights(f"blend weights must sum to 1, got {sum(weights)}")
    scales = np.zeros(dim, dtype=np.float64)
    shifts = np.zeros(dim, dtype=np.float64)
    for emb, w in spec.entries:
        scales += w * emb.scales
        shifts += w * emb.shifts
    return StyleEmbedding(dimension=dim, scales=scales, shifts=shifts)


def strength_blend(
    content_emb: StyleEmbedding, style_emb: StyleEmbedding, alpha: float
) -> StyleEmbedding:
    """Interpolate alpha * style + (1 - alpha) * content, alpha in [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidStrength(f"strength must be in [0, 1], got {alpha}")
    if content_emb.dimension != style_emb.dimension:
        raise DimensionMismatch(
            f"embedding dimensions differ: {content_emb.dimension} vs {style_emb.dimension}"
        )
    if alpha == 0.0:
        return StyleEmbedding(
            content_emb.dimension, content_emb.scales.copy(), content_emb.shifts.copy()
        )
    if alpha == 1.0:
        return StyleEmbedding(
            style_emb.dimension, style_emb.scales.copy(), style_emb.shifts.copy()
        )
    return blend_embeddings(
        BlendSpec(entries=[(style_emb, alpha), (content_emb, 1.0 - alpha)])
    )


def _he_conv(rng: np.random.Generator, out_ch: int, in_ch: int, scale: float = 1.0) -> np.ndarray:
    std = scale * np.sqrt(2.0 / (in_ch * 9))
    return rng.normal(0.0, std, size=(out_ch, in_ch, 3, 3))


class StylePredictor:
    """Small CNN: two stride-2 convs, global average pooling, affine head.

    The head emits ``2 * D`` values: scales first, shifts second. With the
    default initialization the predicted modulation starts near identity
    (scales ~1, shifts ~0).
    """

    PARAM_NAMES = ("conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
                   "head.weight", "head.bias")

    def __init__(self, tensors: dict[str, np.ndarray]):
        for name in self.PARAM_NAMES:
            if name not in tensors:
                raise ShapeMismatch(f"style predictor missing tensor {name!r}")
        c1 = tensors["conv1.weight"].shape[0]
        c2 = tensors["conv2.weight"].shape[0]
        out_dim = tensors["head.weight"].shape[0]
        expected = {
            "conv1.weight": (c1, 3, 3, 3),
            "conv1.bias": (c1,),
            "conv2.weight": (c2, c1, 3, 3),
            "conv2.bias": (c2,),
            "head.weight": (out_dim, c2),
            "head.bias": (out_dim,),
        }
        if out_dim % 2 != 0:
            raise ShapeMismatch("predictor head must emit an even number of outputs")
        self.p = {}
        for name, shape in expected.items():
            arr = np.asarray(tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeMismatch(f"predictor tensor {name!r}: {arr.shape} != {shape}")
            self.p[name] = ad.param(arr.copy())
        self.embedding_dimension = out_dim // 2

    @classmethod
    def random(
        cls, embedding_dimension: int, seed: int = 0, channels: tuple[int, int] = (8, 16)
    ) -> "StylePredictor":
        rng = np.random.default_rng(seed)
        c1, c2 = channels
        d = embedding_dimension
        head_bias = np.concatenate([np.ones(d), np.zeros(d)])
        return cls(
            {
                "conv1.weight": _he_conv(rng, c1, 3),
                "conv1.bias": np.zeros(c1),
                "conv2.weight": _he_conv(rng, c2, c1),
                "conv2.bias": np.zeros(c2),
                "head.weight": rng.normal(0.0, 0.01, size=(2 * d, c2)),
                "head.bias": head_bias,
            }
        )

    def params(self) -> list[ad.Var]:
        return [self.p[name] for name in self.PARAM_NAMES]

    def to_tensors(self) -> dict[str, np.ndarray]:
        return {name: self.p[name].value.copy() for name in self.PARAM_NAMES}

    def forward_graph(self, x: ad.Var) -> ad.Var:
        h = ad.relu(ad.conv3x3(x, self.p["conv1.weight"], self.p["conv1.bias"], stride=2))
        h = ad.relu(ad.conv3x3(h, self.p["conv2.weight"], self.p["conv2.bias"], stride=2))
        pooled = ad.global_avg_pool(h)
        return ad.affine(pooled, self.p["head.weight"], self.p["head.bias"])


class TransferNetwork:
    """Encoder/decoder stylization net with conditional normalization sites.

    Site order (channel counts sum to the embedding dimension D):

    0. after the entry conv          (c1 channels)
    1. after the stride-2 encoder    (c2 channels)
    2. after the middle conv         (c2 channels)
    3. after the upsampling decoder  (c1 channels)

    The head is a sigmoid, so outputs are UNIT range with the content's
    spatial size (odd sides are handled by cropping after upsampling).
    """

    PARAM_NAMES = ("enc1.weight", "enc1.bias", "enc2.weight", "enc2.bias",
                   "mid.weight", "mid.bias", "dec1.weight", "dec1.bias",
                   "head.weight", "head.bias")

    def __init__(self, tensors: dict[str, np.ndarray]):
        for name in self.PARAM_NAMES:
            if name not in tensors:
                raise ShapeMismatch(f"transfer network missing tensor {name!r}")
        c1 = tensors["enc1.weight"].shape[0]
        c2 = tensors["enc2.weight"].shape[0]
        expected = {
            "enc1.weight": (c1, 3, 3, 3),
            "enc1.bias": (c1,),
            "enc2.weight": (c2, c1, 3, 3),
            "enc2.bias": (c2,),
            "mid.weight": (c2, c2, 3, 3),
            "mid.bias": (c2,),
            "dec1.weight": (c1, c2, 3, 3),
            "dec1.bias": (c1,),
            "head.weight": (3, c1, 3, 3),
            "head.bias": (3,),
        }
        self.p = {}
        for name, shape in expected.items():
            arr = np.asarray(tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeMismatch(f"transfer tensor {name!r}: {arr.shape} != {shape}")
            self.p[name] = ad.param(arr.copy())
        self.channels = (c1, c2)
        self.site_order = [c1, c2, c2, c1]

    @classmethod
    def random(cls, seed: int = 0, channels: tuple[int, int] = (8, 16)) -> "TransferNetwork":
        rng = np.random.default_rng(seed)
        c1, c2 = channels
        return cls(
            {
                "enc1.weight": _he_conv(rng, c1, 3),
                "enc1.bias": np.zeros(c1),
                "enc2.weight": _he_conv(rng, c2, c1),
                "enc2.bias": np.zeros(c2),
                "mid.weight": _he_conv(rng, c2, c2),
                "mid.bias": np.zeros(c2),
                "dec1.weight": _he_conv(rng, c1, c2),
                "dec1.bias": np.zeros(c1),
                "head.weight": _he_conv(rng, 3, c1, scale=0.5),
                "head.bias": np.zeros(3),
            }
        )

    @property
    def embedding_dimension(self) -> int:
        return sum(self.site_order)

    def params(self) -> list[ad.Var]:
        return [self.p[name] for name in self.PARAM_NAMES]

    def to_tensors(self) -> dict[str, np.ndarray]:
        return {name: self.p[name].value.copy() for name in self.PARAM_NAMES}

    def _site_slices(self) -> list[tuple[int, int]]:
        slices = []
        off = 0
        for c in self.site_order:
            slices.append((off, off + c))
            off += c
        return slices

    def forward_graph(
        self,
        x: ad.Var,
        gamma: ad.Var,
        beta: ad.Var,
        record_sites: bool = False,
    ) -> ad.Var | tuple[ad.Var, list[ad.Var]]:
        """Stylize a UNIT-range (3,H,W) Var conditioned on (gamma, beta)."""
        if gamma.value.shape != (self.embedding_dimension,):
            raise DimensionMismatch(
                f"embedding dimension {gamma.value.shape[0]} != {self.embedding_dimension}"
            )
        slices = self._site_slices()
        sites: list[ad.Var] = []

        def cin(h: ad.Var, site: int) -> ad.Var:
            lo, hi = slices[site]
            g = ad.vslice(gamma, lo, hi)
            b = ad.vslice(beta, lo, hi)
            out = ad.instance_norm(h, g, b, eps=INSTANCE_NORM_EPS)
            if record_sites:
                sites.append(out)
            return out

        _, h_in, w_in = x.value.shape
        h = ad.conv3x3(x, self.p["enc1.weight"], self.p["enc1.bias"], stride=1)
        h = ad.relu(cin(h, 0))
        h = ad.conv3x3(h, self.p["enc2.weight"], self.p["enc2.bias"], stride=2)
        h = ad.relu(cin(h, 1))
        h = ad.conv3x3(h, self.p["mid.weight"], self.p["mid.bias"], stride=1)
        h = ad.relu(cin(h, 2))
        h = ad.upsample2x(h)
        h = ad.conv3x3(h, self.p["dec1.weight"], self.p["dec1.bias"], stride=1)
        h = ad.crop2d(h, h_in, w_in)
        h = ad.relu(cin(h, 3))
        h = ad.conv3x3(h, self.p["head.weight"], self.p["head.bias"], stride=1)
        out = ad.sigmoid(h)
        if record_sites:
            return out, sites
        return out


def predict_style(predictor: StylePredictor, style: ImageTensor) -> StyleEmbedding:
    """Map a UNIT-range style image to its normalization-parameter embedding."""
    if style.range is not Range.UNIT:
        raise RangeMismatch("predict_style expects a UNIT-range image")
    x = ad.const(style.data.astype(np.float64).transpose(2, 0, 1))
    vec = predictor.forward_graph(x).value
    d = predictor.embedding_dimension
    return StyleEmbedding(dimension=d, scales=vec[:d], shifts=vec[d:])


def stylize(net: TransferNetwork, content: ImageTensor, emb: StyleEmbedding) -> ImageTensor:
    """Stylize a UNIT-range content image under a style embedding."""
    if content.range is not Range.UNIT:
        raise RangeMismatch("stylize expects a UNIT-range image")
    if emb.dimension != net.embedding_dimension:
        raise DimensionMismatch(
            f"embedding dimension {emb.dimension} != network {net.embedding_dimension}"
        )
    x = ad.const(content.data.astype(np.float64).transpose(2, 0, 1))
    out = net.forward_graph(x, ad.const(emb.scales), ad.const(emb.shifts))
    data = np.clip(out.value.transpose(1, 2, 0), 0.0, 1.0)
    return ImageTensor.from_array(data, Range.UNIT)


def stylize_site_activations(
    net: TransferNetwork, content: ImageTensor, emb: StyleEmbedding
) -> list[np.ndarray]:
    """Post-normalization activations at each conditional site (diagnostics)."""
    x = ad.const(content.data.astype(np.float64).transpose(2, 0, 1))
    _, sites = net.forward_graph(
        x, ad.const(emb.scales), ad.const(emb.shifts), record_sites=True
    )
    return [s.value for s in sites]


# ---------------------------------------------------------------------------
# losses


def ast_layer_style_term(gx: GramMatrix, gs: GramMatrix, n: int) -> float:
    """Squared Frobenius distance between Grams, scaled by 1/n."""
    if gx.data.shape != gs.data.shape:
        raise ShapeMismatch(f"gram shapes differ: {gx.data.shape} vs {gs.data.shape}")
    if n <= 0:
        raise ValueError("n must be > 0")
    d = gx.data - gs.data
    return float((d * d).sum()) / n


def ast_layer_content_term(fx: FeatureMap, fc: FeatureMap, n: int) -> float:
    """Squared Euclidean distance between flattened maps, scaled by 1/n."""
    if fx.data.shape != fc.data.shape:
        raise ShapeMismatch(f"feature shapes differ: {fx.data.shape} vs {fc.data.shape}")
    if n <= 0:
        raise ValueError("n must be > 0")
    d = fx.data - fc.data
    return float((d * d).sum()) / n


def _as_backbone(img: ImageTensor, model: BackboneModel) -> ImageTensor:
    if img.range is Range.BACKBONE:
        return img
    return normalize(img, model.input_spec)


def ast_style_loss(
    x: ImageTensor,
    s: ImageTensor,
    model: BackboneModel,
    style_layers: tuple[str, ...],
    n: dict[str, int] | None = None,
) -> float:
    """Sum over style layers of 1/n_i * ||G[f_i(x)] - G[f_i(s)]||_F^2.

    ``n`` defaults to each layer's channels * spatial count (taken from x).
    UNIT inputs are normalized with the model's input spec first.
    """
    fx = extract_features(model, _as_backbone(x, model), set(style_layers))
    fs = extract_features(model, _as_backbone(s, model), set(style_layers))
    total = 0.0
    for lid in style_layers:
        n_i = n[lid] if n is not None else fx[lid].channels * fx[lid].spatial
        total += ast_layer_style_term(gram_matrix(fx[lid]), gram_matrix(fs[lid]), n_i)
    return total


def ast_content_loss(
    x: ImageTensor,
    c: ImageTensor,
    model: BackboneModel,
    content_layers: tuple[str, ...],
    n: dict[str, int] | None = None,
) -> float:
    """Sum over content layers of 1/n_j * ||f_j(x) - f_j(c)||_2^2."""
    fx = extract_features(model, _as_backbone(x, model), set(content_layers))
    fc = extract_features(model, _as_backbone(c, model), set(content_layers))
    total = 0.0
    for lid in content_layers:
        n_j = n[lid] if n is not None else fx[lid].channels * fx[lid].spatial
        total += ast_layer_content_term(fx[lid], fc[lid], n_j)
    return total


# ---------------------------------------------------------------------------
# training


@dataclass
class AstTrainConfig:
    steps: int
    style_loss_weight: float = 50.0
    content_loss_weight: float = 1.0
    step_size: float = 0.01
    seed: int = 0
    content_layers: tuple[str, ...] = ("conv3",)
    style_layers: tuple[str, ...] = ("conv1", "conv2", "conv3")

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


@dataclass
class AstTrainStep:
    content: float
    style: float
    total: float


@dataclass
class AstTrace:
    steps: list[AstTrainStep] = field(default_factory=list)


def _pair_targets(
    content: ImageTensor,
    style: ImageTensor,
    model: BackboneModel,
    cfg: AstTrainConfig,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray], dict[str, int]]:
    spec = model.input_spec
    want = set(cfg.content_layers) | set(cfg.style_layers)
    c_norm = normalize(content, spec).data.astype(np.float64).transpose(2, 0, 1)
    s_norm = normalize(style, spec).data.astype(np.float64).transpose(2, 0, 1)
    c_maps = model.forward_arrays(c_norm, want)
    s_maps = model.forward_arrays(s_norm, set(cfg.style_layers))
    content_targets = {lid: c_maps[lid] for lid in cfg.content_layers}
    style_grams = {}
    for lid in cfg.style_layers:
        f = s_maps[lid].reshape(s_maps[lid].shape[0], -1)
        style_grams[lid] = f @ f.T
    # n comes from the stylized image's maps, which share the content
    # image's spatial dims
    n_by_layer = {lid: m.shape[0] * m.shape[1] * m.shape[2] for lid, m in c_maps.items()}
    return content_targets, style_grams, n_by_layer


def ast_objective_graph(
    predictor: StylePredictor,
    net: TransferNetwork,
    content: ImageTensor,
    style: ImageTensor,
    model: BackboneModel,
    cfg: AstTrainConfig,
) -> tuple[ad.Var, AstTrainStep]:
    """Single-pair training objective as an autodiff graph.

    Exposed separately so gradient checks can evaluate the exact training
    loss.
    """
    targets, grams, n_by = _pair_targets(content, style, model, cfg)
    return _objective_with_n(predictor, net, content, style, model, cfg, targets, grams, n_by)


def train_ast(
    predictor: StylePredictor,
    net: TransferNetwork,
    content_set: list[ImageTensor],
    style_set: list[ImageTensor],
    model: BackboneModel,
    cfg: AstTrainConfig,
) -> tuple[StylePredictor, TransferNetwork, AstTrace]:
    """Jointly train predictor and transfer net on the combined loss.

    Deterministic given the seed: image pairs are drawn from a seeded
    generator and parameters follow Adam updates with fixed step size.
    """
    if not content_set or not style_set:
        raise ValueError("content_set and style_set must be non-empty")
    trace = AstTrace()
    if cfg.steps == 0:
        return predictor, net, trace

    spec = model.input_spec
    want = set(cfg.content_layers) | set(cfg.style_layers)
    content_cache: dict[int, tuple[dict[str, np.ndarray], dict[str, int]]] = {}
    style_cache: dict[int, dict[str, np.ndarray]] = {}

    def content_entry(i: int):
        if i not in content_cache:
            arr = normalize(content_set[i], spec).data.astype(np.float64).transpose(2, 0, 1)
            maps = model.forward_arrays(arr, want)
            targets = {lid: maps[lid] for lid in cfg.content_layers}
            n_by = {lid: m.shape[0] * m.shape[1] * m.shape[2] for lid, m in maps.items()}
            content_cache[i] = (targets, n_by)
        return content_cache[i]

    def style_entry(i: int):
        if i not in style_cache:
            arr = normalize(style_set[i], spec).data.astype(np.float64).transpose(2, 0, 1)
            maps = model.forward_arrays(arr, set(cfg.style_layers))
            grams = {}
            for lid, m in maps.items():
                f = m.reshape(m.shape[0], -1)
                grams[lid] = f @ f.T
            style_cache[i] = grams
        return style_cache[i]

    rng = np.random.default_rng(cfg.seed)
    opt = ad.Adam(predictor.params() + net.params(), lr=cfg.step_size)

    for it in range(cfg.steps):
        ci = int(rng.integers(len(content_set)))
        si = int(rng.integers(len(style_set)))
        targets, n_by = content_entry(ci)
        grams = style_entry(si)

        opt.zero_grad()
        total_v, step = _objective_with_n(
            predictor, net, content_set[ci], style_set[si], model, cfg, targets, grams, n_by
        )
        if not np.isfinite(step.total):
            raise DivergedLoss(f"training loss diverged at step {it}", iteration=it)
        ad.backward(total_v)
        opt.step()
        trace.steps.append(step)

    return predictor, net, trace


def _objective_with_n(
    predictor: StylePredictor,
    net: TransferNetwork,
    content: ImageTensor,
    style: ImageTensor,
    model: BackboneModel,
    cfg: AstTrainConfig,
    content_targets: dict[str, np.ndarray],
    style_grams: dict[str, np.ndarray],
    n_by_layer: dict[str, int],
) -> tuple[ad.Var, AstTrainStep]:
    spec = model.input_spec
    want = set(cfg.content_layers) | set(cfg.style_layers)

    sv = ad.const(style.data.astype(np.float64).transpose(2, 0, 1))
    emb_vec = predictor.forward_graph(sv)
    d = predictor.embedding_dimension
    gamma = ad.vslice(emb_vec, 0, d)
    beta = ad.vslice(emb_vec, d, 2 * d)

    cv = ad.const(content.data.astype(np.float64).transpose(2, 0, 1))
    y = net.forward_graph(cv, gamma, beta)
    means = spec.channel_means.astype(np.float64)
    stds = spec.channel_stds.astype(np.float64)
    y_norm = ad.channel_affine(y, 1.0 / stds, -means / stds)
    feats = model.forward_graph(y_norm, want)

    content_terms = []
    for lid in cfg.content_layers:
        diff = ad.sub(feats[lid], ad.const(content_targets[lid]))
        content_terms.append((1.0 / n_by_layer[lid], ad.sum_sq(diff)))
    content_v = ad.weighted_sum(content_terms)

    style_terms = []
    for lid in cfg.style_layers:
        gx = ad.gram(feats[lid])
        diff = ad.sub(gx, ad.const(style_grams[lid]))
        style_terms.append((1.0 / n_by_layer[lid], ad.sum_sq(diff)))
    style_v = ad.weighted_sum(style_terms)

    total_v = ad.weighted_sum(
        [(cfg.content_loss_weight, content_v), (cfg.style_loss_weight, style_v)]
    )
    step = AstTrainStep(content=content_v.item(), style=style_v.item(), total=total_v.item())
    return total_v, step


def evaluate_ast_objective(
    predictor: StylePredictor,
    net: TransferNetwork,
    content_set: list[ImageTensor],
    style_set: list[ImageTensor],
    model: BackboneModel,
    cfg: AstTrainConfig,
) -> float:
    """Mean combined loss over the full content x style grid (no updates)."""
    total = 0.0
    count = 0
    for c in content_set:
        for s in style_set:
            _, step = ast_objective_graph(predictor, net, c, s, model, cfg)
            total += step.total
            count += 1
    return total / count

"""Command-line access to the transfer pipelines and the service.

Subcommands: stylize, train, serve, models. Seeds default to 0 so runs
are reproducible by default. stdout carries JSON (or JSON lines for
training traces); diagnostics and errors go to stderr. Exit codes:

    0  success
    2  bad flags / usage (argparse)
    3  unreadable, corrupt or empty input
    4  diverged loss
    5  port in use
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import socket
import sys
import time
from pathlib import Path

from . import checkpoints
from .archive import WeightArchive
from .ast_transfer import (
    AstTrainConfig,
    StylePredictor,
    TransferNetwork,
    predict_style,
    strength_blend,
    stylize,
    train_ast,
)
from .backbone import random_backbone, tiny_backbone_spec
from .cyclegan import CycleGanConfig, DomainDataset, Generator, train_cyclegan, translate
from .errors import CorruptArchive, DivergedLoss, EmptyDataset, LiveStyleError
from .gatys import GatysConfig, InitMode, run_gatys
from .images import (
    ImageFormat,
    ImageTensor,
    decode_image,
    encode_image,
    normalize,
    resize,
    to_unit_tensor,
)
from .service import (
    ServiceConfig,
    TransferService,
    build_default_registry,
    create_app,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_DIVERGED = 4
EXIT_PORT = 5


def _fail(code: int, message: str) -> int:
    print(json.dumps({"error": message}), file=sys.stderr)
    return code


def _load_image(path: str, side: int) -> ImageTensor:
    data = Path(path).read_bytes()
    return resize(to_unit_tensor(decode_image(data)), side)


def _load_dir(path: str, side: int) -> list[ImageTensor]:
    d = Path(path)
    if not d.is_dir():
        raise EmptyDataset(f"{path} is not a directory")
    images = []
    for p in sorted(d.iterdir()):
        if p.suffix.lower() in (".png", ".jpg", ".jpeg"):
            images.append(_load_image(str(p), side))
    if not images:
        raise EmptyDataset(f"no decodable images in {path}")
    return images


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="livestyle", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_sty = sub.add_parser("stylize", help="run one stylization job")
    p_sty.add_argument("--model", required=True, choices=("gatys", "ast", "cyclegan"))
    p_sty.add_argument("--content", required=True, help="content image path (PNG/JPEG)")
    p_sty.add_argument("--style", help="style image path (gatys/ast)")
    p_sty.add_argument("--out", required=True, help="output PNG path")
    p_sty.add_argument("--iterations", type=int, default=20)
    p_sty.add_argument("--strength", type=float, default=1.0, help="AST strength in [0,1]")
    p_sty.add_argument("--style-weight", type=float, default=1e3)
    p_sty.add_argument("--checkpoint", help="weight archive path")
    p_sty.add_argument("--seed", type=int, default=0)
    p_sty.add_argument("--size", type=int, default=128, help="square processing size")

    p_tr = sub.add_parser("train", help="train ast or cyclegan models")
    p_tr.add_argument("--model", required=True, choices=("ast", "cyclegan"))
    p_tr.add_argument("--data-x", required=True, help="content / domain-X image directory")
    p_tr.add_argument("--data-y", help="style / domain-Y image directory")
    p_tr.add_argument("--steps", type=int, required=True)
    p_tr.add_argument("--out", required=True, help="checkpoint archive path")
    p_tr.add_argument("--seed", type=int, default=0)
    p_tr.add_argument("--size", type=int, default=32)
    p_tr.add_argument("--step-size", type=float, default=None)
    p_tr.add_argument("--cycle-weight", type=float, default=10.0)

    p_srv = sub.add_parser("serve", help="run the HTTP inference service")
    p_srv.add_argument("--port", type=int, default=None)
    p_srv.add_argument("--workers", type=int, default=None)
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--static-dir", default=None, help="frontend bundle to serve at /")

    sub.add_parser("models", help="print the default model registry as JSON")
    return parser


def _cmd_stylize(args: argparse.Namespace) -> int:
    try:
        content = _load_image(args.content, args.size)
        style = _load_image(args.style, args.size) if args.style else None
    except (OSError, LiveStyleError) as exc:
        return _fail(EXIT_INPUT, f"cannot read input: {exc}")
    if args.model in ("gatys", "ast") and style is None:
        return _fail(EXIT_INPUT, f"model {args.model} requires --style")

    archive = None
    if args.checkpoint:
        try:
            archive = WeightArchive.load(args.checkpoint)
        except (OSError, CorruptArchive) as exc:
            return _fail(EXIT_INPUT, f"cannot read checkpoint: {exc}")

    t0 = time.perf_counter()
    try:
        if args.model == "gatys":
            backbone = (
                checkpoints.load_backbone_checkpoint(archive)
                if archive is not None
                else random_backbone(tiny_backbone_spec(), seed=0)
            )
            spec = backbone.input_spec
            style_layers = tuple(
                s.layer_id for s in backbone.layer_specs if s.kind == "conv3x3"
            )
            cfg = GatysConfig(
                content_layers=(style_layers[-1],),
                style_layers=style_layers,
                layer_weights=tuple(1.0 / len(style_layers) for _ in style_layers),
                style_weight=args.style_weight,
                iterations=args.iterations,
                init=InitMode.CONTENT_COPY,
                seed=args.seed,
            )
            out, trace = run_gatys(
                normalize(content, spec), normalize(style, spec), backbone, cfg
            )
            report = dataclasses.asdict(trace.losses[-1])
        elif args.model == "ast":
            if archive is not None:
                predictor, net = checkpoints.load_ast_checkpoint(archive)
            else:
                net = TransferNetwork.random(seed=1)
                predictor = StylePredictor.random(net.embedding_dimension, seed=2)
            style_emb = predict_style(predictor, style)
            if args.strength < 1.0:
                emb = strength_blend(predict_style(predictor, content), style_emb, args.strength)
            else:
                emb = style_emb
            out = stylize(net, content, emb)
            report = None
        else:
            generator = (
                checkpoints.load_cyclegan_generator(archive)
                if archive is not None
                else Generator.near_identity(seed=3)
            )
            out = translate(generator, content)
            report = None
    except DivergedLoss as exc:
        return _fail(EXIT_DIVERGED, str(exc))
    except LiveStyleError as exc:
        return _fail(EXIT_INPUT, str(exc))

    Path(args.out).write_bytes(encode_image(out, ImageFormat.PNG))
    elapsed = time.perf_counter() - t0
    doc = {"model": args.model, "out": args.out, "elapsed_s": round(elapsed, 4)}
    if report is not None:
        doc["final_loss"] = report
    print(json.dumps(doc))
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    try:
        data_x = _load_dir(args.data_x, args.size)
        if args.data_y is None:
            return _fail(EXIT_INPUT, f"--data-y is required for {args.model}")
        data_y = _load_dir(args.data_y, args.size)
    except (OSError, LiveStyleError) as exc:
        return _fail(EXIT_INPUT, f"cannot read training data: {exc}")

    try:
        if args.model == "ast":
            backbone = random_backbone(tiny_backbone_spec(), seed=0)
            net = TransferNetwork.random(seed=args.seed + 1)
            predictor = StylePredictor.random(net.embedding_dimension, seed=args.seed + 2)
            cfg = AstTrainConfig(
                steps=args.steps,
                seed=args.seed,
                **({"step_size": args.step_size} if args.step_size is not None else {}),
            )
            _, _, trace = train_ast(predictor, net, data_x, data_y, backbone, cfg)
            for i, step in enumerate(trace.steps):
                print(json.dumps({"step": i, **dataclasses.asdict(step)}))
            checkpoints.save_ast_checkpoint(predictor, net).save(args.out)
        else:
            cfg = CycleGanConfig(
                steps=args.steps,
                seed=args.seed,
                image_side=args.size,
                cycle_weight=args.cycle_weight,
                **({"step_size": args.step_size} if args.step_size is not None else {}),
            )
            g, f, report = train_cyclegan(
                DomainDataset(data_x), DomainDataset(data_y), cfg
            )
            for i, step in enumerate(report.steps):
                print(json.dumps({"step": i, **dataclasses.asdict(step)}))
            checkpoints.save_cyclegan_checkpoint(g, f).save(args.out)
    except DivergedLoss as exc:
        return _fail(EXIT_DIVERGED, str(exc))
    except LiveStyleError as exc:
        return _fail(EXIT_INPUT, str(exc))
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import os

    import uvicorn

    port = args.port if args.port is not None else int(os.environ.get("LIVESTYLE_PORT", 8000))
    config = ServiceConfig.from_env()
    if args.workers is not None:
        config = dataclasses.replace(config, worker_count=args.workers)

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, port))
    except OSError:
        return _fail(EXIT_PORT, f"port {port} is already in use")
    finally:
        probe.close()

    service = TransferService(config)
    app = create_app(service, static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=port, log_level="info")
    return EXIT_OK


def _cmd_models() -> int:
    print(json.dumps(build_default_registry().list_docs(), indent=2))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.subcommand == "stylize":
        return _cmd_stylize(args)
    if args.subcommand == "train":
        return _cmd_train(args)
    if args.subcommand == "serve":
        return _cmd_serve(args)
    return _cmd_models()


if __name__ == "__main__":
    sys.exit(main())

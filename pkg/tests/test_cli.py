import json
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from livestyle.archive import WeightArchive
from livestyle.ast_transfer import StylePredictor, TransferNetwork

from conftest import make_png_bytes


def _cli(*args, **kw):
    return subprocess.run(
        [sys.executable, "-m", "livestyle", *args],
        capture_output=True,
        text=True,
        timeout=240,
        **kw,
    )


@pytest.fixture()
def workdir(tmp_path):
    (tmp_path / "content.png").write_bytes(make_png_bytes(1, side=32))
    (tmp_path / "style.png").write_bytes(make_png_bytes(2, side=32))
    for d in ("dx", "dy"):
        (tmp_path / d).mkdir()
        for i in range(3):
            (tmp_path / d / f"{i}.png").write_bytes(make_png_bytes(100 + i, side=32))
    return tmp_path


class TestStylize:
    def test_style_equals_content_is_near_identity(self, workdir):
        out = workdir / "out.png"
        r = _cli(
            "stylize", "--model", "gatys",
            "--content", str(workdir / "content.png"),
            "--style", str(workdir / "content.png"),
            "--out", str(out), "--iterations", "1", "--size", "32",
        )
        assert r.returncode == 0, r.stderr
        doc = json.loads(r.stdout)
        assert doc["final_loss"]["total"] == pytest.approx(0.0, abs=1e-9)
        got = np.asarray(Image.open(out), dtype=np.int16)
        want = np.asarray(Image.open(workdir / "content.png"), dtype=np.int16)
        assert np.abs(got - want).max() <= 1

    def test_missing_content_flag_exits_2(self):
        r = _cli("stylize", "--model", "gatys", "--out", "x.png")
        assert r.returncode == 2
        assert "usage" in r.stderr.lower()

    def test_unreadable_input_exits_3(self, workdir):
        r = _cli(
            "stylize", "--model", "cyclegan",
            "--content", str(workdir / "missing.png"),
            "--out", str(workdir / "o.png"),
        )
        assert r.returncode == 3
        err = json.loads(r.stderr.strip())
        assert "error" in err

    def test_corrupt_checkpoint_exits_3(self, workdir):
        bad = workdir / "bad.zip"
        bad.write_bytes(b"junk")
        r = _cli(
            "stylize", "--model", "ast",
            "--content", str(workdir / "content.png"),
            "--style", str(workdir / "style.png"),
            "--out", str(workdir / "o.png"),
            "--checkpoint", str(bad),
        )
        assert r.returncode == 3

    def test_missing_style_for_ast_exits_3(self, workdir):
        r = _cli(
            "stylize", "--model", "ast",
            "--content", str(workdir / "content.png"),
            "--out", str(workdir / "o.png"),
        )
        assert r.returncode == 3

    @pytest.mark.parametrize("model,needs_style", [("gatys", True), ("ast", True), ("cyclegan", False)])
    def test_deterministic_outputs(self, workdir, model, needs_style):
        def run(out_name):
            args = [
                "stylize", "--model", model,
                "--content", str(workdir / "content.png"),
                "--out", str(workdir / out_name),
                "--seed", "0", "--size", "32", "--iterations", "2",
            ]
            if needs_style:
                args += ["--style", str(workdir / "style.png")]
            r = _cli(*args)
            assert r.returncode == 0, r.stderr
            return (workdir / out_name).read_bytes()

        assert run("a.png") == run("b.png")

    def test_stdout_is_json(self, workdir):
        r = _cli(
            "stylize", "--model", "cyclegan",
            "--content", str(workdir / "content.png"),
            "--out", str(workdir / "o.png"), "--size", "32",
        )
        doc = json.loads(r.stdout)
        assert doc["model"] == "cyclegan"
        assert "elapsed_s" in doc


class TestTrain:
    def test_zero_steps_checkpoint_equals_init(self, workdir):
        out = workdir / "ast.zip"
        r = _cli(
            "train", "--model", "ast",
            "--data-x", str(workdir / "dx"), "--data-y", str(workdir / "dy"),
            "--steps", "0", "--out", str(out), "--seed", "0", "--size", "32",
        )
        assert r.returncode == 0, r.stderr
        assert r.stdout.strip() == ""  # no trace lines
        archive = WeightArchive.load(out)
        net = TransferNetwork.random(seed=1)
        predictor = StylePredictor.random(net.embedding_dimension, seed=2)
        for name, arr in net.to_tensors().items():
            assert np.allclose(archive.tensor(f"transfer.{name}"), arr.astype(np.float32))
        for name, arr in predictor.to_tensors().items():
            assert np.allclose(archive.tensor(f"predictor.{name}"), arr.astype(np.float32))

    def test_trace_is_json_lines(self, workdir):
        r = _cli(
            "train", "--model", "cyclegan",
            "--data-x", str(workdir / "dx"), "--data-y", str(workdir / "dy"),
            "--steps", "3", "--out", str(workdir / "cg.zip"), "--size", "32",
        )
        assert r.returncode == 0, r.stderr
        lines = r.stdout.strip().splitlines()
        assert len(lines) == 3
        docs = [json.loads(line) for line in lines]
        assert all({"step", "cycle", "total"} <= set(d) for d in docs)

    def test_empty_dataset_exits_3(self, workdir):
        empty = workdir / "empty"
        empty.mkdir()
        r = _cli(
            "train", "--model", "ast",
            "--data-x", str(empty), "--data-y", str(workdir / "dy"),
            "--steps", "1", "--out", str(workdir / "a.zip"),
        )
        assert r.returncode == 3

    def test_trained_checkpoint_usable_by_stylize(self, workdir):
        out = workdir / "cg.zip"
        r = _cli(
            "train", "--model", "cyclegan",
            "--data-x", str(workdir / "dx"), "--data-y", str(workdir / "dy"),
            "--steps", "2", "--out", str(out), "--size", "32",
        )
        assert r.returncode == 0
        r2 = _cli(
            "stylize", "--model", "cyclegan",
            "--content", str(workdir / "content.png"),
            "--out", str(workdir / "styled.png"),
            "--checkpoint", str(out), "--size", "32",
        )
        assert r2.returncode == 0, r2.stderr
        assert Image.open(workdir / "styled.png").size == (32, 32)


class TestModels:
    def test_lists_three_models(self):
        r = _cli("models")
        assert r.returncode == 0
        docs = json.loads(r.stdout)
        assert [d["name"] for d in docs] == ["ast", "cyclegan", "gatys"]


class TestServe:
    def test_occupied_port_exits_5(self):
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
        sock.listen(1)
        try:
            r = _cli("serve", "--port", str(port))
            assert r.returncode == 5
            assert "error" in json.loads(r.stderr.strip())
        finally:
            sock.close()

    @pytest.mark.slow
    def test_sigint_drains_running_job_and_exits_cleanly(self, workdir, tmp_path):
        import httpx

        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
        sock.close()

        proc = subprocess.Popen(
            [sys.executable, "-m", "livestyle", "serve", "--port", str(port), "--workers", "1"],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
        try:
            base = f"http://127.0.0.1:{port}"
            deadline = time.time() + 30
            while time.time() < deadline:
                try:
                    if httpx.get(f"{base}/api/v1/health", timeout=1.0).status_code == 200:
                        break
                except Exception:
                    time.sleep(0.2)
            else:
                raise TimeoutError("service did not come up")

            files = {
                "content": ("c.png", make_png_bytes(7), "image/png"),
                "style": ("s.png", make_png_bytes(8), "image/png"),
            }
            r = httpx.post(
                f"{base}/api/v1/jobs",
                files=files,
                data={"model": "gatys", "params": json.dumps({"iterations": 120})},
                timeout=10.0,
            )
            assert r.status_code == 202

            time.sleep(0.5)  # let the worker pick it up
            proc.send_signal(signal.SIGINT)
            proc.wait(timeout=120)
            assert proc.returncode == 0
        finally:
            if proc.poll() is None:
                proc.kill()

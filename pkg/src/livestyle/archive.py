"""Portable tensor container used to persist every model in the engine.

On disk an archive is a ZIP holding ``manifest.json`` (an array of
``{name, shape, dtype: "f32", file}``) plus one raw little-endian float32
blob file per tensor, row-major, exactly ``4 * prod(shape)`` bytes. In
memory the tensors live in a single contiguous blob addressed by manifest
offsets. Archives are written with fixed ZIP timestamps so identical
tensors produce identical bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptArchive, MissingTensor

_FIXED_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class ManifestEntry:
    tensor_name: str
    shape: tuple[int, ...]
    dtype: str  # always "f32"
    blob_offset: int

    @property
    def nbytes(self) -> int:
        return 4 * int(np.prod(self.shape, dtype=np.int64))


class WeightArchive:
    """Immutable named-tensor container backed by one contiguous blob."""

    def __init__(self, manifest: list[ManifestEntry], blob: bytes):
        self.manifest = list(manifest)
        self.blob = bytes(blob)
        self._index = {e.tensor_name: e for e in self.manifest}
        self._validate()

    def _validate(self) -> None:
        names = [e.tensor_name for e in self.manifest]
        if len(set(names)) != len(names):
            raise CorruptArchive("duplicate tensor names in manifest")
        for e in self.manifest:
            if e.dtype != "f32":
                raise CorruptArchive(f"unsupported dtype {e.dtype!r} for {e.tensor_name!r}")
            if e.blob_offset < 0 or e.blob_offset + e.nbytes > len(self.blob):
                raise CorruptArchive(
                    f"tensor {e.tensor_name!r} does not fit in blob "
                    f"(offset {e.blob_offset}, {e.nbytes} bytes, blob {len(self.blob)})"
                )

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray]) -> "WeightArchive":
        manifest: list[ManifestEntry] = []
        parts: list[bytes] = []
        offset = 0
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            raw = arr.tobytes()
            manifest.append(ManifestEntry(name, tuple(int(s) for s in arr.shape), "f32", offset))
            parts.append(raw)
            offset += len(raw)
        return cls(manifest, b"".join(parts))

    @property
    def names(self) -> list[str]:
        return [e.tensor_name for e in self.manifest]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def tensor(self, name: str) -> np.ndarray:
        """Return a float32 copy of the named tensor."""
        entry = self._index.get(name)
        if entry is None:
            raise MissingTensor(name)
        raw = self.blob[entry.blob_offset : entry.blob_offset + entry.nbytes]
        return np.frombuffer(raw, dtype="<f4").reshape(entry.shape).copy()

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: self.tensor(name) for name in self.names}

    def save(self, path: str | Path) -> None:
        """Write the ZIP container (deterministic bytes for identical tensors)."""
        Path(path).write_bytes(self.save_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "WeightArchive":
        """Read a ZIP container back, validating the manifest."""
        path = Path(path)
        try:
            with zipfile.ZipFile(path, "r") as zf:
                try:
                    manifest_doc = json.loads(zf.read("manifest.json").decode("utf-8"))
                except KeyError as exc:
                    raise CorruptArchive("archive has no manifest.json") from exc
                manifest: list[ManifestEntry] = []
                parts: list[bytes] = []
                offset = 0
                for item in manifest_doc:
                    name = item["name"]
                    shape = tuple(int(s) for s in item["shape"])
                    dtype = item.get("dtype", "f32")
                    raw = zf.read(item["file"])
                    expected = 4 * int(np.prod(shape, dtype=np.int64))
                    if len(raw) != expected:
                        raise CorruptArchive(
                            f"tensor {name!r}: blob is {len(raw)} bytes, expected {expected}"
                        )
                    manifest.append(ManifestEntry(name, shape, dtype, offset))
                    parts.append(raw)
                    offset += len(raw)
        except zipfile.BadZipFile as exc:
            raise CorruptArchive(f"not a ZIP archive: {path}") from exc
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise CorruptArchive(f"malformed manifest in {path}: {exc}") from exc
        return cls(manifest, b"".join(parts))

    def save_bytes(self) -> bytes:
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
            for i, entry in enumerate(self.manifest):
                fname = f"tensors/{i:05d}.bin"
                raw = self.blob[entry.blob_offset : entry.blob_offset + entry.nbytes]
                zf.writestr(zipfile.ZipInfo(fname, date_time=_FIXED_ZIP_DATE), raw)
            doc = [
                {
                    "name": e.tensor_name,
                    "shape": list(e.shape),
                    "dtype": "f32",
                    "file": f"tensors/{i:05d}.bin",
                }
                for i, e in enumerate(self.manifest)
            ]
            zf.writestr(
                zipfile.ZipInfo("manifest.json", date_time=_FIXED_ZIP_DATE),
                json.dumps(doc, indent=1).encode("utf-8"),
            )
        return buf.getvalue()

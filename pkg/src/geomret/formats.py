"""On-disk formats: DFV1 feature files, TSV manifests and SIDX indices.

All multi-byte integers and floats are little-endian.

DFV1::

    b"DFV1" | u32 n_rows | u32 n_cols | f32 values[n_rows * n_cols]

SIDX (version 1)::

    b"SIDX" | u16 version | u8 mode | u32 dim | u32 entry_count
    per entry:
        u16 id_len | id (utf-8) | u16 cat_len | category (utf-8)
        f64 mean[dim] | f64 cov[dim * dim]
        if mode == gmm: u32 k | f64 weights[k] | f64 means[k*dim] | f64 variances[k*dim]
    u64 checksum = sum of all preceding bytes mod 2**64

The build configuration is kept next to the index in ``<path>.config.json``.
"""

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import CorruptIndex, DuplicateItem, FormatError
from .signature import GaussianSignature, GmmModel

__all__ = [
    "read_features",
    "write_features",
    "read_manifest",
    "write_manifest",
    "encode_index",
    "decode_index",
    "save_index",
    "load_index",
    "config_path",
    "SIDX_VERSION",
]

DFV1_MAGIC = b"DFV1"
SIDX_MAGIC = b"SIDX"
SIDX_VERSION = 1
MODE_CODES = {"sample": 0, "gmm": 1, "smt": 2}
MODE_NAMES = {v: k for k, v in MODE_CODES.items()}
MODE_SOURCE = {"sample": "sample", "gmm": "gmm-moment", "smt": "smt"}

_U16 = 0xFFFF
_U32 = 0xFFFFFFFF


def _atomic_write(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- DFV1 -------------------------------------------------------------------

def write_features(path, x) -> None:
    """Write a feature matrix as DFV1 (values stored as float32)."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise FormatError(f"feature matrix must be 2-D, got shape {x.shape}")
    n, d = x.shape
    if n > _U32 or d > _U32:
        raise FormatError("feature matrix too large for DFV1")
    with np.errstate(over="ignore"):
        v = np.ascontiguousarray(x, dtype="<f4")
    bad = np.argwhere(~np.isfinite(v))
    if bad.size:
        raise FormatError(f"non-finite value at row {bad[0][0]}, column {bad[0][1]}")
    _atomic_write(path, DFV1_MAGIC + struct.pack("<II", n, d) + v.tobytes())


def read_features(path) -> np.ndarray:
    """Read a DFV1 file into a float64 array of shape ``(n_rows, n_cols)``."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != DFV1_MAGIC:
        raise FormatError(f"{path}: not a DFV1 file")
    n, d = struct.unpack_from("<II", raw, 4)
    expected = 12 + 4 * n * d
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {n}x{d}, found {len(raw)}")
    x = np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, d)
    bad = np.argwhere(~np.isfinite(x))
    if bad.size:
        raise FormatError(f"{path}: non-finite value at row {bad[0][0]}, column {bad[0][1]}")
    return x.astype(np.float64)


# -- manifest ---------------------------------------------------------------

def read_manifest(path, check_files: bool = True) -> List[Tuple[str, str, Path]]:
    """Parse ``item_id<TAB>category<TAB>feature_path`` records.

    Blank lines and lines starting with ``#`` are skipped. Relative paths
    are resolved against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    records, seen = [], set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        item_id, category, fpath = parts
        if item_id in seen:
            raise DuplicateItem(item_id)
        seen.add(item_id)
        fpath = Path(fpath)
        if not fpath.is_absolute():
            fpath = base / fpath
        if check_files and not fpath.is_file():
            raise FormatError(f"{path}:{lineno}: feature file not found: {fpath}")
        records.append((item_id, category, fpath))
    return records


def write_manifest(path, records) -> None:
    lines = [f"{item_id}\t{category}\t{fpath}" for item_id, category, fpath in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- SIDX -------------------------------------------------------------------

def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    if len(b) > _U16:
        raise FormatError(f"string too long for SIDX ({len(b)} bytes): {s[:40]!r}...")
    return struct.pack("<H", len(b)) + b


def encode_index(index) -> bytes:
    """Serialize a :class:`~geomret.retrieval.SignatureIndex` to SIDX bytes."""
    if index.mode not in MODE_CODES:
        raise FormatError(f"unknown index mode {index.mode!r}")
    if index.dim > _U32 or len(index.entries) > _U32:
        raise FormatError("index dimension or entry count exceeds u32")
    parts = [SIDX_MAGIC, struct.pack("<HBII", SIDX_VERSION, MODE_CODES[index.mode], index.dim, len(index.entries))]
    for e in index.entries:
        parts.append(_pack_str(e.item_id))
        parts.append(_pack_str(e.category))
        parts.append(np.ascontiguousarray(e.signature.mean, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(e.signature.cov, dtype="<f8").tobytes())
        if index.mode == "gmm":
            g = e.gmm
            parts.append(struct.pack("<I", g.k))
            for arr in (g.weights, g.means, g.variances):
                parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    checksum = int(np.frombuffer(body, dtype=np.uint8).sum(dtype=np.uint64))
    return body + struct.pack("<Q", checksum & 0xFFFFFFFFFFFFFFFF)


class _Reader:
    def __init__(self, buf, end):
        self.buf, self.pos, self.end = buf, 0, end

    def take(self, n):
        if self.pos + n > self.end:
            raise CorruptIndex(f"truncated index: need {n} bytes at offset {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f64(self, count):
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def text(self):
        (n,) = self.unpack("<H")
        try:
            return bytes(self.take(n)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptIndex(f"invalid utf-8 string at offset {self.pos - n}") from exc


def decode_index(raw: bytes, build_config=None):
    """Parse SIDX bytes into a :class:`~geomret.retrieval.SignatureIndex`."""
    from .retrieval import IndexEntry, SignatureIndex

    if len(raw) < 4 or raw[:4] != SIDX_MAGIC:
        raise CorruptIndex("bad magic: not a SIDX index")
    if len(raw) < 6:
        raise CorruptIndex("truncated index header")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != SIDX_VERSION:
        raise CorruptIndex(f"unsupported SIDX version {version} (expected {SIDX_VERSION})")
    if len(raw) < 15 + 8:
        raise CorruptIndex("truncated index header")
    (stored,) = struct.unpack_from("<Q", raw, len(raw) - 8)
    actual = int(np.frombuffer(raw, dtype=np.uint8, count=len(raw) - 8).sum(dtype=np.uint64))
    if stored != actual:
        raise CorruptIndex(f"checksum mismatch (stored {stored}, computed {actual}); file truncated or damaged")

    rd = _Reader(memoryview(raw), len(raw) - 8)
    rd.take(6)
    mode_code, dim, count = rd.unpack("<BII")
    if mode_code not in MODE_NAMES:
        raise CorruptIndex(f"unknown mode byte {mode_code}")
    mode = MODE_NAMES[mode_code]
    if dim == 0:
        raise CorruptIndex("dimension is zero")
    per_entry = 4 + 8 * (dim + dim * dim)
    if count * per_entry > rd.end - rd.pos:
        raise CorruptIndex(f"{count} entries of dim {dim} do not fit in {len(raw)} bytes")
    entries = []
    for _ in range(count):
        item_id = rd.text()
        category = rd.text()
        mean = rd.f64(dim)
        cov = rd.f64(dim * dim).reshape(dim, dim)
        gmm = None
        if mode == "gmm":
            (k,) = rd.unpack("<I")
            if k == 0 or 8 * k * (1 + 2 * dim) > rd.end - rd.pos:
                raise CorruptIndex(f"implausible component count {k}")
            w = rd.f64(k)
            mu = rd.f64(k * dim).reshape(k, dim)
            var = rd.f64(k * dim).reshape(k, dim)
            try:
                gmm = GmmModel(w, mu, var)
            except ValueError as exc:
                raise CorruptIndex(f"invalid mixture for {item_id!r}: {exc}") from exc
        sig = GaussianSignature(mean, cov, MODE_SOURCE[mode])
        entries.append(IndexEntry(item_id, category, sig, gmm))
    if rd.pos != rd.end:
        raise CorruptIndex(f"{rd.end - rd.pos} unexpected trailing bytes")
    return SignatureIndex(tuple(entries), dim, mode, dict(build_config or {}))


def config_path(path) -> Path:
    return Path(str(path) + ".config.json")


def save_index(index, path) -> None:
    """Write ``index`` to ``path`` (SIDX) and its build config alongside."""
    data = encode_index(index)
    _atomic_write(path, data)
    _atomic_write(config_path(path), json.dumps(index.build_config, sort_keys=True, indent=1).encode("utf-8"))


def load_index(path):
    """Read an index written by :func:`save_index`.

    A missing config sidecar yields an empty ``build_config``.
    """
    raw = Path(path).read_bytes()
    cfg_file = config_path(path)
    cfg = {}
    if cfg_file.is_file():
        try:
            cfg = json.loads(cfg_file.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorruptIndex(f"{cfg_file}: unreadable build config: {exc}") from exc
    return decode_index(raw, cfg)

"""On-disk formats: binary patch bundles, JSON codebooks/models, TSV manifests.

Bundle layout (little-endian)::

    offset  size  field
    0       4     magic  b"VSBN"
    4       4     version (uint32, currently 1)
    8       8     N  (uint64)  rows
    16      4     D  (uint32)  descriptor width
    20      4     K  (uint32)  probability width
    24      4*N*D float32 descriptors, row-major
    ...     4*N*K float32 probabilities, row-major

Encoded feature sets reuse the bundle with K = 0, one row per image, plus a
sidecar manifest (``<path>.tsv``) naming the image of each row.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import fields, is_dataclass

import numpy as np

from .codebook import SemanticCodebook
from .core import PatchManifest, validate_bundle
from .errors import (
    BadMagic,
    InvariantViolation,
    IoError,
    NonFinite,
    ParseError,
    TruncatedFile,
    UnsupportedVersion,
)

MAGIC = b"VSBN"
VERSION = 1
_HEADER = struct.Struct("<4sIQII")
HEADER_SIZE = _HEADER.size  # 24
_LE_F32 = np.dtype("<f4")


def atomic_write(path, payload: bytes):
    """Write via a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------- bundles

def bundle_bytes(desc, prob) -> bytes:
    desc = np.asarray(desc, dtype=np.float64)
    prob = np.asarray(prob, dtype=np.float64)
    if desc.ndim != 2 or prob.ndim != 2 or desc.shape[0] != prob.shape[0]:
        raise InvariantViolation("bundle needs N x D descriptors and N x K probabilities")
    if not (np.all(np.isfinite(desc)) and np.all(np.isfinite(prob))):
        raise NonFinite("refusing to write NaN or Inf")
    n, d = desc.shape
    k = prob.shape[1]
    header = _HEADER.pack(MAGIC, VERSION, n, d, k)
    return (header + desc.astype(_LE_F32).tobytes(order="C")
            + prob.astype(_LE_F32).tobytes(order="C"))


def write_bundle(desc, prob, path):
    atomic_write(path, bundle_bytes(desc, prob))


def parse_bundle(raw: bytes):
    if len(raw) < HEADER_SIZE:
        raise TruncatedFile(f"file has {len(raw)} bytes, header needs {HEADER_SIZE}")
    magic, version, n, d, k = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"bundle version {version} is not supported")
    expected = HEADER_SIZE + 4 * n * (d + k)
    if len(raw) != expected:
        raise TruncatedFile(f"file has {len(raw)} bytes, header implies {expected}")
    body = np.frombuffer(raw, dtype=_LE_F32, offset=HEADER_SIZE)
    desc = body[: n * d].reshape(n, d).astype(np.float64)
    prob = body[n * d:].reshape(n, k).astype(np.float64)
    return desc, prob


def read_bundle(path, validate: bool = False):
    """Load ``(descriptors, probabilities)`` widened to float64.

    With ``validate`` the probabilities pass through :func:`validate_bundle`
    (float32 rounding is renormalized away).
    """
    desc, prob = parse_bundle(_read_bytes(path))
    if validate:
        prob = validate_bundle(desc, prob).prob
    return desc, prob


# ---------------------------------------------------------------- manifests

def manifest_text(manifest: PatchManifest) -> str:
    lines = []
    labels = manifest.labels or (None,) * len(manifest)
    for iid, (start, end), lab in zip(manifest.image_ids, manifest.patch_ranges, labels):
        if any(ch in iid for ch in "\t\r\n"):
            raise InvariantViolation(f"image id {iid!r} contains a tab or newline")
        lines.append(f"{iid}\t{start}\t{end}\t{'-' if lab is None else lab}\n")
    return "".join(lines)


def write_manifest(manifest: PatchManifest, path):
    atomic_write(path, manifest_text(manifest).encode("utf-8"))


def parse_manifest(text: str) -> PatchManifest:
    ids, ranges, labels = [], [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(f"manifest line {lineno}: expected 4 tab-separated fields")
        iid, start, end, lab = parts
        try:
            ranges.append((int(start), int(end)))
            labels.append(None if lab.strip() == "-" else int(lab))
        except ValueError as exc:
            raise ParseError(f"manifest line {lineno}: {exc}") from exc
        ids.append(iid)
    try:
        return PatchManifest(tuple(ids), tuple(ranges), tuple(labels))
    except ValueError as exc:
        raise InvariantViolation(str(exc)) from exc


def read_manifest(path) -> PatchManifest:
    return parse_manifest(_read_bytes(path).decode("utf-8"))


def parse_split(text: str):
    """Image ids (and labels when present) of a train/test split list.

    One image per line; the id is the first tab-separated field.  A label is
    taken from the last field of a 2- or 4-field line ("-" means none), so a
    full manifest, or any slice of one, also works as a split list.
    """
    ids, labels = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        lab = parts[-1].strip() if len(parts) in (2, 4) else "-"
        try:
            labels.append(None if lab == "-" else int(lab))
        except ValueError as exc:
            raise ParseError(f"split line {lineno}: {exc}") from exc
        ids.append(parts[0])
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate image ids in split list")
    return ids, labels


def read_split(path):
    return parse_split(_read_bytes(path).decode("utf-8"))


# ---------------------------------------------------------------- JSON helpers

def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, list):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


def dumps(obj) -> str:
    """Deterministic JSON; floats use Python's shortest round-trip repr."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(obj, path):
    atomic_write(path, dumps(obj).encode("utf-8"))


def read_json(path) -> dict:
    try:
        return json.loads(_read_bytes(path).decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def dataclass_to_dict(obj, kind: str) -> dict:
    out = {"format": kind}
    for f in fields(obj):
        out[f.name] = getattr(obj, f.name)
    return out


def dict_to_dataclass(cls, doc: dict, kind: str):
    if doc.get("format") != kind:
        raise ParseError(f"expected a {kind!r} document, got {doc.get('format')!r}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in doc:
            continue
        value = doc[f.name]
        if isinstance(value, list) and f.name not in ("trace", "selected_ids"):
            value = np.asarray(value, dtype=np.float64)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ParseError(f"malformed {kind} document: {exc}") from exc


# ---------------------------------------------------------------- codebooks

CODEBOOK_KIND = "vsad-semantic-codebook"


def codebook_dict(cb: SemanticCodebook) -> dict:
    return {
        "format": CODEBOOK_KIND,
        "K": cb.K,
        "D": cb.D,
        "pi": cb.pi,
        "mu": cb.mu,
        "sigma": cb.sigma,
        "mass": cb.mass,
        "active": [bool(a) for a in cb.active],
        "total_mass": cb.total_mass,
        "variance_floor": cb.variance_floor,
        "provenance": cb.provenance,
        "selected_ids": None if cb.selected_ids is None else list(cb.selected_ids),
    }


def check_codebook(cb: SemanticCodebook, variance_floor=None):
    floor = cb.variance_floor if variance_floor is None else variance_floor
    pi_active = float(np.sum(cb.pi[cb.active]))
    if abs(pi_active - 1.0) > 1e-6:
        raise InvariantViolation(f"active priors sum to {pi_active}, not 1")
    if np.any(cb.sigma < np.sqrt(floor) * (1.0 - 1e-12)):
        raise InvariantViolation(f"sigma entries below the floor sqrt({floor})")
    if cb.pi.min() < 0 or cb.mass.min() < 0:
        raise InvariantViolation("negative prior or mass")


def codebook_from_dict(doc: dict, variance_floor=None) -> SemanticCodebook:
    if doc.get("format") != CODEBOOK_KIND:
        raise ParseError(f"not a semantic codebook document (format={doc.get('format')!r})")
    try:
        K, D = int(doc["K"]), int(doc["D"])
        arr = lambda key, shape: np.asarray(doc[key], dtype=np.float64).reshape(shape)  # noqa: E731
        cb = SemanticCodebook(
            pi=arr("pi", (K,)),
            mu=arr("mu", (K, D)),
            sigma=arr("sigma", (K, D)),
            mass=arr("mass", (K,)),
            active=np.asarray(doc["active"], dtype=bool).reshape(K),
            total_mass=float(doc["total_mass"]),
            variance_floor=float(doc.get("variance_floor", 1e-8)),
            provenance=str(doc.get("provenance", "")),
            selected_ids=None if doc.get("selected_ids") is None
            else tuple(int(i) for i in doc["selected_ids"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"malformed codebook: {exc}") from exc
    check_codebook(cb, variance_floor)
    return cb


def write_codebook(cb: SemanticCodebook, path):
    check_codebook(cb)
    write_json(codebook_dict(cb), path)


def read_codebook(path, variance_floor=None) -> SemanticCodebook:
    """Load and check a codebook; ``variance_floor`` overrides the stored floor."""
    return codebook_from_dict(read_json(path), variance_floor)


# ---------------------------------------------------------------- other models

def write_model(obj, path, kind: str):
    if not is_dataclass(obj):
        raise TypeError("expected a dataclass instance")
    write_json(dataclass_to_dict(obj, kind), path)


def read_model(cls, path, kind: str):
    return dict_to_dataclass(cls, read_json(path), kind)


# ---------------------------------------------------------------- selections

def write_selection(selected, path):
    atomic_write(path, "".join(f"{int(i)}\n" for i in selected).encode("ascii"))


def read_selection(path) -> tuple:
    text = _read_bytes(path).decode("ascii", errors="replace")
    try:
        return tuple(int(line) for line in text.split() if line)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- feature sets

def write_features(ids, matrix, path, labels=None):
    """Feature rows as a K=0 bundle plus ``<path>.tsv`` row manifest."""
    matrix = np.asarray(matrix, dtype=np.float64)
    write_bundle(matrix, np.zeros((matrix.shape[0], 0)), path)
    write_manifest(PatchManifest.from_counts(ids, [1] * len(ids), labels),
                   os.fspath(path) + ".tsv")


def read_features(path, manifest_path=None):
    """Return ``(row_manifest, matrix)`` for a feature set."""
    matrix, _ = read_bundle(path)
    manifest = read_manifest(manifest_path or os.fspath(path) + ".tsv")
    if len(manifest) != matrix.shape[0]:
        raise InvariantViolation("feature manifest and feature rows disagree")
    return manifest, matrix

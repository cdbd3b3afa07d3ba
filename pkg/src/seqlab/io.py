"""File formats: CoNLL datasets, key=value configs, JSON reports, and
versioned, checksummed model files.

All writers go through a write-temp-then-rename step so partial files never
appear, and every format is byte-deterministic for fixed inputs.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import crf, features
from .core import LabelSeq, Sentence, TagSet, bio_start_mask, bio_transition_mask
from .model import FORMAT_VERSION, CrfModel

MODEL_MAGIC = "SEQLAB-MODEL"

RawSentence = Tuple[Sentence, Tuple[str, ...]]


# ---------------------------------------------------------------------------
# atomic writers


def write_bytes_atomic(data: bytes, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_text_atomic(text: str, path: str | Path) -> None:
    write_bytes_atomic(text.encode("utf-8"), path)


def write_json(obj, path: str | Path) -> None:
    write_text_atomic(json.dumps(obj, indent=2, sort_keys=True) + "\n", path)


# ---------------------------------------------------------------------------
# CoNLL (token<TAB>label, blank line between sentences)


def read_conll_raw(path: str | Path) -> List[RawSentence]:
    """Parse a two-column CoNLL file into (tokens, label strings) pairs."""
    out: List[RawSentence] = []
    tokens: List[str] = []
    labels: List[str] = []

    def flush(lineno: int) -> None:
        nonlocal tokens, labels
        if not tokens:
            return
        out.append((tuple(tokens), tuple(labels)))
        tokens, labels = [], []

    with open(path, encoding="utf-8") as fh:
        lineno = 0
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                flush(lineno)
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ValueError(f"{path}:{lineno}: expected 'token<TAB>label', got {line!r}")
            token, label = parts
            if any(c.isspace() for c in token):
                raise ValueError(f"{path}:{lineno}: token contains whitespace: {token!r}")
            if label != "O" and not (len(label) > 2 and label[0] in "BI" and label[1] == "-"):
                raise ValueError(f"{path}:{lineno}: unknown label {label!r}")
            tokens.append(token)
            labels.append(label)
        flush(lineno)
    if not out:
        raise ValueError(f"{path}: no sentences found")
    return out


def infer_tagset(*datasets: Sequence[RawSentence]) -> TagSet:
    """Entity types in order of first appearance across the given files."""
    types: List[str] = []
    for data in datasets:
        for _, labels in data:
            for name in labels:
                if name != "O" and name[2:] not in types:
                    types.append(name[2:])
    return TagSet(tuple(types))


def raw_to_ids(data: Sequence[RawSentence], tags: TagSet) -> List[Tuple[Sentence, LabelSeq]]:
    out = []
    for tokens, labels in data:
        try:
            ids = tuple(tags.parse_label(name) for name in labels)
        except ValueError as exc:
            raise ValueError(f"sentence {' '.join(tokens)!r}: {exc}") from None
        out.append((tokens, ids))
    return out


def read_conll(path: str | Path, tags: TagSet) -> List[Tuple[Sentence, LabelSeq]]:
    return raw_to_ids(read_conll_raw(path), tags)


def render_conll(rows: Sequence[Tuple[Sentence, Sequence[int]]], tags: TagSet) -> str:
    chunks: List[str] = []
    for tokens, labels in rows:
        if len(tokens) != len(labels):
            raise ValueError("tokens and labels must align")
        lines = [f"{t}\t{tags.name_of(l)}" for t, l in zip(tokens, labels)]
        chunks.append("\n".join(lines) + "\n\n")
    return "".join(chunks)


def write_conll(rows: Sequence[Tuple[Sentence, Sequence[int]]], tags: TagSet, path: str | Path) -> None:
    write_text_atomic(render_conll(rows, tags), path)


# ---------------------------------------------------------------------------
# flat key=value config files


def load_config(path: str | Path) -> Dict[str, str]:
    out: Dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            if not key:
                raise ValueError(f"{path}:{lineno}: empty key")
            out[key] = value
    return out


def config_hash(mapping: Dict[str, str]) -> str:
    canonical = "\n".join(f"{k}={mapping[k]}" for k in sorted(mapping))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# model files: magic line, JSON header line, raw float64 payload


def _model_arrays(m: CrfModel) -> List[Tuple[str, np.ndarray]]:
    return [
        ("weights", m.encoder.weights),
        ("trans", m.transitions.trans),
        ("start", m.transitions.start),
        ("stop", m.transitions.stop),
    ]


def save_model(m: CrfModel, path: str | Path, provenance: Dict[str, object] | None = None) -> None:
    arrays = _model_arrays(m)
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    header = {
        "format_version": FORMAT_VERSION,
        "entity_types": list(m.tags.entity_types),
        "hash_dim": m.encoder.hash_dim,
        "template_version": m.encoder.template_version,
        "arrays": [[name, list(a.shape)] for name, a in arrays],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "provenance": provenance or {},
    }
    blob = (
        f"{MODEL_MAGIC} {FORMAT_VERSION}\n".encode("utf-8")
        + json.dumps(header, sort_keys=True).encode("utf-8")
        + b"\n"
        + payload
    )
    write_bytes_atomic(blob, path)


def _read_model_header(path: str | Path) -> Tuple[dict, bytes]:
    data = Path(path).read_bytes()
    first_nl = data.find(b"\n")
    second_nl = data.find(b"\n", first_nl + 1)
    if first_nl < 0 or second_nl < 0:
        raise ValueError(f"{path}: not a model file (missing header)")
    magic = data[:first_nl].decode("utf-8", errors="replace").split(" ")
    if len(magic) != 2 or magic[0] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file")
    if magic[1] != str(FORMAT_VERSION):
        raise ValueError(f"{path}: unsupported model format version {magic[1]} (expected {FORMAT_VERSION})")
    header = json.loads(data[first_nl + 1 : second_nl].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {header.get('format_version')}")
    return header, data[second_nl + 1 :]


def load_model(path: str | Path) -> CrfModel:
    header, payload = _read_model_header(path)
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise ValueError(f"{path}: checksum mismatch (file corrupt or truncated)")
    if header["template_version"] != features.TEMPLATE_VERSION:
        raise ValueError(
            f"{path}: feature template version {header['template_version']!r} "
            f"does not match this build ({features.TEMPLATE_VERSION!r})"
        )
    tags = TagSet(tuple(header["entity_types"]))
    offset = 0
    parts: Dict[str, np.ndarray] = {}
    for name, shape in header["arrays"]:
        size = int(np.prod(shape)) * 8
        raw = payload[offset : offset + size]
        if len(raw) != size:
            raise ValueError(f"{path}: payload truncated in array {name!r}")
        parts[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        offset += size
    enc = features.EncoderModel(parts["weights"], header["template_version"])
    table = crf.TransitionTable(
        parts["trans"], parts["start"], parts["stop"],
        bio_transition_mask(tags), bio_start_mask(tags),
    )
    return CrfModel(tags, enc, table)


def read_model_provenance(path: str | Path) -> dict:
    header, _ = _read_model_header(path)
    return header.get("provenance", {})

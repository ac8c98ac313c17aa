"""Corpora, vocabularies, tokenization and feature-sequence ingestion.

Text is normalized once on load (NFC, whitespace runs collapsed to single
spaces, stripped) so that client and server agree on character positions
when exchanging prefix feedback.
"""

from __future__ import annotations

import struct
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ["<pad>", "<bos>", "<eos>", "<unk>"]

# word-mode detokenization: no space before sentence punctuation
NO_SPACE_BEFORE = {".", ",", "!", "?"}

FEATURE_MAGIC = b"IKCF"
FEATURE_VERSION = 1


class CorpusError(ValueError):
    pass


class FeatureFileError(ValueError):
    pass


def normalize(text):
    """NFC-normalize, collapse whitespace runs, strip."""
    return " ".join(unicodedata.normalize("NFC", text).split())


@dataclass
class Vocabulary:
    """Bidirectional token<->id map; ids 0..3 are PAD/BOS/EOS/UNK."""

    surfaces: list = field(default_factory=lambda: list(RESERVED))

    def __post_init__(self):
        if self.surfaces[:4] != RESERVED:
            self.surfaces = RESERVED + list(self.surfaces)
        if len(set(self.surfaces)) != len(self.surfaces):
            raise CorpusError("vocabulary surfaces must be unique")
        self._index = {s: i for i, s in enumerate(self.surfaces)}

    def __len__(self):
        return len(self.surfaces)

    def id_of(self, surface):
        return self._index.get(surface, UNK)

    def surface_of(self, token_id):
        return self.surfaces[token_id]

    def real_ids(self):
        """Ids of corpus-derived tokens (reserved ids excluded)."""
        return range(4, len(self.surfaces))


def build_vocab(lines, mode, max_size=None):
    """Frequency-then-lexicographic vocabulary over normalized lines."""
    if not lines:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for line in lines:
        text = normalize(line)
        if mode == "char":
            counts.update(text)
        elif mode == "word":
            counts.update(text.split())
        else:
            raise ValueError(f"unknown tokenization mode: {mode}")
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    if max_size is not None:
        ordered = ordered[:max_size]
    return Vocabulary(ordered)


def tokenize(text, mode, vocab, add_eos=True):
    """Token ids for normalized ``text``; unknowns map to UNK."""
    text = normalize(text)
    if mode == "char":
        pieces = list(text)
    elif mode == "word":
        pieces = text.split()
    else:
        raise ValueError(f"unknown tokenization mode: {mode}")
    ids = [vocab.id_of(p) for p in pieces]
    if add_eos:
        ids.append(EOS)
    return ids


def surface_increment(current_surface, token_surface, mode):
    """Characters appended to a hypothesis surface by one more token."""
    if mode == "char":
        return token_surface
    if current_surface and token_surface not in NO_SPACE_BEFORE:
        return " " + token_surface
    return token_surface


def detokenize(token_ids, vocab, mode):
    """Surface string of a token sequence; specials contribute nothing."""
    out = ""
    for t in token_ids:
        if t in (PAD, BOS, EOS, UNK):
            continue
        out += surface_increment(out, vocab.surface_of(t), mode)
    return out


# ---------------------------------------------------------------------------
# corpora


@dataclass
class ParallelCorpus:
    """Aligned (source, target) pairs; sources are strings or feature paths."""

    sources: list
    targets: list

    def __post_init__(self):
        if len(self.sources) != len(self.targets):
            raise CorpusError(
                f"source/target count mismatch: {len(self.sources)} vs {len(self.targets)}"
            )
        if any(not t.strip() for t in self.targets):
            raise CorpusError("empty target segment in corpus")

    def __len__(self):
        return len(self.sources)

    def pairs(self):
        return zip(self.sources, self.targets)


def load_parallel_corpus(src_path, tgt_path):
    sources = Path(src_path).read_text(encoding="utf-8").splitlines()
    targets = Path(tgt_path).read_text(encoding="utf-8").splitlines()
    return ParallelCorpus(sources, targets)


# ---------------------------------------------------------------------------
# feature-sequence files (precomputed image/video representations)


def save_feature_sequence(path, matrix):
    m = np.ascontiguousarray(matrix, dtype="<f8")
    if m.ndim != 2:
        raise FeatureFileError(f"feature matrix must be 2-D, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, m.shape[0], m.shape[1]))
        fh.write(m.tobytes())


def load_feature_sequence(path):
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise FeatureFileError(f"{path}: bad magic {raw[:4]!r}, expected {FEATURE_MAGIC!r}")
    version, t, d = struct.unpack("<III", raw[4:16])
    if version != FEATURE_VERSION:
        raise FeatureFileError(f"{path}: unsupported version {version}")
    expected = 16 + t * d * 8
    if len(raw) != expected:
        raise FeatureFileError(
            f"{path}: payload length mismatch, expected {expected} bytes, got {len(raw)}"
        )
    m = np.frombuffer(raw[16:], dtype="<f8").reshape(t, d)
    if not np.all(np.isfinite(m)):
        raise FeatureFileError(f"{path}: non-finite feature values")
    return np.array(m)


# ---------------------------------------------------------------------------
# task manifests (key=value lines)


@dataclass
class TaskManifest:
    task_id: str
    name: str
    modality: str  # "text" or "features"
    checkpoint: str
    token_mode: str
    src_token_mode: str = None
    source_file: str = None
    target_file: str = None
    feature_dir: str = None
    media_dir: str = None
    beam_width: int = 5
    max_len: int = 120
    online_lr: float = 0.0
    base_dir: Path = None

    def resolve(self, rel):
        p = Path(rel)
        return p if p.is_absolute() else (self.base_dir or Path(".")) / p


def parse_task_manifest(path):
    kv = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CorpusError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        kv[key.strip()] = value.strip()
    try:
        return TaskManifest(
            task_id=kv["id"],
            name=kv.get("name", kv["id"]),
            modality=kv["modality"],
            checkpoint=kv["checkpoint"],
            token_mode=kv.get("token_mode", "word"),
            src_token_mode=kv.get("src_token_mode"),
            source_file=kv.get("source_file"),
            target_file=kv.get("target_file"),
            feature_dir=kv.get("feature_dir"),
            media_dir=kv.get("media_dir"),
            beam_width=int(kv.get("beam_width", 5)),
            max_len=int(kv.get("max_len", 120)),
            online_lr=float(kv.get("online_lr", 0.0)),
            base_dir=Path(path).parent,
        )
    except KeyError as exc:
        raise CorpusError(f"{path}: missing manifest key {exc}") from exc

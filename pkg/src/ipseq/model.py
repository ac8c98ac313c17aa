"""Attention encoder-decoder over text tokens or precomputed feature rows.

Architecture: bidirectional single-layer GRU encoder (text) or a learned
affine+tanh projection (feature sequences); conditional GRU decoder -- a
first GRU step on the previous token embedding forms the attention query,
additive attention pools the encoder annotations into a context vector,
and a second GRU step on the context produces the new state. The output
layer mixes state, context and previous embedding before the softmax.

Parameters are drawn uniformly from [-0.08, 0.08] (biases zero), seeded,
so every forward value in tests is reproducible bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import data as D

CHECKPOINT_MAGIC = b"IKSC"
CHECKPOINT_VERSION = 1

INIT_SCALE = 0.08


class CheckpointError(ValueError):
    pass


@dataclass
class ModelConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    embedding_dim: int
    encoder_hidden_dim: int
    decoder_hidden_dim: int
    attention_dim: int
    input_modality: str = "text"
    feature_dim: int = None
    max_output_len: int = 120

    def __post_init__(self):
        dims = [
            self.src_vocab_size,
            self.tgt_vocab_size,
            self.embedding_dim,
            self.encoder_hidden_dim,
            self.decoder_hidden_dim,
            self.attention_dim,
            self.max_output_len,
        ]
        if any(d < 1 for d in dims):
            raise ValueError(f"all model dimensions must be >= 1: {self}")
        if self.input_modality not in ("text", "features"):
            raise ValueError(f"unknown input modality: {self.input_modality}")
        if self.input_modality == "features" and not self.feature_dim:
            raise ValueError("feature_dim is required for the features modality")

    def to_dict(self):
        return {
            "src_vocab_size": self.src_vocab_size,
            "tgt_vocab_size": self.tgt_vocab_size,
            "embedding_dim": self.embedding_dim,
            "encoder_hidden_dim": self.encoder_hidden_dim,
            "decoder_hidden_dim": self.decoder_hidden_dim,
            "attention_dim": self.attention_dim,
            "input_modality": self.input_modality,
            "feature_dim": self.feature_dim,
            "max_output_len": self.max_output_len,
        }


@dataclass
class EncodedSource:
    """Encoder annotations (T x 2*encoder_hidden) and initial decoder state."""

    annotations: ad.Tensor
    initial_state: ad.Tensor

    @property
    def length(self):
        return self.annotations.shape[0]


@dataclass
class DecoderState:
    hidden: ad.Tensor
    prev_token: int


def _gru_param_names(prefix):
    return [f"{prefix}/{n}" for n in ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh")]


class Seq2SeqModel:
    def __init__(self, config, seed=0, params=None):
        self.config = config
        self.params = params if params is not None else self._init_params(seed)

    # -- parameters ---------------------------------------------------------

    def _init_params(self, seed):
        cfg = self.config
        rng = np.random.default_rng(seed)
        store = ad.ParamStore()

        def mat(name, rows, cols):
            store.add(name, rng.uniform(-INIT_SCALE, INIT_SCALE, size=(rows, cols)))

        def vec(name, n, zero=True):
            if zero:
                store.add(name, np.zeros(n))
            else:
                store.add(name, rng.uniform(-INIT_SCALE, INIT_SCALE, size=n))

        e, he, hd, a = cfg.embedding_dim, cfg.encoder_hidden_dim, cfg.decoder_hidden_dim, cfg.attention_dim
        ann = 2 * he

        mat("tgt_emb", cfg.tgt_vocab_size, e)
        if cfg.input_modality == "text":
            mat("src_emb", cfg.src_vocab_size, e)
            for direction in ("enc_fwd", "enc_bwd"):
                for gate in ("z", "r", "h"):
                    mat(f"{direction}/W{gate}", he, e)
                    mat(f"{direction}/U{gate}", he, he)
                    vec(f"{direction}/b{gate}", he)
        else:
            mat("feat/W", ann, cfg.feature_dim)
            vec("feat/b", ann)

        mat("init/W", hd, ann)
        vec("init/b", hd)

        for gate in ("z", "r", "h"):
            mat(f"dec1/W{gate}", hd, e)
            mat(f"dec1/U{gate}", hd, hd)
            vec(f"dec1/b{gate}", hd)
            mat(f"dec2/W{gate}", hd, ann)
            mat(f"dec2/U{gate}", hd, hd)
            vec(f"dec2/b{gate}", hd)

        mat("att/W", a, hd)
        mat("att/U", a, ann)
        vec("att/v", a, zero=False)

        mat("out/Us", e, hd)
        mat("out/Uc", e, ann)
        mat("out/Ue", e, e)
        vec("out/bt", e)
        mat("out/W", cfg.tgt_vocab_size, e)
        vec("out/b", cfg.tgt_vocab_size)
        return store

    def _gru_step(self, prefix, x, h):
        p = self.params
        z = ad.sigmoid(ad.add(ad.add(ad.matmul(p[f"{prefix}/Wz"], x), ad.matmul(p[f"{prefix}/Uz"], h)), p[f"{prefix}/bz"]))
        r = ad.sigmoid(ad.add(ad.add(ad.matmul(p[f"{prefix}/Wr"], x), ad.matmul(p[f"{prefix}/Ur"], h)), p[f"{prefix}/br"]))
        hbar = ad.tanh(ad.add(ad.add(ad.matmul(p[f"{prefix}/Wh"], x), ad.matmul(p[f"{prefix}/Uh"], ad.mul(r, h))), p[f"{prefix}/bh"]))
        one_minus_z = ad.add(ad.scale(z, -1.0), ad.tensor(np.ones(z.shape)))
        return ad.add(ad.mul(one_minus_z, h), ad.mul(z, hbar))

    # -- encoders -----------------------------------------------------------

    def encode_text(self, token_ids):
        cfg = self.config
        if cfg.input_modality != "text":
            raise ValueError("encode_text called on a features-modality model")
        if len(token_ids) == 0:
            raise ValueError("cannot encode an empty token sequence")
        if any(t < 0 or t >= cfg.src_vocab_size for t in token_ids):
            raise ValueError(f"source token id out of range for vocab size {cfg.src_vocab_size}")
        emb = ad.rows(self.params["src_emb"], token_ids)
        t_len = len(token_ids)
        zero = ad.tensor(np.zeros(cfg.encoder_hidden_dim))

        fwd_states = []
        h = zero
        for t in range(t_len):
            h = self._gru_step("enc_fwd", ad.take_row(emb, t), h)
            fwd_states.append(h)
        bwd_states = [None] * t_len
        h = zero
        for t in reversed(range(t_len)):
            h = self._gru_step("enc_bwd", ad.take_row(emb, t), h)
            bwd_states[t] = h

        annotations = ad.stack([ad.concat([fwd_states[t], bwd_states[t]]) for t in range(t_len)])
        return EncodedSource(annotations, self._initial_state(annotations))

    def encode_features(self, feature_rows):
        cfg = self.config
        if cfg.input_modality != "features":
            raise ValueError("encode_features called on a text-modality model")
        feature_rows = np.asarray(feature_rows, dtype=np.float64)
        if feature_rows.ndim != 2 or feature_rows.shape[1] != cfg.feature_dim:
            raise ValueError(
                f"feature rows must be T x {cfg.feature_dim}, got shape {feature_rows.shape}"
            )
        f = ad.tensor(feature_rows)
        projected = ad.tanh(ad.add(ad.matmul(f, ad.transpose(self.params["feat/W"])), self.params["feat/b"]))
        return EncodedSource(projected, self._initial_state(projected))

    def encode(self, source):
        """Dispatch on the model's modality; `source` is ids or a matrix."""
        if self.config.input_modality == "text":
            return self.encode_text(source)
        return self.encode_features(source)

    def _initial_state(self, annotations):
        t_len = annotations.shape[0]
        pool = ad.tensor(np.full(t_len, 1.0 / t_len))
        mean_ann = ad.matmul(pool, annotations)
        return ad.tanh(ad.add(ad.matmul(self.params["init/W"], mean_ann), self.params["init/b"]))

    def initial_decoder_state(self, encoded):
        return DecoderState(hidden=encoded.initial_state, prev_token=D.BOS)

    # -- decoder ------------------------------------------------------------

    def decoder_step(self, state, encoded):
        """One conditional-GRU step.

        Returns (log-probabilities over the target vocabulary, new state,
        attention weights over the source annotations).
        """
        p = self.params
        emb = ad.rows(p["tgt_emb"], [state.prev_token])
        emb = ad.take_row(emb, 0)

        s1 = self._gru_step("dec1", emb, state.hidden)

        query = ad.matmul(p["att/W"], s1)
        keys = ad.matmul(encoded.annotations, ad.transpose(p["att/U"]))
        scores = ad.matmul(ad.tanh(ad.add(keys, query)), p["att/v"])
        alpha = ad.softmax(scores)
        context = ad.matmul(alpha, encoded.annotations)

        s2 = self._gru_step("dec2", context, s1)

        readout = ad.tanh(
            ad.add(
                ad.add(ad.matmul(p["out/Us"], s2), ad.matmul(p["out/Uc"], context)),
                ad.add(ad.matmul(p["out/Ue"], emb), p["out/bt"]),
            )
        )
        logits = ad.add(ad.matmul(p["out/W"], readout), p["out/b"])
        logprobs = ad.log_softmax(logits)
        if not np.all(np.isfinite(logprobs.data)):
            raise FloatingPointError("non-finite decoder log-probabilities")
        return logprobs, DecoderState(hidden=s2, prev_token=state.prev_token), alpha

    def step(self, state, encoded, next_token):
        """decoder_step plus advancing the fed-back token."""
        logprobs, new_state, alpha = self.decoder_step(state, encoded)
        return logprobs, DecoderState(hidden=new_state.hidden, prev_token=int(next_token)), alpha

    def sequence_logprob(self, source, target_ids):
        """Teacher-forced log p(target | source); target must end with EOS."""
        if not target_ids:
            raise ValueError("empty target sequence")
        if target_ids[-1] != D.EOS:
            raise ValueError("target sequence must end with EOS")
        encoded = source if isinstance(source, EncodedSource) else self.encode(source)
        state = self.initial_decoder_state(encoded)
        total = ad.tensor(np.asarray(0.0))
        for y in target_ids:
            logprobs, state, _ = self.step(state, encoded, y)
            total = ad.add(total, ad.take(logprobs, y))
        return total


# ---------------------------------------------------------------------------
# checkpoint format: magic, u32 version, length-prefixed JSON header
# (config + vocabularies), then tensors as name, shape, row-major <f8 payload


def _write_str(fh, s):
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_str(buf, off):
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    return buf[off : off + n].decode("utf-8"), off + n


def save_checkpoint(path, model, src_vocab, tgt_vocab, extra_tensors=None):
    extra_tensors = extra_tensors or {}
    header = {
        "config": model.config.to_dict(),
        "src_vocab": list(src_vocab.surfaces) if src_vocab is not None else None,
        "tgt_vocab": list(tgt_vocab.surfaces),
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        _write_str(fh, json.dumps(header, ensure_ascii=False, sort_keys=True))
        named = list(model.params.items()) + sorted(extra_tensors.items())
        fh.write(struct.pack("<I", len(named)))
        for name, tensor in named:
            arr = np.ascontiguousarray(
                tensor.data if isinstance(tensor, ad.Tensor) else tensor, dtype="<f8"
            )
            _write_str(fh, name)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Returns (model, src_vocab or None, tgt_vocab, extra_tensors)."""
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header_json, off = _read_str(buf, 8)
    header = json.loads(header_json)
    config = ModelConfig(**header["config"])
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4

    store = ad.ParamStore()
    extra = {}
    model = Seq2SeqModel(config, params=store)
    expected = set(Seq2SeqModel(config, seed=0).params.names())
    for _ in range(count):
        name, off = _read_str(buf, off)
        (ndim,) = struct.unpack_from("<I", buf, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(shape)
        off += size * 8
        if name in expected:
            store.add(name, arr)
        else:
            extra[name] = np.array(arr)
    missing = expected - set(store.names())
    if missing:
        raise CheckpointError(f"{path}: checkpoint missing parameters {sorted(missing)}")

    src_vocab = D.Vocabulary(header["src_vocab"][4:]) if header["src_vocab"] else None
    tgt_vocab = D.Vocabulary(header["tgt_vocab"][4:])
    return model, src_vocab, tgt_vocab, extra

import math

import numpy as np
import pytest

from ipseq import data as D
from ipseq.model import ModelConfig, Seq2SeqModel


@pytest.fixture
def tiny_vocab():
    # char vocabulary over {a, b, space}
    return D.Vocabulary(["a", "b", " "])


@pytest.fixture
def tiny_model(tiny_vocab):
    cfg = ModelConfig(
        src_vocab_size=len(tiny_vocab),
        tgt_vocab_size=len(tiny_vocab),
        embedding_dim=3,
        encoder_hidden_dim=3,
        decoder_hidden_dim=4,
        attention_dim=3,
        max_output_len=6,
    )
    return Seq2SeqModel(cfg, seed=7)


def random_char_model(rng, n_tokens=4, max_output_len=6):
    """A small random char-level model and vocabulary (letters a..)."""
    letters = [chr(ord("a") + i) for i in range(n_tokens - 1)] + [" "]
    vocab = D.Vocabulary(letters[: n_tokens])
    cfg = ModelConfig(
        src_vocab_size=len(vocab),
        tgt_vocab_size=len(vocab),
        embedding_dim=int(rng.integers(2, 5)),
        encoder_hidden_dim=int(rng.integers(2, 5)),
        decoder_hidden_dim=int(rng.integers(2, 5)),
        attention_dim=int(rng.integers(2, 4)),
        max_output_len=max_output_len,
    )
    return Seq2SeqModel(cfg, seed=int(rng.integers(0, 2**31))), vocab


# ---------------------------------------------------------------------------
# independent scalar re-implementation of the forward pass (no numpy linear
# algebra beyond indexing; everything unrolled with python loops and math.*)


def _mv(w, x):
    return [sum(w[i][j] * x[j] for j in range(len(x))) for i in range(len(w))]


def _sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def scalar_gru_step(params, prefix, x, h):
    p = {k: v.data.tolist() for k, v in params.items() if k.startswith(prefix)}
    n = len(p[f"{prefix}/bz"])
    z = [_sigmoid(a + b + c) for a, b, c in zip(_mv(p[f"{prefix}/Wz"], x), _mv(p[f"{prefix}/Uz"], h), p[f"{prefix}/bz"])]
    r = [_sigmoid(a + b + c) for a, b, c in zip(_mv(p[f"{prefix}/Wr"], x), _mv(p[f"{prefix}/Ur"], h), p[f"{prefix}/br"])]
    rh = [r[i] * h[i] for i in range(n)]
    hbar = [math.tanh(a + b + c) for a, b, c in zip(_mv(p[f"{prefix}/Wh"], x), _mv(p[f"{prefix}/Uh"], rh), p[f"{prefix}/bh"])]
    return [(1.0 - z[i]) * h[i] + z[i] * hbar[i] for i in range(n)]


def scalar_encode_text(model, token_ids):
    p = model.params
    he = model.config.encoder_hidden_dim
    emb = [p["src_emb"].data[t].tolist() for t in token_ids]
    fwd, h = [], [0.0] * he
    for x in emb:
        h = scalar_gru_step(p, "enc_fwd", x, h)
        fwd.append(h)
    bwd, h = [None] * len(emb), [0.0] * he
    for i in reversed(range(len(emb))):
        h = scalar_gru_step(p, "enc_bwd", emb[i], h)
        bwd[i] = h
    annotations = [fwd[i] + bwd[i] for i in range(len(emb))]
    t_len = len(annotations)
    mean_ann = [sum(row[j] for row in annotations) / t_len for j in range(2 * he)]
    s0 = [math.tanh(v + b) for v, b in zip(_mv(p["init/W"].data.tolist(), mean_ann), p["init/b"].data.tolist())]
    return annotations, s0


def scalar_decoder_step(model, annotations, hidden, prev_token):
    p = model.params
    emb = p["tgt_emb"].data[prev_token].tolist()
    s1 = scalar_gru_step(p, "dec1", emb, hidden)
    att_w = p["att/W"].data.tolist()
    att_u = p["att/U"].data.tolist()
    att_v = p["att/v"].data.tolist()
    query = _mv(att_w, s1)
    scores = []
    for ann in annotations:
        keys = _mv(att_u, ann)
        scores.append(sum(att_v[i] * math.tanh(keys[i] + query[i]) for i in range(len(att_v))))
    mx = max(scores)
    exps = [math.exp(s - mx) for s in scores]
    total = sum(exps)
    alpha = [e / total for e in exps]
    width = len(annotations[0])
    context = [sum(alpha[i] * annotations[i][j] for i in range(len(annotations))) for j in range(width)]
    s2 = scalar_gru_step(p, "dec2", context, s1)
    readout = [
        math.tanh(a + b + c + d)
        for a, b, c, d in zip(
            _mv(p["out/Us"].data.tolist(), s2),
            _mv(p["out/Uc"].data.tolist(), context),
            _mv(p["out/Ue"].data.tolist(), emb),
            p["out/bt"].data.tolist(),
        )
    ]
    logits = [v + b for v, b in zip(_mv(p["out/W"].data.tolist(), readout), p["out/b"].data.tolist())]
    mx = max(logits)
    lse = mx + math.log(sum(math.exp(l - mx) for l in logits))
    logprobs = [l - lse for l in logits]
    return logprobs, s2, alpha

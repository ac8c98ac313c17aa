"""Desk-scale demo and benchmark tasks.

Builds the three demo tasks served by the website (tiny translation,
image captioning and video captioning stand-ins) and a synthetic
digits-to-words translation task used for training and simulator
benchmarks: sources are space-separated digit strings, targets the
spelled-out words ("3 5 2" -> "three five two").
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from . import data as D
from . import learn
from .model import ModelConfig, Seq2SeqModel, save_checkpoint

DIGIT_WORDS = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"]


def digit_pairs(count, rng, min_len=2, max_len=4):
    """Unique (source, target) pairs of spelled-out digit strings."""
    seen = set()
    pairs = []
    while len(pairs) < count:
        n = int(rng.integers(min_len, max_len + 1))
        digits = tuple(int(d) for d in rng.integers(0, 10, size=n))
        if digits in seen:
            continue
        seen.add(digits)
        src = " ".join(str(d) for d in digits)
        tgt = " ".join(DIGIT_WORDS[d] for d in digits)
        pairs.append((src, tgt))
    return pairs


def write_corpus(path_src, path_tgt, pairs):
    Path(path_src).write_text("\n".join(s for s, _ in pairs) + "\n", encoding="utf-8")
    Path(path_tgt).write_text("\n".join(t for _, t in pairs) + "\n", encoding="utf-8")


def build_digits_task(out_dir, n_train=200, n_held=40, epochs=130, seed=0,
                      optimizer="adadelta", learning_rate=1.0, log_fn=None):
    """Generate, train and package the digits task; returns its directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    train_pairs = digit_pairs(n_train, rng)
    held_pairs = digit_pairs(n_held, rng)

    src_vocab = D.build_vocab([s for s, _ in train_pairs], "word")
    tgt_vocab = D.build_vocab([t for _, t in train_pairs], "word")
    config = ModelConfig(
        src_vocab_size=len(src_vocab),
        tgt_vocab_size=len(tgt_vocab),
        embedding_dim=16,
        encoder_hidden_dim=24,
        decoder_hidden_dim=24,
        attention_dim=16,
        max_output_len=12,
    )
    model = Seq2SeqModel(config, seed=seed)

    encoded_pairs = [
        (
            D.tokenize(s, "word", src_vocab),
            D.tokenize(t, "word", tgt_vocab),
        )
        for s, t in train_pairs
    ]
    train_config = learn.TrainConfig(
        optimizer=optimizer,
        learning_rate=learning_rate,
        batch_size=8,
        epochs=epochs,
        gradient_clip_norm=5.0,
        seed=seed,
    )
    result, _ = learn.train(model, encoded_pairs, train_config, log_fn=log_fn)

    save_checkpoint(out / "digits.ckpt", model, src_vocab, tgt_vocab)
    write_corpus(out / "train.src", out / "train.tgt", train_pairs)
    write_corpus(out / "held.src", out / "held.tgt", held_pairs)
    (out / "digits.task").write_text(
        "\n".join(
            [
                "id=digits",
                "name=Digits to words",
                "modality=text",
                "checkpoint=digits.ckpt",
                "token_mode=word",
                "source_file=held.src",
                "target_file=held.tgt",
                "beam_width=4",
                "max_len=12",
                "online_lr=0.05",
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    return out, result


def _tiny_text_task(out, task_id, name, sources, targets, token_mode="word", seed=0):
    src_vocab = D.build_vocab(sources, token_mode)
    tgt_vocab = D.build_vocab(targets, token_mode)
    config = ModelConfig(
        src_vocab_size=len(src_vocab),
        tgt_vocab_size=len(tgt_vocab),
        embedding_dim=8,
        encoder_hidden_dim=8,
        decoder_hidden_dim=8,
        attention_dim=8,
        max_output_len=24,
    )
    model = Seq2SeqModel(config, seed=seed)
    save_checkpoint(out / f"{task_id}.ckpt", model, src_vocab, tgt_vocab)
    (out / f"{task_id}.src").write_text("\n".join(sources) + "\n", encoding="utf-8")
    (out / f"{task_id}.tgt").write_text("\n".join(targets) + "\n", encoding="utf-8")
    (out / f"{task_id}.task").write_text(
        "\n".join(
            [
                f"id={task_id}",
                f"name={name}",
                "modality=text",
                f"checkpoint={task_id}.ckpt",
                f"token_mode={token_mode}",
                f"source_file={task_id}.src",
                f"target_file={task_id}.tgt",
                "beam_width=4",
                "max_len=24",
                "online_lr=0.0",
            ]
        )
        + "\n",
        encoding="utf-8",
    )


def _tiny_feature_task(out, task_id, name, captions, t_len, feature_dim=8, seed=0):
    tgt_vocab = D.build_vocab(captions, "word")
    config = ModelConfig(
        src_vocab_size=1,
        tgt_vocab_size=len(tgt_vocab),
        embedding_dim=8,
        encoder_hidden_dim=8,
        decoder_hidden_dim=8,
        attention_dim=8,
        input_modality="features",
        feature_dim=feature_dim,
        max_output_len=24,
    )
    model = Seq2SeqModel(config, seed=seed)
    save_checkpoint(out / f"{task_id}.ckpt", model, None, tgt_vocab)
    feat_dir = out / f"{task_id}_features"
    feat_dir.mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(len(captions)):
        D.save_feature_sequence(
            feat_dir / f"{i:03d}.ikcf", rng.normal(size=(t_len, feature_dim))
        )
    (out / f"{task_id}.tgt").write_text("\n".join(captions) + "\n", encoding="utf-8")
    (out / f"{task_id}.task").write_text(
        "\n".join(
            [
                f"id={task_id}",
                f"name={name}",
                "modality=features",
                f"checkpoint={task_id}.ckpt",
                "token_mode=word",
                f"feature_dir={task_id}_features",
                f"target_file={task_id}.tgt",
                "beam_width=4",
                "max_len=24",
                "online_lr=0.0",
            ]
        )
        + "\n",
        encoding="utf-8",
    )


def make_demo_tasks(out_dir, seed=0):
    """Three untrained desk-scale tasks: nmt, image_caption, video_caption."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _tiny_text_task(
        out,
        "nmt",
        "Medical translation (toy)",
        ["the patient rests", "the doctor operates", "a nurse helps"],
        ["el paciente descansa", "el doctor opera", "una enfermera ayuda"],
        seed=seed,
    )
    _tiny_feature_task(
        out,
        "image_caption",
        "Image captioning (toy)",
        ["a football player in a red uniform .", "a group of players .", "a red ball ."],
        t_len=1,
        seed=seed + 1,
    )
    _tiny_feature_task(
        out,
        "video_caption",
        "Video captioning (toy)",
        ["a player kicks the ball .", "the team celebrates .", "a goalkeeper jumps ."],
        t_len=4,
        seed=seed + 2,
    )
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description="build demo and benchmark tasks")
    parser.add_argument("--out", required=True)
    parser.add_argument("--digits", action="store_true", help="also train the digits benchmark task")
    parser.add_argument("--epochs", type=int, default=130)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    make_demo_tasks(args.out, seed=args.seed)
    if args.digits:
        build_digits_task(args.out, epochs=args.epochs, seed=args.seed, log_fn=print)
    print(f"tasks written to {args.out}")


if __name__ == "__main__":
    main()

"""Task bundles: model + vocabularies + samples behind a predictor API.

Sessions and the HTTP layer only see this surface (predict_initial,
predict_constrained, online_update, sample), which also lets tests swap in
scripted predictors. Model reads run concurrently; online updates take the
exclusive side of a reader/writer lock.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as D
from . import decode, learn, model as M


class RWLock:
    """Writer-preferring readers/writer lock; tiny and sufficient here."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_write(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()


@dataclass
class SourceObject:
    sample_id: str
    modality: str
    text: str = None
    features: np.ndarray = None
    preview: str = ""
    reference: str = None


class Task:
    def __init__(self, task_id, name, modality, seq_model, src_vocab, tgt_vocab,
                 token_mode, src_token_mode=None, beam_params=None, online_lr=0.0,
                 samples=None, checkpoint_path=None, media_dir=None):
        self.task_id = task_id
        self.name = name
        self.modality = modality
        self.model = seq_model
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.token_mode = token_mode
        self.src_token_mode = src_token_mode or token_mode
        self.beam_params = beam_params or decode.BeamParams(
            beam_width=5, max_len=seq_model.config.max_output_len
        )
        self.online_lr = online_lr
        self.samples = samples or []
        self.checkpoint_path = checkpoint_path
        self.media_dir = media_dir
        self.lock = RWLock()

    # -- samples ------------------------------------------------------------

    def sample(self, sample_id):
        sid = str(sample_id)
        for s in self.samples:
            if s.sample_id == sid:
                return s
        return None

    def add_text_samples(self, lines, references=None):
        start = len(self.samples)
        for i, line in enumerate(lines):
            text = D.normalize(line)
            self.samples.append(
                SourceObject(
                    sample_id=str(start + i),
                    modality="text",
                    text=text,
                    preview=text,
                    reference=D.normalize(references[i]) if references else None,
                )
            )

    def add_feature_samples(self, paths, references=None):
        start = len(self.samples)
        for i, path in enumerate(paths):
            self.samples.append(
                SourceObject(
                    sample_id=str(start + i),
                    modality="features",
                    features=D.load_feature_sequence(path),
                    preview=Path(path).name,
                    reference=D.normalize(references[i]) if references else None,
                )
            )

    # -- prediction ---------------------------------------------------------

    def _encode(self, source):
        if self.modality == "text":
            ids = D.tokenize(source.text, self.src_token_mode, self.src_vocab, add_eos=True)
            return self.model.encode_text(ids)
        return self.model.encode_features(source.features)

    def predict_initial(self, source):
        self.lock.acquire_read()
        try:
            encoded = self._encode(source)
            hyps = decode.beam_search(
                self.model, encoded, self.beam_params, self.tgt_vocab, self.token_mode
            )
            return hyps[0]
        finally:
            self.lock.release_read()

    def predict_constrained(self, source, raw_prefix):
        if not raw_prefix:
            return self.predict_initial(source)
        self.lock.acquire_read()
        try:
            encoded = self._encode(source)
            constraint = decode.make_constraint(raw_prefix, self.tgt_vocab, self.token_mode)
            hyps = decode.constrained_beam_search(
                self.model, encoded, constraint, self.beam_params, self.tgt_vocab, self.token_mode
            )
            return hyps[0]
        finally:
            self.lock.release_read()

    # -- adaptation ---------------------------------------------------------

    def online_update(self, source, final_text):
        target_ids = D.tokenize(final_text, self.token_mode, self.tgt_vocab, add_eos=True)
        if self.modality == "text":
            src = D.tokenize(source.text, self.src_token_mode, self.src_vocab, add_eos=True)
        else:
            src = source.features
        cfg = learn.TrainConfig(optimizer="sgd", learning_rate=self.online_lr)
        self.lock.acquire_write()
        try:
            return learn.online_update(self.model, src, target_ids, cfg)
        finally:
            self.lock.release_write()


def load_task(manifest):
    """Build a Task from a parsed ``TaskManifest``."""
    seq_model, src_vocab, tgt_vocab, _ = M.load_checkpoint(manifest.resolve(manifest.checkpoint))
    task = Task(
        task_id=manifest.task_id,
        name=manifest.name,
        modality=manifest.modality,
        seq_model=seq_model,
        src_vocab=src_vocab,
        tgt_vocab=tgt_vocab,
        token_mode=manifest.token_mode,
        src_token_mode=manifest.src_token_mode,
        beam_params=decode.BeamParams(beam_width=manifest.beam_width, max_len=manifest.max_len),
        online_lr=manifest.online_lr,
        checkpoint_path=manifest.resolve(manifest.checkpoint),
        media_dir=manifest.resolve(manifest.media_dir) if manifest.media_dir else None,
    )
    references = None
    if manifest.target_file:
        references = Path(manifest.resolve(manifest.target_file)).read_text(encoding="utf-8").splitlines()
    if manifest.modality == "text":
        lines = Path(manifest.resolve(manifest.source_file)).read_text(encoding="utf-8").splitlines()
        task.add_text_samples(lines, references)
    else:
        paths = sorted(Path(manifest.resolve(manifest.feature_dir)).glob("*.ikcf"))
        task.add_feature_samples(paths, references)
    return task


def load_tasks_dir(tasks_dir):
    tasks = {}
    for path in sorted(Path(tasks_dir).glob("*.task")):
        manifest = D.parse_task_manifest(path)
        tasks[manifest.task_id] = load_task(manifest)
    return tasks

"""Simulated user: replays references through the interactive protocol.

The simulator reads each hypothesis, finds the first character that
disagrees with the reference, "types" the correct character(s) there and
sends the resulting prefix as feedback. It converges in at most
len(reference)+1 iterations because every corrected prefix hard-extends
the agreed prefix by at least one character. Talks HTTP by default;
``--in-process`` drives the session manager directly.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import statistics
import sys
from dataclasses import dataclass, field

import httpx

from . import data as D
from .session import SessionManager


class ProtocolError(RuntimeError):
    pass


class InProcessClient:
    """Drives a SessionManager directly (no networking)."""

    def __init__(self, manager):
        self.manager = manager

    def start(self, task_id, sample_id):
        return self.manager.start_session(task_id, sample_id).session_id

    def predict(self, session_id):
        return self.manager.initial_prediction(session_id).surface

    def feedback(self, session_id, prefix, typed_len, moved_pointer):
        return self.manager.apply_feedback(session_id, prefix, typed_len, moved_pointer).surface

    def validate(self, session_id, learn):
        report = self.manager.validate(session_id, learn=learn)
        return {
            "final_text": report.final_text,
            "keystrokes": report.effort.keystrokes,
            "mouse_actions": report.effort.mouse_actions,
            "iterations": report.effort.iterations,
            "ksmr": report.ksmr,
        }


class HttpClient:
    """Same surface over the wire protocol."""

    def __init__(self, base_url, client=None):
        self.http = client or httpx.Client(base_url=base_url, timeout=60.0)

    def _post(self, path, payload):
        body = self.http.post(path, json=payload).json()
        if not body.get("ok"):
            raise ProtocolError(f"{path}: {body.get('code')}: {body.get('message')}")
        return body

    def start(self, task_id, sample_id):
        return self._post("/session", {"task_id": task_id, "sample_id": sample_id})["session_id"]

    def predict(self, session_id):
        return self._post("/predict", {"session_id": session_id})["hypothesis"]

    def feedback(self, session_id, prefix, typed_len, moved_pointer):
        return self._post(
            "/feedback",
            {
                "session_id": session_id,
                "prefix": prefix,
                "typed_len": typed_len,
                "moved_pointer": moved_pointer,
            },
        )["hypothesis"]

    def validate(self, session_id, learn):
        return self._post("/validate", {"session_id": session_id, "learn": learn})


@dataclass
class SampleResult:
    sample_id: str
    iterations: int
    keystrokes: int
    mouse_actions: int
    ksmr: float
    converged: bool


@dataclass
class SimulationReport:
    rows: list = field(default_factory=list)

    def mean(self, attr):
        return statistics.fmean(getattr(r, attr) for r in self.rows) if self.rows else 0.0

    def tsv(self):
        lines = ["sample_id\titerations\tkeystrokes\tmouse_actions\tksmr\tconverged"]
        for r in self.rows:
            lines.append(
                f"{r.sample_id}\t{r.iterations}\t{r.keystrokes}\t{r.mouse_actions}"
                f"\t{r.ksmr:.6f}\t{str(r.converged).lower()}"
            )
        return "\n".join(lines)


def first_mismatch(hypothesis, reference):
    """Index of the first differing unicode scalar; None when equal."""
    if hypothesis == reference:
        return None
    n = min(len(hypothesis), len(reference))
    for i in range(n):
        if hypothesis[i] != reference[i]:
            return i
    return n  # one is a strict prefix of the other


def simulate_sample(client, task_id, sample_id, reference, learn=False, burst=1):
    reference = D.normalize(reference)
    session_id = client.start(task_id, sample_id)
    hypothesis = client.predict(session_id)
    last_caret = None
    max_rounds = len(reference) + 1
    for _ in range(max_rounds):
        pos = first_mismatch(hypothesis, reference)
        if pos is None:
            break
        if pos >= len(reference):
            # hypothesis extends beyond a fully-matched reference; prefix
            # feedback cannot delete, so resend the full reference once and
            # otherwise validate what we have
            if last_caret == len(reference):
                break
            hypothesis = client.feedback(session_id, reference, 1, last_caret != pos)
            last_caret = len(reference)
            continue
        typed = reference[pos : pos + burst]
        prefix = reference[: pos + len(typed)]
        moved = last_caret != pos
        hypothesis = client.feedback(session_id, prefix, len(typed), moved)
        if not hypothesis.startswith(prefix):
            raise ProtocolError(f"hypothesis {hypothesis!r} does not honor prefix {prefix!r}")
        last_caret = pos + len(typed)
    final = client.validate(session_id, learn)
    return SampleResult(
        sample_id=str(sample_id),
        iterations=final["iterations"],
        keystrokes=final["keystrokes"],
        mouse_actions=final["mouse_actions"],
        ksmr=final["ksmr"],
        converged=final["final_text"] == reference,
    )


def simulate_corpus(client, task_id, references, learn=False, burst=1, parallel=1):
    report = SimulationReport()
    items = list(enumerate(references))
    if parallel > 1 and not learn:
        with concurrent.futures.ThreadPoolExecutor(max_workers=parallel) as pool:
            futures = [
                pool.submit(simulate_sample, client, task_id, str(i), ref, False, burst)
                for i, ref in items
            ]
            report.rows = [f.result() for f in futures]
    else:
        for i, ref in items:
            report.rows.append(simulate_sample(client, task_id, str(i), ref, learn, burst))
    return report


def main(argv=None):
    parser = argparse.ArgumentParser(description="simulated interactive-predictive user")
    parser.add_argument("--task", required=True)
    parser.add_argument("--split", required=True, help="source,reference file pair (comma separated)")
    parser.add_argument("--learn", action="store_true")
    parser.add_argument("--lr", type=float, default=None, help="override the task's online learning rate")
    parser.add_argument("--beam", type=int, default=None, help="override beam width")
    parser.add_argument("--burst", type=int, default=1, help="characters typed per correction")
    parser.add_argument("--in-process", action="store_true")
    parser.add_argument("--tasks-dir", help="task manifests (required with --in-process)")
    parser.add_argument("--server-url", default="http://127.0.0.1:8000")
    parser.add_argument("--parallel", type=int, default=1)
    parser.add_argument("--report", help="write the per-sample TSV here")
    args = parser.parse_args(argv)

    try:
        _, ref_path = args.split.split(",", 1)
    except ValueError:
        parser.error("--split expects 'source_file,reference_file'")
    references = [line for line in open(ref_path, encoding="utf-8").read().splitlines()]

    if args.in_process:
        if not args.tasks_dir:
            parser.error("--in-process requires --tasks-dir")
        from . import task as T

        tasks = T.load_tasks_dir(args.tasks_dir)
        if args.task not in tasks:
            parser.error(f"unknown task {args.task}")
        t = tasks[args.task]
        if args.lr is not None:
            t.online_lr = args.lr
        if args.beam is not None:
            t.beam_params.beam_width = args.beam
        client = InProcessClient(SessionManager(tasks))
    else:
        client = HttpClient(args.server_url)

    if args.parallel > 1 and args.learn:
        parser.error("--parallel requires learning disabled")

    report = simulate_corpus(
        client, args.task, references, learn=args.learn, burst=args.burst, parallel=args.parallel
    )
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(report.tsv() + "\n")

    n = len(report.rows)
    converged = sum(r.converged for r in report.rows)
    print(f"samples: {n}  converged: {converged}  mean ksmr: {report.mean('ksmr'):.4f}")
    print(
        f"mean iterations: {report.mean('iterations'):.2f}  "
        f"mean keystrokes: {report.mean('keystrokes'):.2f}  "
        f"mean mouse actions: {report.mean('mouse_actions'):.2f}"
    )
    if args.learn and n >= 2:
        half = n // 2
        first = statistics.fmean(r.ksmr for r in report.rows[:half])
        second = statistics.fmean(r.ksmr for r in report.rows[half:])
        print(f"first-half mean ksmr: {first:.4f}  second-half mean ksmr: {second:.4f}")
    return 0 if converged == n else 1


if __name__ == "__main__":
    sys.exit(main())

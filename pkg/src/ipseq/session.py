"""Interactive-predictive session state machine.

A session walks fresh -> predicting -> interacting* -> validated. Each
user correction yields a character prefix; the task regenerates a
hypothesis compatible with it. Keystrokes, pointer actions and system
iterations are counted so a finished session reports its KSMR
(keystrokes + mouse actions, divided by final-text character count).
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field


class SessionError(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


@dataclass
class EffortCounters:
    keystrokes: int = 0
    mouse_actions: int = 0
    iterations: int = 0


@dataclass
class SessionState:
    session_id: str
    task_id: str
    sample_id: str
    source: object
    current_hypothesis: object = None
    feedback_history: list = field(default_factory=list)
    effort: EffortCounters = field(default_factory=EffortCounters)
    status: str = "fresh"


@dataclass
class SessionReport:
    final_text: str
    effort: EffortCounters
    ksmr: float


def derive_prefix(previous_surface, edit_position, typed):
    """Validated prefix after typing ``typed`` at ``edit_position``."""
    if not 0 <= edit_position <= len(previous_surface):
        raise SessionError("bad_position", f"edit position {edit_position} out of range")
    return previous_surface[:edit_position] + typed


class SessionManager:
    """Holds live sessions over a set of tasks; thread-safe per session."""

    def __init__(self, tasks):
        self.tasks = dict(tasks)
        self._sessions = {}
        self._locks = {}
        self._log = []
        self._mutex = threading.Lock()

    def task_list(self):
        return [self.tasks[k] for k in sorted(self.tasks)]

    def get(self, session_id):
        with self._mutex:
            state = self._sessions.get(session_id)
        if state is None:
            raise SessionError("unknown_session", f"no such session: {session_id}")
        return state

    def session_lock(self, session_id):
        with self._mutex:
            lock = self._locks.get(session_id)
        if lock is None:
            raise SessionError("unknown_session", f"no such session: {session_id}")
        return lock

    def start_session(self, task_id, sample_id):
        task = self.tasks.get(task_id)
        if task is None:
            raise SessionError("unknown_task", f"no such task: {task_id}")
        source = task.sample(sample_id)
        if source is None:
            raise SessionError("unknown_sample", f"no sample {sample_id} in task {task_id}")
        state = SessionState(
            session_id=uuid.uuid4().hex,
            task_id=task_id,
            sample_id=str(sample_id),
            source=source,
        )
        with self._mutex:
            self._sessions[state.session_id] = state
            self._locks[state.session_id] = threading.Lock()
        return state

    def initial_prediction(self, session_id):
        state = self.get(session_id)
        if state.status != "fresh":
            raise SessionError("bad_state", f"initial prediction in status {state.status}")
        state.status = "predicting"
        hyp = self.tasks[state.task_id].predict_initial(state.source)
        state.current_hypothesis = hyp
        state.effort.iterations += 1
        state.status = "interacting"
        return hyp

    def apply_feedback(self, session_id, raw_prefix, typed_len=0, moved_pointer=False):
        state = self.get(session_id)
        if state.status != "interacting":
            raise SessionError("bad_state", f"feedback in status {state.status}")
        hyp = self.tasks[state.task_id].predict_constrained(state.source, raw_prefix)
        if not hyp.surface.startswith(raw_prefix):
            raise AssertionError("constrained hypothesis violates its prefix")
        state.current_hypothesis = hyp
        state.feedback_history.append(raw_prefix)
        state.effort.keystrokes += typed_len
        if moved_pointer:
            state.effort.mouse_actions += 1
        state.effort.iterations += 1
        return hyp

    def validate(self, session_id, learn=False):
        state = self.get(session_id)
        if state.status != "interacting":
            raise SessionError("bad_state", f"validate in status {state.status}")
        state.status = "validated"
        state.effort.mouse_actions += 1  # the validation click
        final_text = state.current_hypothesis.surface
        ksmr = (state.effort.keystrokes + state.effort.mouse_actions) / max(1, len(final_text))
        if learn:
            self.tasks[state.task_id].online_update(state.source, final_text)
        with self._mutex:
            self._log.append(
                {
                    "session_id": state.session_id,
                    "task": state.task_id,
                    "sample": state.sample_id,
                    "prefixes": list(state.feedback_history),
                    "final_text": final_text,
                    "keystrokes": state.effort.keystrokes,
                    "mouse_actions": state.effort.mouse_actions,
                    "iterations": state.effort.iterations,
                }
            )
        return SessionReport(final_text=final_text, effort=state.effort, ksmr=ksmr)

    def export_log(self):
        """Validated sessions as line-delimited JSON."""
        with self._mutex:
            return "\n".join(json.dumps(rec, ensure_ascii=False) for rec in self._log)

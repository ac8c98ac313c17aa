import pytest

from ipseq.decode import Hypothesis
from ipseq.session import SessionManager
from ipseq.simcli import (
    InProcessClient,
    ProtocolError,
    SampleResult,
    SimulationReport,
    first_mismatch,
    main,
    simulate_corpus,
    simulate_sample,
)
from ipseq.task import SourceObject


class CompletingTask:
    """Mock predictor that completes any correct reference prefix."""

    def __init__(self, references, initial="wrong guess"):
        self.references = references
        self.initial = initial
        self.updates = []

    def sample(self, sample_id):
        return SourceObject(sample_id=str(sample_id), modality="text", preview=sample_id)

    def predict_initial(self, source):
        return Hypothesis(token_ids=[], logprob=0.0, surface=self.initial)

    def predict_constrained(self, source, raw_prefix):
        for ref in self.references:
            if ref.startswith(raw_prefix):
                return Hypothesis(token_ids=[], logprob=0.0, surface=ref)
        return Hypothesis(token_ids=[], logprob=0.0, surface=raw_prefix, spliced=True)

    def online_update(self, source, final_text):
        self.updates.append(final_text)


class StubbornTask(CompletingTask):
    """Never honours the prefix; exercises the simulator's hard bound."""

    def predict_constrained(self, source, raw_prefix):
        return Hypothesis(token_ids=[], logprob=0.0, surface=raw_prefix, spliced=True)


def make_client(task):
    return InProcessClient(SessionManager({"toy": task}))


def test_first_mismatch_cases():
    assert first_mismatch("abc", "abc") is None
    assert first_mismatch("abc", "abd") == 2
    assert first_mismatch("ab", "abc") == 2
    assert first_mismatch("abc", "ab") == 2
    assert first_mismatch("", "x") == 0


def test_single_correction_converges():
    client = make_client(CompletingTask(["white cat"], initial="black cat"))
    result = simulate_sample(client, "toy", "0", "white cat")
    assert result.converged
    assert result.keystrokes == 1  # "b" -> "w" at position 0
    assert result.mouse_actions == 2
    assert result.iterations == 2


def test_already_correct_hypothesis_validates_immediately():
    client = make_client(CompletingTask(["cat"], initial="cat"))
    result = simulate_sample(client, "toy", "0", "cat")
    assert result.converged
    assert result.keystrokes == 0
    assert result.mouse_actions == 1  # validation only
    assert result.iterations == 1
    assert result.ksmr == 1 / 3


def test_burst_types_several_characters_at_once():
    client = make_client(StubbornTask(["abcdef"], initial=""))
    burst_result = simulate_sample(client, "toy", "0", "abcdef", burst=3)
    assert burst_result.converged
    assert burst_result.keystrokes == 6
    # two corrections of three characters each, from the same caret run
    assert burst_result.iterations == 3


def test_iterations_bounded_by_reference_length_plus_one():
    reference = "abcd"
    client = make_client(StubbornTask([reference], initial=""))
    result = simulate_sample(client, "toy", "0", reference)
    assert result.converged  # splice keeps the prefix, so typing reaches the end
    assert result.iterations <= len(reference) + 1 + 1  # rounds + validation


def test_overshoot_resends_full_reference_once():
    class Overshooter(CompletingTask):
        def __init__(self):
            super().__init__(["ab"], initial="ab extra tail")
            self.seen = []

        def predict_constrained(self, source, raw_prefix):
            self.seen.append(raw_prefix)
            return Hypothesis(token_ids=[], logprob=0.0, surface=raw_prefix, spliced=True)

    task = Overshooter()
    client = make_client(task)
    result = simulate_sample(client, "toy", "0", "ab")
    assert task.seen == ["ab"]  # exactly one full-reference resend
    assert result.converged


def test_learn_flag_triggers_online_update():
    task = CompletingTask(["dog"], initial="cat")
    client = make_client(task)
    simulate_sample(client, "toy", "0", "dog", learn=True)
    assert task.updates == ["dog"]
    task2 = CompletingTask(["dog"], initial="cat")
    simulate_sample(make_client(task2), "toy", "0", "dog", learn=False)
    assert task2.updates == []


def test_simulate_corpus_sequential_and_parallel_agree():
    refs = ["red hat", "blue hat", "green hat"]
    seq = simulate_corpus(make_client(CompletingTask(refs)), "toy", refs)
    par = simulate_corpus(make_client(CompletingTask(refs)), "toy", refs, parallel=3)
    key = lambda r: (r.sample_id, r.iterations, r.keystrokes, r.ksmr)
    assert sorted(map(key, seq.rows)) == sorted(map(key, par.rows))
    assert all(r.converged for r in seq.rows)


def test_report_tsv_format():
    report = SimulationReport(
        rows=[SampleResult("0", 2, 1, 2, 0.5, True), SampleResult("1", 1, 0, 1, 0.25, False)]
    )
    lines = report.tsv().splitlines()
    assert lines[0] == "sample_id\titerations\tkeystrokes\tmouse_actions\tksmr\tconverged"
    assert lines[1] == "0\t2\t1\t2\t0.500000\ttrue"
    assert lines[2].endswith("false")
    assert report.mean("ksmr") == pytest.approx(0.375)


def test_protocol_error_on_lying_server():
    class LyingClient:
        def start(self, task_id, sample_id):
            return "sid"

        def predict(self, session_id):
            return "xyz"

        def feedback(self, session_id, prefix, typed_len, moved_pointer):
            return "unrelated"

    with pytest.raises(ProtocolError, match="does not honor prefix"):
        simulate_sample(LyingClient(), "toy", "0", "abc")


def test_cli_in_process_end_to_end(tmp_path, capsys):
    from ipseq.demo import make_demo_tasks

    make_demo_tasks(tmp_path)
    refs = (tmp_path / "nmt.tgt").read_text().splitlines()[:2]
    src = tmp_path / "sim.src"
    tgt = tmp_path / "sim.tgt"
    src.write_text("\n".join(["x"] * len(refs)) + "\n")
    tgt.write_text("\n".join(refs) + "\n")
    code = main(
        [
            "--task", "nmt",
            "--split", f"{src},{tgt}",
            "--in-process",
            "--tasks-dir", str(tmp_path),
            "--report", str(tmp_path / "report.tsv"),
        ]
    )
    out = capsys.readouterr().out
    assert code in (0, 1)  # untrained model need not converge
    assert f"samples: {len(refs)}" in out
    assert "mean ksmr:" in out
    lines = (tmp_path / "report.tsv").read_text().splitlines()
    assert len(lines) == len(refs) + 1
    assert lines[0].startswith("sample_id\t")


def test_cli_rejects_parallel_learning(tmp_path):
    split = tmp_path / "a.src"
    split.write_text("x\n")
    with pytest.raises(SystemExit):
        main(
            [
                "--task", "nmt",
                "--split", f"{split},{split}",
                "--learn",
                "--parallel", "4",
                "--in-process",
                "--tasks-dir", str(tmp_path),
            ]
        )

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipseq import autodiff as ad
from ipseq import data as D
from ipseq.decode import (
    BeamParams,
    PrefixConstraint,
    beam_search,
    compatible_mask,
    constrained_beam_search,
    make_constraint,
)

from conftest import random_char_model


def greedy_decode(model, encoded, vocab, max_len):
    state = model.initial_decoder_state(encoded)
    tokens, total = [], 0.0
    with ad.no_grad():
        for _ in range(max_len):
            logprobs, state, _ = model.decoder_step(state, encoded)
            allowed = [D.EOS] + list(vocab.real_ids())
            best = max(allowed, key=lambda t: (logprobs.data[t], -t))
            total += logprobs.data[best]
            state = type(state)(hidden=state.hidden, prev_token=best)
            if best == D.EOS:
                return tokens + [D.EOS], total
            tokens.append(best)
    return tokens, total


def enumerate_all(model, encoded, vocab, max_len):
    """Brute-force scores of every terminated sequence up to max_len tokens."""
    results = []
    with ad.no_grad():
        def walk(state, tokens, score, surface):
            logprobs, state_out, _ = model.decoder_step(state, encoded)
            lp = logprobs.data
            results.append((tokens + [D.EOS], score + lp[D.EOS], surface))
            if len(tokens) < max_len - 1:
                for t in vocab.real_ids():
                    surf = surface + D.surface_increment(surface, vocab.surface_of(t), "char")
                    walk(
                        type(state)(hidden=state_out.hidden, prev_token=t),
                        tokens + [t],
                        score + lp[t],
                        surf,
                    )

        walk(model.initial_decoder_state(encoded), [], 0.0, "")
    return results


# ---------------------------------------------------------------------------
# unconstrained search


def test_beam_width_one_equals_greedy():
    rng = np.random.default_rng(0)
    for _ in range(5):
        model, vocab = random_char_model(rng)
        enc = model.encode_text([4, 5])
        hyp = beam_search(model, enc, BeamParams(beam_width=1, max_len=6), vocab, "char")[0]
        tokens, score = greedy_decode(model, enc, vocab, 6)
        assert hyp.token_ids == tokens
        assert abs(hyp.logprob - score) < 1e-12


def test_exhaustive_beam_matches_enumeration():
    rng = np.random.default_rng(1)
    model, vocab = random_char_model(rng, n_tokens=4, max_output_len=4)
    enc = model.encode_text([4, 6])
    width = (len(vocab) - 4) ** 4 * 4
    hyps = beam_search(model, enc, BeamParams(beam_width=width, max_len=4), vocab, "char")
    brute = enumerate_all(model, enc, vocab, 4)
    best_tokens, best_score, _ = max(brute, key=lambda r: (r[1], [-t for t in r[0]]))
    assert hyps[0].token_ids == best_tokens
    assert abs(hyps[0].logprob - best_score) < 1e-10


def test_top_score_equals_sequence_logprob():
    rng = np.random.default_rng(2)
    model, vocab = random_char_model(rng)
    src = [4, 5, 6]
    enc = model.encode_text(src)
    hyp = beam_search(model, enc, BeamParams(beam_width=3, max_len=6), vocab, "char")[0]
    if not hyp.capped:
        with ad.no_grad():
            expected = model.sequence_logprob(src, hyp.token_ids).item()
        assert abs(hyp.logprob - expected) < 1e-12


def test_results_sorted_and_terminated():
    rng = np.random.default_rng(3)
    model, vocab = random_char_model(rng)
    enc = model.encode_text([4])
    hyps = beam_search(model, enc, BeamParams(beam_width=4, max_len=6), vocab, "char")
    scores = [h.logprob for h in hyps]
    assert scores == sorted(scores, reverse=True)
    for h in hyps:
        assert h.logprob <= 0
        assert h.token_ids[-1] == D.EOS or h.capped


def test_determinism_across_repeats():
    rng = np.random.default_rng(4)
    model, vocab = random_char_model(rng)
    enc = model.encode_text([4, 5])
    params = BeamParams(beam_width=4, max_len=6)
    a = beam_search(model, enc, params, vocab, "char")
    b = beam_search(model, enc, params, vocab, "char")
    assert [h.token_ids for h in a] == [h.token_ids for h in b]


# ---------------------------------------------------------------------------
# constraints


def test_make_constraint_word_mode_partial_word():
    vocab = D.Vocabulary(["A", "football", "player", "in", "red"])
    c = make_constraint("A f", vocab, "word")
    assert c.forced_token_ids == [vocab.id_of("A")]
    assert c.residual == "f"


def test_make_constraint_char_mode_full_decomposition():
    vocab = D.Vocabulary(["A", " ", "f"])
    c = make_constraint("A f", vocab, "char")
    assert c.forced_token_ids == [vocab.id_of("A"), vocab.id_of(" "), vocab.id_of("f")]
    assert c.residual == ""
    assert D.detokenize(c.forced_token_ids, vocab, "char") + c.residual == "A f"


def test_make_constraint_empty_prefix():
    vocab = D.Vocabulary(["a"])
    c = make_constraint("", vocab, "word")
    assert c.forced_token_ids == [] and c.residual == ""


def test_make_constraint_longest_match():
    vocab = D.Vocabulary(["f", "football"])
    c = make_constraint("football", vocab, "word")
    assert c.forced_token_ids == [vocab.id_of("football")]
    assert c.residual == ""


def test_compatible_mask_release_cases():
    vocab = D.Vocabulary(["football", "f", "red"])
    allowed = compatible_mask("f", vocab)
    assert set(allowed) == {vocab.id_of("football"), vocab.id_of("f")}
    assert all(m.releases for m in allowed.values())


def test_compatible_mask_continue_case():
    vocab = D.Vocabulary(["f", "football"])
    allowed = compatible_mask("fo", vocab)
    f, fb = vocab.id_of("f"), vocab.id_of("football")
    assert allowed[f].consumed == 1 and not allowed[f].releases
    assert allowed[fb].releases


def test_compatible_mask_no_match_is_empty():
    vocab = D.Vocabulary(["red", "ball", "player"])
    assert compatible_mask("zq", vocab) == {}


def test_empty_constraint_identical_to_unconstrained():
    rng = np.random.default_rng(5)
    model, vocab = random_char_model(rng)
    enc = model.encode_text([4, 5])
    params = BeamParams(beam_width=3, max_len=6)
    free = beam_search(model, enc, params, vocab, "char")
    empty = PrefixConstraint("", [], "")
    constrained = constrained_beam_search(model, enc, empty, params, vocab, "char")
    assert [h.token_ids for h in free] == [h.token_ids for h in constrained]
    assert [h.logprob for h in free] == [h.logprob for h in constrained]


def test_full_sentence_constraint_prefix_preserved():
    rng = np.random.default_rng(6)
    model, vocab = random_char_model(rng, n_tokens=4, max_output_len=8)
    enc = model.encode_text([4])
    free = beam_search(model, enc, BeamParams(beam_width=2, max_len=4), vocab, "char")[0]
    sentence = free.surface
    hyp = constrained_beam_search(
        model, enc, make_constraint(sentence, vocab, "char"),
        BeamParams(beam_width=2, max_len=8), vocab, "char",
    )[0]
    assert hyp.surface.startswith(sentence)


def test_constrained_matches_filtered_enumeration():
    rng = np.random.default_rng(7)
    model, vocab = random_char_model(rng, n_tokens=4, max_output_len=4)
    enc = model.encode_text([5, 6])
    prefix = "ab"
    width = (len(vocab) - 4) ** 4 * 4
    hyp = constrained_beam_search(
        model, enc, make_constraint(prefix, vocab, "char"),
        BeamParams(beam_width=width, max_len=4), vocab, "char",
    )[0]
    brute = [r for r in enumerate_all(model, enc, vocab, 4) if r[2].startswith(prefix)]
    best_tokens, best_score, _ = max(brute, key=lambda r: (r[1], [-t for t in r[0]]))
    assert hyp.token_ids == best_tokens
    assert abs(hyp.logprob - best_score) < 1e-10


def test_constrained_top_score_below_unconstrained():
    rng = np.random.default_rng(8)
    for _ in range(5):
        model, vocab = random_char_model(rng)
        enc = model.encode_text([4, 5])
        params = BeamParams(beam_width=8, max_len=6)
        free = beam_search(model, enc, params, vocab, "char")[0]
        constrained = constrained_beam_search(
            model, enc, make_constraint("a", vocab, "char"), params, vocab, "char"
        )[0]
        assert constrained.logprob <= free.logprob + 1e-12


def test_splice_fallback_oov_residual():
    rng = np.random.default_rng(9)
    model, vocab = random_char_model(rng, n_tokens=4)
    enc = model.encode_text([4])
    hyp = constrained_beam_search(
        model, enc, make_constraint("zq", vocab, "char"),
        BeamParams(beam_width=2, max_len=6), vocab, "char",
    )[0]
    assert hyp.spliced
    assert hyp.surface.startswith("zq")


def test_non_spliced_hypotheses_not_flagged():
    rng = np.random.default_rng(10)
    model, vocab = random_char_model(rng)
    enc = model.encode_text([4])
    for hyp in beam_search(model, enc, BeamParams(beam_width=3, max_len=6), vocab, "char"):
        assert not hyp.spliced


_prefix_alpha = "ab z q."


@settings(max_examples=150, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    prefix=st.text(alphabet=_prefix_alpha, min_size=0, max_size=6),
    mode=st.sampled_from(["char", "word"]),
)
def test_prefix_postcondition_property(seed, prefix, mode):
    rng = np.random.default_rng(seed)
    model, vocab = random_char_model(rng, n_tokens=4, max_output_len=8)
    enc = model.encode_text([4, 5])
    hyp = constrained_beam_search(
        model, enc, make_constraint(prefix, vocab, mode),
        BeamParams(beam_width=2, max_len=8), vocab, mode,
    )[0]
    assert hyp.surface.startswith(prefix)

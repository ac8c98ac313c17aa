"""Beam search, with and without a character-prefix constraint.

The constrained search keeps a per-hypothesis count of prefix characters
already matched. A token may be appended while the constraint is active
only if the characters it adds to the surface agree with the remaining
prefix; EOS is banned until the whole prefix is covered. Scores are always
the true model log-probabilities of the full token sequence, so forced
steps are scored like any other and constrained scores stay comparable to
unconstrained ones. Ties break toward the lexicographically smaller token
sequence, which makes the ranked output reproducible.

If at some step no vocabulary token is compatible with the remaining
prefix characters (out-of-vocabulary residual), the remainder is consumed
by a single UNK step and the final surface is spliced together as the raw
prefix verbatim plus the freely generated suffix.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import data as D


@dataclass
class Hypothesis:
    token_ids: list
    logprob: float
    surface: str
    spliced: bool = False
    capped: bool = False


@dataclass
class BeamParams:
    beam_width: int = 5
    max_len: int = 120
    length_normalization: str = "none"  # or "divide-by-length"

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.length_normalization not in ("none", "divide-by-length"):
            raise ValueError(f"unknown length normalization: {self.length_normalization}")

    def rank_score(self, hyp):
        if self.length_normalization == "divide-by-length" and hyp.token_ids:
            return hyp.logprob / len(hyp.token_ids)
        return hyp.logprob


@dataclass
class PrefixConstraint:
    raw_prefix: str
    forced_token_ids: list
    residual: str


@dataclass
class TokenMatch:
    consumed: int
    releases: bool


def make_constraint(raw_prefix, vocab, mode):
    """Longest-match decomposition of a character prefix into forced tokens.

    In word mode the single separator space between complete tokens and a
    partial next word is consumed structurally; it reappears when the
    surface is rebuilt, so raw_prefix is always recoverable.
    """
    forced = []
    surface = ""
    matched = 0
    n = len(raw_prefix)
    while matched < n:
        best = None
        best_len = -1
        for tid in vocab.real_ids():
            inc = D.surface_increment(surface, vocab.surface_of(tid), mode)
            if matched + len(inc) <= n and raw_prefix.startswith(inc, matched) and len(inc) > best_len:
                best = tid
                best_len = len(inc)
        if best is None:
            break
        forced.append(best)
        surface += D.surface_increment(surface, vocab.surface_of(best), mode)
        matched += best_len
    residual = raw_prefix[matched:]
    if mode == "word" and residual.startswith(" ") and len(residual) > 1:
        residual = residual[1:]
    return PrefixConstraint(raw_prefix=raw_prefix, forced_token_ids=forced, residual=residual)


def compatible_mask(residual_remaining, vocab):
    """Tokens compatible with the remaining residual characters.

    A token is allowed iff its surface is a prefix of the residual (the
    constraint continues on the leftover characters) or the residual is a
    proper prefix of its surface (the constraint is released).
    """
    if not residual_remaining:
        raise ValueError("compatible_mask requires a non-empty residual")
    allowed = {}
    for tid in vocab.real_ids():
        s = vocab.surface_of(tid)
        if residual_remaining.startswith(s):
            allowed[tid] = TokenMatch(consumed=len(s), releases=len(s) >= len(residual_remaining))
        elif s.startswith(residual_remaining):
            allowed[tid] = TokenMatch(consumed=len(residual_remaining), releases=True)
    return allowed


@dataclass
class _Beam:
    tokens: list
    logprob: float
    state: object
    surface: str
    matched: int  # prefix characters covered so far
    released: bool
    spliced: bool = False


def _token_compatible(beam, token_surface, mode, prefix):
    """(allowed, chars_newly_matched) for appending one token."""
    inc = D.surface_increment(beam.surface, token_surface, mode)
    rem = prefix[beam.matched :]
    if len(inc) <= len(rem):
        return (rem.startswith(inc), len(inc))
    return (inc.startswith(rem), len(rem))


def constrained_beam_search(model, encoded, constraint, params, vocab, mode):
    """Prefix-constrained search; every result surface starts with the prefix."""
    prefix = constraint.raw_prefix if constraint else ""
    init = model.initial_decoder_state(encoded)
    beams = [_Beam([], 0.0, init, "", 0, released=not prefix)]
    done = []

    with ad.no_grad():
        for _ in range(params.max_len):
            if not beams:
                break
            expansions = []
            stuck = []
            for beam in beams:
                logprobs, state_after, _ = model.decoder_step(beam.state, encoded)
                lp = logprobs.data
                allowed_any = False
                if beam.released:
                    for tid in vocab.real_ids():
                        expansions.append((beam, state_after, tid, lp[tid], 0))
                    expansions.append((beam, state_after, D.EOS, lp[D.EOS], 0))
                    allowed_any = True
                else:
                    for tid in vocab.real_ids():
                        ok, gained = _token_compatible(beam, vocab.surface_of(tid), mode, prefix)
                        if ok:
                            expansions.append((beam, state_after, tid, lp[tid], gained))
                            allowed_any = True
                if not allowed_any:
                    stuck.append((beam, state_after, lp))

            if not expansions and stuck:
                # OOV residual: consume the remainder with one scored UNK step
                for beam, state_after, lp in stuck:
                    expansions.append((beam, state_after, D.UNK, lp[D.UNK], len(prefix) - beam.matched))

            if not expansions:
                break

            expansions.sort(key=lambda c: (-(c[0].logprob + c[3]), c[0].tokens + [c[2]]))

            beams = []
            for beam, state_after, tid, step_lp, gained in expansions:
                if len(beams) >= params.beam_width:
                    break
                score = beam.logprob + step_lp
                if tid == D.EOS:
                    if len(done) < params.beam_width * 4:
                        done.append(
                            Hypothesis(beam.tokens + [D.EOS], score, beam.surface, spliced=beam.spliced)
                        )
                    continue
                splicing = (tid == D.UNK) and not beam.released
                if splicing:
                    surface = prefix  # raw prefix verbatim; suffix appended from here
                    matched = len(prefix)
                    released = True
                else:
                    surface = beam.surface + D.surface_increment(beam.surface, vocab.surface_of(tid), mode)
                    matched = beam.matched + gained
                    released = beam.released or matched >= len(prefix)
                beams.append(
                    _Beam(
                        beam.tokens + [tid],
                        score,
                        replace(state_after, prev_token=tid),
                        surface,
                        matched,
                        released,
                        spliced=beam.spliced or splicing,
                    )
                )

            if len(done) >= params.beam_width and beams and done:
                best_live = max(b.logprob for b in beams)
                worst_kept = sorted(done, key=params.rank_score, reverse=True)[: params.beam_width][-1]
                if best_live <= params.rank_score(worst_kept) and params.length_normalization == "none":
                    break

        # hypotheses hitting the length cap close as-if EOS, flagged
        for beam in beams:
            if beam.released:
                done.append(
                    Hypothesis(list(beam.tokens), beam.logprob, beam.surface, spliced=beam.spliced, capped=True)
                )
        if not done and beams:
            # prefix longer than the cap allows: splice the best partial match
            best = max(beams, key=lambda b: (b.logprob, [-t for t in b.tokens]))
            done.append(Hypothesis(list(best.tokens), best.logprob, prefix, spliced=True, capped=True))

    done.sort(key=lambda h: (-params.rank_score(h), h.token_ids))
    return done[: params.beam_width]


def beam_search(model, encoded, params, vocab, mode):
    """Unconstrained search: the constrained search with an empty prefix."""
    empty = PrefixConstraint(raw_prefix="", forced_token_ids=[], residual="")
    return constrained_beam_search(model, encoded, empty, params, vocab, mode)

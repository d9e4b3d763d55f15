import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from argmine.atn import (
    Atn,
    AtnState,
    Marker,
    TokenSequence,
    all_token_sequences,
    build_detection_atn,
    export_edge_table,
    predicate_oracle,
    render_pseudo_language,
    run,
    step,
    transition_lines,
    validate_atn,
)
from argmine.core import ArgumentLabel, TokenState

C, P = TokenState.CLAIM, TokenState.PREMISE
NC, NP = TokenState.NOT_CLAIM, TokenState.NOT_PREMISE

tokens = st.sampled_from(list(TokenState))
sequences = st.lists(tokens, max_size=12)


@pytest.fixture(scope="module")
def atn() -> Atn:
    return build_detection_atn()


class TestStructure:
    def test_nine_states(self, atn):
        assert len(atn.states) == 9
        assert atn.states == frozenset(AtnState)
        assert atn.start is AtnState.START

    def test_structurally_valid(self, atn):
        assert validate_atn(atn) == []

    def test_terminals_have_no_outgoing_edges(self, atn):
        for edge in atn.edges:
            assert edge.src not in (AtnState.ACCEPT, AtnState.REJECT)

    def test_end_edges_partition_verdicts(self, atn):
        accepts = {e.src for e in atn.edges
                   if e.symbol is Marker.END_OF_INPUT and e.dst is AtnState.ACCEPT}
        rejects = {e.src for e in atn.edges
                   if e.symbol is Marker.END_OF_INPUT and e.dst is AtnState.REJECT}
        assert accepts == {
            AtnState.CLAIM_THEN_PREMISE,
            AtnState.PREMISE_THEN_CLAIM,
            AtnState.CLAIM_THEN_PREMISE_ALT,
            AtnState.PREMISE_THEN_CLAIM_ALT,
        }
        assert rejects == {AtnState.START, AtnState.CLAIM_ONLY, AtnState.PREMISE_ONLY}

    def test_self_loops_exist(self, atn):
        loops = {(e.src, e.symbol) for e in atn.edges if e.src == e.dst}
        assert (AtnState.CLAIM_ONLY, C) in loops
        assert (AtnState.PREMISE_ONLY, P) in loops
        assert (AtnState.CLAIM_THEN_PREMISE, P) in loops
        assert (AtnState.PREMISE_THEN_CLAIM, C) in loops

    def test_no_edges_consume_filler_tokens(self, atn):
        consuming = {e.symbol for e in atn.edges if isinstance(e.symbol, TokenState)}
        assert consuming == {C, P}


class TestStep:
    def test_start_on_claim(self, atn):
        assert step(atn, {AtnState.START}, C) == {AtnState.CLAIM_ONLY}

    def test_claim_self_loop(self, atn):
        assert step(atn, {AtnState.CLAIM_ONLY}, C) == {AtnState.CLAIM_ONLY}

    def test_filler_token_retains_state(self, atn):
        assert step(atn, {AtnState.CLAIM_ONLY}, NP) == {AtnState.CLAIM_ONLY}
        assert step(atn, {AtnState.START}, NC) == {AtnState.START}

    @given(seq=sequences)
    @settings(max_examples=200)
    def test_step_never_empties(self, seq):
        atn = build_detection_atn()
        current = atn.initial()
        for token in seq:
            current = step(atn, current, token)
            assert current


class TestRun:
    @pytest.mark.parametrize("seq,expected", [
        ([C, P], ArgumentLabel.ARGUMENT),
        ([P, C], ArgumentLabel.ARGUMENT),
        ([C, C], ArgumentLabel.NOT_ARGUMENT),
        ([P], ArgumentLabel.NOT_ARGUMENT),
        ([], ArgumentLabel.NOT_ARGUMENT),
        ([NC, NP], ArgumentLabel.NOT_ARGUMENT),
        ([P, NC, C], ArgumentLabel.ARGUMENT),
        ([C, P, C, P, C], ArgumentLabel.ARGUMENT),
    ])
    def test_verdicts(self, atn, seq, expected):
        assert run(atn, seq) is expected
        assert predicate_oracle(seq) is expected

    def test_token_sequence_type(self, atn):
        assert run(atn, TokenSequence.of([C, P])) is ArgumentLabel.ARGUMENT

    def test_exhaustive_up_to_length_5(self, atn):
        for seq in all_token_sequences(5):
            assert run(atn, seq) is predicate_oracle(seq)

    @given(seq=sequences)
    @settings(max_examples=300)
    def test_matches_oracle(self, seq):
        atn = build_detection_atn()
        assert run(atn, seq) is predicate_oracle(seq)

    @given(seq=sequences, extra=tokens, data=st.data())
    @settings(max_examples=200)
    def test_monotonic_under_insertion(self, seq, extra, data):
        atn = build_detection_atn()
        if run(atn, seq) is ArgumentLabel.ARGUMENT:
            where = data.draw(st.integers(min_value=0, max_value=len(seq)))
            widened = seq[:where] + [extra] + seq[where:]
            assert run(atn, widened) is ArgumentLabel.ARGUMENT

    @given(seq=sequences, seed=st.integers(0, 2**16))
    @settings(max_examples=200)
    def test_permutation_invariant(self, seq, seed):
        import random

        atn = build_detection_atn()
        shuffled = seq[:]
        random.Random(seed).shuffle(shuffled)
        assert run(atn, shuffled) is run(atn, seq)


class TestOracle:
    def test_both_present(self):
        assert predicate_oracle([P, C]) is ArgumentLabel.ARGUMENT

    def test_neither(self):
        assert predicate_oracle([NC, NP]) is ArgumentLabel.NOT_ARGUMENT

    def test_premise_only(self):
        assert predicate_oracle([P]) is ArgumentLabel.NOT_ARGUMENT


class TestRendering:
    def test_contains_one_line_per_edge(self, atn):
        rendered = render_pseudo_language(atn)
        lines = transition_lines(atn)
        assert len(lines) == len(atn.edges)
        for line in lines:
            assert line in rendered

    def test_deterministic(self, atn):
        assert render_pseudo_language(atn) == render_pseudo_language(atn)
        again = build_detection_atn()
        assert render_pseudo_language(atn) == render_pseudo_language(again)

    def test_mentions_acceptance_condition(self, atn):
        rendered = render_pseudo_language(atn).lower()
        assert "at least one claim" in rendered
        assert "at least one premise" in rendered

    def test_edge_table_export(self, atn):
        table = export_edge_table(atn)
        rows = [line for line in table.splitlines() if line]
        assert len(rows) == len(atn.edges)
        assert rows[0].count("\t") == 2

"""Executable transition network for argument detection.

The network reads a sequence of token states (Claim / Premise / NotClaim /
NotPremise) and accepts exactly the sequences containing at least one claim
and at least one premise. Nondeterminism is resolved by subset tracking, so a
run is linear in the sequence length. The same network is rendered to plain
rule text for prompt construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence, Union

from .core import ArgumentLabel, TokenState


class AtnState(Enum):
    START = "Start"
    CLAIM_ONLY = "ClaimOnly"
    PREMISE_ONLY = "PremiseOnly"
    CLAIM_THEN_PREMISE = "ClaimThenPremise"
    PREMISE_THEN_CLAIM = "PremiseThenClaim"
    CLAIM_THEN_PREMISE_ALT = "ClaimThenPremiseAlt"
    PREMISE_THEN_CLAIM_ALT = "PremiseThenClaimAlt"
    ACCEPT = "Accept"
    REJECT = "Reject"

    def __str__(self) -> str:
        return self.value


class Marker(Enum):
    """Non-consuming edge symbols: end-of-input verdicts and silent moves."""

    END_OF_INPUT = "end"
    EPSILON = "epsilon"


Symbol = Union[TokenState, Marker]

TERMINAL_STATES = frozenset({AtnState.ACCEPT, AtnState.REJECT})


@dataclass(frozen=True)
class Edge:
    src: AtnState
    symbol: Symbol
    dst: AtnState


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[TokenState, ...] = ()

    @staticmethod
    def of(tokens: Iterable[TokenState]) -> "TokenSequence":
        return TokenSequence(tuple(tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass(frozen=True)
class Atn:
    """A transition network over token states.

    Immutable once built; the derived move tables live in ``cached_property``
    values, so instances are cheap to run repeatedly and safe to share.
    """

    states: frozenset[AtnState]
    edges: tuple[Edge, ...]
    start: AtnState = AtnState.START

    # -- derived tables --------------------------------------------------

    @cached_property
    def _consuming(self) -> dict[tuple[AtnState, TokenState], tuple[AtnState, ...]]:
        table: dict[tuple[AtnState, TokenState], list[AtnState]] = {}
        for edge in self.edges:
            if isinstance(edge.symbol, TokenState):
                table.setdefault((edge.src, edge.symbol), []).append(edge.dst)
        return {k: tuple(v) for k, v in table.items()}

    @cached_property
    def _closures(self) -> dict[AtnState, frozenset[AtnState]]:
        eps: dict[AtnState, list[AtnState]] = {}
        for edge in self.edges:
            if edge.symbol is Marker.EPSILON:
                eps.setdefault(edge.src, []).append(edge.dst)
        closures = {}
        for state in self.states:
            seen = {state}
            frontier = [state]
            while frontier:
                cur = frontier.pop()
                for nxt in eps.get(cur, ()):
                    if nxt not in seen:
                        seen.add(nxt)
                        frontier.append(nxt)
            closures[state] = frozenset(seen)
        return closures

    @cached_property
    def _end_targets(self) -> dict[AtnState, AtnState]:
        return {
            e.src: e.dst for e in self.edges if e.symbol is Marker.END_OF_INPUT
        }

    @cached_property
    def _subset_moves(self) -> dict:
        # Memo for the powerset simulation; filled lazily by step().
        return {}

    # -- execution --------------------------------------------------------

    def closure(self, states: Iterable[AtnState]) -> frozenset[AtnState]:
        out: set[AtnState] = set()
        for s in states:
            out |= self._closures[s]
        return frozenset(out)

    def initial(self) -> frozenset[AtnState]:
        return self.closure([self.start])

    def step(
        self, current: Iterable[AtnState], token: TokenState
    ) -> frozenset[AtnState]:
        """Advance every tracked state on ``token``.

        A state with no edge consuming the token is retained unchanged, so
        NotClaim/NotPremise tokens (which no edge consumes) are no-ops and the
        result is never empty.
        """
        key = (frozenset(current), token)
        cached = self._subset_moves.get(key)
        if cached is not None:
            return cached
        out: set[AtnState] = set()
        for state in key[0]:
            targets = self._consuming.get((state, token))
            if targets is None:
                out.add(state)
            else:
                out.update(targets)
        result = self.closure(out)
        self._subset_moves[key] = result
        return result

    def finish(self, current: Iterable[AtnState]) -> ArgumentLabel:
        """Apply the end-of-input edges and report the verdict."""
        for state in current:
            if self._end_targets.get(state) is AtnState.ACCEPT:
                return ArgumentLabel.ARGUMENT
        return ArgumentLabel.NOT_ARGUMENT

    def run(self, seq: TokenSequence | Sequence[TokenState]) -> ArgumentLabel:
        current = self.initial()
        for token in seq:
            current = self.step(current, token)
        return self.finish(current)


def predicate_oracle(seq: TokenSequence | Sequence[TokenState]) -> ArgumentLabel:
    """Reference semantics the network must match: an argument is any
    sequence with at least one claim and at least one premise."""
    tokens = set(seq)
    if TokenState.CLAIM in tokens and TokenState.PREMISE in tokens:
        return ArgumentLabel.ARGUMENT
    return ArgumentLabel.NOT_ARGUMENT


def build_detection_atn() -> Atn:
    """Build the detection network.

    Layer one tracks which of claim/premise has been seen first; once both
    are present the run sits in the ClaimThenPremise / PremiseThenClaim pair
    (plus their mirrored second-layer twins, kept as distinct nodes rather
    than merged) and only then does end-of-input lead to Accept.
    """
    S = AtnState
    C, P = TokenState.CLAIM, TokenState.PREMISE
    END, EPS = Marker.END_OF_INPUT, Marker.EPSILON
    edges = (
        # first tokens
        Edge(S.START, C, S.CLAIM_ONLY),
        Edge(S.START, P, S.PREMISE_ONLY),
        # accumulate more of the same
        Edge(S.CLAIM_ONLY, C, S.CLAIM_ONLY),
        Edge(S.PREMISE_ONLY, P, S.PREMISE_ONLY),
        # the missing kind arrives
        Edge(S.CLAIM_ONLY, P, S.CLAIM_THEN_PREMISE),
        Edge(S.PREMISE_ONLY, C, S.PREMISE_THEN_CLAIM),
        # both kinds present: keep consuming either
        Edge(S.CLAIM_THEN_PREMISE, P, S.CLAIM_THEN_PREMISE),
        Edge(S.PREMISE_THEN_CLAIM, C, S.PREMISE_THEN_CLAIM),
        Edge(S.CLAIM_THEN_PREMISE, C, S.CLAIM_THEN_PREMISE_ALT),
        Edge(S.PREMISE_THEN_CLAIM, P, S.PREMISE_THEN_CLAIM_ALT),
        Edge(S.CLAIM_THEN_PREMISE_ALT, C, S.CLAIM_THEN_PREMISE_ALT),
        Edge(S.PREMISE_THEN_CLAIM_ALT, P, S.PREMISE_THEN_CLAIM_ALT),
        # unlabeled back-arrows between the layers: silent moves
        Edge(S.CLAIM_THEN_PREMISE_ALT, EPS, S.CLAIM_THEN_PREMISE),
        Edge(S.PREMISE_THEN_CLAIM_ALT, EPS, S.PREMISE_THEN_CLAIM),
        # end-of-input verdicts
        Edge(S.START, END, S.REJECT),
        Edge(S.CLAIM_ONLY, END, S.REJECT),
        Edge(S.PREMISE_ONLY, END, S.REJECT),
        Edge(S.CLAIM_THEN_PREMISE, END, S.ACCEPT),
        Edge(S.PREMISE_THEN_CLAIM, END, S.ACCEPT),
        Edge(S.CLAIM_THEN_PREMISE_ALT, END, S.ACCEPT),
        Edge(S.PREMISE_THEN_CLAIM_ALT, END, S.ACCEPT),
    )
    return Atn(states=frozenset(AtnState), edges=edges)


def validate_atn(atn: Atn) -> list[str]:
    """Structural checks; empty list when the network is well formed."""
    problems: list[str] = []
    if atn.start is not AtnState.START:
        problems.append("start state must be Start")
    for edge in atn.edges:
        if edge.src in TERMINAL_STATES:
            problems.append(f"terminal state {edge.src} has an outgoing edge")
    non_terminal = atn.states - TERMINAL_STATES
    for state in non_terminal:
        if state not in atn._end_targets:
            problems.append(f"{state} has no end-of-input edge")
        elif atn._end_targets[state] not in TERMINAL_STATES:
            problems.append(f"{state} ends in a non-terminal state")
    return problems


def step(atn: Atn, current: Iterable[AtnState], token: TokenState) -> frozenset[AtnState]:
    return atn.step(current, token)


def run(atn: Atn, seq: TokenSequence | Sequence[TokenState]) -> ArgumentLabel:
    return atn.run(seq)


def all_token_sequences(max_len: int) -> Iterable[tuple[TokenState, ...]]:
    """Every token sequence up to ``max_len``, for exhaustive checking."""
    for length in range(max_len + 1):
        yield from itertools.product(tuple(TokenState), repeat=length)


# -- rendering ----------------------------------------------------------------

_END_LABEL = "(end of text)"
_EPS_LABEL = "(silently)"


def _symbol_label(symbol: Symbol) -> str:
    if symbol is Marker.END_OF_INPUT:
        return _END_LABEL
    if symbol is Marker.EPSILON:
        return _EPS_LABEL
    return str(symbol)


def transition_lines(atn: Atn) -> list[str]:
    """One deterministic line per edge, in construction order."""
    return [
        f"{e.src} --{_symbol_label(e.symbol)}--> {e.dst}" for e in atn.edges
    ]


def render_pseudo_language(atn: Atn) -> str:
    """Render the network as rule text suitable for a system prompt.

    Output is byte-identical for the same network: edge order is the stored
    construction order and nothing here depends on hashing.
    """
    lines = [
        "Read the text as a sequence of tokens. Each token is a span of words",
        "in exactly one of four states: Claim, Premise, NotClaim, NotPremise.",
        "A Claim asserts a position for or against something. A Premise gives",
        "evidence or a reason in support of a claim.",
        "",
        "Then trace the tokens through this machine, starting in the Start state:",
    ]
    lines += [f"  {line}" for line in transition_lines(atn)]
    lines += [
        "",
        "A token with no matching transition leaves the machine where it stands,",
        "so NotClaim and NotPremise tokens never change the state.",
        "The text is an Argument only if the trace can finish in Accept, which",
        "requires at least one Claim token and at least one Premise token.",
    ]
    return "\n".join(lines)


def export_edge_table(atn: Atn) -> str:
    """Tab-separated edge dump (from, symbol, to), one edge per line."""
    rows = [f"{e.src}\t{_symbol_label(e.symbol)}\t{e.dst}" for e in atn.edges]
    return "\n".join(rows) + "\n"

"""Prompt construction and response parsing.

Builders render template files into (system, user) message pairs; parsers map
raw model replies back onto labels. The two sides never call each other; they
share only the answer-format vocabulary pinned in the ``*_ANSWERS`` constants.

Templates are plain text with ``{text}``, ``{topic}``, and ``{atn_rules}``
placeholders, substituted literally (no escaping), so prompts are
byte-deterministic for identical inputs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Generic, Optional, TypeVar

from .atn import build_detection_atn, render_pseudo_language
from .core import ArgumentLabel, StanceLabel, Topic

DEFAULT_TEMPLATE_DIR = Path(__file__).parent / "templates"

# Answer vocabulary shared between builders (format instructions) and parsers.
DETECTION_ANSWERS = ("Argument", "NoArgument")
STANCE_ANSWERS = ("NoArgument", "Favor", "Against")
TOPIC_MARKER = "Topic:"

L = TypeVar("L")


class Task(Enum):
    DETECT = "detect"
    EXTRACT = "extract"
    STANCE = "stance"

    def __str__(self) -> str:
        return self.value


class PromptVariant(Enum):
    WITH_ATN = "atn"
    NO_ATN = "no-atn"

    def __str__(self) -> str:
        return self.value


class ParseBasis(Enum):
    EXACT_MATCH = "exact"
    NORMALIZED_MATCH = "normalized"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class Prompt:
    system: str
    user: str
    task: Task
    variant: PromptVariant

    def __post_init__(self) -> None:
        if not self.system or not self.user:
            raise ValueError("system and user messages must be non-empty")


@dataclass(frozen=True)
class ParseOutcome(Generic[L]):
    """A parsed label plus how confidently it was recovered. Fallback
    outcomes always carry a diagnostic."""

    label: L
    basis: ParseBasis
    raw: str
    diagnostic: Optional[str] = None

    def __post_init__(self) -> None:
        if self.basis is ParseBasis.FALLBACK and not self.diagnostic:
            raise ValueError("fallback outcome requires a diagnostic")


class PromptError(ValueError):
    """Raised when a builder receives unusable input (empty text/topic)."""


@lru_cache(maxsize=None)
def _template(template_dir: str, name: str) -> str:
    path = Path(template_dir) / f"{name}.txt"
    return path.read_text(encoding="utf-8")


def _fill(template: str, **values: str) -> str:
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out.strip("\n")


@lru_cache(maxsize=1)
def _atn_rules() -> str:
    return render_pseudo_language(build_detection_atn())


def _dir(template_dir: Optional[Path]) -> str:
    return str(template_dir if template_dir is not None else DEFAULT_TEMPLATE_DIR)


# -- builders ------------------------------------------------------------


def build_detection_prompt(
    text: str,
    variant: PromptVariant = PromptVariant.WITH_ATN,
    template_dir: Optional[Path] = None,
) -> Prompt:
    if not text.strip():
        raise PromptError("text must be non-empty")
    tdir = _dir(template_dir)
    system_name = (
        "detect_system_atn" if variant is PromptVariant.WITH_ATN else "detect_system_plain"
    )
    system = _fill(_template(tdir, system_name), atn_rules=_atn_rules())
    user = _fill(_template(tdir, "detect_user"), text=text)
    return Prompt(system=system, user=user, task=Task.DETECT, variant=variant)


def build_stance_prompt(
    text: str,
    topic: str,
    variant: PromptVariant = PromptVariant.WITH_ATN,
    template_dir: Optional[Path] = None,
) -> Prompt:
    if not text.strip():
        raise PromptError("text must be non-empty")
    if not topic.strip():
        raise PromptError("stance classification requires a topic")
    tdir = _dir(template_dir)
    system_name = (
        "stance_system_atn" if variant is PromptVariant.WITH_ATN else "stance_system_plain"
    )
    system = _fill(_template(tdir, system_name), atn_rules=_atn_rules())
    user = _fill(_template(tdir, "stance_user"), text=text, topic=topic)
    return Prompt(system=system, user=user, task=Task.STANCE, variant=variant)


def build_cte_prompt(text: str, template_dir: Optional[Path] = None) -> Prompt:
    """Topic-extraction prompt; single variant, no network rules embedded."""
    if not text.strip():
        raise PromptError("text must be non-empty")
    tdir = _dir(template_dir)
    system = _template(tdir, "extract_system").strip("\n")
    user = _fill(_template(tdir, "extract_user"), text=text)
    return Prompt(system=system, user=user, task=Task.EXTRACT, variant=PromptVariant.NO_ATN)


def build_generation_prompt(
    topic: str,
    style: str,
    argument_type: Optional[str] = None,
    template_dir: Optional[Path] = None,
) -> tuple[str, str]:
    """(system, user) pair for synthetic corpus generation. Not one of the
    three analysis tasks, so it travels outside the Prompt type."""
    if not topic.strip():
        raise PromptError("topic must be non-empty")
    tdir = _dir(template_dir)
    system = _template(tdir, "generate_system").strip("\n")
    if argument_type is None:
        user = _fill(_template(tdir, "generate_nonargument_user"), topic=topic, style=style)
    else:
        user = _fill(
            _template(tdir, "generate_user"),
            topic=topic,
            style=style,
            argument_type=argument_type,
        )
    return system, user


# -- parsers -------------------------------------------------------------


def _final_line(raw: str) -> str:
    for line in reversed(raw.splitlines()):
        if line.strip():
            return line.strip()
    return ""


_NOT_ARGUMENT_PATTERNS = ("noargument", "no argument", "notargument", "not an argument")


def parse_detection_response(raw: str) -> ParseOutcome[ArgumentLabel]:
    line = _final_line(raw)
    lowered = line.lower()
    stripped = lowered.strip(" .!'\"`*")
    if stripped in ("argument", "noargument"):
        label = ArgumentLabel.ARGUMENT if stripped == "argument" else ArgumentLabel.NOT_ARGUMENT
        return ParseOutcome(label, ParseBasis.EXACT_MATCH, raw)
    # negative forms first: "argument" is a substring of all of them
    if any(p in lowered for p in _NOT_ARGUMENT_PATTERNS):
        return ParseOutcome(ArgumentLabel.NOT_ARGUMENT, ParseBasis.NORMALIZED_MATCH, raw)
    if "argument" in lowered:
        return ParseOutcome(ArgumentLabel.ARGUMENT, ParseBasis.NORMALIZED_MATCH, raw)
    return ParseOutcome(
        ArgumentLabel.NOT_ARGUMENT,
        ParseBasis.FALLBACK,
        raw,
        diagnostic=f"no detection label in final line {line!r}",
    )


# Closed synonym table for stance replies. Order matters: negative class
# first (its names contain "argument"), then Against before Favor so that
# word-boundary hits are checked in a fixed, documented order.
_STANCE_PATTERNS: tuple[tuple[StanceLabel, str], ...] = (
    (StanceLabel.NO_ARGUMENT, r"no\s?argument"),
    (StanceLabel.NO_ARGUMENT, r"not an argument"),
    (StanceLabel.AGAINST, r"\bagainst\b"),
    (StanceLabel.AGAINST, r"\bcon\b"),
    (StanceLabel.FAVOR, r"\bfavou?r\b"),
    (StanceLabel.FAVOR, r"\bpro\b"),
)


def parse_stance_response(raw: str) -> ParseOutcome[StanceLabel]:
    line = _final_line(raw)
    lowered = line.lower()
    stripped = lowered.strip(" .!'\"`*")
    exact = {"noargument": StanceLabel.NO_ARGUMENT,
             "favor": StanceLabel.FAVOR,
             "against": StanceLabel.AGAINST}
    if stripped in exact:
        return ParseOutcome(exact[stripped], ParseBasis.EXACT_MATCH, raw)
    for label, pattern in _STANCE_PATTERNS:
        if re.search(pattern, lowered):
            return ParseOutcome(label, ParseBasis.NORMALIZED_MATCH, raw)
    return ParseOutcome(
        StanceLabel.NO_ARGUMENT,
        ParseBasis.FALLBACK,
        raw,
        diagnostic=f"no stance label in final line {line!r}",
    )


def parse_cte_response(raw: str) -> ParseOutcome[Topic]:
    """Take the phrase after the last 'Topic:' marker; without a marker, fall
    back to the final non-empty line."""
    lowered = raw.lower()
    marker_at = lowered.rfind(TOPIC_MARKER.lower())
    if marker_at >= 0:
        phrase = raw[marker_at + len(TOPIC_MARKER):].split("\n", 1)[0]
        phrase = phrase.strip().strip("'\"` .,;!").strip()
        if phrase:
            marker_on_final_line = _final_line(raw).lower().startswith(TOPIC_MARKER.lower())
            basis = ParseBasis.EXACT_MATCH if marker_on_final_line else ParseBasis.NORMALIZED_MATCH
            return ParseOutcome(Topic.of(phrase), basis, raw)
    line = _final_line(raw)
    if line:
        phrase = line.strip().strip("'\"` .,;!").strip()
        if phrase:
            return ParseOutcome(
                Topic.of(phrase),
                ParseBasis.FALLBACK,
                raw,
                diagnostic="no 'Topic:' marker; used final line",
            )
    return ParseOutcome(
        Topic.no_topic(),
        ParseBasis.FALLBACK,
        raw,
        diagnostic="empty response",
    )

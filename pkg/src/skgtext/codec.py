"""Serialise gold outputs to target strings and parse predictions back.

The codecs are strict inverses of the target format and never normalise:
trimming, case folding, and whitespace collapsing belong to metric
normalisation, not here. Answer lists joined with ", " are lossy when an
answer itself contains ", "; that is a property of the flat format and is
deliberately not escaped away (the metrics module also supports whole-string
comparison for such cases).
"""

from __future__ import annotations

from .knowledge import DialogueState, Ontology

ANSWER_JOIN = ", "
BOOLEAN_TRUE = "entailed"
BOOLEAN_FALSE = "refuted"
STATE_PAIR_JOIN = ", "
UNSET_VALUE = "none"


def serialize_answers(answers: list[str]) -> str:
    """Join an answer set with ", ". Raises ValueError on an empty list."""
    if not answers:
        raise ValueError("cannot serialise an empty answer list")
    return ANSWER_JOIN.join(answers)


def parse_answers(text: str) -> list[str]:
    """Split on every ", "; elements are kept verbatim. "" parses to []."""
    if not text:
        return []
    return text.split(ANSWER_JOIN)


def serialize_boolean(value: bool) -> str:
    return BOOLEAN_TRUE if value else BOOLEAN_FALSE


def parse_boolean(text: str) -> bool | None:
    """Inverse of serialize_boolean; None means unparseable."""
    if text == BOOLEAN_TRUE:
        return True
    if text == BOOLEAN_FALSE:
        return False
    return None


def render_slot_name(slot: str) -> str:
    """Slot names render with '-' replaced by ' ' in the flat state string."""
    return slot.replace("-", " ")


def serialize_dialogue_state(ontology: Ontology, state: DialogueState) -> str:
    """Render every ontology slot, in ontology order, as "slot value".

    Slots unset in ``state`` emit the value "none". Raises ValueError when
    the state names a slot absent from the ontology.
    """
    known = set(ontology.slot_names())
    unknown = [s for s, _ in state.pairs if s not in known]
    if unknown:
        raise ValueError(f"state references unknown slot(s): {', '.join(unknown)}")
    values = dict(state.pairs)
    return STATE_PAIR_JOIN.join(
        f"{render_slot_name(name)} {values.get(name, UNSET_VALUE)}"
        for name in ontology.slot_names()
    )


def parse_dialogue_state(ontology: Ontology, text: str) -> tuple[DialogueState, list[str]]:
    """Parse a flat state string back into (state, residue).

    Each ", "-separated segment is matched against the ontology's rendered
    slot names by greedy longest prefix (values may contain spaces, so the
    slot name is the only reliable anchor); the remainder of the segment is
    the value. Segments matching no slot are collected as residue, never
    raised. The returned state covers every ontology slot in ontology order,
    with unmatched slots set to "none".
    """
    rendered = sorted(
        ((render_slot_name(name), name) for name in ontology.slot_names()),
        key=lambda item: len(item[0]),
        reverse=True,
    )
    values: dict[str, str] = {}
    residue: list[str] = []
    for segment in text.split(STATE_PAIR_JOIN) if text else []:
        for prefix, slot in rendered:
            if segment == prefix:
                values[slot] = ""
                break
            if segment.startswith(prefix + " "):
                values[slot] = segment[len(prefix) + 1 :]
                break
        else:
            residue.append(segment)
    state = DialogueState(
        tuple((name, values.get(name, UNSET_VALUE)) for name in ontology.slot_names())
    )
    return state, residue

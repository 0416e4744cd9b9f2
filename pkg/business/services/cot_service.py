"""
Chain-of-thought assembly: template loading, single-pass placeholder
substitution, example/extras blocks, decision parsing and the one-shot
clarification retry.
"""

import logging
import re
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

from app_config import DECISION_TAIL_WINDOW, NONE_AVAILABLE, TEMPLATES_DIR
from business.exceptions.errors import AmbiguousDecisionError, MissingPlaceholderValueError
from business.models.cot import PLACEHOLDER, CoTInstance, CoTTemplate, Decision
from business.models.memory import MemoryEntry
from business.models.perception import PerceptionResult
from business.models.survey import EvacuationChoice

logger = logging.getLogger(__name__)

CLARIFY_SUFFIX = "\n\nAnswer only YES or NO."
_YES = re.compile(r"\byes\b", re.IGNORECASE)
_NO = re.compile(r"\bno\b", re.IGNORECASE)


@lru_cache(maxsize=None)
def _read_template(path: str) -> CoTTemplate:
    return CoTTemplate.parse(Path(path).read_text(encoding="utf-8"))


def load_template(name: str, templates_dir: Path = TEMPLATES_DIR) -> CoTTemplate:
    """Loads templates/<name>.txt."""
    return _read_template(str(Path(templates_dir) / f"{name}.txt"))


def substitute(text: str, values: Dict[str, str]) -> str:
    """Single pass; substituted values are never rescanned."""
    def replace(match: re.Match) -> str:
        name = match.group(1)
        if name not in values or values[name] is None:
            raise MissingPlaceholderValueError(name)
        return values[name]
    return PLACEHOLDER.sub(replace, text)


def render(template: CoTTemplate, values: Dict[str, str]) -> Tuple[str, str]:
    template.check_placeholders()
    return substitute(template.system_text, values), substitute(template.user_text, values)


# ---------- Blocks ----------

def render_risk_summary(risk: PerceptionResult) -> str:
    return f"{risk.text} (risk score {risk.calibrated_score} of 5)"


def render_examples(examples: Sequence[MemoryEntry]) -> str:
    """Numbered memory examples, or the none-available marker."""
    if not examples:
        return NONE_AVAILABLE
    blocks = []
    for i, e in enumerate(examples, start=1):
        lines = [
            f"Example {i}:",
            f"Context: {e.context_text}",
            f"Reasoning: {e.rationale_text}",
            f"Correct decision: the resident {e.correct_decision.label_word}",
        ]
        if e.reflection_text:
            lines.append(f"Reflection: {e.reflection_text}")
        blocks.append("\n".join(lines))
    return "\n" + "\n\n".join(blocks)


def render_extras(extras: Sequence[str]) -> str:
    items = [x.strip() for x in extras if x and x.strip()]
    return " ".join(items) if items else NONE_AVAILABLE


def assemble_cot(template: CoTTemplate, risk: Union[PerceptionResult, str], extras: Sequence[str],
                 examples: Sequence[MemoryEntry], record_id: str = "") -> CoTInstance:
    """
    Fills {Risk}, {Examples} and {Extras}. risk may be a ready-made summary
    string (used when perception inference is ablated).
    """
    components = {
        "risk_summary": risk if isinstance(risk, str) else render_risk_summary(risk),
        "examples_block": render_examples(examples),
        "extras_block": render_extras(extras),
    }
    system, user = render(template, {
        "Risk": components["risk_summary"],
        "Examples": components["examples_block"],
        "Extras": components["extras_block"],
    })
    return CoTInstance(
        record_id=record_id,
        template_id=template.template_id,
        rendered_system=system,
        rendered_user=user,
        components=components,
    )


# ---------- Decisions ----------

def parse_decision(response_text: str) -> Decision:
    """Reads a standalone YES (evacuate) or NO (stay) from the tail of a response."""
    if not response_text or not response_text.strip():
        raise AmbiguousDecisionError("Empty response")
    tail = response_text[-DECISION_TAIL_WINDOW:]
    has_yes, has_no = bool(_YES.search(tail)), bool(_NO.search(tail))
    if has_yes == has_no:
        raise AmbiguousDecisionError(
            "Response tail has both YES and NO" if has_yes else "Response tail has neither YES nor NO",
            tail=tail,
        )
    value = EvacuationChoice.EVACUATE if has_yes else EvacuationChoice.STAY
    return Decision(value=value, rationale_text=response_text)


def request_decision(llm, request) -> Decision:
    """Asks for a decision; an ambiguous reply gets one clarification retry."""
    response = llm.complete(request)
    try:
        return parse_decision(response.content)
    except AmbiguousDecisionError:
        logger.info("Ambiguous decision for %s, asking for clarification", request.request_id)

    follow_up = request.model_copy(update={
        "user_text": request.user_text + CLARIFY_SUFFIX,
        "request_id": f"{request.request_id}:clarify",
    })
    clarified = parse_decision(llm.complete(follow_up).content)
    return Decision(value=clarified.value, rationale_text=response.content)


def reflexion_prompt(entry: MemoryEntry, template: Optional[CoTTemplate] = None) -> Tuple[str, str]:
    """Original CoT, the wrong answer, then the reflexion request with the true label word."""
    template = template or load_template("reflexion")
    system, reflexion = render(template, {"Label": entry.correct_decision.label_word})
    user = f"{entry.cot_text}\n\nPrevious answer:\n{entry.rationale_text}\n\n{reflexion}"
    return system, user

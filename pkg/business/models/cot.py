"""
Prompt templates, rendered chain-of-thought instances and parsed decisions.
Templates are text files with a YAML front-matter block followed by
[system] and [user] sections; placeholders use the {Name} syntax.
"""

import re
from typing import Dict, List, Optional

import yaml
from pydantic import BaseModel, Field

from business.exceptions.errors import SchemaError, UnknownPlaceholderError
from business.models.survey import EvacuationChoice

KNOWN_PLACEHOLDERS = ("Survey", "Perception", "Examples", "Risk", "Extras", "Label")
PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class CoTTemplate(BaseModel):
    """A versioned system/user prompt pair with named slots."""
    template_id: str
    system_text: str
    user_text: str
    placeholders: List[str] = Field(default_factory=list)

    @classmethod
    def parse(cls, text: str) -> "CoTTemplate":
        """Reads front-matter and sections; rejects placeholders outside the known set."""
        if not text.startswith("---\n"):
            raise SchemaError("Template is missing its front-matter block")
        header, sep, body = text[4:].partition("\n---\n")
        if not sep:
            raise SchemaError("Template front-matter is not closed")
        meta = yaml.safe_load(header) or {}

        _, sys_marker, rest = body.partition("[system]\n")
        system_text, user_marker, user_text = rest.partition("\n[user]\n")
        if not sys_marker or not user_marker:
            raise SchemaError("Template needs [system] and [user] sections")

        template = cls(
            template_id=str(meta.get("template_id", "")),
            system_text=system_text.rstrip("\n"),
            user_text=user_text.rstrip("\n"),
            placeholders=list(meta.get("placeholders") or []),
        )
        template.check_placeholders()
        return template

    def used_placeholders(self) -> List[str]:
        found = PLACEHOLDER.findall(self.system_text) + PLACEHOLDER.findall(self.user_text)
        return sorted(set(found))

    def check_placeholders(self) -> None:
        for name in self.used_placeholders():
            if name not in KNOWN_PLACEHOLDERS or name not in self.placeholders:
                raise UnknownPlaceholderError(name)


class CoTInstance(BaseModel):
    """A fully rendered prompt plus the blocks it was built from."""
    record_id: str
    template_id: str
    rendered_system: str
    rendered_user: str
    components: Dict[str, str]


class Decision(BaseModel):
    """Parsed evacuation answer; value is None only when parsing failed."""
    value: Optional[EvacuationChoice] = None
    rationale_text: str = ""

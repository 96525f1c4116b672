"""Scene serialisation and few-shot chat prompt assembly."""
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from importlib import resources
from pathlib import Path

from .patterns import RelationKind
from .select import banned_reason

ROLES = ("system", "user", "assistant")

DEFAULT_INSTRUCTIONS = (
    "You write captions for aerial and satellite images. For each image you get a list of object "
    "groups found in the image (with their object types, counts and shapes) and the significant "
    "spatial relations between them. Write several short, fluent captions that describe the scene "
    "the way a person looking at the image would. Merge or drop relations that are redundant or "
    "unimportant, and paraphrase in your own words. Never mention group numbers, group ids or the "
    "order of groups (no \"group 0\", no \"the first group\"). "
    "Answer with a Python list of strings and nothing else, for example: "
    "[\"caption one\", \"caption two\"]"
)

CORRECTIVE_MESSAGE = "Return only the list."


@dataclass(frozen=True)
class Exemplar:
    scene_text: str
    captions: tuple

    def __post_init__(self):
        object.__setattr__(self, "captions", tuple(self.captions))
        if not self.scene_text:
            raise ValueError("exemplar scene_text is empty")
        if not self.captions or not all(isinstance(c, str) and c for c in self.captions):
            raise ValueError("exemplar needs at least one non-empty caption")
        for c in self.captions:
            if banned_reason(c):
                raise ValueError(f"exemplar caption mentions a group id: {c!r}")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown chat role {self.role!r}")
        if not self.content:
            raise ValueError("chat message content is empty")

    def to_dict(self):
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class PromptBundle:
    messages: tuple
    target_image_id: str

    def to_json(self):
        return [m.to_dict() for m in self.messages]

    def with_messages(self, *extra):
        return PromptBundle(self.messages + tuple(extra), self.target_image_id)


def format_distance(value):
    q = Decimal(repr(float(value))).quantize(Decimal("0.1"), rounding=ROUND_HALF_EVEN)
    return f"{q:.1f}"


def _group_line(group):
    counts = ", ".join(f"{n} {label}" for label, n in group.label_counts)
    flags = []
    if group.line is not None:
        flags.append("in a line")
    if group.is_singleton:
        flags.append("stand-alone")
    suffix = f" ({', '.join(flags)})" if flags else ""
    return f"- group {group.index}: {counts}{suffix}"


def _relation_line(rel):
    p = rel.participants
    if rel.kind is RelationKind.STANDS_ALONE:
        return f"- group {p[0]} stands alone"
    if rel.kind is RelationKind.IN_A_ROW:
        return f"- group {p[0]} in a row"
    if rel.kind is RelationKind.NEAR:
        return f"- group {p[0]} near group {p[1]} (distance {format_distance(rel.distance)})"
    if rel.kind is RelationKind.SURROUNDED_BY:
        return f"- group {p[0]} surrounded by group {p[1]}"
    return f"- group {p[0]} far from group {p[1]} (distance {format_distance(rel.distance)})"


def serialize_scene(scene):
    lines = ["Groups:"]
    lines.extend(_group_line(g) for g in scene.groups)
    lines.append("Relations:")
    if scene.relations:
        lines.extend(_relation_line(r) for r in scene.relations)
    else:
        lines.append("- none")
    return "\n".join(lines)


def _escape(s):
    return s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")


def render_caption_list(captions):
    """Render captions as a double-quoted list literal, e.g. ``["a", "b"]``."""
    return "[" + ", ".join(f'"{_escape(c)}"' for c in captions) + "]"


def build_prompt(scene, exemplars=(), instructions=DEFAULT_INSTRUCTIONS):
    messages = [ChatMessage("system", instructions)]
    for ex in exemplars:
        messages.append(ChatMessage("user", ex.scene_text))
        messages.append(ChatMessage("assistant", render_caption_list(ex.captions)))
    messages.append(ChatMessage("user", serialize_scene(scene)))
    return PromptBundle(tuple(messages), scene.image_id)


def parse_exemplars(doc):
    if not isinstance(doc, list):
        raise ValueError("exemplar file must hold a JSON list")
    out = []
    for i, item in enumerate(doc):
        if not isinstance(item, dict) or not isinstance(item.get("scene_text"), str):
            raise ValueError(f"exemplar {i}: expected {{scene_text, captions}}")
        captions = item.get("captions")
        if not isinstance(captions, list):
            raise ValueError(f"exemplar {i}: captions must be a list")
        try:
            out.append(Exemplar(item["scene_text"], captions))
        except ValueError as exc:
            raise ValueError(f"exemplar {i}: {exc}") from None
    return out


def load_exemplars(path=None):
    """Load exemplars from ``path``, or the three bundled ones when omitted."""
    if path is None:
        text = resources.files("arsic").joinpath("assets/exemplars.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_exemplars(json.loads(text))

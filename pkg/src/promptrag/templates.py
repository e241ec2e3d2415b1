"""Prompt template registry and rendering.

Bodies use ``{name}`` placeholders. Three names are understood:

``{question}``   the instance question
``{context}``    all documents joined by a blank line (monolithic templates)
``{documents}``  one labeled line per document (enumerated templates)

Literal braces are not supported in bodies.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .corpus import BenchmarkInstance

PLACEHOLDER = re.compile(r"\{([a-z_0-9]+)\}")
KNOWN_PLACEHOLDERS = frozenset({"question", "context", "documents"})
MONOLITHIC_SEPARATOR = "\n\n"


class TemplateError(ValueError):
    pass


class Category(str, enum.Enum):
    BASELINE = "baseline"
    FOUNDATIONAL = "foundational"
    REASONING = "reasoning"
    SELF_CORRECTION = "self_correction"
    ADVANCED = "advanced"
    HYBRID = "hybrid"


class ContextMode(str, enum.Enum):
    MONOLITHIC = "monolithic"
    ENUMERATED = "enumerated"


class DocLabelStyle(str, enum.Enum):
    DOC_BRACKET = "DOC_BRACKET"  # [DOC-1]
    D_BRACKET = "D_BRACKET"  # [D1]
    DOC_PLAIN = "DOC_PLAIN"  # Doc1:
    NUM_BRACKET = "NUM_BRACKET"  # [1]

    def label(self, i: int) -> str:
        return _LABEL_FORMATS[self].format(i=i)


_LABEL_FORMATS = {
    DocLabelStyle.DOC_BRACKET: "[DOC-{i}]",
    DocLabelStyle.D_BRACKET: "[D{i}]",
    DocLabelStyle.DOC_PLAIN: "Doc{i}:",
    DocLabelStyle.NUM_BRACKET: "[{i}]",
}

# registry order: baseline, literature set, then hybrids in taxonomy order
BUILTIN_ORDER = (
    "standard_context_aware",
    "instruction_tuned",
    "role_playing",
    "chain_of_thought",
    "least_to_most",
    "self_refine",
    "chain_of_verification",
    "few_shot_exemplar",
    "hierarchical_synthesis",
    "structured_json",
    "expert_cross_examination_synthesis_prompting",
    "adaptive_hybrid_prompting",
    "hybrid_focused_prompting",
    "hybrid_scientific_prompting",
    "hybrid_scientific_synthesis_prompting",
    "expert_synthesis_prompting",
    "expert_hierarchical_self_refine_prompting",
    "optimized_multi_hop_prompting",
    "multi_hop_decomposition_prompting",
    "optimized_multihop_3b_prompting",
    "slm_hotpot_smec",
    "multi_hop_chain_prompting",
    "multi_hop_compact_prompting",
    "optimized_multi_hop_slm",
)

BASELINE_ID = "standard_context_aware"


def _normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    category: Category
    body: str
    context_mode: ContextMode
    doc_label_style: DocLabelStyle = DocLabelStyle.DOC_BRACKET
    reconstructed: bool = False

    def __post_init__(self) -> None:
        validate_body(self.body, self.context_mode, self.id)

    @property
    def placeholders(self) -> list[str]:
        return PLACEHOLDER.findall(self.body)


def validate_body(body: str, mode: ContextMode, template_id: str = "<template>") -> None:
    names = PLACEHOLDER.findall(body)
    unknown = sorted(set(names) - KNOWN_PLACEHOLDERS)
    if unknown:
        raise TemplateError(f"{template_id}: unknown placeholder(s) {unknown}")
    stray = PLACEHOLDER.sub("", body)
    if "{" in stray or "}" in stray:
        raise TemplateError(f"{template_id}: literal braces are not supported in bodies")
    if names.count("question") != 1:
        raise TemplateError(f"{template_id}: body must contain {{question}} exactly once")
    if mode is ContextMode.MONOLITHIC:
        if "context" not in names:
            raise TemplateError(f"{template_id}: monolithic body needs {{context}}")
        if "documents" in names:
            raise TemplateError(f"{template_id}: monolithic body cannot use {{documents}}")
    else:
        if "documents" not in names:
            raise TemplateError(f"{template_id}: enumerated body needs {{documents}}")
        if "context" in names:
            raise TemplateError(f"{template_id}: enumerated body cannot use {{context}}")


@dataclass(frozen=True)
class RenderedPrompt:
    template_id: str
    instance_id: str
    text: str

    @property
    def char_length(self) -> int:
        return len(self.text)


def format_context(
    documents: list[str] | tuple[str, ...],
    mode: ContextMode,
    style: DocLabelStyle = DocLabelStyle.DOC_BRACKET,
) -> str | list[tuple[str, str]]:
    """Monolithic mode returns one string; enumerated mode returns
    ``(label, document)`` pairs with 1-based labels."""
    if not documents:
        raise TemplateError("cannot format an empty document list")
    docs = [_normalize_newlines(d) for d in documents]
    if ContextMode(mode) is ContextMode.MONOLITHIC:
        return MONOLITHIC_SEPARATOR.join(docs)
    style = DocLabelStyle(style)
    return [(style.label(i), d) for i, d in enumerate(docs, start=1)]


def render(template: PromptTemplate, instance: BenchmarkInstance) -> RenderedPrompt:
    values = {"question": _normalize_newlines(instance.question)}
    formatted = format_context(instance.documents, template.context_mode, template.doc_label_style)
    if template.context_mode is ContextMode.MONOLITHIC:
        values["context"] = formatted
    else:
        values["documents"] = "\n".join(f"{label} {doc}" for label, doc in formatted)

    def fill(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise TemplateError(f"{template.id}: placeholder {{{name}}} has no value")
        return values[name]

    # single pass, so placeholder-like text inside documents is never expanded
    text = PLACEHOLDER.sub(fill, _normalize_newlines(template.body))
    return RenderedPrompt(template_id=template.id, instance_id=instance.id, text=text)


# --- file form -------------------------------------------------------------

HEADER_KEYS = ("id", "category", "context_mode", "doc_label_style", "reconstructed")


def parse_template_text(text: str, source: str = "<string>") -> PromptTemplate:
    """Parse ``key: value`` header lines, a ``---`` line, then the body."""
    text = _normalize_newlines(text)
    head, sep, body = text.partition("\n---\n")
    if not sep:
        raise TemplateError(f"{source}: missing '---' separator after header")
    meta: dict[str, str] = {}
    for line in head.split("\n"):
        if not line.strip() or line.strip() == "---":
            continue
        key, colon, value = line.partition(":")
        if not colon:
            raise TemplateError(f"{source}: bad header line {line!r}")
        meta[key.strip()] = value.strip()
    for key in ("id", "category", "context_mode"):
        if key not in meta:
            raise TemplateError(f"{source}: header is missing {key!r}")
    try:
        return PromptTemplate(
            id=meta["id"],
            category=Category(meta["category"]),
            body=body.rstrip("\n"),
            context_mode=ContextMode(meta["context_mode"]),
            doc_label_style=DocLabelStyle(meta.get("doc_label_style", "DOC_BRACKET")),
            reconstructed=meta.get("reconstructed", "false").lower() == "true",
        )
    except ValueError as exc:
        if isinstance(exc, TemplateError):
            raise
        raise TemplateError(f"{source}: {exc}") from None


def template_to_text(template: PromptTemplate) -> str:
    lines = [
        f"id: {template.id}",
        f"category: {template.category.value}",
        f"context_mode: {template.context_mode.value}",
        f"doc_label_style: {template.doc_label_style.value}",
        f"reconstructed: {str(template.reconstructed).lower()}",
        "---",
        template.body,
    ]
    return "\n".join(lines) + "\n"


def load_template_dir(path: str | Path) -> list[PromptTemplate]:
    """Load every ``*.txt`` template in a directory, sorted by file name."""
    path = Path(path)
    if not path.is_dir():
        raise TemplateError(f"template directory not found: {path}")
    out = []
    seen = set()
    for file in sorted(path.glob("*.txt")):
        tpl = parse_template_text(file.read_text(encoding="utf-8"), str(file))
        if tpl.id in seen:
            raise TemplateError(f"{file}: duplicate template id {tpl.id!r}")
        seen.add(tpl.id)
        out.append(tpl)
    return out


@lru_cache(maxsize=None)
def _builtin() -> tuple[PromptTemplate, ...]:
    pkg = resources.files("promptrag") / "builtin_templates"
    templates = []
    for tid in BUILTIN_ORDER:
        text = (pkg / f"{tid}.txt").read_text(encoding="utf-8")
        tpl = parse_template_text(text, f"builtin:{tid}")
        if tpl.id != tid:
            raise TemplateError(f"builtin file {tid}.txt declares id {tpl.id!r}")
        templates.append(tpl)
    return tuple(templates)


def registry() -> list[PromptTemplate]:
    """The 24 built-in templates in their fixed order."""
    return list(_builtin())


def get_template(template_id: str, extra: list[PromptTemplate] | None = None) -> PromptTemplate:
    for tpl in (extra or []) + registry():
        if tpl.id == template_id:
            return tpl
    raise KeyError(f"unknown template id {template_id!r}")

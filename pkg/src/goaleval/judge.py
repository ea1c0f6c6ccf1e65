"""Judge prompt rendering, teacher-output parsing, and a rule-based mock judge.

The default prompt template ships as text assets and is used verbatim; the
template's inline RCOF numbering differs from the canonical taxonomy, so
parsed codes go through a configurable translation map.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from string import Formatter
from typing import Iterator

from .dialog_model import (
    AnnotationMismatch,
    Dialog,
    DialogAnnotation,
    Provenance,
    Quality,
    RcofCode,
    TurnAnnotation,
    parse_yes_no,
    serialize_annotation,
    validate_annotation,
)

_PLACEHOLDERS = ("system_prompt", "output_format", "question")
_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)

#: Canonical translation for the default template's inline code listing.
DEFAULT_PROMPT_CODE_MAP: dict[str, RcofCode] = {
    "E1": RcofCode.E3_INCORRECT_RETRIEVAL,
    "E2": RcofCode.E4_RETRIEVAL_FAILURE,
    "E3": RcofCode.E2_REFUSAL,
    "E4": RcofCode.E1_LANGUAGE_UNDERSTANDING,
    "E5": RcofCode.E5_SYSTEM_ERROR,
    "E6": RcofCode.E6_INCORRECT_ROUTING,
    "E7": RcofCode.E7_OUT_OF_DOMAIN,
}

#: Identity map for outputs that already use the canonical taxonomy.
CANONICAL_CODE_MAP: dict[str, RcofCode] = {c.value: c for c in RcofCode}


class TemplateError(Exception):
    pass


class ParseError(Exception):
    """Judge output could not be decoded.

    ``kind`` is one of: no_json, malformed_json, unbalanced_think.
    """

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind}: {detail}" if detail else kind)


@dataclass(frozen=True)
class PromptTemplate:
    system_prompt: str
    output_format: str
    body: str

    def __post_init__(self):
        try:
            fields = [f for _, f, _, _ in Formatter().parse(self.body) if f is not None]
        except ValueError as exc:
            raise TemplateError(f"invalid placeholder syntax: {exc}") from exc
        for name in _PLACEHOLDERS:
            if fields.count(name) != 1:
                raise TemplateError(
                    f"body must contain {{{name}}} exactly once, found {fields.count(name)}"
                )
        extra = set(fields) - set(_PLACEHOLDERS)
        if extra:
            raise TemplateError(f"unknown placeholder {{{sorted(extra)[0]}}}")


def load_template(directory: str | Path) -> PromptTemplate:
    """Load a template from a directory of system_prompt/output_format/body
    text files, preserved byte-for-byte."""
    directory = Path(directory)
    return PromptTemplate(
        system_prompt=(directory / "system_prompt.txt").read_text(encoding="utf-8"),
        output_format=(directory / "output_format.txt").read_text(encoding="utf-8"),
        body=(directory / "body.txt").read_text(encoding="utf-8"),
    )


def default_template() -> PromptTemplate:
    base = resources.files("goaleval").joinpath("assets/judge_prompt")
    return PromptTemplate(
        system_prompt=base.joinpath("system_prompt.txt").read_text(encoding="utf-8"),
        output_format=base.joinpath("output_format.txt").read_text(encoding="utf-8"),
        body=base.joinpath("body.txt").read_text(encoding="utf-8"),
    )


def load_code_map(path: str | Path) -> dict[str, RcofCode]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {key: RcofCode.from_wire(value) for key, value in raw.items()}


def default_code_map() -> dict[str, RcofCode]:
    return dict(DEFAULT_PROMPT_CODE_MAP)


def render_transcript(d: Dialog, include_snippets: bool = False) -> str:
    """Canonical numbered transcript placed in the {question} slot."""
    blocks = []
    for t in d.turns:
        lines = [
            f"Turn {t.turn_number}:",
            f"user: {t.user_msg}",
            f"bot: {t.response}",
            f"sources: {'; '.join(t.source_names) if t.source_names else '(none)'}",
        ]
        if include_snippets and t.source_snippets:
            lines.append(f"snippets: {' | '.join(t.source_snippets)}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def render_prompt(
    d: Dialog, t: PromptTemplate, include_snippets: bool = False
) -> str:
    """Pure render: identical inputs give bit-identical prompt text."""
    return t.body.format(
        system_prompt=t.system_prompt,
        output_format=t.output_format,
        question=render_transcript(d, include_snippets=include_snippets),
    )


@dataclass(frozen=True)
class JudgeVerdict:
    annotation: DialogAnnotation
    think_text: str | None
    raw: str
    judge_id: str
    latency: float = 0.0


@dataclass(frozen=True)
class JudgeFailure:
    """A judge whose output could not be used (parse or transport error)."""

    judge_id: str
    error: str
    raw: str | None = None
    latency: float = 0.0


def _strip_think(raw: str) -> tuple[str | None, str]:
    blocks = _THINK_RE.findall(raw)
    remainder = _THINK_RE.sub("", raw)
    if "<think>" in remainder or "</think>" in remainder:
        raise ParseError("unbalanced_think", "stray think tag after stripping")
    think = "\n".join(b.strip() for b in blocks if b.strip())
    return (think or None), remainder


def _balanced_objects(text: str) -> Iterator[tuple[str, int]]:
    """Yield (candidate, end) for each balanced {...} region, string-aware."""
    pos = 0
    while True:
        start = text.find("{", pos)
        if start == -1:
            return
        depth = 0
        in_string = False
        escaped = False
        for j in range(start, len(text)):
            ch = text[j]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    yield text[start : j + 1], j + 1
                    break
        pos = start + 1


def _extract_json(text: str) -> tuple[dict, int]:
    saw_brace = False
    for candidate, end in _balanced_objects(text):
        saw_brace = True
        try:
            obj = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj, end
    if saw_brace:
        raise ParseError("malformed_json", "no balanced region decodes as a JSON object")
    raise ParseError("no_json", "no JSON object found in output")


def _decode_turn(obj: dict, code_map: dict[str, RcofCode]) -> TurnAnnotation:
    if not isinstance(obj, dict):
        raise ParseError("malformed_json", "turn entry is not an object")
    try:
        turn_number = obj["turn_number"]
        if not isinstance(turn_number, int) or isinstance(turn_number, bool):
            raise ParseError("malformed_json", "turn_number must be an integer")
        is_new_goal = parse_yes_no(obj["is_new_goal"])
        quality = Quality(str(obj["quality"]).strip().lower())
    except ParseError:
        raise
    except KeyError as exc:
        raise ParseError("malformed_json", f"turn missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ParseError("malformed_json", str(exc)) from None
    raw_rcof = obj.get("rcof")
    rcof = None
    if raw_rcof is not None and str(raw_rcof).strip().lower() not in ("", "null", "none"):
        key = str(raw_rcof).strip().upper()
        if key not in code_map:
            raise ParseError("malformed_json", f"rcof code {raw_rcof!r} not in code map")
        rcof = code_map[key]
    return TurnAnnotation(
        turn_number=turn_number,
        is_new_goal=is_new_goal,
        quality=quality,
        rcof=rcof,
    )


def parse_judge_output(
    raw: str,
    d: Dialog,
    *,
    judge_id: str = "unknown",
    latency: float = 0.0,
    code_map: dict[str, RcofCode] | None = None,
) -> JudgeVerdict:
    """Decode one teacher response: think blocks, then the first JSON object.

    Trailing prose around the JSON is tolerated. RCOF codes are translated
    from the prompt's numbering to the canonical taxonomy via ``code_map``
    (the default template's map when omitted). Raises ParseError or
    AnnotationMismatch; callers treat either as a failed judge, not a
    pipeline failure.
    """
    if code_map is None:
        code_map = DEFAULT_PROMPT_CODE_MAP
    think_text, remainder = _strip_think(raw)
    obj, _end = _extract_json(remainder)
    raw_turns = obj.get("turns")
    if not isinstance(raw_turns, list) or not raw_turns:
        raise ParseError("malformed_json", "expected non-empty turns list")
    turns = sorted(
        (_decode_turn(t, code_map) for t in raw_turns),
        key=lambda t: t.turn_number,
    )
    annotation = DialogAnnotation(
        dialog_id=d.dialog_id,
        turns=tuple(turns),
        provenance=Provenance.judge(judge_id),
    )
    validate_annotation(d, annotation)
    return JudgeVerdict(
        annotation=annotation,
        think_text=think_text,
        raw=raw,
        judge_id=judge_id,
        latency=latency,
    )


# ---------------------------------------------------------------------------
# Mock judge
# ---------------------------------------------------------------------------

_RULE_FIELDS = ("is_new_goal", "quality", "rcof")
_RULE_TARGETS = ("user_msg", "response", "any")


@dataclass(frozen=True)
class MockRule:
    pattern: str
    field: str
    value: str
    priority: int = 0
    regex: bool = False
    target: str = "any"

    def __post_init__(self):
        if self.field not in _RULE_FIELDS:
            raise ValueError(f"unknown rule field {self.field!r}")
        if self.target not in _RULE_TARGETS:
            raise ValueError(f"unknown rule target {self.target!r}")
        # fail fast on values that could never apply
        if self.field == "is_new_goal":
            parse_yes_no(self.value)
        elif self.field == "quality":
            Quality(self.value)
        else:
            RcofCode.from_wire(self.value)

    def compiled(self) -> re.Pattern:
        pattern = self.pattern if self.regex else re.escape(self.pattern)
        return re.compile(pattern, re.IGNORECASE)

    def matches(self, user_msg: str, response: str) -> bool:
        compiled = self.compiled()
        if self.target in ("user_msg", "any") and compiled.search(user_msg):
            return True
        if self.target in ("response", "any") and compiled.search(response):
            return True
        return False


def rules_from_list(raw: list[dict]) -> list[MockRule]:
    rules = []
    for i, entry in enumerate(raw):
        try:
            rules.append(
                MockRule(
                    pattern=entry["pattern"],
                    field=entry["field"],
                    value=str(entry["value"]),
                    priority=int(entry.get("priority", 0)),
                    regex=bool(entry.get("regex", False)),
                    target=entry.get("target", "any"),
                )
            )
        except KeyError as exc:
            raise ValueError(f"rule {i} missing key {exc.args[0]!r}") from None
    return rules


def load_rules(path: str | Path) -> list[MockRule]:
    return rules_from_list(json.loads(Path(path).read_text(encoding="utf-8")))


def mock_judge(
    d: Dialog,
    rules: list[MockRule],
    *,
    judge_id: str = "mock",
    default_rcof: RcofCode = RcofCode.E5_SYSTEM_ERROR,
) -> JudgeVerdict:
    """Deterministic rule-based judge used for offline runs and tests.

    Matching rules are applied per turn in (priority, declaration order),
    each overriding its one field; defaults are success with a new goal
    only on turn 1. Output is normalized so it always validates: turn 1
    stays a new goal, failures without a code get ``default_rcof``, and a
    leaked code on a success is dropped.
    """
    ordered = sorted(enumerate(rules), key=lambda pair: (pair[1].priority, pair[0]))
    turns = []
    notes = []
    for t in d.turns:
        is_new_goal = t.turn_number == 1
        quality = Quality.SUCCESS
        rcof: RcofCode | None = None
        for index, rule in ordered:
            if not rule.matches(t.user_msg, t.response):
                continue
            if rule.field == "is_new_goal":
                is_new_goal = parse_yes_no(rule.value)
            elif rule.field == "quality":
                quality = Quality(rule.value)
            else:
                rcof = RcofCode.from_wire(rule.value)
            notes.append(
                f"turn {t.turn_number}: rule[{index}] {rule.pattern!r} -> "
                f"{rule.field}={rule.value}"
            )
        if t.turn_number == 1:
            is_new_goal = True
        if quality is Quality.FAILURE and rcof is None:
            rcof = default_rcof
        if quality is Quality.SUCCESS:
            rcof = None
        turns.append(
            TurnAnnotation(
                turn_number=t.turn_number,
                is_new_goal=is_new_goal,
                quality=quality,
                rcof=rcof,
            )
        )
    annotation = DialogAnnotation(
        dialog_id=d.dialog_id,
        turns=tuple(turns),
        provenance=Provenance.judge(judge_id),
    )
    validate_annotation(d, annotation)
    return JudgeVerdict(
        annotation=annotation,
        think_text="\n".join(notes) or None,
        raw=serialize_annotation(annotation),
        judge_id=judge_id,
        latency=0.0,
    )

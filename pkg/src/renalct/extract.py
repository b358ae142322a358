"""Recover structured clinical features from generated report text, either
with a deterministic rule-based parser or through the feature-extraction
prompt against a backend.

The rule parser works over a fixed vocabulary on the first abnormality
block (the first sentence mentioning a lesion/cyst/mass/tumor); negations
("no mass", "without enhancement") scope to the clause they appear in and
set the field negative rather than unknown.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace

from .backend import BackendConfig, generate
from .errors import DataError
from .prompt import RenderedPrompt, render_feature_extraction_prompt
from .schema import (
    Attenuation,
    Enhancement,
    FeatureSet,
    GrowthPattern,
    Position,
    feature_set_from_dict,
    feature_set_to_dict,
)


@dataclass(frozen=True)
class ExtractionResult:
    features: FeatureSet
    method: str  # "rule" | "llm"
    notes: tuple[str, ...] = ()
    unparsed_spans: tuple[str, ...] = ()
    raw_response: str | None = None  # retained verbatim for the llm method

    def __post_init__(self):
        if self.method == "llm" and self.raw_response is None:
            raise DataError("llm extraction must retain the raw model response")


# ---------------------------------------------------------------------------
# Size standardization
# ---------------------------------------------------------------------------

_SUBCENTIMETER_RE = re.compile(r"\bsub\s*-?\s*centimet(?:er|re)\b", re.IGNORECASE)
_NUMBER = r"\d+(?:\.\d+)?"
_CHAIN_RE = re.compile(
    rf"({_NUMBER})((?:\s*[x×*]\s*{_NUMBER})*)\s*(cm|mm)?\b", re.IGNORECASE
)
_UNIT_CHAIN_RE = re.compile(
    rf"(?:{_NUMBER}\s*[x×*]\s*)*{_NUMBER}\s*(?:cm|mm)\b", re.IGNORECASE
)
_LARGEST_RE = re.compile(
    rf"largest\s+(?:size|diameter|dimension)\D{{0,40}}?({_NUMBER})\s*(cm|mm)?",
    re.IGNORECASE,
)


def standardize_size(raw: str | None) -> float | None:
    """Standardize a free-text size to centimeters.

    Multi-dimension strings take the largest value; mm converts to cm;
    "subcentimeter" maps to 0.5; anything unparseable yields None. A bare
    number without a unit is treated as centimeters (the Raw_Size
    convention).
    """
    if not raw:
        return None
    if _SUBCENTIMETER_RE.search(raw):
        return 0.5
    match = _CHAIN_RE.search(raw)
    if not match:
        return None
    values = [float(v) for v in re.findall(_NUMBER, match.group(0))]
    unit = (match.group(3) or "cm").lower()
    size = max(values)
    if unit == "mm":
        size /= 10.0
    return size if size > 0 else None


# ---------------------------------------------------------------------------
# Rule-based parsing
# ---------------------------------------------------------------------------

_ABNORMALITY_RE = re.compile(r"\b(lesions?|cyst\w*|mass(es)?|tumou?rs?|rcc|neoplasms?)\b", re.IGNORECASE)
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")
_CLAUSE_SPLIT_RE = re.compile(r"[,;:]")
_NEGATION_RE = re.compile(r"\b(?:no|without|free of|negative for)\b", re.IGNORECASE)

_POSITION_RE = re.compile(r"\b(left|right)\s+(?:kidney|renal)\b", re.IGNORECASE)
_GROWTH_RE = re.compile(r"\b(exophytic|endophytic)\b", re.IGNORECASE)
_ATTENUATION_PATTERNS = (
    (re.compile(r"\b(hypoattenuating|hypodense)\b", re.IGNORECASE), Attenuation.HYPO),
    (re.compile(r"\b(hyperattenuating|hyperdense)\b", re.IGNORECASE), Attenuation.HYPER),
    (re.compile(r"\bisoattenuating\b", re.IGNORECASE), Attenuation.ISO),
)
_NON_ENHANCEMENT_RE = re.compile(
    r"\b(?:no|without|non)[-\s]?enhanc\w*|\bnonenhanc\w*", re.IGNORECASE
)
_ENHANCEMENT_RE = re.compile(r"\benhanc\w*", re.IGNORECASE)
_BOOLEAN_PATTERNS = (
    ("cyst", re.compile(r"\bcyst(?:ic|s)?\b", re.IGNORECASE)),
    ("mass", re.compile(r"\bmass(?:es)?\b", re.IGNORECASE)),
    ("tumor", re.compile(r"\btumou?rs?\b|\brcc\b|\bneoplasms?\b", re.IGNORECASE)),
)


def _first_abnormality_block(text: str) -> tuple[str, tuple[str, ...]]:
    sentences = [s for s in _SENTENCE_SPLIT_RE.split(text) if s.strip()]
    for i, sentence in enumerate(sentences):
        if _ABNORMALITY_RE.search(sentence):
            rest = tuple(sentences[:i] + sentences[i + 1 :])
            return sentence, rest
    return text, ()


def _keyword_asserted(block: str, pattern: re.Pattern) -> bool:
    # Positive iff some clause mentions the keyword without a negation cue
    # earlier in the same clause.
    for clause in _CLAUSE_SPLIT_RE.split(block):
        match = pattern.search(clause)
        if not match:
            continue
        neg = _NEGATION_RE.search(clause[: match.start()])
        if not neg:
            return True
    return False


def _find_size(block: str) -> tuple[float | None, str | None, bool]:
    # Returns (size_cm, raw_span, unparseable). A stated largest diameter
    # wins over a raw multi-dimension chain.
    largest = _LARGEST_RE.search(block)
    if largest:
        value = float(largest.group(1))
        if (largest.group(2) or "cm").lower() == "mm":
            value /= 10.0
        return value, largest.group(0), False
    chain = _UNIT_CHAIN_RE.search(block)
    if chain:
        span = chain.group(0)
        size = standardize_size(span)
        return size, span, size is None
    if _SUBCENTIMETER_RE.search(block):
        span = _SUBCENTIMETER_RE.search(block).group(0)
        return 0.5, span, False
    return None, None, False


def parse_report_rule_based(text: str) -> ExtractionResult:
    """Deterministic keyword/pattern extraction; absent evidence stays
    unknown (categoricals) or false (booleans)."""
    block, unparsed = _first_abnormality_block(text or "")
    notes: list[str] = []

    position = Position.UNKNOWN
    pos_match = _POSITION_RE.search(block)
    if pos_match:
        position = Position(pos_match.group(1).lower())

    growth = GrowthPattern.UNKNOWN
    growth_match = _GROWTH_RE.search(block)
    if growth_match:
        growth = GrowthPattern(growth_match.group(1).lower())

    attenuation = Attenuation.UNKNOWN
    for pattern, value in _ATTENUATION_PATTERNS:
        if pattern.search(block):
            attenuation = value
            break

    enhancement = Enhancement.UNKNOWN
    if _NON_ENHANCEMENT_RE.search(block):
        enhancement = Enhancement.NON_ENHANCEMENT
    elif _ENHANCEMENT_RE.search(block):
        enhancement = Enhancement.ENHANCEMENT

    booleans = {}
    for name, pattern in _BOOLEAN_PATTERNS:
        asserted = _keyword_asserted(block, pattern)
        booleans[name] = asserted
        if not asserted and pattern.search(block):
            notes.append(f"negated: {name}")

    size_cm, raw_span, unparseable = _find_size(block)

    features = FeatureSet(
        position=position,
        raw_size=raw_span,
        size_cm=size_cm,
        exophytic=growth,
        attenuation=attenuation,
        enhancement=enhancement,
        cyst=booleans["cyst"],
        mass=booleans["mass"],
        tumor=booleans["tumor"],
        size_unparseable=unparseable,
    )
    return ExtractionResult(
        features=features, method="rule", notes=tuple(notes), unparsed_spans=unparsed
    )


# ---------------------------------------------------------------------------
# LLM-backed parsing via the feature-extraction prompt
# ---------------------------------------------------------------------------

_REPAIR_INSTRUCTION = (
    "\n\nYour previous reply was not a valid JSON object matching the "
    "template. Return only the JSON object, nothing else."
)


def _first_json_object(text: str) -> dict:
    start = text.find("{")
    if start < 0:
        raise DataError("no JSON object in response")
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return json.loads(text[start : i + 1])
    raise DataError("unterminated JSON object in response")


def _normalize_token(value, field_name: str) -> str:
    if value is None:
        return "unknown"
    token = str(value).strip().lower().replace("-", "_").replace(" ", "_")
    return token or "unknown"


def _map_prompt_json(payload: dict) -> tuple[FeatureSet, list[str]]:
    if "Abnormality" not in payload:
        raise DataError("response JSON lacks the Abnormality flag")
    if payload["Abnormality"] is False:
        return FeatureSet(), []
    info_list = payload.get("Abnormality_Info") or []
    if not isinstance(info_list, list) or not info_list:
        raise DataError("Abnormality true but Abnormality_Info is empty")
    info = info_list[0]
    notes = []
    if len(info_list) > 1:
        notes.append(f"{len(info_list) - 1} additional abnormality blocks ignored")

    bad_fields = []

    def token(key, enum_cls):
        raw = _normalize_token(info.get(key), key)
        try:
            return enum_cls(raw)
        except ValueError:
            bad_fields.append(f"{key}={info.get(key)!r}")
            return enum_cls("unknown")

    raw_size = info.get("Raw_Size")
    if isinstance(raw_size, str) and raw_size.strip().lower() == "unknown":
        raw_size = None
    size_cm = info.get("Size_cm")
    if isinstance(size_cm, str):
        size_cm = None if size_cm.strip().lower() == "unknown" else standardize_size(size_cm)
    unparseable = False
    if size_cm is None and raw_size:
        size_cm = standardize_size(raw_size)
        unparseable = size_cm is None

    features = FeatureSet(
        position=token("Position", Position),
        raw_size=raw_size,
        size_cm=float(size_cm) if size_cm is not None else None,
        exophytic=token("Exophytic", GrowthPattern),
        attenuation=token("Attenuation", Attenuation),
        enhancement=token("Enhancement", Enhancement),
        cyst=bool(info.get("Cyst", False)),
        mass=bool(info.get("Mass", False)),
        tumor=bool(info.get("Tumor", False)),
        size_unparseable=unparseable,
    )
    if bad_fields:
        raise DataError(f"schema violations in fields: {', '.join(bad_fields)}")
    return features, notes


def parse_report_llm(text: str, cfg: BackendConfig, max_repairs: int = 2) -> ExtractionResult:
    """Extract features through the feature-extraction prompt; malformed
    responses are retried with a repair instruction up to ``max_repairs``
    times, then raised with the raw text preserved."""
    if not text:
        return ExtractionResult(features=FeatureSet(), method="llm", raw_response="")

    prompt = render_feature_extraction_prompt(text)
    last_raw = ""
    last_error: DataError | None = None
    for attempt in range(max_repairs + 1):
        if attempt:
            prompt = RenderedPrompt(
                kind=prompt.kind,
                system_text=prompt.system_text,
                user_text=prompt.user_text + _REPAIR_INSTRUCTION,
                image_attachment=None,
                template_version=prompt.template_version,
            )
        report = generate(prompt, cfg)
        last_raw = report.text
        try:
            payload = _first_json_object(report.text)
            features, notes = _map_prompt_json(payload)
        except (DataError, json.JSONDecodeError) as exc:
            last_error = exc if isinstance(exc, DataError) else DataError(str(exc))
            continue
        return ExtractionResult(
            features=features,
            method="llm",
            notes=tuple(notes),
            raw_response=report.text,
        )
    raise DataError(
        f"llm extraction failed after {max_repairs + 1} attempts "
        f"({last_error}); raw response: {last_raw[:500]!r}"
    )


# ---------------------------------------------------------------------------
# JSONL persistence (keyed by annotation_id at the pipeline level)
# ---------------------------------------------------------------------------


def extraction_to_dict(result: ExtractionResult, annotation_id: str | None = None) -> dict:
    d = {
        "method": result.method,
        "features": feature_set_to_dict(result.features),
        "notes": list(result.notes),
        "unparsed_spans": list(result.unparsed_spans),
    }
    if result.raw_response is not None:
        d["raw_response"] = result.raw_response
    if annotation_id is not None:
        d = {"annotation_id": annotation_id, **d}
    return d


def extraction_from_dict(d: dict) -> ExtractionResult:
    return ExtractionResult(
        features=feature_set_from_dict(d["features"]),
        method=d["method"],
        notes=tuple(d.get("notes", ())),
        unparsed_spans=tuple(d.get("unparsed_spans", ())),
        raw_response=d.get("raw_response"),
    )


def with_raw_size(result: ExtractionResult, raw_size: str | None) -> ExtractionResult:
    return replace(result, features=replace(result.features, raw_size=raw_size))

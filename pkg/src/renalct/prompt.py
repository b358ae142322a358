"""Prompt rendering for the three pipeline stages: report-sentence
extraction, feature extraction, and report generation (in its three input
modalities).

Rendering is pure and byte-stable against the checked-in templates; change
a template and its version header must be bumped (golden tests enforce it).
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .preprocess import SliceImage
from .schema import Attenuation, Enhancement, FeatureSet, GrowthPattern, Position

_TEMPLATE_DIR = Path(__file__).parent / "templates"

IMAGE_PLACEHOLDER = "<image>"


class Modality(str, Enum):
    FEATURE_ONLY = "feature_only"
    IMAGE_ONLY = "image_only"
    BOTH = "both"


class PromptKind(str, Enum):
    SENTENCE_EXTRACTION = "sentence_extraction"
    FEATURE_EXTRACTION = "feature_extraction"
    GENERATION = "generation"


@dataclass(frozen=True)
class RenderedPrompt:
    kind: PromptKind
    system_text: str
    user_text: str
    image_attachment: str | None  # base64 PNG data URI
    template_version: str

    def __post_init__(self):
        has_placeholder = IMAGE_PLACEHOLDER in self.user_text
        if has_placeholder != (self.image_attachment is not None):
            raise DataError(
                "user_text must contain the image placeholder iff an image is attached"
            )


def _load_template(name: str) -> tuple[str, str]:
    text = (_TEMPLATE_DIR / name).read_text(encoding="utf-8")
    header, _, body = text.partition("\n---\n")
    version = header.split(":", 1)[1].strip()
    return version, body


def _load_sections(name: str) -> tuple[str, dict[str, str]]:
    version, body = _load_template(name)
    sections: dict[str, str] = {}
    current = None
    for line in body.splitlines():
        match = re.fullmatch(r"\[([a-z_]+)\]", line)
        if match:
            current = match.group(1)
            sections[current] = ""
        elif current is not None:
            sections[current] += line + "\n"
    return version, {k: v.rstrip("\n") for k, v in sections.items()}


def template_hashes() -> dict[str, str]:
    """sha256 per template file; echoed into run directories for provenance."""
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(_TEMPLATE_DIR.glob("*.txt"))
    }


def format_size(size_cm: float) -> str:
    """Up to two decimals, trailing zeros trimmed: 1.78 -> "1.78", 2.0 -> "2"."""
    return f"{size_cm:.2f}".rstrip("0").rstrip(".")


def _bool_token(value: bool) -> str:
    return "true" if value else "false"


def image_data_uri(image: SliceImage) -> str:
    """8-bit grayscale PNG of the normalized grid, [-1,1] -> [0,255]."""
    from PIL import Image

    scaled = np.clip((image.grid + 1.0) / 2.0 * 255.0, 0, 255).round().astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(scaled, mode="L").save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def render_feature_block(features: FeatureSet, template_block: str) -> str:
    size = "unknown" if features.size_cm is None else format_size(features.size_cm)
    return (
        template_block.replace("<<POSITION>>", features.position.value)
        .replace("<<SIZE>>", size)
        .replace("<<EXOPHYTIC>>", features.exophytic.value)
        .replace("<<ATTENUATION>>", features.attenuation.value)
        .replace("<<ENHANCEMENT>>", features.enhancement.value)
        .replace("<<CYST>>", _bool_token(features.cyst))
        .replace("<<MASS>>", _bool_token(features.mass))
        .replace("<<TUMOR>>", _bool_token(features.tumor))
    )


def render_generation_prompt(
    features: FeatureSet | None,
    image: SliceImage | None,
    modality: Modality,
) -> RenderedPrompt:
    if modality in (Modality.FEATURE_ONLY, Modality.BOTH) and features is None:
        raise ConfigError(f"modality {modality.value} requires a FeatureSet")
    if modality in (Modality.IMAGE_ONLY, Modality.BOTH) and image is None:
        raise ConfigError(f"modality {modality.value} requires a slice image")

    version, sections = _load_sections("generation.txt")
    parts = [sections[f"intro_{modality.value}"]]
    attachment = None
    if modality != Modality.IMAGE_ONLY:
        parts.append(render_feature_block(features, sections["features_block"]))
    if modality != Modality.FEATURE_ONLY:
        parts.append(sections["image_line"])
        attachment = image_data_uri(image)
    return RenderedPrompt(
        kind=PromptKind.GENERATION,
        system_text=sections["system"],
        user_text="\n\n".join(parts),
        image_attachment=attachment,
        template_version=version,
    )


def render_feature_extraction_prompt(sentence: str) -> RenderedPrompt:
    if not sentence:
        raise DataError("feature extraction requires a non-empty sentence")
    version, body = _load_template("feature_extraction.txt")
    # JSON string literal: quotes and newlines escape, and the stub/repair
    # path can recover the sentence exactly.
    user_text = body.rstrip("\n").replace("<<SENTENCE>>", json.dumps(sentence))
    return RenderedPrompt(
        kind=PromptKind.FEATURE_EXTRACTION,
        system_text="",
        user_text=user_text,
        image_attachment=None,
        template_version=version,
    )


def render_sentence_extraction_prompt(report_text: str) -> RenderedPrompt:
    if not report_text:
        raise DataError("sentence extraction requires non-empty report text")
    version, body = _load_template("sentence_extraction.txt")
    user_text = body.rstrip("\n").replace("<<REPORT_TEXT>>", json.dumps(report_text))
    return RenderedPrompt(
        kind=PromptKind.SENTENCE_EXTRACTION,
        system_text="",
        user_text=user_text,
        image_attachment=None,
        template_version=version,
    )


# ---------------------------------------------------------------------------
# Inverse helpers used by the deterministic stub backend.
# ---------------------------------------------------------------------------

_FEATURE_LINE_RE = re.compile(r"^- ([A-Za-z ()]+): (.*)$")

_LABEL_TO_FIELD = {
    "Position": "position",
    "Largest size for the lesion (cm)": "size_cm",
    "Exophytic": "exophytic",
    "Attenuation": "attenuation",
    "Enhancement": "enhancement",
    "Cyst": "cyst",
    "Mass": "mass",
    "Tumor": "tumor",
}


def parse_feature_block(user_text: str) -> FeatureSet | None:
    """Recover the FeatureSet from a rendered generation prompt, or None if
    the prompt carries no feature block (image-only modality)."""
    if "Features:" not in user_text:
        return None
    values: dict[str, str] = {}
    for line in user_text.splitlines():
        match = _FEATURE_LINE_RE.match(line)
        if match and match.group(1) in _LABEL_TO_FIELD:
            values[_LABEL_TO_FIELD[match.group(1)]] = match.group(2)
    size = None
    if values.get("size_cm") not in (None, "unknown"):
        size = float(values["size_cm"])
    return FeatureSet(
        position=Position(values.get("position", "unknown")),
        size_cm=size,
        raw_size=None if size is None else f"{format_size(size)} cm",
        exophytic=GrowthPattern(values.get("exophytic", "unknown")),
        attenuation=Attenuation(values.get("attenuation", "unknown")),
        enhancement=Enhancement(values.get("enhancement", "unknown")),
        cyst=values.get("cyst") == "true",
        mass=values.get("mass") == "true",
        tumor=values.get("tumor") == "true",
    )


def extract_embedded_sentence(user_text: str) -> str:
    """Recover the JSON-escaped input text from a rendered extraction prompt
    (the "Sentence:" or "Report:" line)."""
    for line in user_text.splitlines():
        for marker in ("Sentence: ", "Report: "):
            if line.startswith(marker):
                return json.loads(line[len(marker) :])
    raise DataError("prompt carries no embedded sentence")

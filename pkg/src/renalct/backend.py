"""Report-generation backends behind one interface: an OpenAI-compatible
chat-completion endpoint, or the deterministic local stub selected by the
endpoint scheme "stub:".

The stub answers every prompt kind from its inputs alone, which makes the
whole generate -> extract -> evaluate loop deterministic end to end: a
generation prompt gets the fixed grammar sentence for its feature block, a
feature-extraction prompt gets the rule parser's JSON for its embedded
sentence.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
from dataclasses import dataclass

import httpx

from .errors import BackendError, ConfigError
from .prompt import (
    PromptKind,
    RenderedPrompt,
    extract_embedded_sentence,
    format_size,
    parse_feature_block,
)
from .schema import (
    Attenuation,
    Enhancement,
    FeatureSet,
    GrowthPattern,
    Position,
    feature_set_to_dict,
)

logger = logging.getLogger("renalct.backend")

STUB_ENDPOINT = "stub:"
EMPTY_FEATURES_TEXT = "No renal abnormality features specified."


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str = STUB_ENDPOINT
    model: str = "stub"
    temperature: float = 0.0
    max_tokens: int = 512
    timeout_s: float = 30.0
    max_retries: int = 2
    max_concurrent_requests: int = 4
    backoff_base_s: float = 0.5
    api_key_env: str = "RENALCT_API_KEY"

    def __post_init__(self):
        if self.max_concurrent_requests < 1:
            raise ConfigError("max_concurrent_requests must be >= 1")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")

    @property
    def is_stub(self) -> bool:
        return self.endpoint.startswith(STUB_ENDPOINT)


@dataclass(frozen=True)
class GeneratedReport:
    text: str
    annotation_id: str | None
    modality: str | None
    mode: str  # "ft" | "zs"; provenance label only
    model: str
    latency_ms: float
    usage: dict | None = None


# ---------------------------------------------------------------------------
# Deterministic stub grammar
# ---------------------------------------------------------------------------

_CLASSIFICATION_PHRASES = {
    (True, False, False): "cyst",
    (False, True, False): "mass",
    (False, False, True): "tumor",
    (True, True, False): "complex cystic mass",
    (True, False, True): "cystic tumor",
    (False, True, True): "mass suspicious for tumor",
    (True, True, True): "complex cystic mass suspicious for tumor",
}

_ENHANCEMENT_PHRASES = {
    Enhancement.ENHANCEMENT: "enhancement",
    Enhancement.NON_ENHANCEMENT: "no enhancement",
}


def _article(next_word: str) -> str:
    return "an" if next_word[:1].lower() in "aeiou" else "a"


def _assemble(
    size_text: str | None,
    growth: str | None,
    attenuation: str | None,
    position: str | None,
    enhancement: str | None,
    classification: str | None,
) -> str:
    descriptors = [t for t in (size_text, growth, attenuation) if t]
    if not descriptors and not position and not enhancement and not classification:
        return EMPTY_FEATURES_TEXT
    noun_phrase = " ".join(descriptors + ["lesion"])
    sentence = f"There is {_article(noun_phrase.split()[0])} {noun_phrase}"
    if position:
        sentence += f" in the {position} kidney"
    if enhancement:
        sentence += f" demonstrating {enhancement}"
    if classification:
        sentence += f", consistent with a {classification}"
    return sentence + "."


def stub_generate(features: FeatureSet) -> str:
    """Fixed grammar over the feature slots; unknown fields omit their clause."""
    size_text = None if features.size_cm is None else f"{format_size(features.size_cm)} cm"
    growth = None if features.exophytic == GrowthPattern.UNKNOWN else features.exophytic.value
    atten = None if features.attenuation == Attenuation.UNKNOWN else features.attenuation.value
    position = None if features.position == Position.UNKNOWN else features.position.value
    enhancement = _ENHANCEMENT_PHRASES.get(features.enhancement)
    classification = _CLASSIFICATION_PHRASES.get((features.cyst, features.mass, features.tumor))
    return _assemble(size_text, growth, atten, position, enhancement, classification)


def noisy_stub_generate(features: FeatureSet, noise_rate: float, seed: int) -> str:
    """stub_generate with each present clause independently corrupted
    (value flipped or clause omitted) with probability ``noise_rate``."""
    if not 0.0 <= noise_rate <= 1.0:
        raise ConfigError(f"noise_rate must be in [0, 1], got {noise_rate}")
    digest = hashlib.sha256(
        json.dumps(
            [seed, noise_rate, feature_set_to_dict(features)], sort_keys=True
        ).encode("utf-8")
    ).hexdigest()
    rng = random.Random(int(digest[:16], 16))

    def corrupt(value, alternatives):
        if value is None or rng.random() >= noise_rate:
            return value
        if alternatives and rng.random() < 0.5:
            choices = [a for a in alternatives if a != value]
            return rng.choice(choices)
        return None  # omit the clause

    size_text = None if features.size_cm is None else f"{format_size(features.size_cm)} cm"
    size_text = corrupt(
        size_text,
        [f"{format_size(v)} cm" for v in (0.5, 1.1, 2.3, 3.7, 5.2)],
    )
    growth = None if features.exophytic == GrowthPattern.UNKNOWN else features.exophytic.value
    growth = corrupt(growth, ["exophytic", "endophytic"])
    atten = None if features.attenuation == Attenuation.UNKNOWN else features.attenuation.value
    atten = corrupt(atten, ["hypoattenuating", "hyperattenuating", "isoattenuating"])
    position = None if features.position == Position.UNKNOWN else features.position.value
    position = corrupt(position, ["left", "right"])
    enhancement = _ENHANCEMENT_PHRASES.get(features.enhancement)
    enhancement = corrupt(enhancement, list(_ENHANCEMENT_PHRASES.values()))
    classification = _CLASSIFICATION_PHRASES.get((features.cyst, features.mass, features.tumor))
    classification = corrupt(classification, list(_CLASSIFICATION_PHRASES.values()))
    return _assemble(size_text, growth, atten, position, enhancement, classification)


# ---------------------------------------------------------------------------
# Stub backend: answers any prompt kind deterministically.
# ---------------------------------------------------------------------------

_RENAL_TERMS = ("kidney", "renal", "nephro", "cyst", "mass", "tumor", "lesion")


def _stub_answer(prompt: RenderedPrompt) -> str:
    if prompt.kind == PromptKind.GENERATION:
        features = parse_feature_block(prompt.user_text)
        return stub_generate(features) if features is not None else EMPTY_FEATURES_TEXT

    if prompt.kind == PromptKind.FEATURE_EXTRACTION:
        from .extract import parse_report_rule_based  # cycle: extract uses generate()

        sentence = extract_embedded_sentence(prompt.user_text)
        f = parse_report_rule_based(sentence).features
        if f == FeatureSet():
            return json.dumps({"Abnormality": False})
        info = {
            "Position": f.position.value,
            "Raw_Size": f.raw_size if f.raw_size is not None else "unknown",
            "Size_cm": f.size_cm if f.size_cm is not None else "unknown",
            "Exophytic": f.exophytic.value,
            "Attenuation": f.attenuation.value,
            "Enhancement": f.enhancement.value,
            "Lesion": bool(f.cyst or f.mass or f.tumor),
            "Cyst": f.cyst,
            "Mass": f.mass,
            "Tumor": f.tumor,
        }
        return json.dumps({"Abnormality": True, "Abnormality_Info": [info]})

    report = extract_embedded_sentence(prompt.user_text)
    findings = report if any(t in report.lower() for t in _RENAL_TERMS) else "none"
    return json.dumps(
        {
            "renal_extracts": {
                "HISTORY": "none",
                "EXAM": "none",
                "PRIOR STUDY": "none",
                "FINDINGS": findings,
            }
        }
    )


# ---------------------------------------------------------------------------
# HTTP backend
# ---------------------------------------------------------------------------


def _build_messages(prompt: RenderedPrompt) -> list[dict]:
    messages = []
    if prompt.system_text:
        messages.append({"role": "system", "content": prompt.system_text})
    if prompt.image_attachment is not None:
        content = [
            {"type": "text", "text": prompt.user_text},
            {"type": "image_url", "image_url": {"url": prompt.image_attachment}},
        ]
    else:
        content = prompt.user_text
    messages.append({"role": "user", "content": content})
    return messages


def _http_completion(
    prompt: RenderedPrompt, cfg: BackendConfig, client: httpx.Client | None = None
) -> tuple[str, dict | None]:
    body = {
        "model": cfg.model,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
        "messages": _build_messages(prompt),
    }
    headers = {}
    api_key = os.environ.get(cfg.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    url = cfg.endpoint.rstrip("/") + "/chat/completions"

    own_client = client is None
    if own_client:
        client = httpx.Client(timeout=cfg.timeout_s)
    last_error: Exception | None = None
    try:
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                delay = cfg.backoff_base_s * (2 ** (attempt - 1))
                delay += random.uniform(0, cfg.backoff_base_s)
                logger.warning(
                    "backend retry attempt=%d/%d delay=%.3fs reason=%s",
                    attempt,
                    cfg.max_retries,
                    delay,
                    last_error,
                )
                time.sleep(delay)
            try:
                response = client.post(url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if 400 <= response.status_code < 500:
                raise BackendError(
                    f"backend rejected request ({response.status_code}): "
                    f"{response.text[:200]}"
                )
            if response.status_code >= 500:
                last_error = BackendError(
                    f"server error {response.status_code}: {response.text[:200]}"
                )
                continue
            payload = response.json()
            try:
                text = payload["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError):
                raise BackendError(
                    f"malformed completion payload: {response.text[:200]}"
                ) from None
            return text, payload.get("usage")
        raise BackendError(
            f"backend unreachable after {cfg.max_retries + 1} attempts: {last_error}"
        )
    finally:
        if own_client:
            client.close()


def generate(
    prompt: RenderedPrompt,
    cfg: BackendConfig,
    *,
    annotation_id: str | None = None,
    modality: str | None = None,
    mode: str = "zs",
    client: httpx.Client | None = None,
) -> GeneratedReport:
    """Obtain one completion; records latency and (when reported) usage."""
    start = time.perf_counter()
    if cfg.is_stub:
        text, usage = _stub_answer(prompt), None
    else:
        text, usage = _http_completion(prompt, cfg, client=client)
    latency_ms = (time.perf_counter() - start) * 1000.0
    if not text:
        raise BackendError("backend returned an empty completion")
    return GeneratedReport(
        text=text,
        annotation_id=annotation_id,
        modality=modality,
        mode=mode,
        model=cfg.model,
        latency_ms=latency_ms,
        usage=usage,
    )


def generate_batch(
    prompts: list[RenderedPrompt],
    cfg: BackendConfig,
    *,
    annotation_ids: list[str] | None = None,
    modality: str | None = None,
    mode: str = "zs",
) -> list[GeneratedReport]:
    """Fan out up to max_concurrent_requests at a time; results in input order."""
    from concurrent.futures import ThreadPoolExecutor

    ids = annotation_ids or [None] * len(prompts)
    if len(ids) != len(prompts):
        raise ConfigError("annotation_ids length must match prompts")

    client = None if cfg.is_stub else httpx.Client(timeout=cfg.timeout_s)
    try:
        with ThreadPoolExecutor(max_workers=cfg.max_concurrent_requests) as pool:
            futures = [
                pool.submit(
                    generate, p, cfg,
                    annotation_id=i, modality=modality, mode=mode, client=client,
                )
                for p, i in zip(prompts, ids)
            ]
            return [f.result() for f in futures]
    finally:
        if client is not None:
            client.close()


# JSONL persistence for GeneratedReport records.


def report_to_dict(report: GeneratedReport) -> dict:
    return {
        "annotation_id": report.annotation_id,
        "text": report.text,
        "modality": report.modality,
        "mode": report.mode,
        "model": report.model,
        "latency_ms": round(report.latency_ms, 3),
        "usage": report.usage,
    }


def report_from_dict(d: dict) -> GeneratedReport:
    return GeneratedReport(
        text=d["text"],
        annotation_id=d.get("annotation_id"),
        modality=d.get("modality"),
        mode=d.get("mode", "zs"),
        model=d.get("model", "unknown"),
        latency_ms=float(d.get("latency_ms", 0.0)),
        usage=d.get("usage"),
    )

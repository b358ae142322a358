import json
import random

import pytest

from renalct.backend import BackendConfig, stub_generate
from renalct.errors import DataError
from renalct.extract import (
    ExtractionResult,
    extraction_from_dict,
    extraction_to_dict,
    parse_report_llm,
    parse_report_rule_based,
    standardize_size,
)
from renalct.prompt import format_size
from renalct.schema import (
    Attenuation,
    Enhancement,
    FeatureSet,
    GrowthPattern,
    Position,
)


# -- standardize_size -----------------------------------------------------------


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("3.2 * 2.8 cm", 3.2),
        ("subcentimeter", 0.5),
        ("sub-centimeter", 0.5),
        ("14 mm", 1.4),
        ("3.6 x 3.4 x 2.9 cm", 3.6),
        ("2.4 cm", 2.4),
        ("1.1 x 4.0 cm", 4.0),
        ("7", 7.0),  # bare number: centimeters by convention
        ("no size here", None),
        ("", None),
        (None, None),
    ],
)
def test_standardize_size(raw, expected):
    assert standardize_size(raw) == expected


def test_standardize_size_scale_correct():
    rng = random.Random(1)
    for _ in range(50):
        x = round(rng.uniform(0.1, 9.9), 1)
        assert standardize_size(f"{x} cm") == pytest.approx(
            standardize_size(f"{round(10 * x, 1)} mm")
        )


# -- rule-based parser -----------------------------------------------------------


def test_prompt3_expected_output_text():
    text = (
        "Left kidney: There is a 3.6 x 3.4 x 2.9 cm exophytic, complex cystic and "
        "solid mass with focal punctate calcification identified at the superior "
        "pole of the left kidney. This mass extends into the left quadratus "
        "lumborum muscle with loss of fat planes of separation."
    )
    f = parse_report_rule_based(text).features
    assert f.position == Position.LEFT
    assert f.size_cm == 3.6
    assert f.exophytic == GrowthPattern.EXOPHYTIC
    assert f.cyst and f.mass and not f.tumor
    assert f.attenuation == Attenuation.UNKNOWN
    assert f.enhancement == Enhancement.UNKNOWN


def test_empty_text_gives_defaults():
    f = parse_report_rule_based("").features
    assert f == FeatureSet()


def test_negations_set_fields_negative():
    f = parse_report_rule_based(
        "There is a lesion in the right kidney without enhancement, no mass."
    ).features
    assert f.enhancement == Enhancement.NON_ENHANCEMENT
    assert not f.mass
    assert f.position == Position.RIGHT


def test_non_enhancing_synonym():
    f = parse_report_rule_based("A non-enhancing cyst in the left kidney.").features
    assert f.enhancement == Enhancement.NON_ENHANCEMENT
    assert f.cyst


def test_attenuation_synonyms():
    assert (
        parse_report_rule_based("hypodense lesion").features.attenuation == Attenuation.HYPO
    )
    assert (
        parse_report_rule_based("hyperdense lesion").features.attenuation == Attenuation.HYPER
    )


def test_rcc_maps_to_tumor():
    f = parse_report_rule_based("Lesion suspicious for RCC.").features
    assert f.tumor


def test_largest_diameter_wins_over_chain():
    f = parse_report_rule_based(
        "A mass measuring 3.2 x 2.8 cm with largest diameter of 3.4 cm."
    ).features
    assert f.size_cm == pytest.approx(3.4)


def test_first_abnormality_block_rule():
    text = (
        "The liver is unremarkable. There is a 2 cm cyst in the left kidney. "
        "There is also a 5 cm mass in the right kidney."
    )
    result = parse_report_rule_based(text)
    assert result.features.size_cm == 2.0
    assert result.features.position == Position.LEFT
    assert result.features.cyst and not result.features.mass
    assert any("mass" in span for span in result.unparsed_spans)


def _random_round_trip_feature_set(rng: random.Random) -> FeatureSet:
    size = round(rng.uniform(0.21, 6.99), 2) if rng.random() > 0.2 else None
    return FeatureSet(
        position=rng.choice(list(Position)),
        raw_size=f"{format_size(size)} cm" if size is not None else None,
        size_cm=size,
        exophytic=rng.choice(list(GrowthPattern)),
        attenuation=rng.choice(list(Attenuation)),
        enhancement=rng.choice(list(Enhancement)),
        cyst=rng.random() < 0.5,
        mass=rng.random() < 0.5,
        tumor=rng.random() < 0.5,
    )


def test_round_trip_law_sample():
    rng = random.Random(2024)
    for _ in range(200):
        f = _random_round_trip_feature_set(rng)
        assert parse_report_rule_based(stub_generate(f)).features == f


# -- LLM path ---------------------------------------------------------------------


def test_llm_path_through_stub_equals_rule_parser():
    rng = random.Random(7)
    cfg = BackendConfig(endpoint="stub:")
    for _ in range(20):
        f = _random_round_trip_feature_set(rng)
        result = parse_report_llm(stub_generate(f), cfg)
        assert result.method == "llm"
        assert result.raw_response
        assert result.features == f


def test_llm_maps_prompt2_example_json(monkeypatch):
    example = {
        "Abnormality": True,
        "Abnormality_Info": [
            {
                "Position": "left",
                "Raw_Size": "3.2 * 2.8 cm",
                "Size_cm": 3.2,
                "Exophytic": "exophytic",
                "Attenuation": "Hyperattenuating",
                "Enhancement": "enhancement",
                "Lesion": True,
                "Cyst": True,
                "Mass": True,
                "Tumor": False,
            }
        ],
    }
    _patch_responses(monkeypatch, [json.dumps(example)])
    f = parse_report_llm("any text", BackendConfig(endpoint="stub:")).features
    assert f == FeatureSet(
        position=Position.LEFT,
        raw_size="3.2 * 2.8 cm",
        size_cm=3.2,
        exophytic=GrowthPattern.EXOPHYTIC,
        attenuation=Attenuation.HYPER,
        enhancement=Enhancement.ENHANCEMENT,
        cyst=True,
        mass=True,
        tumor=False,
    )


def _patch_responses(monkeypatch, texts):
    from renalct import extract as extract_module
    from renalct.backend import GeneratedReport

    queue = list(texts)

    def fake_generate(prompt, cfg, **kwargs):
        text = queue.pop(0)
        return GeneratedReport(
            text=text, annotation_id=None, modality=None, mode="zs",
            model="fake", latency_ms=0.1,
        )

    monkeypatch.setattr(extract_module, "generate", fake_generate)
    return queue


def test_llm_retries_twice_then_succeeds(monkeypatch):
    good = json.dumps({"Abnormality": False})
    queue = _patch_responses(monkeypatch, ["{}", "{}", good])
    result = parse_report_llm("text", BackendConfig(endpoint="stub:"))
    assert result.features == FeatureSet()
    assert not queue  # all three attempts consumed


def test_llm_prose_without_json_raises_with_raw(monkeypatch):
    _patch_responses(monkeypatch, ["no json here"] * 3)
    with pytest.raises(DataError, match="no json here"):
        parse_report_llm("text", BackendConfig(endpoint="stub:"))


def test_llm_json_embedded_in_prose(monkeypatch):
    _patch_responses(
        monkeypatch, ['Sure! Here you go: {"Abnormality": false} Hope that helps.']
    )
    result = parse_report_llm("text", BackendConfig(endpoint="stub:"))
    assert result.features == FeatureSet()


def test_llm_abnormality_false_maps_to_defaults(monkeypatch):
    _patch_responses(monkeypatch, [json.dumps({"Abnormality": False})])
    assert parse_report_llm("text", BackendConfig()).features == FeatureSet()


def test_llm_bad_enum_token_lists_field(monkeypatch):
    bad = json.dumps(
        {"Abnormality": True, "Abnormality_Info": [{"Attenuation": "dense"}]}
    )
    _patch_responses(monkeypatch, [bad] * 3)
    with pytest.raises(DataError, match="Attenuation"):
        parse_report_llm("text", BackendConfig())


def test_llm_result_requires_raw_response():
    with pytest.raises(DataError):
        ExtractionResult(features=FeatureSet(), method="llm")


def test_extraction_jsonl_round_trip():
    result = parse_report_rule_based(stub_generate(FeatureSet(cyst=True)))
    d = extraction_to_dict(result, annotation_id="a1")
    assert d["annotation_id"] == "a1"
    assert extraction_from_dict(d).features == result.features


# -- monotone degradation ----------------------------------------------------------


def test_agreement_degrades_monotonically_with_noise():
    from renalct.backend import noisy_stub_generate
    from renalct.schema import FEATURE_NAMES

    rng = random.Random(11)
    features = [_random_round_trip_feature_set(rng) for _ in range(150)]
    means = []
    for rate in (0.0, 0.2, 0.5, 0.8):
        agreement = 0
        total = 0
        for i, f in enumerate(features):
            parsed = parse_report_rule_based(noisy_stub_generate(f, rate, seed=1000 + i)).features
            for name in FEATURE_NAMES:
                total += 1
                if parsed.value_of(name) == f.value_of(name):
                    agreement += 1
        means.append(agreement / total)
    assert means[0] == 1.0
    assert means == sorted(means, reverse=True)

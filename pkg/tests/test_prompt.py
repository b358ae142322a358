import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renalct.errors import ConfigError, DataError
from renalct.prompt import (
    IMAGE_PLACEHOLDER,
    Modality,
    PromptKind,
    RenderedPrompt,
    extract_embedded_sentence,
    format_size,
    parse_feature_block,
    render_feature_extraction_prompt,
    render_generation_prompt,
    render_sentence_extraction_prompt,
    template_hashes,
)
from renalct.schema import Attenuation, Enhancement, FeatureSet, GrowthPattern, Position

from make_fixtures import GOLDEN_FEATURES, GOLDEN_PROMPT_DIR, golden_image, prompt_bytes


def test_worked_example_feature_block():
    prompt = render_generation_prompt(GOLDEN_FEATURES, None, Modality.FEATURE_ONLY)
    assert "Largest size for the lesion (cm): 1.78" in prompt.user_text
    assert "- Position: left" in prompt.user_text
    assert "- Cyst: true" in prompt.user_text
    assert "- Mass: false" in prompt.user_text
    assert IMAGE_PLACEHOLDER not in prompt.user_text
    assert prompt.image_attachment is None


def test_all_unknown_renders_every_line():
    prompt = render_generation_prompt(FeatureSet(), None, Modality.FEATURE_ONLY)
    for label in ("Position", "Largest size for the lesion (cm)", "Exophytic",
                  "Attenuation", "Enhancement"):
        assert f"- {label}: unknown" in prompt.user_text
    for label in ("Cyst", "Mass", "Tumor"):
        assert f"- {label}: false" in prompt.user_text


def test_image_only_has_placeholder_but_no_features():
    prompt = render_generation_prompt(None, golden_image(), Modality.IMAGE_ONLY)
    assert "Features:" not in prompt.user_text
    assert IMAGE_PLACEHOLDER in prompt.user_text
    assert prompt.image_attachment.startswith("data:image/png;base64,")


def test_modality_input_mismatch_errors():
    with pytest.raises(ConfigError):
        render_generation_prompt(None, None, Modality.BOTH)
    with pytest.raises(ConfigError):
        render_generation_prompt(GOLDEN_FEATURES, None, Modality.BOTH)
    with pytest.raises(ConfigError):
        render_generation_prompt(None, golden_image(), Modality.FEATURE_ONLY)


def test_placeholder_iff_attachment_invariant():
    with pytest.raises(DataError):
        RenderedPrompt(
            kind=PromptKind.GENERATION,
            system_text="",
            user_text="no placeholder",
            image_attachment="data:image/png;base64,AAAA",
            template_version="1",
        )


def test_size_formatting():
    assert format_size(1.78) == "1.78"
    assert format_size(2.0) == "2"
    assert format_size(0.5) == "0.5"
    assert format_size(3.10) == "3.1"


scored_features = st.builds(
    FeatureSet,
    position=st.sampled_from(list(Position)),
    size_cm=st.one_of(
        st.none(),
        st.floats(min_value=0.01, max_value=20, allow_nan=False).map(lambda x: round(x, 2)),
    ),
    exophytic=st.sampled_from(list(GrowthPattern)),
    attenuation=st.sampled_from(list(Attenuation)),
    enhancement=st.sampled_from(list(Enhancement)),
    cyst=st.booleans(),
    mass=st.booleans(),
    tumor=st.booleans(),
)


@settings(max_examples=80, deadline=None)
@given(scored_features, scored_features)
def test_render_injective_on_scored_features(f1, f2):
    p1 = render_generation_prompt(f1, None, Modality.FEATURE_ONLY)
    p2 = render_generation_prompt(f2, None, Modality.FEATURE_ONLY)
    if f1.scored_values() != f2.scored_values():
        assert p1.user_text != p2.user_text
    else:
        assert p1.user_text == p2.user_text


@settings(max_examples=40, deadline=None)
@given(scored_features)
def test_feature_block_parses_back(f):
    prompt = render_generation_prompt(f, None, Modality.FEATURE_ONLY)
    back = parse_feature_block(prompt.user_text)
    assert back.scored_values() == f.scored_values()


def test_feature_extraction_prompt_contents():
    prompt = render_feature_extraction_prompt("There is a 3.2 * 2.8 cm lesion.")
    assert "exclude kidney stones and hydronephrosis" in prompt.user_text
    assert '"Abnormality"' in prompt.user_text
    assert '"Raw_Size": "3.2 * 2.8 cm"' in prompt.user_text  # worked example block
    assert "complex cystic mass" in prompt.user_text  # heuristics block
    assert prompt.kind == PromptKind.FEATURE_EXTRACTION


def test_feature_extraction_empty_sentence_errors():
    with pytest.raises(DataError):
        render_feature_extraction_prompt("")


def test_sentence_survives_quotes_and_newlines():
    sentence = 'A "complex" cyst\nmeasuring 2 cm, series 4 image 167.'
    prompt = render_feature_extraction_prompt(sentence)
    assert extract_embedded_sentence(prompt.user_text) == sentence


def test_sentence_extraction_prompt_contents():
    prompt = render_sentence_extraction_prompt("FINDINGS: left renal cyst.")
    for section in ("HISTORY", "EXAM", "PRIOR STUDY", "FINDINGS"):
        assert section in prompt.user_text
    assert "adrenal" in prompt.user_text
    assert "renal_extracts" in prompt.user_text
    assert extract_embedded_sentence(prompt.user_text) == "FINDINGS: left renal cyst."


def test_template_hashes_cover_all_templates():
    hashes = template_hashes()
    assert set(hashes) == {
        "feature_extraction.txt", "generation.txt", "sentence_extraction.txt",
    }
    assert all(len(h) == 64 for h in hashes.values())


def test_golden_prompt_files_byte_for_byte():
    from make_fixtures import GOLDEN_REPORT, GOLDEN_SENTENCE

    image = golden_image()
    rendered = {
        "prompt1_sentence_extraction.txt": render_sentence_extraction_prompt(GOLDEN_REPORT),
        "prompt2_feature_extraction.txt": render_feature_extraction_prompt(GOLDEN_SENTENCE),
        "prompt3_feature_only.txt": render_generation_prompt(
            GOLDEN_FEATURES, None, Modality.FEATURE_ONLY
        ),
        "prompt3_image_only.txt": render_generation_prompt(None, image, Modality.IMAGE_ONLY),
        "prompt3_both.txt": render_generation_prompt(GOLDEN_FEATURES, image, Modality.BOTH),
    }
    for name, prompt in rendered.items():
        golden = (GOLDEN_PROMPT_DIR / name).read_bytes()
        assert prompt_bytes(prompt) == golden, f"{name} drifted; bump template version"


def test_template_version_exposed():
    prompt = render_generation_prompt(FeatureSet(), None, Modality.FEATURE_ONLY)
    assert prompt.template_version == "1"

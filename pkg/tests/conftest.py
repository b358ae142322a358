from __future__ import annotations

import json
from pathlib import Path

import pytest

from renalct.phantom import export_case_dicom, sample_cohort
from renalct.schema import load_manifest

from make_fixtures import MINI_COHORT_CONFIG

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "mini_cohort"
GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def golden_metrics() -> dict:
    return json.loads((GOLDEN_DIR / "metrics_golden.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def mini_manifest():
    return load_manifest(FIXTURE_DIR / "manifest.jsonl")


@pytest.fixture(scope="session")
def mini_cases():
    # The checked-in manifest is the frozen output of this exact config;
    # test_phantom asserts the regeneration matches it byte for byte.
    _, cases = sample_cohort(MINI_COHORT_CONFIG)
    return cases


@pytest.fixture(scope="session")
def mini_dicom_root(mini_cases, tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("mini_dicom")
    for case in mini_cases:
        export_case_dicom(case, root)
    return root

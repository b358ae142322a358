"""Seeded differential tests: the library's metric implementations against
the brute-force oracle on randomized inputs (beyond the frozen golden 20).

Inputs stay small enough for the oracle's exhaustive METEOR enumeration to
remain tractable."""

import random

import pytest

from renalct.metrics.classification import LabelColumn, auc, classification_metrics
from renalct.metrics.nlg import bleu, meteor, rouge_l

from metric_oracle import o_auc, o_bleu, o_macro_prf, o_meteor, o_rouge_l

VOCAB = [
    "the", "a", "left", "right", "kidney", "cyst", "mass", "lesion",
    "enhancing", "enhancement", "cm", "2.4", "stable", ",", ".",
]


def _sentence(rng: random.Random) -> str:
    return " ".join(rng.choice(VOCAB) for _ in range(rng.randint(1, 10)))


@pytest.mark.parametrize("seed", range(5))
def test_nlg_metrics_match_oracle_on_random_pairs(seed):
    rng = random.Random(seed)
    for _ in range(40):
        c, r = _sentence(rng), _sentence(rng)
        assert bleu([c], [r], 1) == pytest.approx(o_bleu([c], [r], 1), abs=1e-12)
        assert bleu([c], [r], 4) == pytest.approx(o_bleu([c], [r], 4), abs=1e-12)
        assert rouge_l(c, r) == pytest.approx(o_rouge_l(c, r), abs=1e-12)
        assert meteor(c, r) == pytest.approx(o_meteor(c, r), abs=1e-12), (c, r)


def test_corpus_bleu_matches_oracle_on_random_corpus():
    rng = random.Random(77)
    candidates = [_sentence(rng) for _ in range(30)]
    references = [_sentence(rng) for _ in range(30)]
    for n in (1, 2, 3, 4):
        assert bleu(candidates, references, n) == pytest.approx(
            o_bleu(candidates, references, n), abs=1e-12
        )
        assert bleu(candidates, references, n, smooth=True) == pytest.approx(
            o_bleu(candidates, references, n, smooth=True), abs=1e-12
        )


@pytest.mark.parametrize("seed", range(5))
def test_classification_matches_oracle_on_random_columns(seed):
    rng = random.Random(100 + seed)
    classes = ["a", "b", "c", "unknown"]
    for _ in range(30):
        n = rng.randint(1, 40)
        truth = [rng.choice(classes) for _ in range(n)]
        predicted = [rng.choice(classes) for _ in range(n)]
        ours = classification_metrics(LabelColumn("f", truth, predicted))
        oracle = o_macro_prf(truth, predicted)
        for key in ("accuracy", "precision", "recall", "f1"):
            if oracle[key] is None:
                assert ours[key] is None
            else:
                assert ours[key] == pytest.approx(oracle[key], abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_auc_matches_oracle_on_random_scores(seed):
    rng = random.Random(200 + seed)
    for _ in range(50):
        n = rng.randint(2, 60)
        scores = [round(rng.random(), 2) for _ in range(n)]  # force ties
        labels = [rng.random() < 0.5 for _ in range(n)]
        ours = auc(scores, labels)
        oracle = o_auc(scores, labels)
        if oracle is None:
            assert ours is None
        else:
            assert ours == pytest.approx(oracle, abs=1e-12)

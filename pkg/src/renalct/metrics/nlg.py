"""Text-overlap metrics for generated report sentences: BLEU, ROUGE-L, METEOR.

All three share one fixed, versioned tokenizer so the scores cannot drift
apart through preprocessing differences. Scores are pure functions of their
inputs and land in [0, 1].

Metric conventions (documented because toolkits disagree):
  * BLEU is corpus-level: clipped n-gram counts are summed over the corpus
    before the geometric mean; brevity penalty exp(1 - r/c) applies only when
    the candidate corpus is shorter than the reference corpus. Smoothing is
    off by default; ``smooth=True`` adds one to numerator and denominator of
    every order (short-corpus stability).
  * ROUGE-L is the LCS F1 per pair, averaged over pairs; symmetric in P/R.
  * METEOR aligns unigrams that share a Porter stem (an exact token match
    always shares a stem, so the exact stage collapses into the stem stage;
    all matches score equally), maximizing matches and then minimizing
    chunks. Fmean = P*R / (0.9*P + 0.1*R); penalty = 0.5 * (chunks/m)^3.
    The synonym stage is intentionally omitted (no lexical database).
"""

from __future__ import annotations

import math
import re
from collections import Counter

from ..errors import DataError

TOKENIZER_VERSION = "1"

# Decimal numbers stay whole ("1.78"); words split on non-word chars; every
# other punctuation mark becomes its own token.
_TOKEN_RE = re.compile(r"\d+\.\d+|\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


# ---------------------------------------------------------------------------
# Porter stemmer (original algorithm, plus the standard "logi" amendment).
# ---------------------------------------------------------------------------

_VOWELS = set("aeiou")


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    # Number of VC sequences in the [C](VC)^m[V] decomposition.
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        if _is_consonant(stem, i):
            if prev_vowel:
                m += 1
            prev_vowel = False
        else:
            prev_vowel = True
    return m


def _contains_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(word: str) -> bool:
    return (
        len(word) >= 2
        and word[-1] == word[-2]
        and _is_consonant(word, len(word) - 1)
    )


def _ends_cvc(word: str) -> bool:
    # *o: consonant-vowel-consonant where the final consonant is not w, x, y.
    if len(word) < 3:
        return False
    return (
        _is_consonant(word, len(word) - 3)
        and not _is_consonant(word, len(word) - 2)
        and _is_consonant(word, len(word) - 1)
        and word[-1] not in "wxy"
    )


_STEP2 = (
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
    ("logi", "log"),
)

_STEP3 = (
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
)

_STEP4 = (
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
)


def porter_stem(word: str) -> str:
    w = word.lower()
    if len(w) <= 2 or not w.isalpha():
        return w

    # Step 1a
    if w.endswith("sses"):
        w = w[:-2]
    elif w.endswith("ies"):
        w = w[:-2]
    elif not w.endswith("ss") and w.endswith("s"):
        w = w[:-1]

    # Step 1b
    if w.endswith("eed"):
        if _measure(w[:-3]) > 0:
            w = w[:-1]
    else:
        fired = False
        if w.endswith("ed") and _contains_vowel(w[:-2]):
            w = w[:-2]
            fired = True
        elif w.endswith("ing") and _contains_vowel(w[:-3]):
            w = w[:-3]
            fired = True
        if fired:
            if w.endswith(("at", "bl", "iz")):
                w += "e"
            elif _ends_double_consonant(w) and w[-1] not in "lsz":
                w = w[:-1]
            elif _measure(w) == 1 and _ends_cvc(w):
                w += "e"

    # Step 1c
    if w.endswith("y") and _contains_vowel(w[:-1]):
        w = w[:-1] + "i"

    # Step 2
    for suffix, repl in _STEP2:
        if w.endswith(suffix):
            if _measure(w[: -len(suffix)]) > 0:
                w = w[: -len(suffix)] + repl
            break

    # Step 3
    for suffix, repl in _STEP3:
        if w.endswith(suffix):
            if _measure(w[: -len(suffix)]) > 0:
                w = w[: -len(suffix)] + repl
            break

    # Step 4
    for suffix in _STEP4:
        if w.endswith(suffix):
            stem = w[: -len(suffix)]
            if _measure(stem) > 1:
                if suffix == "ion" and not stem.endswith(("s", "t")):
                    break
                w = stem
            break

    # Step 5a
    if w.endswith("e"):
        m = _measure(w[:-1])
        if m > 1 or (m == 1 and not _ends_cvc(w[:-1])):
            w = w[:-1]

    # Step 5b
    if _measure(w) > 1 and _ends_double_consonant(w) and w.endswith("l"):
        w = w[:-1]

    return w


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    candidates: list[str],
    references: list[str],
    max_n: int = 4,
    smooth: bool = False,
) -> float:
    """Corpus-level BLEU with modified n-gram precision and brevity penalty."""
    if not candidates:
        raise DataError("bleu: empty candidate corpus")
    if len(candidates) != len(references):
        raise DataError(
            f"bleu: {len(candidates)} candidates vs {len(references)} references"
        )
    cand_tokens = [tokenize(c) for c in candidates]
    ref_tokens = [tokenize(r) for r in references]

    c_len = sum(len(t) for t in cand_tokens)
    r_len = sum(len(t) for t in ref_tokens)
    if c_len == 0:
        return 0.0

    log_sum = 0.0
    for n in range(1, max_n + 1):
        clipped = 0
        total = 0
        for ct, rt in zip(cand_tokens, ref_tokens):
            counts = _ngrams(ct, n)
            ref_counts = _ngrams(rt, n)
            total += sum(counts.values())
            clipped += sum(min(v, ref_counts[g]) for g, v in counts.items())
        if smooth:
            clipped += 1
            total += 1
        if clipped == 0 or total == 0:
            return 0.0
        log_sum += math.log(clipped / total)

    bp = 1.0 if c_len >= r_len else math.exp(1.0 - r_len / c_len)
    return bp * math.exp(log_sum / max_n)


# ---------------------------------------------------------------------------
# ROUGE-L
# ---------------------------------------------------------------------------


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """LCS F1 for one candidate/reference pair."""
    ref = tokenize(reference)
    if not ref:
        raise DataError("rouge_l: empty reference")
    cand = tokenize(candidate)
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(cand)
    r = lcs / len(ref)
    return 2 * p * r / (p + r)


def rouge_l_corpus(candidates: list[str], references: list[str]) -> float:
    if not candidates:
        raise DataError("rouge_l: empty candidate corpus")
    if len(candidates) != len(references):
        raise DataError("rouge_l: corpus length mismatch")
    return sum(rouge_l(c, r) for c, r in zip(candidates, references)) / len(candidates)


# ---------------------------------------------------------------------------
# METEOR
# ---------------------------------------------------------------------------

_METEOR_ALPHA = 0.9
_METEOR_BETA = 3.0
_METEOR_GAMMA = 0.5
_SEARCH_CAP = 200_000  # node budget; deterministic best-found beyond it


def _align(cand: list[str], ref: list[str]) -> tuple[int, int]:
    """Best unigram alignment: (matches, chunks).

    Maximizes match count, then minimizes chunk count, over all injective
    alignments between stem-equal tokens. Branch-and-bound over candidate
    positions; deterministic order.
    """
    cand_stems = [porter_stem(t) for t in cand]
    ref_stems = [porter_stem(t) for t in ref]
    compat = [
        [j for j, rs in enumerate(ref_stems) if rs == cs] for cs in cand_stems
    ]
    # Upper bound on future matches from each position onward.
    matchable_suffix = [0] * (len(cand) + 1)
    for i in range(len(cand) - 1, -1, -1):
        matchable_suffix[i] = matchable_suffix[i + 1] + (1 if compat[i] else 0)

    best = [-1, 0]  # matches, chunks
    used = [False] * len(ref)
    nodes = [0]

    def consider(matches: int, chunks: int) -> None:
        if matches > best[0] or (matches == best[0] and chunks < best[1]):
            best[0], best[1] = matches, chunks

    def walk(i: int, matches: int, chunks: int, prev: tuple[int, int] | None) -> None:
        nodes[0] += 1
        if nodes[0] > _SEARCH_CAP:
            return
        if i == len(cand):
            consider(matches, chunks)
            return
        # Prune: chunks only grow along a path, so a branch that can at most
        # tie on matches while already at/above the best chunk count is dead.
        potential = matches + matchable_suffix[i]
        if potential < best[0]:
            return
        if potential == best[0] and chunks >= best[1] >= 0 and best[0] >= 0:
            if matchable_suffix[i] == 0:
                consider(matches, chunks)
            return
        for j in compat[i]:
            if used[j]:
                continue
            used[j] = True
            contiguous = prev is not None and prev[0] == i - 1 and prev[1] == j - 1
            walk(i + 1, matches + 1, chunks + (0 if contiguous else 1), (i, j))
            used[j] = False
        walk(i + 1, matches, chunks, prev)

    walk(0, 0, 0, None)
    return best[0], best[1]


def meteor(candidate: str, reference: str) -> float:
    """METEOR (exact + stem matching, no synonym stage) for one pair."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0
    matches, chunks = _align(cand, ref)
    if matches == 0:
        return 0.0
    p = matches / len(cand)
    r = matches / len(ref)
    fmean = p * r / (_METEOR_ALPHA * p + (1 - _METEOR_ALPHA) * r)
    penalty = _METEOR_GAMMA * (chunks / matches) ** _METEOR_BETA
    return fmean * (1 - penalty)


def meteor_corpus(candidates: list[str], references: list[str]) -> float:
    if not candidates:
        raise DataError("meteor: empty candidate corpus")
    if len(candidates) != len(references):
        raise DataError("meteor: corpus length mismatch")
    return sum(meteor(c, r) for c, r in zip(candidates, references)) / len(candidates)

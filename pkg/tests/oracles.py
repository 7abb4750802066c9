"""Reference implementations the package is checked against.

Written independently of the package code: the metric follows the public SQuAD
evaluation script, the substitution oracle is a regex-free scanner and the mask
oracle works character by character.
"""

import collections
import re
import string


def squad_normalize(s):
    def remove_articles(text):
        return re.sub(r"\b(a|an|the)\b", " ", text)

    def white_space_fix(text):
        return " ".join(text.split())

    def remove_punc(text):
        exclude = set(string.punctuation)
        return "".join(ch for ch in text if ch not in exclude)

    return white_space_fix(remove_articles(remove_punc(s.lower())))


def squad_f1(prediction, ground_truth):
    pred_toks = squad_normalize(prediction).split()
    gold_toks = squad_normalize(ground_truth).split()
    if not pred_toks or not gold_toks:
        return float(pred_toks == gold_toks)
    common = collections.Counter(pred_toks) & collections.Counter(gold_toks)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_toks)
    recall = num_same / len(gold_toks)
    return 2 * precision * recall / (precision + recall)


def squad_em(prediction, ground_truth):
    return int(squad_normalize(prediction) == squad_normalize(ground_truth))


def metric_max_over_ground_truths(metric_fn, prediction, ground_truths):
    return max(metric_fn(prediction, gt) for gt in ground_truths)


def _scan(text):
    """Yield literal characters and placeholder indices: '#', a digit 1-9, then every following digit."""
    i = 0
    while i < len(text):
        if text[i] == "#" and i + 1 < len(text) and text[i + 1] in "123456789":
            j = i + 1
            while j < len(text) and text[j] in "0123456789":
                j += 1
            yield int(text[i + 1 : j])
            i = j
        else:
            yield text[i]
            i += 1


def scan_indices(text):
    return [x for x in _scan(text) if isinstance(x, int)]


def scan_substitute(text, bindings):
    table = {int(str(k).lstrip("#")): v for k, v in bindings.items()}
    return "".join(table[x] if isinstance(x, int) else x for x in _scan(text))


def information_char_cover(raw):
    """Characters inside <information>...</information>, tags included (flat, well-formed input)."""
    covered = set()
    start = 0
    while True:
        a = raw.find("<information>", start)
        if a < 0:
            return covered
        b = raw.find("</information>", a)
        if b < 0:
            return covered
        end = b + len("</information>")
        covered.update(range(a, end))
        start = end


def char_mask(raw, token_spans):
    covered = information_char_cover(raw)
    return [any(c in covered for c in range(s, e)) for s, e in token_spans]

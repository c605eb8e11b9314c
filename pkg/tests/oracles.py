"""Independent reference computations used only by tests.

Everything here is written from the definitions directly with exact
rationals and element-by-element enumeration; none of it calls into the
package's reward or grpo modules.
"""

from fractions import Fraction
from itertools import product


def count_members(universe, pred, gold):
    inter = union = hits = 0
    for x in universe:
        in_p, in_g = x in pred, x in gold
        inter += in_p and in_g
        union += in_p or in_g
        hits += in_p and in_g
    return inter, union, hits


def oracle_reward(pred_label, pred_ids, gold_label, gold_ids, format_ok):
    """Returns exact components (r_format, r_evidence, r_label, h, w, r_final) as Fractions."""
    universe = sorted(set(pred_ids) | set(gold_ids))
    inter, union, hits = count_members(universe, set(pred_ids), set(gold_ids))
    r_format = Fraction(1) if format_ok else Fraction(0)
    r_evidence = Fraction(1) if union == 0 else Fraction(inter, union)
    r_label = Fraction(2) if pred_label is not None and pred_label == gold_label else Fraction(0)
    n_gold = len(set(gold_ids))
    h = Fraction(1) if n_gold == 0 else Fraction(hits, n_gold)
    if gold_label == "NEI":
        w = Fraction(1)
    elif h == 1:
        w = Fraction(1)
    elif h > Fraction(1, 2):
        w = Fraction(1, 2)
    else:
        w = Fraction(0)
    return r_format, r_evidence, r_label, h, w, r_label * w + r_evidence + r_format


def oracle_group_advantages(rewards, eps):
    """Mean/population-std normalization evaluated with Fractions, sqrt in float."""
    import math

    xs = [Fraction(r) for r in rewards]
    n = len(xs)
    mu = sum(xs) / n
    var = sum((x - mu) ** 2 for x in xs) / n
    sd = math.sqrt(var)
    return [float((x - mu) / Fraction(sd + eps)) for x in xs]


def confusion_matrix(pairs, labels):
    m = {(g, p): 0 for g, p in product(labels, labels + [None])}
    for gold, pred in pairs:
        m[(gold, pred)] += 1
    return m

"""Seeded generators for evaluation fixtures."""

import random

from oncv.protocol import Label, ParsedAnswer
from oncv.reward import GoldAnnotation

IDS = [f"e_{i}" for i in range(8)]
LABELS = [Label.SUPPORT, Label.REFUTE, Label.NEI]


def eval_pairs(n=60, seed=7):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        gold = GoldAnnotation(LABELS[i % 3], frozenset(rng.sample(IDS, rng.randint(0, 3))))
        dataset = "alpha" if i % 2 else "beta"
        if rng.random() < 0.1:
            out.append((None, gold, dataset))
            continue
        label = gold.label if rng.random() < 0.7 else rng.choice(LABELS)
        pick = rng.random()
        if pick < 0.3:
            ev = gold.evidence
        elif pick < 0.6:
            ev = gold.evidence | frozenset(rng.sample(IDS, rng.randint(1, 2)))
        else:
            ev = frozenset(rng.sample(IDS, rng.randint(0, 3)))
        out.append((ParsedAnswer(label, ev), gold, dataset))
    return out

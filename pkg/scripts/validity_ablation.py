"""How much the validity weight changes rewards and group advantages on a rollout log.

Compares the full reward against a variant with the weight fixed to 1, which
pays the label reward regardless of the evidence retrieved.

Usage: python scripts/validity_ablation.py LOG [--group-size 3]
"""

import argparse
from itertools import groupby

import numpy as np

from oncv.data import iter_jsonl
from oncv.grpo import group_advantages


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("log")
    args = ap.parse_args()

    rows = list(iter_jsonl(args.log))
    full, flat = [], []
    adv_full, adv_flat = [], []
    for _, grp in groupby(rows, key=lambda r: r["claim_id"]):
        grp = list(grp)
        f = [r["reward"]["r_final"] for r in grp]
        u = [r["reward"]["r_label"] + r["reward"]["r_evidence"] + r["reward"]["r_format"] for r in grp]
        full += f
        flat += u
        adv_full += group_advantages(f)
        adv_flat += group_advantages(u)

    full, flat = np.array(full), np.array(flat)
    changed = int(np.sum(full != flat))
    print(f"episodes: {len(full)}")
    print(f"mean reward with weight:    {full.mean():.4f}")
    print(f"mean reward without weight: {flat.mean():.4f}")
    print(f"episodes whose reward changes: {changed}")
    if np.std(adv_full) and np.std(adv_flat):
        print(f"advantage correlation: {np.corrcoef(adv_full, adv_flat)[0, 1]:.4f}")
    else:
        print("advantage correlation: undefined (all advantages constant)")


if __name__ == "__main__":
    main()

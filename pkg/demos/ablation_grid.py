"""
Ablation grid
=============

Four variants share data and seeds: the plain VAE-GAN baseline, feedback only,
feature transformation only, and both together. A second grid compares how the
feedback module is trained and where its input comes from.
"""

from tfvaegan.data import make_synthetic
from tfvaegan.pipeline import (
    ABLATIONS,
    DESK_SCALE,
    FEEDBACK_ABLATIONS,
    ablation_table,
    config_for,
    run_ablation,
)

SEEDS = [0, 1]
datasets = lambda seed: make_synthetic(seed=seed)[0]
base = config_for(datasets(0), **DESK_SCALE)


def show(title, table):
    print(title)
    print("        " + "".join(f"{name:>14}" for name in table))
    for task in ("ZSL", "GZSL"):
        print(f"{task:>6}  " + "".join(f"{100 * table[name][task]:>14.1f}" for name in table))


show("main grid", ablation_table(run_ablation(datasets, base, ABLATIONS, SEEDS)))

# TwoStage+D: F fed by the critic's hidden layer and trained after G is frozen.
# TwoStage+Dec: same schedule, fed by the decoder. Alternating: G and F interleave.
show("feedback design", ablation_table(run_ablation(datasets, base, FEEDBACK_ABLATIONS, SEEDS)))

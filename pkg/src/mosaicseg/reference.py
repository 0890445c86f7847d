"""Published multiply-add figures for the MOSAIC architecture family.

These are the reconciliation targets for the cost model: the headline totals
(billions of madds) and the ablation columns reported for this architecture
at Cityscapes resolution (1024x2048, 19 classes, filters 32/64, m=480) and at
ADE20K resolution (512x512, 32 classes, filters 64/64, m=448). Tokens use the
ablation-variant grammar of :mod:`mosaicseg.cost`.
"""

CITYSCAPES_TOTAL_B = 20.86
ADE20K_TOTAL_B = 2.98

# decoder-skip ablation at Cityscapes resolution (variant token -> billions)
SKIP_VARIANTS_B = {
    "0": 20.108,
    "4-S": 20.270,
    "4-C": 21.465,
    "8-C": 20.708,
    "8-C,4-S": 20.860,
    "8-S,4-S": 20.390,
    "8-C,4-C": 21.685,
    "8-C,4-S,2-S": 21.186,
}

# encoder/decoder filter-width ablation ((enc, dec) -> billions)
FILTER_VARIANTS_B = {
    (32, 16): 20.31,
    (32, 32): 20.60,
    (32, 64): 20.86,
    (64, 16): 21.01,
    (64, 32): 21.19,
    (64, 64): 21.55,
    (64, 128): 22.29,
    (16, 64): 20.59,
    (128, 64): 23.55,
}

# pyramid-structure ablation (variant token -> billions)
PYRAMID_VARIANTS_B = {
    "1,4": 20.79,
    "4,8": 20.81,
    "4,16": 20.81,
    "8,16": 20.82,
    "4,8,16": 20.86,
    "4,8,16:nogc": 20.87,
    "1,4,8,16": 20.88,
}

# expected delta (billions) for adding the lone 4-S skip to the skip-free base
SKIP_4S_DELTA_B = SKIP_VARIANTS_B["4-S"] - SKIP_VARIANTS_B["0"]


def sorted_by_reference(table: dict) -> list:
    """Keys of a reference table ordered by their published totals, with the
    published row order breaking ties."""
    order = {key: i for i, key in enumerate(table)}
    return sorted(table, key=lambda key: (table[key], order[key]))

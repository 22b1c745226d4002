"""Published numbers used as reproduction targets and report comparison rows.

Values are (MRE, [SDR per threshold]) in the target's unit; model-grid
entries also carry standard deviations.
"""

# (architecture, encoder) -> (mre, mre_std, [(sdr, std) at 2/4/10 mm]) on hand, 5-fold CV
MODEL_GRID_HAND = {
    ("unet", "efficientnet-b7"): (1.20, 0.52, [(95.44, 1.74), (99.00, 0.82), (99.28, 0.71)]),
    ("unet", "resnext101_32x8d"): (0.79, 0.11, [(96.64, 0.40), (99.60, 0.23), (99.78, 0.16)]),
    ("unet", "vgg19"): (0.60, 0.02, [(97.38, 0.34), (99.82, 0.10), (99.98, 0.02)]),
    ("unetpp", "efficientnet-b7"): (0.80, 0.12, [(96.60, 0.77), (99.52, 0.24), (99.76, 0.17)]),
    ("unetpp", "resnext101_32x8d"): (0.74, 0.05, [(96.21, 0.31), (99.61, 0.08), (99.86, 0.11)]),
    ("unetpp", "vgg19"): (0.50, 0.12, [(98.90, 0.85), (99.88, 0.17), (99.94, 0.08)]),
    ("deeplabv3", "efficientnet-b7"): (1.35, 0.01, [(80.70, 0.20), (98.24, 0.29), (99.97, 0.01)]),
    ("deeplabv3", "resnext101_32x8d"): (1.00, 0.05, [(89.93, 1.09), (99.35, 0.23), (99.99, 0.01)]),
}

# chain signature -> (mre, [sdr...]) on the chain's final (target) dataset
TRANSFER = {
    "imagenet>chest": (4.19, [46.75, 77.24, 89.84]),
    "imagenet>head": (1.50, [77.79, 85.33, 91.01, 96.48]),
    "imagenet>hand": (0.65, [96.90, 99.84, 99.95]),
    "imagenet>chest>head": (1.45, [79.39, 86.13, 92.53, 97.28]),
    "imagenet>chest>hand": (0.81, [96.72, 99.60, 99.74]),
    "imagenet>head>chest": (4.78, [38.21, 71.14, 87.40]),
    "imagenet>head>hand": (0.84, [95.77, 99.49, 99.75]),
    "imagenet>hand>chest": (5.09, [35.77, 69.11, 86.99]),
    "imagenet>hand>head": (1.49, [78.27, 85.79, 91.43, 96.48]),
    "imagenet>chest>head>hand": (0.76, [95.95, 99.71, 99.89]),
    "imagenet>chest>hand>head": (1.57, [75.18, 83.01, 89.94, 95.94]),
    "imagenet>head>chest>hand": (0.67, [96.35, 99.82, 99.97]),
    "imagenet>head>hand>chest": (4.89, [38.21, 71.54, 88.21]),
    "imagenet>hand>chest>head": (1.50, [78.44, 85.64, 91.07, 96.67]),
    "imagenet>hand>head>chest": (4.86, [43.90, 71.95, 84.96]),
}

# method -> dataset -> (mre or None, [sdr...])
PRIOR_METHODS = {
    "Lindner et al.": {"head": (1.67, [70.65, 76.93, 82.17, 89.85]),
                       "hand": (0.85, [93.68, 98.95, 99.94])},
    "Urschler et al.": {"head": (None, [70.21, 76.95, 82.08, 89.01]),
                        "hand": (0.80, [92.19, 98.46, 99.95])},
    "Payer et al.": {"head": (None, [73.33, 78.76, 83.24, 89.75]),
                     "hand": (0.66, [94.99, 99.27, 99.99])},
    "Zhu et al. (GU2Net)": {"chest": (5.57, [57.33, 82.67, 89.33]),
                            "head": (1.54, [77.79, 84.65, 89.41, 94.93]),
                            "hand": (0.84, [95.40, 99.35, 99.75])},
}

# Widened MRE bounds for a full-scale baseline reproduction.
REPRODUCTION_BOUNDS = {"hand": 0.75, "head": 1.65, "chest": 5.0}

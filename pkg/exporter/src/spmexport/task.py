"""Synthetic 10-class grating classification task.

Classes are the cross product of 5 orientations and 2 spatial frequencies
of a sinusoidal grating; phase is uniform random so the class signal lives
in orientation/frequency, not raw pixel positions. The orientation fan is
deliberately narrow and the noise high: a dense ~30k-parameter net solves
the task, but the fine distinctions do not survive heavy pruning, which is
exactly the regime the repair toolkit targets. Images are 3x16x16 float32,
standardized by constants that are baked into the exported pixels and
recorded in the sidecar.
"""

from __future__ import annotations

import numpy as np

NUM_CLASSES = 10
IMAGE_HW = 16
ORIENTATIONS = 5
ORIENT_SPAN = np.pi / 2
FREQUENCIES = (2.0, 3.0)
CHANNEL_GAINS = (1.0, 0.85, 1.15)
NOISE_SIGMA = 1.0


def make_split(seed: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """n raw (unstandardized) images with balanced round-robin labels."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % NUM_CLASSES
    u = np.arange(IMAGE_HW, dtype=np.float64) / IMAGE_HW
    yy, xx = np.meshgrid(u, u, indexing="ij")
    images = np.empty((n, 3, IMAGE_HW, IMAGE_HW), dtype=np.float32)
    for i, cls in enumerate(labels):
        theta = (cls % ORIENTATIONS) * ORIENT_SPAN / ORIENTATIONS
        freq = FREQUENCIES[cls // ORIENTATIONS]
        phase = rng.uniform(0.0, 2.0 * np.pi)
        grating = np.sin(2.0 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
        for c, gain in enumerate(CHANNEL_GAINS):
            noise = rng.normal(scale=NOISE_SIGMA, size=grating.shape)
            images[i, c] = (gain * grating + noise).astype(np.float32)
    return images, labels.astype(np.int64)


def standardize(images: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    shaped = lambda v: np.asarray(v, dtype=np.float32).reshape(1, 3, 1, 1)
    return ((images - shaped(mean)) / shaped(std)).astype(np.float32)


def fit_preprocessing(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean/std over a training split."""
    mean = images.astype(np.float64).mean(axis=(0, 2, 3))
    std = images.astype(np.float64).std(axis=(0, 2, 3))
    return mean, std

"""Seeded synthetic stand-in for the imaging, cognitive and biomarker cohorts.

Every subject gets a latent severity ``s``: AD ~ U(0.5, 1.0), controls ~ U(0, 0.3).
Each modality is a noisy readout of ``s``. With probability ``corruption_rate``,
independently per modality, the readout uses a decoy severity ~ U(0, 1) drawn
without regard to the label, so that modality carries no information for that
subject. The constants are fixture parameters, not clinical estimates.
"""

import math

import numpy as np

from ..rng import Rng
from .dataset import DEFAULT_GEOMETRY, Geometry, SubjectRecord, TrimodalDataset

COGNITIVE_DECLINE = (2.5, 3.0, 2.0)
BIOMARKER_CURVES = ((0.3, 0.6), (0.2, 0.7), (0.1, 0.5))  # (baseline, amplitude)
CORRUPTION_RATE = 0.15


def make_image(s, side, rng):
    img = rng.normal(0.0, 0.1, size=(side, side))
    k = side // 3
    a = (side - k) // 2
    img[a:a + k, a:a + k] = (1.0 - s) + rng.normal(0.0, 0.1, size=(k, k))
    return np.repeat(img[:, :, None], 3, axis=2)


def make_cognitive(s, T, f, rng):
    t = np.arange(T, dtype=np.float64)[:, None]
    d = np.array([COGNITIVE_DECLINE[j % 3] for j in range(f)])[None, :]
    raw = 29.0 - d * t * s + rng.normal(0.0, 0.8, size=(T, f))
    return np.clip(raw / 30.0, 0.0, 1.0)


def make_biomarker(s, T, f, rng):
    t = np.arange(T, dtype=np.float64)[:, None]
    b = np.array([BIOMARKER_CURVES[j % 3][0] for j in range(f)])[None, :]
    a = np.array([BIOMARKER_CURVES[j % 3][1] for j in range(f)])[None, :]
    return b + a * s * (1.0 - np.exp(-t / 2.0)) + rng.normal(0.0, 0.05, size=(T, f))


def generate_trimodal(seed, n_subjects, geometry=DEFAULT_GEOMETRY, ad_prevalence=0.5, corruption_rate=CORRUPTION_RATE):
    """Deterministic trimodal cohort with exactly round(n * prevalence) AD subjects."""
    geometry = Geometry(*geometry).validate()
    if n_subjects < 4:
        raise ValueError("n_subjects must be >= 4")
    if not 0.0 <= ad_prevalence <= 1.0 or not 0.0 <= corruption_rate <= 1.0:
        raise ValueError("prevalence and corruption rate must lie in [0, 1]")
    rng = Rng(seed)
    n_ad = int(math.floor(n_subjects * ad_prevalence + 0.5))
    labels = np.zeros(n_subjects, dtype=np.int64)
    labels[:n_ad] = 1
    labels = labels[rng.permutation(n_subjects)]
    u = rng.random(n_subjects)
    severity = np.where(labels == 1, 0.5 + 0.5 * u, 0.3 * u)
    # one block of draws per modality: column m is modality m's corruption mask
    corrupt = (rng.random((3, n_subjects)) < corruption_rate).T
    decoy = rng.random((3, n_subjects)).T
    s_mod = np.where(corrupt, decoy, severity[:, None])

    width = len(str(n_subjects - 1))
    records = []
    for i in range(n_subjects):
        records.append(
            SubjectRecord(
                subject_id=f"S{i:0{width}d}",
                label=int(labels[i]),
                image=make_image(s_mod[i, 0], geometry.h, rng),
                cognitive=make_cognitive(s_mod[i, 1], geometry.T_c, geometry.f_c, rng),
                biomarker=make_biomarker(s_mod[i, 2], geometry.T_b, geometry.f_b, rng),
            )
        )
    ds = TrimodalDataset(records, geometry, f"synthetic:v1:corruption={corruption_rate}", seed)
    ds.severity = severity
    ds.corrupted = corrupt
    return ds

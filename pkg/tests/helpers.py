"""Shared fixtures for the test modules (plain functions, seeded)."""
import math

import numpy as np

from sfdet.geom import OBox
from sfdet.proposals import Proposal


def random_proposals(rng, n, extent=100.0):
    """Clustered rotated boxes so that suppression actually happens."""
    out = []
    for _ in range(n):
        box = OBox(*rng.uniform(0, extent, 2), *rng.uniform(5, 40, 2), rng.uniform(-math.pi, math.pi))
        out.append(Proposal(box, float(rng.uniform()), (-1, -1, -1)))
    return out


def synthetic_objects():
    """20 objects with hand-picked sizes spread over the pyramid."""
    sizes = [6, 10, 14, 16, 20, 24, 30, 32, 40, 48, 60, 64, 90, 128, 150, 200, 256, 300, 400, 512]
    objs = []
    for n, s in enumerate(sizes):
        cx = 100 + 37 * n % 600
        cy = 120 + 53 * n % 580
        objs.append(OBox(cx, cy, s, s * (0.6 if n % 3 else 1.0), 0.0 if n % 2 else 0.35))
    return objs


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p / (1 - p))

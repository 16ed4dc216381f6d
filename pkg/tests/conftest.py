from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import settings
from shapely.geometry import MultiPoint

from floatwave.coupled import FloatingBody
from floatwave.geometry import BodySection, catamaran, rectangle

settings.register_profile("floatwave", deadline=None, max_examples=60)
settings.load_profile("floatwave")

G = 9.81


def rect_section(rho=0.5):
    return BodySection.uniform(rectangle(-1, 1, -0.5, 0.5), rho)


@pytest.fixture(scope="session")
def rect_body():
    return rect_section()


@pytest.fixture(scope="session")
def rect_fb(rect_body):
    return FloatingBody.from_section(rect_body)


@pytest.fixture(scope="session")
def cat_fb():
    return FloatingBody.from_section(catamaran())


def random_convex_polygon(rng, n=6, scale=1.0):
    """Convex hull of n random points on an annulus, counterclockwise."""
    ang = rng.uniform(0, 2 * math.pi, n)
    r = scale * rng.uniform(0.5, 1.0, n)
    hull = MultiPoint(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)).convex_hull
    return np.asarray(hull.exterior.coords)[:-1]

"""Symmetric quadrature rules on triangles and Gauss rules on edges.

Triangle rules are given in barycentric coordinates with weights that sum
to one, so an integral over ``K`` is ``|K| * sum(w * g(x_q))``.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TriangleRule:
    degree: int
    bary: np.ndarray  # (nq, 3)
    weights: np.ndarray  # (nq,)

    def points(self, corners):
        """Physical quadrature points for triangles with ``corners`` (nt, 3, 2).

        Returns an array of shape (nt, nq, 2).
        """
        return np.einsum("qi,tid->tqd", self.bary, corners)


def _orbit3(a, b):
    return [(a, b, b), (b, a, b), (b, b, a)]


def _orbit6(a, b, c):
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _rule(degree, groups):
    bary, weights = [], []
    for w, pts in groups:
        bary.extend(pts)
        weights.extend([w] * len(pts))
    return TriangleRule(degree, np.array(bary), np.array(weights))


# Strang-Fix / Dunavant rules.
DEGREE2 = _rule(2, [(1.0 / 3.0, _orbit3(2.0 / 3.0, 1.0 / 6.0))])

DEGREE4 = _rule(
    4,
    [
        (0.223381589678011, _orbit3(0.108103018168070, 0.445948490915965)),
        (0.109951743655322, _orbit3(0.816847572980459, 0.091576213509771)),
    ],
)

DEGREE6 = _rule(
    6,
    [
        (0.116786275726379, _orbit3(0.501426509658179, 0.249286745170910)),
        (0.050844906370207, _orbit3(0.873821971016996, 0.063089014491502)),
        (0.082851075618374, _orbit6(0.053145049844817, 0.310352451033784, 0.636502499121399)),
    ],
)

RULES = {2: DEGREE2, 4: DEGREE4, 6: DEGREE6}

# Two-point Gauss-Legendre on the unit interval.
EDGE_POINTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
EDGE_WEIGHTS = np.array([0.5, 0.5])

"""Degree-8 symmetric 19-point triangle rule and L2 integrals against P1 data.

This is the Lyness-Jespersen rule also used by CUBTRI (ACM TOMS 584). The
weights are normalised to sum to one, so an integral over a triangle ``T``
is ``area(T) * sum_q w_q f(x_q)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations
from typing import Callable

import numpy as np

from .media import FeFunction
from .mesh import Mesh

# (barycentric orbit generator, weight of each point in the orbit)
_ORBITS = (
    ((1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), 0.037861091200314674),
    ((0.79742698535308720, 0.10128650732345633, 0.10128650732345633), 0.037620425413182890),
    ((0.059715871789769810, 0.47014206410511505, 0.47014206410511505), 0.078357352244117440),
    ((0.53579534644989920, 0.23210232677505038, 0.23210232677505038), 0.11627147965696588),
    ((0.94103827823112090, 0.029480860884439568, 0.029480860884439568), 0.013444267375165520),
    ((0.73841681234051000, 0.23210232677505038, 0.029480860884439568), 0.037509722455231740),
)


@dataclass(frozen=True, eq=False)
class TriangleRule:
    points: np.ndarray  # (n, 3) barycentric coordinates
    weights: np.ndarray  # (n,), summing to one

    @property
    def degree(self) -> int:
        return 8

    def reference_points(self) -> np.ndarray:
        """Points on the triangle (0,0), (1,0), (0,1)."""
        return self.points[:, 1:]


@lru_cache(maxsize=None)
def rule_deg8_19pt() -> TriangleRule:
    pts, wts = [], []
    for gen, w in _ORBITS:
        for perm in dict.fromkeys(permutations(gen)):
            pts.append(perm)
            wts.append(w)
    points = np.array(pts)
    # pin the last coordinate so every row sums to one in floating point
    points[:, 2] = 1.0 - points[:, 0] - points[:, 1]
    weights = np.array(wts)
    points.setflags(write=False)
    weights.setflags(write=False)
    return TriangleRule(points, weights)


def integrate_on_element(mesh: Mesh, t: int, f: Callable, rule: TriangleRule | None = None) -> float:
    """Integral of ``f`` (vectorised over ``(n, 2)`` points) over triangle ``t``."""
    rule = rule or rule_deg8_19pt()
    if not 0 <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range")
    xq = rule.points @ mesh.vertices[mesh.triangles[t]]
    return float(mesh.areas[t] * np.dot(rule.weights, np.asarray(f(xq), dtype=float)))


def quadrature_points(mesh: Mesh, rule: TriangleRule | None = None) -> np.ndarray:
    """Mapped quadrature points of every element, shape ``(n_triangles, n_q, 2)``."""
    rule = rule or rule_deg8_19pt()
    return np.einsum("qa,tad->tqd", rule.points, mesh.vertices[mesh.triangles])


def fe_at_quadrature(v: FeFunction, rule: TriangleRule | None = None) -> np.ndarray:
    rule = rule or rule_deg8_19pt()
    return v.coefficients[v.mesh.triangles] @ rule.points.T


def _medium_at_quadrature(u: Callable, mesh: Mesh, rule: TriangleRule) -> np.ndarray:
    xq = quadrature_points(mesh, rule)
    return np.asarray(u(xq.reshape(-1, 2)), dtype=float).reshape(xq.shape[:2])


def l2_error_exact_vs_fe(u: Callable, v: FeFunction, rule: TriangleRule | None = None) -> float:
    """``||u - v||_L2`` for a pointwise-evaluable ``u`` and a P1 function ``v``."""
    rule = rule or rule_deg8_19pt()
    mesh = v.mesh
    diff = _medium_at_quadrature(u, mesh, rule) - fe_at_quadrature(v, rule)
    per_element = (diff * diff) @ rule.weights
    return float(np.sqrt(np.dot(mesh.areas, per_element)))


def load_vector(u: Callable, mesh: Mesh, rule: TriangleRule | None = None) -> np.ndarray:
    """Vector of ``<u, phi_i>`` over all hat functions ``phi_i``."""
    rule = rule or rule_deg8_19pt()
    uq = _medium_at_quadrature(u, mesh, rule)
    # contribution of element t to its local vertex a
    local = mesh.areas[:, None] * ((uq * rule.weights) @ rule.points)
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def l2_norm_exact(u: Callable, mesh: Mesh, rule: TriangleRule | None = None) -> float:
    rule = rule or rule_deg8_19pt()
    uq = _medium_at_quadrature(u, mesh, rule)
    return float(np.sqrt(np.dot(mesh.areas, (uq * uq) @ rule.weights)))

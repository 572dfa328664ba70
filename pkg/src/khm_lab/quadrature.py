"""Sphere quadrature for the directional averages in the structure functions.

Product rules: Gauss-Legendre in the polar cosine times a uniform azimuth
grid, arranged to be antipodally symmetric.  A rule of exactness degree d
integrates every spherical polynomial of degree <= d exactly, which the
moment identities (second, third and fourth n-hat moments) require to
round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes on the unit sphere with positive weights summing to 4*pi."""

    nodes: np.ndarray    # (m, 3) unit vectors
    weights: np.ndarray  # (m,) positive, sum 4*pi
    exactness_degree: int

    def __post_init__(self):
        self.nodes.flags.writeable = False
        self.weights.flags.writeable = False

    def __len__(self):
        return len(self.weights)

    def average(self, values: np.ndarray) -> np.ndarray:
        """(1/4pi) sum_i w_i values_i along the leading axis."""
        return np.tensordot(self.weights, values, axes=(0, 0)) / (4.0 * np.pi)

    def rotated(self, rotation: np.ndarray) -> "SphereQuadrature":
        """Rule with every node rotated; exactness degree is preserved."""
        r = np.asarray(rotation, dtype=np.float64)
        if r.shape != (3, 3) or np.abs(r @ r.T - np.eye(3)).max() > 1e-10:
            raise ValueError("rotation must be a 3x3 orthogonal matrix")
        return SphereQuadrature(self.nodes @ r.T, self.weights.copy(),
                                self.exactness_degree)

    def antipodal_pairs(self):
        """Indices (i, j) with node_j == -node_i, each pair listed once."""
        pairs = []
        seen = set()
        for i, v in enumerate(self.nodes):
            if i in seen:
                continue
            d = np.abs(self.nodes + v).max(axis=1)
            j = int(np.argmin(d))
            if d[j] > 1e-12:
                raise ValueError("rule is not antipodally symmetric")
            pairs.append((i, j))
            seen.add(i)
            seen.add(j)
        return pairs


def build_quadrature(order: int) -> SphereQuadrature:
    """Product Gauss-Legendre x uniform-azimuth rule exact to `order`.

    The polar rule uses ceil((order+1)/2) Gauss-Legendre nodes in cos(theta)
    and the azimuth an even count >= order+1 of equispaced angles, so the
    node set is closed under n -> -n with equal weights.
    """
    if order < 2 or order > 200:
        raise ValueError(f"unsupported quadrature order {order}")
    n_polar = (order + 2) // 2
    n_azi = order + 1
    if n_azi % 2 == 1:
        n_azi += 1
    mu, wm = np.polynomial.legendre.leggauss(n_polar)
    phi = 2.0 * np.pi * np.arange(n_azi) / n_azi
    sin_t = np.sqrt(1.0 - mu**2)
    nodes = np.empty((n_polar * n_azi, 3))
    weights = np.empty(n_polar * n_azi)
    m = 0
    for i in range(n_polar):
        for j in range(n_azi):
            nodes[m] = (sin_t[i] * np.cos(phi[j]), sin_t[i] * np.sin(phi[j]), mu[i])
            weights[m] = wm[i] * (2.0 * np.pi / n_azi)
            m += 1
    return SphereQuadrature(nodes, weights, order)


def second_moment(quad: SphereQuadrature) -> np.ndarray:
    """(1/4pi) int n_i n_j dS, exact value I/3."""
    return quad.average(quad.nodes[:, :, None] * quad.nodes[:, None, :])


def third_moment(quad: SphereQuadrature) -> np.ndarray:
    """(1/4pi) int n_i n_j n_k dS, exact value 0."""
    n = quad.nodes
    return quad.average(n[:, :, None, None] * n[:, None, :, None] * n[:, None, None, :])


def fourth_moment(quad: SphereQuadrature) -> np.ndarray:
    """(1/4pi) int n_i n_j n_k n_q dS, exact value (dd + dd + dd)/15."""
    n = quad.nodes
    outer = n[:, :, None] * n[:, None, :]
    return quad.average(outer[:, :, :, None, None] * outer[:, None, None, :, :])


def fourth_moment_exact() -> np.ndarray:
    d = np.eye(3)
    return (
        np.einsum("ij,kq->ijkq", d, d)
        + np.einsum("ik,jq->ijkq", d, d)
        + np.einsum("iq,jk->ijkq", d, d)
    ) / 15.0

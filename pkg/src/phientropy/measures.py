"""Probability measures on the line and the plane as weighted node sets.

``mu(f) = sum_k w_k rho_k f(x_k)``: ``weights`` carry the quadrature rule
and ``density`` the (normalised) density at the nodes.  For Gauss-Hermite
rules the density is folded into the weights and ``density`` is all ones.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_hermitenorm
from scipy.special import logsumexp

from .errors import ArgumentError, DomainError, IntegrationError, TruncationError
from .jets import SmoothFunction, parse_expression

__all__ = [
    "QuadratureMeasure",
    "gauss_hermite",
    "grid_measure",
    "build_gibbs",
    "integrate",
    "variance",
    "boltzmann_entropy",
    "trapezoid_weights",
]


@dataclass(frozen=True)
class QuadratureMeasure:
    nodes: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    dim: int = 1
    kind: str = "grid"
    log_z: float = 0.0
    grid_shape: tuple | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        rho = np.asarray(self.density, dtype=float)
        if np.any(w < 0):
            raise ArgumentError("quadrature weights must be nonnegative")
        if w.shape != rho.shape:
            raise ArgumentError("weights and density must have the same shape")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "density", rho)
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))

    @property
    def z(self):
        return float(np.exp(self.log_z))

    @property
    def masses(self):
        """Effective point masses ``w_k rho_k``."""
        return self.weights * self.density

    def total_mass(self):
        return float(np.sum(self.masses))

    def values(self, f):
        """Values of ``f`` at the nodes (SmoothFunction, callable or array)."""
        if isinstance(f, str):
            f = parse_expression(f)
        if isinstance(f, SmoothFunction):
            return np.broadcast_to(f(self.nodes, self.dim), self.weights.shape).astype(float)
        if callable(f):
            return np.asarray(f(self.nodes), dtype=float)
        vals = np.asarray(f, dtype=float)
        if vals.ndim == 0:
            return np.full(self.weights.shape, float(vals))
        if vals.shape != self.weights.shape:
            raise ArgumentError(f"values have shape {vals.shape}, expected {self.weights.shape}")
        return vals

    def node(self, k):
        return self.nodes[k] if self.dim == 1 else tuple(self.nodes[k])

    # csv ---------------------------------------------------------------

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["x"] if self.dim == 1 else [f"x{i}" for i in range(self.dim)]
        w.writerow(cols + ["weight", "density"])
        nodes = self.nodes.reshape(-1, self.dim)
        for k in range(nodes.shape[0]):
            w.writerow([repr(float(v)) for v in nodes[k]] + [repr(float(self.weights[k])), repr(float(self.density[k]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, kind="grid"):
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        dim = len(header) - 2
        nodes = body[:, 0] if dim == 1 else body[:, :dim]
        return cls(nodes, body[:, dim], body[:, dim + 1], dim=dim, kind=kind)


def trapezoid_weights(x):
    x = np.asarray(x, dtype=float)
    w = np.empty_like(x)
    dx = np.diff(x)
    w[1:-1] = 0.5 * (dx[:-1] + dx[1:])
    w[0] = 0.5 * dx[0]
    w[-1] = 0.5 * dx[-1]
    return w


def gauss_hermite(order=200, dim=1):
    """Standard Gaussian as a Gauss-Hermite rule (tensor product in 2D)."""
    if order < 1:
        raise ArgumentError("Gauss-Hermite order must be positive")
    x, w = roots_hermitenorm(order)
    w = w / np.sqrt(2.0 * np.pi)
    if dim == 1:
        return QuadratureMeasure(x, w, np.ones_like(w), 1, "gauss_hermite", 0.5 * np.log(2 * np.pi), None, {"order": order})
    if dim != 2:
        raise ArgumentError("only dimensions 1 and 2 are supported")
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w).ravel()
    nodes = np.stack([X.ravel(), Y.ravel()], axis=-1)
    return QuadratureMeasure(nodes, W, np.ones_like(W), 2, "gauss_hermite", np.log(2 * np.pi), (order, order), {"order": order})


def grid_measure(axes, log_density, kind="grid", params=None, boundary_tol=1e-14):
    """Normalised measure with density ``exp(log_density)`` on a tensor grid.

    ``log_density`` holds unnormalised values at the grid nodes (shape of the
    grid).  Raises :class:`TruncationError` if the boundary density is not
    negligible relative to the maximum.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    logd = np.asarray(log_density, dtype=float)
    if len(axes) == 1:
        weights = trapezoid_weights(axes[0])
        nodes = axes[0]
        logd = logd.reshape(-1)
    else:
        wx, wy = trapezoid_weights(axes[0]), trapezoid_weights(axes[1])
        weights = np.outer(wx, wy).ravel()
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        nodes = np.stack([X.ravel(), Y.ravel()], axis=-1)
    if not np.all(np.isfinite(logd) | (logd == -np.inf)):
        raise IntegrationError("log-density is not finite on the grid")
    top = np.max(logd)
    if boundary_tol is not None:
        edge = _edge_values(logd, len(axes))
        if np.max(edge) - top > np.log(boundary_tol):
            raise TruncationError(
                f"boundary density is {np.exp(np.max(edge) - top):.3e} of the maximum; enlarge the box"
            )
    flat = logd.reshape(-1)
    log_z = float(logsumexp(flat, b=weights))
    density = np.exp(flat - log_z)
    shape = None if len(axes) == 1 else tuple(len(a) for a in axes)
    return QuadratureMeasure(nodes, weights, density, len(axes), kind, log_z, shape, dict(params or {}))


def _edge_values(logd, dim):
    if dim == 1:
        return np.array([logd[0], logd[-1]])
    return np.concatenate([logd[0], logd[-1], logd[:, 0], logd[:, -1]])


def build_gibbs(potential, box=(-12.0, 12.0), n=4096, dim=None):
    """Gibbs measure ``exp(-Psi) / Z`` on a uniform grid."""
    if isinstance(potential, str):
        potential = parse_expression(potential)
    dim = potential.dim if dim is None else dim
    if dim == 1:
        lo, hi = box if np.ndim(box[0]) == 0 else box[0]
        axes = [np.linspace(lo, hi, n)]
        vals = potential(axes[0], 1)
    else:
        boxes = box if np.ndim(box[0]) == 1 else (box, box)
        axes = [np.linspace(lo, hi, n) for lo, hi in boxes]
        X, Y = np.meshgrid(*axes, indexing="ij")
        vals = potential(np.stack([X, Y], axis=-1), 2)
    return grid_measure(axes, -np.asarray(vals), "gibbs", {"potential": potential.to_string(), "n": n})


def integrate(mu, f):
    """Quadrature ``mu(f)``."""
    vals = mu.values(f)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise IntegrationError(f"integrand is {vals[k]} at node {mu.node(k)}")
    return float(np.dot(mu.masses, vals))


def variance(mu, f):
    vals = mu.values(f)
    m = integrate(mu, vals)
    return integrate(mu, (vals - m) ** 2)


def boltzmann_entropy(mu, f, floor=1e-300, return_clamped=False):
    """``mu(f ln f) - mu(f) ln mu(f)`` for positive ``f``.

    Values in ``[0, floor)`` are clamped to ``floor``; their node indices are
    returned when ``return_clamped`` is true.  Negative values raise.
    """
    vals = mu.values(f)
    if np.any(vals < 0) or np.any(np.isnan(vals)):
        k = int(np.argmax((vals < 0) | np.isnan(vals)))
        raise DomainError(f"entropy needs f >= 0, got {vals[k]} at node {mu.node(k)}")
    clamped = np.flatnonzero(vals < floor)
    vals = np.maximum(vals, floor)
    m = integrate(mu, vals)
    ent = integrate(mu, vals * np.log(vals)) - m * np.log(m)
    if return_clamped:
        return ent, clamped
    return ent

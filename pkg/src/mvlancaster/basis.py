"""Elementary orthogonal bases on a finite weight vector.

A basis is a ``d x d`` table ``u`` whose row ``l`` is the function
``u^{(l)}`` evaluated at the states ``1..d`` (column ``j`` is state ``j+1``).
Row 0 is the constant function and the rows are orthogonal under ``p``
with squared norms ``a``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSeed, LancasterError, NegativeCell, UnscalableBasis, ZeroWeight

ORTHO_TOL = 1e-10
HYPERGROUP_TOL = 1e-10


def check_weights(p):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise LancasterError("weights must be a vector with at least two states")
    if np.any(p <= 0):
        raise ZeroWeight(f"all weights must be positive, got {p.tolist()}")
    if abs(p.sum() - 1.0) > 1e-12:
        raise LancasterError(f"weights sum to {p.sum()!r}, not 1")
    return p


def normalize_weights(mu):
    """Return ``mu / |mu|`` after checking positivity."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise ZeroWeight(f"all means must be positive, got {mu.tolist()}")
    return mu / mu.sum()


@dataclass(frozen=True)
class Basis:
    p: np.ndarray
    u: np.ndarray
    a: np.ndarray
    scaled_last: bool = False

    def __post_init__(self):
        for name in ("p", "u", "a"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def d(self):
        return self.p.size

    def gram(self):
        """Weighted Gram matrix ``sum_j u_j^(k) u_j^(l) p_j``."""
        return (self.u * self.p) @ self.u.T

    def orthogonality_residual(self):
        return float(np.max(np.abs(self.gram() - np.diag(self.a))))

    def hat(self, x):
        """Linear forms ``sum_i u_i^(j) x_i`` for every row ``j``."""
        return np.asarray(x, dtype=float) @ self.u.T

    def theta(self, omega):
        """Eigenvalues ``sum_l omega_l u_l^(r)`` of the 2-point law, rows 1..d-1."""
        return self.u[1:] @ np.asarray(omega, dtype=float)

    def to_dict(self):
        return {
            "p": self.p.tolist(),
            "u": self.u.tolist(),
            "a": self.a.tolist(),
            "scaled_last": bool(self.scaled_last),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        try:
            p = check_weights(doc["p"])
            u = np.asarray(doc["u"], dtype=float)
            a = np.asarray(doc["a"], dtype=float)
        except KeyError as exc:
            raise LancasterError(f"basis document missing field {exc}") from None
        if u.shape != (p.size, p.size) or a.shape != (p.size,):
            raise LancasterError("basis document has inconsistent shapes")
        b = cls(p, u, a, bool(doc.get("scaled_last", False)))
        if b.orthogonality_residual() > ORTHO_TOL:
            raise LancasterError("basis document is not orthogonal under p")
        return b

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def helmert_seeds(p):
    """Weighted Helmert contrasts: function ``l`` sets state ``l`` against ``l+1..d``."""
    p = np.asarray(p, dtype=float)
    d = p.size
    seeds = np.zeros((d - 1, d))
    for l in range(d - 1):
        seeds[l, l] = -p[l + 1:].sum()
        seeds[l, l + 1:] = p[l]
    return seeds


def _gram_schmidt(p, vectors):
    out = []
    for v in vectors:
        v = np.array(v, dtype=float)
        scale = np.sqrt(np.sum(v * v * p))
        # two passes keep the residual at rounding level
        for _ in range(2):
            for w in out:
                v = v - (np.sum(v * w * p) / np.sum(w * w * p)) * w
        if scale == 0 or np.sqrt(np.sum(v * v * p)) < 1e-10 * scale:
            raise DegenerateSeed(f"seed vector {len(out)} is linearly dependent")
        out.append(v)
    return np.array(out)


def build_basis(p, seed_vectors=None, scale="last"):
    """Build an orthogonal basis under ``p``.

    ``seed_vectors`` are ``d-1`` vectors orthogonalised, in order, against the
    constant function and each other. ``scale`` is ``"last"`` (rows divided so
    the last state has value 1), ``"orthonormal"`` or ``"none"``.
    """
    p = check_weights(p)
    d = p.size
    seeds = helmert_seeds(p) if seed_vectors is None else np.asarray(seed_vectors, dtype=float)
    if seeds.shape != (d - 1, d):
        raise DegenerateSeed(f"expected {d - 1} seed vectors of length {d}")
    u = _gram_schmidt(p, np.vstack([np.ones(d), seeds]))
    u[0] = 1.0
    a = np.sum(u * u * p, axis=1)
    b = Basis(p, u, a, False)
    if scale == "last":
        return rescale_last(b)
    if scale == "orthonormal":
        return Basis(p, u / np.sqrt(a)[:, None], np.ones(d), False)
    if scale != "none":
        raise LancasterError(f"unknown scale {scale!r}")
    return b


def rescale_last(b):
    """Divide each row by its value at the last state."""
    last = b.u[:, -1]
    for r in range(1, b.d):
        if last[r] == 0:
            raise UnscalableBasis(r)
    u = b.u / last[:, None]
    a = np.sum(u * u * b.p, axis=1)
    return Basis(b.p, u, a, True)


@dataclass(frozen=True)
class HypergroupTensor:
    s: np.ndarray
    feasible: bool

    @property
    def min_entry(self):
        return float(self.s.min())

    def argmin(self):
        return tuple(int(i) for i in np.unravel_index(np.argmin(self.s), self.s.shape))


def hypergroup_tensor(b, tol=HYPERGROUP_TOL):
    """Linearisation tensor ``s(j,k,l) = sum_{r=0}^{d-1} u_j u_k u_l / a_r``."""
    s = np.einsum("rj,rk,rl,r->jkl", b.u, b.u, b.u, 1.0 / b.a)
    return HypergroupTensor(s, bool(s.min() >= -tol))


def lancaster_2point(b, theta, check_positive=False, tol=HYPERGROUP_TOL):
    """Bivariate law ``p_j p_k (1 + sum_r theta_r u_j^(r) u_k^(r) / a_r)`` on ``d x d`` states."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (b.d - 1,):
        raise LancasterError(f"theta must have {b.d - 1} entries")
    core = 1.0 + np.einsum("r,rj,rk->jk", theta / b.a[1:], b.u[1:], b.u[1:])
    table = np.outer(b.p, b.p) * core
    if check_positive and table.min() < -tol:
        loc = tuple(int(i) for i in np.unravel_index(np.argmin(table), table.shape))
        raise NegativeCell(loc, float(table.min()))
    return table


def pair_law(b, omega):
    """The 2-point law ``p_jk(omega)`` for a mixing point ``omega`` on the simplex."""
    return lancaster_2point(b, b.theta(omega))


def conditional_law(b, omega):
    """Row-stochastic ``p_{j|i}(omega) = p_ij(omega) / p_i``."""
    return pair_law(b, omega) / b.p[:, None]

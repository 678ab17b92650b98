"""Gender subspace extraction and the soft-debias regularizer.

The defining pairs give a difference matrix C whose row i is
(u_i - v_i) / 2 for the pair embeddings u_i, v_i.  The gender subspace B is
the top-k right singular vectors of C, with k the smallest count capturing
at least the requested fraction of the squared-singular-value spectrum.
The training-time penalty is lambda * ||N B||_F^2 over the non-gendered
embedding rows N, with gradient 2 * lambda * N B B^T (B is recomputed from
the current embeddings every step but held constant when differentiating).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import DefiningSets
from .errors import CheckpointError, ConfigError, DegenerateSubspaceError

JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 60


@dataclass(frozen=True)
class RegularizerConfig:
    """Weight and targeting of the bias penalty.

    ``lam`` is the loss weight (0 disables the penalty), ``target`` picks
    which embedding matrix is penalized, and ``refresh`` recomputes the
    subspace every optimizer step (off: once per epoch).
    """

    lam: float = 0.0
    target: str = "input"
    variance_threshold: float = 0.5
    refresh: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"regularizer weight must be non-negative, got {self.lam}")
        if self.target not in ("input", "output", "both"):
            raise ConfigError(f"regularizer target must be input|output|both, got {self.target!r}")
        if not 0.0 < self.variance_threshold <= 1.0:
            raise ConfigError(
                f"variance threshold must be in (0, 1], got {self.variance_threshold}"
            )

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "target": self.target,
            "variance_threshold": self.variance_threshold,
            "refresh": self.refresh,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegularizerConfig":
        d = dict(d)
        lam = d.pop("lambda", d.pop("lam", 0.0))
        return cls(lam=lam, **d)


@dataclass(frozen=True)
class DifferenceMatrix:
    """Stacked halved difference vectors of the defining pairs."""

    c_matrix: np.ndarray
    pair_ids: tuple[tuple[int, int], ...]


def build_difference_matrix(embedding: np.ndarray, sets: DefiningSets) -> DifferenceMatrix:
    """Row i = (embedding[u_i] - embedding[v_i]) / 2, in pair order."""
    if not sets.pair_ids:
        raise ConfigError("cannot build a difference matrix from empty defining sets")
    emb = np.asarray(embedding, dtype=np.float64)
    u = np.array([p[0] for p in sets.pair_ids])
    v = np.array([p[1] for p in sets.pair_ids])
    if u.max() >= emb.shape[0] or v.max() >= emb.shape[0]:
        raise ConfigError("defining-pair ids exceed the embedding row count")
    return DifferenceMatrix((emb[u] - emb[v]) / 2.0, tuple(sets.pair_ids))


def jacobi_svd(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Economy SVD via one-sided Jacobi rotations (deterministic sweep order).

    Returns (u, s, vt) with s descending so that mat = (u * s) @ vt.  Built
    for small matrices (defining-set scale); accuracy is near machine
    precision there.
    """
    a = np.array(mat, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("jacobi_svd expects a 2-d matrix")
    m, n = a.shape
    if n > m:
        u, s, vt = jacobi_svd(a.T)
        return vt.T, s, u.T

    v = np.eye(n)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                ap = a[:, p]
                aq = a[:, q]
                gamma = float(ap @ aq)
                alpha = float(ap @ ap)
                beta = float(aq @ aq)
                if alpha == 0.0 or beta == 0.0 or gamma == 0.0:
                    continue
                ratio = abs(gamma) / math.sqrt(alpha * beta)
                off = max(off, ratio)
                if ratio <= JACOBI_TOL:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s_ = c * t
                new_p = c * ap - s_ * aq
                new_q = s_ * ap + c * aq
                a[:, p] = new_p
                a[:, q] = new_q
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s_ * vq
                v[:, q] = s_ * vp + c * vq
        if off <= JACOBI_TOL:
            break

    norms = np.sqrt(np.sum(a * a, axis=0))
    order = np.argsort(-norms, kind="stable")
    s = norms[order]
    safe = np.where(s > 0.0, s, 1.0)
    u = a[:, order] / safe
    vt = v[:, order].T
    return u, s, vt


@dataclass(frozen=True)
class GenderSubspace:
    """Orthonormal d x k basis of the gender directions plus spectrum info."""

    basis: np.ndarray
    singular_values: np.ndarray
    k: int
    captured_variance: float


def gender_subspace(diff: DifferenceMatrix, threshold: float = 0.5) -> GenderSubspace:
    """Top-k right singular vectors of C capturing >= threshold of sum(s^2).

    k is minimal with that property; each basis column is sign-fixed so its
    largest-magnitude entry is positive.
    """
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(f"variance threshold must be in (0, 1], got {threshold}")
    c = diff.c_matrix
    if not np.any(c):
        raise DegenerateSubspaceError(
            "all defining-pair differences are zero: no gender direction"
        )
    _, s, vt = jacobi_svd(c)
    energy = s * s
    total = float(energy.sum())
    cum = np.cumsum(energy)
    # tiny slack keeps exact-boundary spectra (e.g. two equal values at 0.5)
    # from tipping over due to rounding in the decomposition
    k = int(np.searchsorted(cum, threshold * total * (1.0 - 1e-12)) + 1)
    k = min(k, len(s))
    basis = vt[:k].T.copy()
    for j in range(k):
        col = basis[:, j]
        if col[int(np.argmax(np.abs(col)))] < 0:
            basis[:, j] = -col
    captured = min(1.0, float(cum[k - 1] / total))
    return GenderSubspace(basis=basis, singular_values=s, k=k, captured_variance=captured)


def _check_dims(n_matrix: np.ndarray, space: GenderSubspace) -> np.ndarray:
    n = np.asarray(n_matrix, dtype=np.float64)
    if n.ndim == 1:
        n = n[None, :]
    if n.shape[1] != space.basis.shape[0]:
        raise ValueError(
            f"embedding dim {n.shape[1]} does not match subspace dim {space.basis.shape[0]}"
        )
    return n


def regularizer_value(n_matrix: np.ndarray, space: GenderSubspace, lam: float) -> float:
    """lambda * ||N B||_F^2 (zero iff every row of N is orthogonal to B)."""
    n = _check_dims(n_matrix, space)
    proj = n @ space.basis
    return float(lam * np.sum(proj * proj))


def regularizer_gradient(n_matrix: np.ndarray, space: GenderSubspace, lam: float) -> np.ndarray:
    """d/dN of the penalty with B frozen: 2 * lambda * N B B^T."""
    n = _check_dims(n_matrix, space)
    return 2.0 * lam * (n @ space.basis) @ space.basis.T


def hard_debias(
    embedding: np.ndarray, space: GenderSubspace, sets: DefiningSets
) -> np.ndarray:
    """Remove the subspace projection from every non-defining-set row.

    Verification utility: after projection the penalty over those rows is
    numerically zero.  Defining-set rows are returned untouched.
    """
    emb = np.array(embedding, dtype=np.float64)
    keep = np.ones(emb.shape[0], dtype=bool)
    keep[list(sets.gendered_ids)] = False
    rows = emb[keep]
    emb[keep] = rows - (rows @ space.basis) @ space.basis.T
    return emb


def save_embedding(embedding: np.ndarray, role: str, path) -> None:
    """Text dump: header "V d role", then one row of %.9g floats per word."""
    emb = np.asarray(embedding, dtype=np.float64)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{emb.shape[0]} {emb.shape[1]} {role}\n")
        for row in emb:
            fh.write(" ".join(f"{x:.9g}" for x in row))
            fh.write("\n")


def load_embedding(path) -> tuple[np.ndarray, str]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise CheckpointError(f"malformed embedding header in {path}")
        rows, dim, role = int(header[0]), int(header[1]), header[2]
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if data.shape != (rows, dim):
        raise CheckpointError(
            f"embedding body {data.shape} does not match header ({rows}, {dim}) in {path}"
        )
    return data, role


def save_subspace_json(space: GenderSubspace, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "k": space.k,
        "captured_variance": space.captured_variance,
        "singular_values": [float(x) for x in space.singular_values],
        "basis": [[float(x) for x in row] for row in space.basis],
    }
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")

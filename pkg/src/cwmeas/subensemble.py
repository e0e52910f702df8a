"""Subensembles of the final state and their relaxation.

After registration S+A is in D = sum_i p_i |i><i| (x) R_i with R_i the
microcanonical state (1/G) sum_eta |i, eta><i, eta| of the magnet.  Any
operator D_sub appearing in a split D = k D_sub + (1-k) D_Csub lives on
the correlated kets |i>|i, eta> and is described by a 2G x 2G matrix
K(i, eta; i', eta'), indexed here as i*G + eta with i = 0 for up and
i = 1 for down.

The relaxation of K is represented by the map

    K -> (1 - s) K + s Phi(K),   Phi(K) = sum_i (q_i/G) 1_i,

which kills the i != i' blocks and the eta != eta' elements and flattens
each diagonal block, keeping q_i = sum_eta K(i, eta; i, eta).  Only the
endpoint s = 1 is physical; intermediate s is an interpolation and
carries no time meaning.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Real

import numpy as np

SECTORS = ("up", "down")
MAX_G = 64


@dataclass(frozen=True)
class KMatrix:
    K: np.ndarray
    G: int

    def __post_init__(self):
        K = np.array(self.K, dtype=complex)
        if K.shape != (2 * self.G, 2 * self.G):
            raise ValueError(f"K must be {2 * self.G}x{2 * self.G}, got {K.shape}")
        if not 1 <= self.G <= MAX_G:
            raise ValueError(f"G must lie in [1, {MAX_G}]")
        K.flags.writeable = False
        object.__setattr__(self, "K", K)

    def block(self, i: int, j: int) -> np.ndarray:
        G = self.G
        return self.K[i * G:(i + 1) * G, j * G:(j + 1) * G]

    def q(self) -> tuple[float, float]:
        """Sector weights q_i = sum_eta K(i, eta; i, eta)."""
        return tuple(float(np.trace(self.block(i, i)).real) for i in (0, 1))

    def trace(self) -> float:
        return float(np.trace(self.K).real)

    def violations(self, tol: float = 1e-10) -> tuple[str, ...]:
        return matrix_violations(self.K, tol)


def matrix_violations(D: np.ndarray, tol: float = 1e-10) -> tuple[str, ...]:
    """Which of hermiticity, unit trace, positivity fail for D."""
    bad = []
    if np.max(np.abs(D - D.conj().T)) > tol:
        bad.append("hermiticity")
    if abs(np.trace(D) - 1) > tol:
        bad.append("trace")
    if np.linalg.eigvalsh(0.5 * (D + D.conj().T)).min() < -tol:
        bad.append("positivity")
    return tuple(bad)


def final_state_matrix(p_up: float, G: int) -> KMatrix:
    """The full-ensemble final state: diag(p_up/G, ..., p_down/G, ...)."""
    if not 0 <= p_up <= 1:
        raise ValueError("p_up must lie in [0, 1]")
    d = np.concatenate([np.full(G, p_up / G), np.full(G, (1 - p_up) / G)])
    return KMatrix(np.diag(d), G)


def random_kmatrix(G: int, rng: np.random.Generator, rank: int | None = None) -> KMatrix:
    """Random density matrix on the correlated subspace (complex Wishart, unit trace)."""
    rank = 2 * G if rank is None else rank
    A = rng.standard_normal((2 * G, rank)) + 1j * rng.standard_normal((2 * G, rank))
    K = A @ A.conj().T
    return KMatrix(K / np.trace(K).real, G)


@dataclass(frozen=True)
class Decomposition:
    D: KMatrix
    sub: KMatrix
    csub: KMatrix
    k: float


def check_decomposition(D, D_sub, D_Csub, k: float, tol: float = 1e-12, psd_tol: float = 1e-10) -> tuple[str, ...]:
    """Violations of D = k D_sub + (1-k) D_Csub with both parts density matrices.

    Names are "identity" or "<property>:sub" / "<property>:csub".
    """
    if not 0 < k < 1:
        raise ValueError("k must lie strictly between 0 and 1")
    mats = [x.K if isinstance(x, KMatrix) else np.asarray(x, complex) for x in (D, D_sub, D_Csub)]
    D, Ds, Dc = mats
    bad = []
    if np.max(np.abs(D - (k * Ds + (1 - k) * Dc))) > tol:
        bad.append("identity")
    for name, X in (("sub", Ds), ("csub", Dc)):
        bad.extend(f"{v}:{name}" for v in matrix_violations(X, psd_tol))
    return tuple(bad)


def random_decomposition(D: KMatrix, rng: np.random.Generator, rank: int | None = None) -> Decomposition:
    """A random valid split of D.

    D_sub is a random density matrix X; k is drawn below the largest value
    for which D - k X stays positive, i.e. 1/lambda_max(D^-1/2 X D^-1/2).
    """
    X = random_kmatrix(D.G, rng, rank)
    w, V = np.linalg.eigh(D.K)
    if w.min() <= 0:
        raise ValueError("D must be positive definite for random splitting")
    inv_sqrt = V @ np.diag(w**-0.5) @ V.conj().T
    k_max = min(1.0, 1.0 / np.linalg.eigvalsh(inv_sqrt @ X.K @ inv_sqrt).max())
    k = float(rng.uniform(0.05, 0.95) * k_max)
    C = (D.K - k * X.K) / (1 - k)
    return Decomposition(D, X, KMatrix(0.5 * (C + C.conj().T), D.G), k)


def relaxed_endpoint(K: KMatrix) -> KMatrix:
    """Phi(K) = sum_i q_i r_i (x) R_i^mu in the K representation."""
    q_up, q_down = K.q()
    d = np.concatenate([np.full(K.G, q_up / K.G), np.full(K.G, q_down / K.G)])
    return KMatrix(np.diag(d), K.G)


def relax_subensemble(K: KMatrix, s: float) -> KMatrix:
    """(1 - s) K + s Phi(K) for s in [0, 1]."""
    if not 0 <= s <= 1:
        raise ValueError("s must lie in [0, 1]")
    if s == 0:
        return K
    if s == 1:
        return relaxed_endpoint(K)
    return KMatrix((1 - s) * K.K + s * relaxed_endpoint(K).K, K.G)


@dataclass(frozen=True)
class SubensembleWeights:
    """Weights (q_up, 1 - q_up) of a subensemble of ``count`` runs.

    ``q_up`` may be a float or a Fraction; Fractions keep merges exact.
    """

    q_up: Real
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if not 0 <= self.q_up <= 1:
            raise ValueError(f"q_up must lie in [0, 1], got {self.q_up}")

    @property
    def q_down(self):
        return 1 - self.q_up

    @classmethod
    def single_run(cls, up: bool, exact: bool = True):
        one = Fraction(1) if exact else 1.0
        return cls(one if up else 0 * one, 1)


def hierarchic_merge(a: SubensembleWeights, b: SubensembleWeights) -> SubensembleWeights:
    """N q_i = N1 q_i^(1) + N2 q_i^(2), N = N1 + N2, for disjoint subensembles."""
    n = a.count + b.count
    if n == 0:
        raise ValueError("cannot merge two empty subensembles")
    return SubensembleWeights((a.count * a.q_up + b.count * b.q_up) / n, n)


def merge_random_tree(leaves, rng: np.random.Generator) -> SubensembleWeights:
    """Merge the leaves pairwise in random order until one subensemble remains."""
    pool = list(leaves)
    if not pool:
        raise ValueError("no subensembles to merge")
    while len(pool) > 1:
        i, j = rng.choice(len(pool), size=2, replace=False)
        merged = hierarchic_merge(pool[i], pool[j])
        for idx in sorted((i, j), reverse=True):
            pool[idx] = pool[-1]
            pool.pop()
        pool.append(merged)
    return pool[0]


def relaxed_weights(K: KMatrix, count: int = 1) -> SubensembleWeights:
    """Weights carried by a K after relaxation (q_i unchanged by the map)."""
    q_up, q_down = K.q()
    total = q_up + q_down
    return SubensembleWeights(min(max(q_up / total, 0.0), 1.0), count)

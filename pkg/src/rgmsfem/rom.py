"""POD compression of local eigenvector snapshots and reduced online operators."""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, RGMsFEMError


@dataclass
class PodBasis:
    V: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    eps: float = 0.0
    index: int = -1
    k: int = -1

    @property
    def N(self):
        return self.V.shape[1]

    @property
    def energy(self):
        """Retained energy fraction ``I(N)``."""
        s2 = self.sigma**2
        return float(s2[:self.N].sum() / s2.sum())

    @property
    def tail(self):
        return 1.0 - self.energy


def assemble_snapshot_matrix(vectors, ks=None, align=True):
    """Stack eigenvectors ``vectors[j][:, k]`` column-wise, sample-major then ``k``.

    ``vectors`` has shape ``(n_s, L, l)``. With ``align`` each column is flipped
    to have a non-negative inner product with sample 0's vector of the same ``k``.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 3:
        raise ConfigError(f"expected (n_s, L, l) eigenvector stack, got {vectors.shape}")
    ks = list(range(vectors.shape[2])) if ks is None else list(ks)
    sub = vectors[:, :, ks].copy()
    if align:
        dots = np.einsum("jlk,lk->jk", sub, sub[0])
        sub *= np.where(dots < 0, -1.0, 1.0)[:, None, :]
    return sub.transpose(1, 0, 2).reshape(sub.shape[1], -1)


def energy_dimension(sigma, eps):
    """Smallest ``N`` with ``sum(sigma[:N]**2) / sum(sigma**2) >= 1 - eps``."""
    s2 = np.asarray(sigma, dtype=np.float64) ** 2
    cum = np.cumsum(s2)
    ratio = cum / cum[-1]
    return int(np.searchsorted(ratio, 1.0 - eps, side="left") + 1)


def pod_reduce(S_n, eps=1e-6, index=-1, k=-1):
    """POD basis from the correlation matrix ``S_n^T S_n``."""
    S_n = np.asarray(S_n, dtype=np.float64)
    if not np.any(S_n):
        raise RGMsFEMError("snapshot matrix is identically zero")
    C = S_n.T @ S_n
    lam, D = np.linalg.eigh(0.5 * (C + C.T))
    order = np.argsort(lam)[::-1]
    lam, D = lam[order], D[:, order]
    # eigenvalues below roundoff of the correlation matrix carry no direction
    floor = lam[0] * max(C.shape) * np.finfo(float).eps * 10
    r = int(np.sum(lam > floor))
    sigma = np.sqrt(lam[:r])
    N = energy_dimension(sigma, eps)
    V = S_n @ D[:, :N] / sigma[:N]
    if np.abs(V.T @ V - np.eye(N)).max() > 1e-12:
        Qm, Rm = np.linalg.qr(V)
        V = Qm * np.sign(np.diag(Rm))
    return PodBasis(V, sigma, eps, index, k)


def svd_pod(S_n, eps=1e-6):
    """Direct-SVD POD, kept as an independent check of :func:`pod_reduce`."""
    U, s, _ = np.linalg.svd(np.asarray(S_n, dtype=np.float64), full_matrices=False)
    s = s[s > s[0] * max(S_n.shape) * np.finfo(float).eps]
    N = energy_dimension(s, eps)
    return PodBasis(U[:, :N], s, eps)


def project(pod, psi):
    return pod.V.T @ psi


def lift(pod, xi):
    return pod.V @ xi


@dataclass
class ReducedOperators:
    """Reduced operators ``R^T A_q R`` over the chi-weighted local bases.

    ``offsets[i]:offsets[i+1]`` is neighborhood ``i``'s column block. ``F`` is
    ``R^T F_fine`` and ``G[q]`` is ``R^T A_q g`` for the Dirichlet lift ``g``.
    """

    A: list = field(repr=False)
    F: np.ndarray = field(repr=False)
    G: list = field(repr=False)
    offsets: np.ndarray = field(repr=False)

    @property
    def Q(self):
        return len(self.A)

    @property
    def dim(self):
        return int(self.offsets[-1])

    def block(self, q, i, j):
        a, b = self.offsets[i], self.offsets[i + 1]
        c, d = self.offsets[j], self.offsets[j + 1]
        return self.A[q][a:b, c:d].toarray()

    def rhs(self, thetas):
        out = self.F.copy()
        for t, g in zip(thetas, self.G):
            out -= t * g
        return out

    def matrix(self, thetas):
        out = thetas[0] * self.A[0]
        for t, a in zip(thetas[1:], self.A[1:]):
            out = out + t * a
        return out


def reduce_operators(A_q, F, g, R_tilde, offsets):
    """Project the fine operators onto the columns of the sparse global basis ``R_tilde``."""
    R = sp.csr_matrix(R_tilde)
    RT = R.T.tocsr()
    A_hat = []
    for A in A_q:
        M = (RT @ (A @ R)).tocsr()
        M = (0.5 * (M + M.T)).tocsr()
        M.eliminate_zeros()
        A_hat.append(M)
    F_hat = RT @ F
    G_hat = [RT @ (A @ g) for A in A_q]
    return ReducedOperators(A_hat, F_hat, G_hat, np.asarray(offsets, dtype=np.int64))

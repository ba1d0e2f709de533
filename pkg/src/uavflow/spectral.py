"""Stationary joint distribution of a Markov-modulated single fluid queue.

With ``F_j(x) = P(Q <= x, mode = j)`` the stationary CDF solves
``F'(x) D = F(x) Lambda`` where ``D = diag(a - c_j)``. Its bounded solutions are
``p + sum_k b_k exp(z_k x) phi_k`` over eigenpairs with ``Re z_k < 0`` of
``phi Lambda = z phi D``; the coefficients make ``F_j(0) = 0`` in every mode
where the queue grows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .ctmc import GeneratorMatrix, stationary_distribution
from .errors import UnstableQueue, ZeroDriftMode

EIG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpectralCdf:
    p: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # one row per eigenvalue
    coefficients: np.ndarray

    def __call__(self, x) -> np.ndarray:
        """Joint CDF per mode at levels ``x``; shape ``(len(x), m)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        expo = np.exp(np.outer(x, self.eigenvalues))
        F = self.p + (expo * self.coefficients) @ self.eigenvectors
        F = np.real(F)
        return np.where(x[:, None] < 0, 0.0, F)

    def marginal(self, x) -> np.ndarray:
        return self(x).sum(axis=1)

    @property
    def atom_at_zero(self) -> np.ndarray:
        return self(0.0)[0]

    def to_dict(self) -> dict:
        def cplx(a):
            a = np.asarray(a)
            return a.real.tolist() if np.allclose(a.imag, 0) else [[z.real, z.imag] for z in a.ravel()]

        return {
            "p": self.p.tolist(),
            "eigenvalues": cplx(self.eigenvalues),
            "coefficients": cplx(self.coefficients),
            "atom_at_zero": self.atom_at_zero.tolist(),
        }


def single_queue_stationary_cdf(a: float, capacities, generator: GeneratorMatrix) -> SpectralCdf:
    c = np.asarray(capacities, dtype=float).ravel()
    if c.size != generator.m:
        raise ValueError(f"need {generator.m} capacities, got {c.size}")
    net = a - c
    scale = max(1.0, abs(a), float(np.abs(c).max()))
    if np.any(np.abs(net) <= 1e-12 * scale):
        raise ZeroDriftMode("some mode has inflow equal to capacity; the spectral solution does not apply")
    p = stationary_distribution(generator)
    if float(p @ net) >= 0:
        raise UnstableQueue(f"mean drift {float(p @ net):g} >= 0; no stationary distribution")

    z, vecs = scipy.linalg.eig(generator.rates.T, np.diag(net))
    keep = np.isfinite(z) & (z.real < -EIG_TOL * scale / abs(net).min())
    z = z[keep]
    phi = vecs[:, keep].T
    up = np.flatnonzero(net > 0)
    if z.size != up.size:
        raise RuntimeError(f"expected {up.size} decaying eigenvalues, found {z.size}")
    if up.size == 0:
        coef = np.zeros(0, dtype=complex)
    else:
        # F_j(0) = 0 for modes where the queue grows
        coef = np.linalg.solve(phi[:, up].T, -p[up].astype(complex))
    if np.allclose(z.imag, 0):
        # real spectrum: rotate each eigenvector so it is real
        phase = np.exp(-1j * np.angle(phi[np.arange(z.size), np.abs(phi).argmax(axis=1)]))
        phi = phi * phase[:, None]
        coef = coef / phase
        if np.allclose(phi.imag, 0) and np.allclose(coef.imag, 0):
            return SpectralCdf(p, z.real, phi.real, coef.real)
    return SpectralCdf(p, z, phi, coef)

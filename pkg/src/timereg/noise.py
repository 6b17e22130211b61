"""Truncated Q-Wiener noise: per-mode Brownian increments and their refinement.

Gaussians are produced by Box-Muller on the raw 64-bit output of a Philox
counter-based generator, so an increment array is a pure function of
``(seed, n_steps, n_modes, tau)``.  Per-path seeds come from
:func:`derive_seed`, a stateless mix of a master seed and a path index.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .field import NodeField, SpectralBasis

__all__ = [
    "NoiseSpec",
    "WienerIncrements",
    "NonTraceClassWarning",
    "derive_seed",
    "standard_normals",
    "sample_increments",
    "assemble_noise_field",
    "assemble_noise_fields",
    "refine",
    "refine_to",
    "dump_increments",
    "load_increments",
]

_U64 = 2**64


class NonTraceClassWarning(UserWarning):
    """Covariance weights k^-gamma with gamma <= 1 are not summable."""


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    n_modes: int
    gamma: float
    basis: SpectralBasis

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.n_modes > len(self.basis):
            raise ValueError(
                f"n_modes={self.n_modes} exceeds the {len(self.basis)} available eigenvectors"
            )
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not self.trace_class:
            warnings.warn(
                f"gamma={self.gamma} <= 1: the untruncated covariance is not trace class",
                NonTraceClassWarning,
                stacklevel=2,
            )

    @property
    def trace_class(self) -> bool:
        return self.gamma > 1.0

    @property
    def weights(self) -> np.ndarray:
        """Covariance weights ``q_k = k^-gamma``."""
        return np.arange(1, self.n_modes + 1, dtype=float) ** (-self.gamma)

    @property
    def trace(self) -> float:
        return float(np.sum(self.weights))

    @property
    def grid(self):
        return self.basis.grid


@dataclass(frozen=True, eq=False)
class WienerIncrements:
    n_steps: int
    tau: float
    increments: np.ndarray  # shape (n_steps, n_modes)
    seed: int

    @property
    def n_modes(self) -> int:
        return self.increments.shape[1]

    @property
    def T(self) -> float:
        return self.n_steps * self.tau

    def partial_sums(self) -> np.ndarray:
        """W(t_n) for n = 0..N, per mode."""
        out = np.zeros((self.n_steps + 1, self.n_modes))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out


def derive_seed(master_seed: int, *path: int) -> int:
    """64-bit seed for a path index (and optional sub-indices), order-free."""
    ss = np.random.SeedSequence(int(master_seed) % _U64, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def standard_normals(seed: int, count: int) -> np.ndarray:
    """``count`` standard normals from a Philox stream keyed by ``seed``."""
    key = np.random.SeedSequence(int(seed) % _U64).generate_state(2, dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    n_pairs = (count + 1) // 2
    raw = bitgen.random_raw(2 * n_pairs).reshape(n_pairs, 2)
    # 53-bit uniforms on (0, 1]; log never sees 0
    u = ((raw >> np.uint64(11)).astype(float) + 1.0) * 2.0**-53
    r = np.sqrt(-2.0 * np.log(u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.empty((n_pairs, 2))
    z[:, 0] = r * np.cos(theta)
    z[:, 1] = r * np.sin(theta)
    return z.reshape(-1)[:count]


def sample_increments(spec: NoiseSpec | int, n_steps: int, tau: float, seed: int) -> WienerIncrements:
    """I.i.d. N(0, tau) increments, one column per noise mode.

    ``spec`` may be a :class:`NoiseSpec` or just the number of modes.
    """
    n_modes = spec if isinstance(spec, (int, np.integer)) else spec.n_modes
    if n_steps < 1 or n_modes < 1:
        raise ValueError("n_steps and n_modes must be >= 1")
    if not tau > 0:
        raise ValueError("tau must be positive")
    z = standard_normals(seed, n_steps * n_modes).reshape(n_steps, n_modes)
    inc = np.sqrt(tau) * z
    inc.flags.writeable = False
    return WienerIncrements(int(n_steps), float(tau), inc, int(seed))


def assemble_noise_fields(inc: WienerIncrements, spec: NoiseSpec) -> np.ndarray:
    """Values of ``sum_k sqrt(q_k) dW_{n,k} e_k`` for every step n, shape (N, n)."""
    if inc.n_modes != spec.n_modes:
        raise ValueError(f"increments carry {inc.n_modes} modes, spec has {spec.n_modes}")
    return spec.basis.synthesize(inc.increments * np.sqrt(spec.weights))


def assemble_noise_field(inc: WienerIncrements, n: int, spec: NoiseSpec) -> NodeField:
    if not 0 <= n < inc.n_steps:
        raise IndexError(f"step {n} out of range for {inc.n_steps} steps")
    if inc.n_modes != spec.n_modes:
        raise ValueError(f"increments carry {inc.n_modes} modes, spec has {spec.n_modes}")
    coefs = inc.increments[n] * np.sqrt(spec.weights)
    return NodeField(spec.grid, spec.basis.synthesize(coefs))


def refine(inc: WienerIncrements, seed: int) -> WienerIncrements:
    """Halve the step by sampling Brownian-bridge midpoints.

    Each coarse increment dW splits into ``dW/2 + xi*sqrt(tau)/2`` and the
    remainder, so the pair sums back to dW.
    """
    n, k = inc.increments.shape
    xi = standard_normals(seed, n * k).reshape(n, k)
    first = 0.5 * inc.increments + 0.5 * np.sqrt(inc.tau) * xi
    second = inc.increments - first
    fine = np.empty((2 * n, k))
    fine[0::2] = first
    fine[1::2] = second
    fine.flags.writeable = False
    return WienerIncrements(2 * n, inc.tau / 2.0, fine, int(seed))


def refine_to(inc: WienerIncrements, levels: int, seed_of_level) -> list[WienerIncrements]:
    """``[inc, refine(inc), ...]`` with ``levels`` refinements; ``seed_of_level(j)`` seeds level j."""
    out = [inc]
    for j in range(1, levels + 1):
        out.append(refine(out[-1], seed_of_level(j)))
    return out


_HEADER = struct.Struct("<QQdQ")


def dump_increments(inc: WienerIncrements, path) -> None:
    """Binary dump: little-endian header (N, K, tau, seed) then row-major float64."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(inc.n_steps, inc.n_modes, inc.tau, inc.seed % _U64))
        fh.write(np.ascontiguousarray(inc.increments, dtype="<f8").tobytes())


def load_increments(path) -> WienerIncrements:
    with open(path, "rb") as fh:
        data = fh.read()
    n, k, tau, seed = _HEADER.unpack_from(data)
    payload = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if payload.size != n * k:
        raise ValueError(f"payload holds {payload.size} values, header promises {n * k}")
    inc = payload.astype(float).reshape(n, k)
    inc.flags.writeable = False
    return WienerIncrements(int(n), float(tau), inc, int(seed))

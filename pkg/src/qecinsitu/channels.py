"""Single-qubit channel algebra.

Covers the bit-flip + x-rotation channel used by the repetition code, the
anisotropic Pauli channel followed by a rotation about an arbitrary axis,
Bloch-vector transfer matrices, the unital Choi transformation, and a
fixed-step integrator for simultaneous rotation and Pauli dephasing.

Conventions
-----------
Bloch transfer matrices act on column vectors ``S' = B @ S``.  Rotations
follow ``R_jk = d_jk cos t + n_j n_k (1 - cos t) - sin t * eps_jkl n_l``,
which is right-handed: ``rotation_matrix((0, 0, 1), pi/2)`` sends x to +y,
the same sense as ``dS/dt = omega * n x S``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

AXIS_TOL = 1e-12
NEGATIVE_CLAMP_TOL = 1e-9

# Levi-Civita symbol, eps[j, k, l]
LEVI_CIVITA = np.zeros((3, 3, 3))
for _j, _k, _l in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_j, _k, _l] = 1.0
    LEVI_CIVITA[_k, _j, _l] = -1.0


@dataclass(frozen=True)
class ChannelParams:
    """Rotation frequency, decoherence rate, round duration and counter-rotation."""

    omega: float
    gamma: float
    tau: float
    omega_c: float = 0.0

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")

    @property
    def omega_eff(self) -> float:
        return self.omega - self.omega_c


@dataclass(frozen=True)
class CompositeCoeffs:
    P: float
    Q: float
    C: float


@dataclass(frozen=True)
class FlipProbs:
    """Probabilities of no error and of X, Y, Z errors on one qubit."""

    Q: float
    Px: float
    Py: float
    Pz: float

    def __post_init__(self):
        vals = (self.Q, self.Px, self.Py, self.Pz)
        if any(v < -1e-12 or v > 1 + 1e-12 for v in vals):
            raise ValueError(f"flip probabilities out of [0, 1]: {vals}")
        if abs(sum(vals) - 1.0) > 1e-12:
            raise ValueError(f"flip probabilities sum to {sum(vals)!r}, not 1")

    @classmethod
    def from_paulis(cls, px: float, py: float, pz: float) -> "FlipProbs":
        return cls(1.0 - px - py - pz, px, py, pz)

    def as_array(self) -> np.ndarray:
        return np.array([self.Q, self.Px, self.Py, self.Pz])


def _unit_axis(axis) -> np.ndarray:
    n = np.asarray(axis, dtype=float)
    if n.shape != (3,):
        raise ValueError(f"axis must be a 3-vector, got shape {n.shape}")
    if abs(np.linalg.norm(n) - 1.0) > AXIS_TOL:
        raise ValueError(f"axis must be a unit vector, |n| = {np.linalg.norm(n)!r}")
    return n


@dataclass(frozen=True)
class AnisotropicParams:
    """Pauli flip probabilities followed by a rotation by ``theta`` about ``axis``."""

    p_x: float
    p_y: float
    p_z: float
    axis: tuple = (1.0, 0.0, 0.0)
    theta: float = 0.0

    def __post_init__(self):
        if min(self.p_x, self.p_y, self.p_z) < 0:
            raise ValueError("flip probabilities must be nonnegative")
        if self.q > 1 + 1e-12:
            raise ValueError(f"total flip probability {self.q} exceeds 1")
        object.__setattr__(self, "axis", tuple(_unit_axis(self.axis)))

    @property
    def q(self) -> float:
        return self.p_x + self.p_y + self.p_z


@dataclass(frozen=True)
class RateTriple:
    gamma_x: float
    gamma_y: float
    gamma_z: float

    def __post_init__(self):
        if min(self.gamma_x, self.gamma_y, self.gamma_z) < 0:
            raise ValueError("rates must be nonnegative")

    @property
    def total(self) -> float:
        return self.gamma_x + self.gamma_y + self.gamma_z


def p_of_tau(gamma: float, tau: float) -> float:
    """Bit-flip probability accumulated by dephasing at rate ``gamma`` for ``tau``."""
    if gamma < 0 or tau < 0:
        raise ValueError("gamma and tau must be nonnegative")
    if math.isinf(gamma):
        return 0.0 if tau == 0 else 0.5
    return 0.5 * (1.0 - math.exp(-4.0 * gamma * tau))


def bitflip_probability(omega_eff, gamma, tau):
    """Effective flip probability ``P`` for rotation + bit-flip; broadcasts over arrays.

    No sign restriction on ``omega_eff``: this is the internal form used on
    posterior grids, where ``omega - omega_c`` may be negative.
    """
    return 0.5 * (1.0 - np.exp(-4.0 * gamma * tau) * np.cos(omega_eff * tau))


def composite_coeffs(params: ChannelParams) -> CompositeCoeffs:
    decay = math.exp(-4.0 * params.gamma * params.tau)
    angle = params.omega_eff * params.tau
    P = 0.5 * (1.0 - decay * math.cos(angle))
    return CompositeCoeffs(P=P, Q=1.0 - P, C=0.5 * decay * math.sin(angle))


def anisotropic_effective(params: AnisotropicParams) -> FlipProbs:
    """Pauli-twirled probabilities of the rotated anisotropic channel."""
    nx, ny, nz = params.axis
    c2 = math.cos(params.theta / 2.0) ** 2
    s2 = math.sin(params.theta / 2.0) ** 2
    px, py, pz = params.p_x, params.p_y, params.p_z
    keep = 1.0 - params.q
    Q = keep * c2 + (px * nx**2 + py * ny**2 + pz * nz**2) * s2
    Px = px * c2 + (keep * nx**2 + py * nz**2 + pz * ny**2) * s2
    Py = py * c2 + (keep * ny**2 + px * nz**2 + pz * nx**2) * s2
    Pz = pz * c2 + (keep * nz**2 + px * ny**2 + py * nx**2) * s2
    return FlipProbs(Q, Px, Py, Pz)


def transfer_matrix_of_anisotropic(p_x: float, p_y: float, p_z: float) -> np.ndarray:
    q = p_x + p_y + p_z
    return np.diag([1.0 - 2.0 * q + 2.0 * p for p in (p_x, p_y, p_z)])


def rotation_matrix(axis, theta: float) -> np.ndarray:
    n = _unit_axis(axis)
    cos, sin = math.cos(theta), math.sin(theta)
    return (
        cos * np.eye(3)
        + (1.0 - cos) * np.outer(n, n)
        - sin * np.einsum("jkl,l->jk", LEVI_CIVITA, n)
    )


def choi_of_unital(B) -> np.ndarray:
    """Process matrix of a unital qubit channel from its Bloch transfer matrix.

    Rows/columns are ordered (I, X, Y, Z).  The channel acts as
    ``rho -> 1/2 sum_ab chi[a, b] sigma_a rho sigma_b``.
    """
    B = np.asarray(B, dtype=float)
    if B.shape != (3, 3):
        raise ValueError(f"B must be 3x3, got {B.shape}")
    tr = np.trace(B)
    chi = np.zeros((4, 4), dtype=complex)
    chi[0, 0] = 0.5 * (1.0 + tr)
    chi[0, 1:] = -0.5j * np.einsum("jkl,kl->j", LEVI_CIVITA, B)
    chi[1:, 0] = -chi[0, 1:]
    chi[1:, 1:] = 0.5 * (np.eye(3) + B + B.T - tr * np.eye(3))
    return chi


def flip_probs_of_choi(chi) -> FlipProbs:
    """Read Pauli error probabilities off the process-matrix diagonal.

    Diagonal entries in [-1e-9, 0) are treated as rounding noise and clamped
    to zero (with a warning); anything more negative is rejected.
    """
    diag = 0.5 * np.real(np.diag(np.asarray(chi)))
    if np.any(diag < -NEGATIVE_CLAMP_TOL):
        raise ValueError(f"process matrix is not physical: diagonal/2 = {diag}")
    if np.any(diag < 0):
        warnings.warn(f"clamping slightly negative error probabilities {diag}", RuntimeWarning)
        diag = np.clip(diag, 0.0, None)
    Q = 1.0 - diag[1:].sum()
    return FlipProbs(Q, *diag[1:])


def bloch_generator(omega: float, axis, rates: RateTriple) -> np.ndarray:
    """Matrix ``A`` of the Bloch equation ``dS/dt = A S``."""
    n = _unit_axis(axis)
    cross = np.einsum("jkl,k->jl", LEVI_CIVITA, n)  # cross @ S == n x S
    gx, gy, gz = rates.gamma_x, rates.gamma_y, rates.gamma_z
    damping = np.diag([gy + gz, gx + gz, gx + gy])
    return omega * cross - 4.0 * damping


def default_steps(tau: float) -> int:
    return max(1000, math.ceil(1000 * tau))


def bloch_ode_solve(omega: float, axis, rates: RateTriple, tau: float, steps: int | None = None) -> np.ndarray:
    """Transfer matrix of simultaneous rotation and Pauli dephasing over ``tau``.

    Integrates ``dB/dt = A B`` from ``B(0) = I`` with classical fixed-step RK4.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if steps is None:
        steps = default_steps(tau)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    A = bloch_generator(omega, axis, rates)
    h = tau / steps
    # One RK4 step of a linear constant-coefficient system is a fixed matrix.
    hA = h * A
    hA2 = hA @ hA
    step = np.eye(3) + hA + hA2 / 2.0 + hA2 @ hA / 6.0 + hA2 @ hA2 / 24.0
    B = np.eye(3)
    for _ in range(steps):
        B = step @ B
    return B

"""Syndrome likelihoods and failure probabilities for small codes.

Three-qubit and M-qubit bit-flip repetition codes, plus the five-qubit
perfect code under an independent Pauli channel.  Syndromes are bit strings
(``"10"``, ``"0111"``); bit k is 1 when the error anticommutes with
stabilizer generator k (odd parity).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import bisect

from .channels import ChannelParams, FlipProbs, bitflip_probability, composite_coeffs

REP3_SYNDROMES = ("00", "10", "01", "11")

FIVE_QUBIT_GENERATORS = ("XZZXI", "IXZZX", "XIXZZ", "ZXIXZ")
FIVE_QUBIT_CLASSES = {
    0: ("0000",),
    1: ("0001", "0011", "0110", "1000", "1100"),
    2: ("0010", "0100", "0101", "1001", "1010"),
    3: ("0111", "1011", "1101", "1110", "1111"),
}

TAU_BRACKET = (1e-6, 50.0)
TAU_XTOL = 1e-9


@dataclass(frozen=True)
class RepetitionCode:
    M: int

    def __post_init__(self):
        if self.M < 3:
            raise ValueError(f"repetition code needs M >= 3, got {self.M}")

    @property
    def first_uncorrectable(self) -> int:
        """Smallest flip count that decodes to the wrong codeword (M'/2)."""
        return (self.M + self.M % 2) // 2


def parity_syndrome(flips) -> str:
    """Syndrome of a 3-qubit flip pattern under Z Z I and I Z Z."""
    a, b, c = (int(f) for f in flips)
    return f"{a ^ b}{b ^ c}"


def rep3_syndrome_likelihood(params: ChannelParams) -> dict[str, float]:
    cc = composite_coeffs(params)
    P, Q = cc.P, cc.Q
    odd = P * Q
    return {"00": P**3 + Q**3, "10": odd, "01": odd, "11": odd}


def rep3_sample_syndrome(params: ChannelParams, rng: np.random.Generator) -> tuple[str, int, bool]:
    """Commit each qubit to a flip with probability P and read the parity checks."""
    P = composite_coeffs(params).P
    flips = rng.random(3) < P
    m = int(flips.sum())
    return parity_syndrome(flips), m, m >= 2


def repM_flip_distribution(P: float, M: int) -> np.ndarray:
    if not 0.0 <= P <= 1.0:
        raise ValueError(f"P must be in [0, 1], got {P}")
    Q = 1.0 - P
    return np.array([math.comb(M, m) * P**m * Q ** (M - m) for m in range(M + 1)])


def repM_uncorrectable(P: float, M: int) -> float:
    """Probability that at least M'/2 of M qubits flip (M' = M rounded up to even)."""
    code = RepetitionCode(M)
    return float(repM_flip_distribution(P, M)[code.first_uncorrectable:].sum())


def _upper_tail(P: np.ndarray, M: int) -> np.ndarray:
    start = RepetitionCode(M).first_uncorrectable
    return sum(math.comb(M, m) * P**m * (1.0 - P) ** (M - m) for m in range(start, M + 1))


def chernoff_exponent(P, M: int):
    """Exponent E in the bound R <= exp(-E).

    Generic over the number type: pass a :class:`fractions.Fraction` for an
    exact value.
    """
    M_even = M + M % 2
    x = 2 * P * M / M_even
    if x >= 1:
        raise ValueError(f"Chernoff bound is vacuous for x = {x} >= 1")
    return M * (1 - x) ** 2 / (2 * (1 + x))


def chernoff_bound(P: float, M: int) -> float:
    return math.exp(-chernoff_exponent(P, M))


@lru_cache(maxsize=None)
def threshold_flip_probability(R_th: float = 0.05, M: int = 3) -> float:
    """Single-qubit flip probability at which the code's failure rate equals ``R_th``."""
    return bisect(lambda P: repM_uncorrectable(P, M) - R_th, 0.0, 0.5, xtol=1e-13)


def tau_threshold(omega: float, gamma: float, R_th: float = 0.05, M: int = 3, omega_c: float = 0.0,
                  bracket: tuple[float, float] = TAU_BRACKET) -> float:
    """Shortest round duration at which the per-round failure probability reaches ``R_th``.

    R(tau) oscillates for large omega*tau, so the bracket is pre-scanned and the
    first upward crossing is refined by bisection.
    """
    def excess(tau):
        P = bitflip_probability(omega - omega_c, gamma, tau)
        return repM_uncorrectable(float(P), M) - R_th

    lo, hi = bracket
    grid = np.linspace(lo, hi, 20001)
    Rs = _upper_tail(bitflip_probability(omega - omega_c, gamma, grid), M) - R_th
    above = np.nonzero(Rs >= 0)[0]
    if above.size == 0:
        raise ValueError(f"R never reaches {R_th} for tau in {bracket}")
    k = above[0]
    if k == 0:
        raise ValueError(f"R already exceeds {R_th} at tau = {lo}")
    return bisect(excess, grid[k - 1], grid[k], xtol=TAU_XTOL)


@dataclass(frozen=True)
class FiveQubitClassProbs:
    """Per-syndrome probability in each of the four syndrome classes."""

    pS0: float
    pS1: float
    pS2: float
    pS3: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.pS0, self.pS1, self.pS2, self.pS3)

    def total(self) -> float:
        return self.pS0 + 5 * (self.pS1 + self.pS2 + self.pS3)

    def as_syndrome_map(self) -> dict[str, float]:
        values = self.as_tuple()
        return {s: values[k] for k, group in FIVE_QUBIT_CLASSES.items() for s in group}


def _printed_class_polynomials(x: float, y: float, z: float) -> tuple[float, float, float, float]:
    # Polynomials as typeset, including the (1 - x + z) prefactor.  They equal the
    # homogeneous degree-5 syndrome forms with the no-error weight set to 1 - 2x - y.
    pre = 1.0 - x + z
    s0 = pre * (
        40 * x**2 * y * z + 20 * x * y**2 * z - 30 * x * y * z + 60 * x**3 * y + 50 * x**2 * y**2
        - 80 * x**2 * y + 20 * x * y**3 - 45 * x * y**2 + 35 * x * y + 11 * x**3 * z + x**2 * z**2
        - 18 * x**2 * z + x * z**3 - 2 * x * z**2 + 8 * x * z + 31 * x**4 - 49 * x**3 + 31 * x**2
        - 9 * x - 5 * y**2 * z + 5 * y * z + 5 * y**4 - 10 * y**3 + 10 * y**2 - 5 * y + z**4 - z**3
        + z**2 - z + 1
    )
    s1 = pre * (
        -x**2 * y * z + 3 * x * y * z**2 - 2 * x * y**2 * z - 15 * x**3 * y + x**2 * y**2
        + 11 * x**2 * y + 4 * x * y**3 - 3 * x * y**2 - 2 * x * y + 2 * x**3 * z + 5 * x**2 * z**2
        - 3 * x**2 * z - 4 * x * z**2 + x * z - 14 * x**4 + 17 * x**3 - 7 * x**2 + x + y * z**3
        - y**2 * z**2 - y * z**2 + y**2 * z + y**4 - 2 * y**3 + y**2 + z**2
    )
    s2 = pre * (
        -7 * x**2 * y * z - 7 * x * y * z**2 - 2 * x * y**2 * z + 8 * x * y * z + 3 * x**3 * y
        + x**2 * y**2 - x**2 * y + 4 * x * y**3 - 3 * x * y**2 - 4 * x**3 * z - 5 * x**2 * z**2
        + 8 * x**2 * z - 2 * x * z**3 + 5 * x * z**2 - 5 * x * z + 4 * x**4 - 4 * x**3 + x**2
        - y * z**3 - y**2 * z**2 + 3 * y * z**2 + y**2 * z - 2 * y * z + y**4 - 2 * y**3 + y**2
        + z**3 - z**2 + z
    )
    s3 = pre * (
        4 * x * y * z**2 - 2 * x * y * z - 12 * x**2 * y**2 + 6 * x**2 * y - 12 * x * y**3
        + 15 * x * y**2 - 5 * x * y - x**3 * z + x**2 * z**2 + x**2 * z + x * z**3 - 3 * x * z**2
        + 4 * x**4 - 4 * x**3 + x**2 + 2 * y**2 * z**2 - 2 * y * z**2 - y**2 * z + y * z
        - 3 * y**4 + 6 * y**3 - 4 * y**2 + y + z**2
    )
    return s0, s1, s2, s3


def five_qubit_printed_polynomials(fp: FlipProbs) -> FiveQubitClassProbs:
    """The class polynomials evaluated literally at (Px, Py, Pz).

    Correct only on the surface Px == Pz (which includes depolarizing noise);
    elsewhere they do not normalize.  Use :func:`five_qubit_class_likelihood`.
    """
    return FiveQubitClassProbs(*_printed_class_polynomials(fp.Px, fp.Py, fp.Pz))


class _Monomials:
    """Polynomial in (x, y, z) of degree <= 5 as a dense coefficient cube.

    Just enough arithmetic to expand the class polynomials symbolically.
    """

    N = 6

    def __init__(self, coef):
        self.coef = coef

    @classmethod
    def variable(cls, k):
        c = np.zeros((cls.N,) * 3)
        idx = [0, 0, 0]
        idx[k] = 1
        c[tuple(idx)] = 1.0
        return cls(c)

    @classmethod
    def _lift(cls, other):
        if isinstance(other, cls):
            return other
        c = np.zeros((cls.N,) * 3)
        c[0, 0, 0] = other
        return cls(c)

    def __add__(self, other):
        return _Monomials(self.coef + self._lift(other).coef)

    __radd__ = __add__

    def __neg__(self):
        return _Monomials(-self.coef)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        out = np.zeros_like(self.coef)
        for (a, b, c) in zip(*np.nonzero(self.coef)):
            v = self.coef[a, b, c]
            shifted = other.coef[: self.N - a, : self.N - b, : self.N - c]
            out[a:, b:, c:] += v * shifted
        return _Monomials(out)

    __rmul__ = __mul__

    def __pow__(self, n):
        out = self._lift(1.0)
        for _ in range(n):
            out = out * self
        return out


@lru_cache(maxsize=None)
def _class_coefficients() -> np.ndarray:
    """Monomial coefficients, shape (4, 6, 6, 6), of the four class polynomials."""
    x, y, z = (_Monomials.variable(k) for k in range(3))
    return np.stack([p.coef for p in _printed_class_polynomials(x, y, z)])


def five_qubit_class_likelihood(fp: FlipProbs) -> FiveQubitClassProbs:
    """Syndrome-class probabilities of the five-qubit code under ``fp`` on every qubit.

    The printed polynomials P_k(x, y, z) satisfy P_k(x, y, z) = H_k(1 - 2x - y, x, y, z)
    for a homogeneous quintic H_k, so H_k(Q, x, y, z) = lam**5 P_k(x/lam, y/lam, z/lam)
    with lam = 1 + Px - Pz.  Each monomial x^a y^b z^c is therefore weighted by
    lam**(5 - a - b - c), which needs no division and stays finite at lam = 0.
    """
    lam = 1.0 + fp.Px - fp.Pz
    k = np.arange(_Monomials.N)
    deg = k[:, None, None] + k[None, :, None] + k[None, None, :]
    terms = (
        fp.Px ** k[:, None, None] * fp.Py ** k[None, :, None] * fp.Pz ** k[None, None, :]
        * lam ** np.clip(5 - deg, 0, None)
    )
    vals = np.tensordot(_class_coefficients(), terms, axes=3)
    return FiveQubitClassProbs(*(float(v) for v in vals))


def five_qubit_depolarizing(P: float) -> tuple[float, float]:
    """(Pr(0000), Pr(S)) for isotropic noise with total error probability P."""
    poly = 27 * P - 54 * P**2 + 48 * P**3 - 16 * P**4
    return 1.0 - 5.0 / 27.0 * poly, poly / 81.0


def _anticommutes(a: str, b: str) -> bool:
    return a != "I" and b != "I" and a != b


@lru_cache(maxsize=None)
def _five_qubit_tables() -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Pauli-type counts and syndrome index for each of the 4**5 error strings."""
    labels = tuple("".join(bits) for bits in itertools.product("01", repeat=4))
    index = {s: i for i, s in enumerate(labels)}
    counts = np.zeros((4**5, 4), dtype=np.int64)
    synd = np.zeros(4**5, dtype=np.int64)
    for n, err in enumerate(itertools.product("IXYZ", repeat=5)):
        for p in err:
            counts[n, "IXYZ".index(p)] += 1
        bits = "".join(
            str(sum(_anticommutes(e, g) for e, g in zip(err, gen)) % 2) for gen in FIVE_QUBIT_GENERATORS
        )
        synd[n] = index[bits]
    return counts, synd, labels


def five_qubit_brute_force(fp: FlipProbs) -> dict[str, float]:
    """Exhaustive sum over all 4**5 independent Pauli error strings."""
    counts, synd, labels = _five_qubit_tables()
    probs = fp.as_array()
    weights = np.prod(probs[None, :] ** counts, axis=1)
    totals = np.bincount(synd, weights=weights, minlength=16)
    return dict(zip(labels, totals.tolist()))

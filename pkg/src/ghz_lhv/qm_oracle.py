"""Quantum-mechanical reference for n-particle GHZ states.

Dense state vectors over ``n`` qubits.  Site A is the most significant bit of
the basis index.  Within one site, bit ``0`` is spin-down and bit ``1`` is
spin-up along the local Z axis, so the all-up index is ``2**n - 1`` and the
all-down index is ``0``.  With this ordering the literal Pauli matrices give
``<XY(a) XY(b) XY(c)> = cos(a + b + c + phi)`` on ``ghz_state(3, phi)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .lhv_core import canonicalize_angle

MAX_SITES = 12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)
# spin-up (bit 1) has eigenvalue +1
SPIN_Z = np.diag([-1.0, 1.0]).astype(complex)


@dataclass(frozen=True)
class XY:
    """Spin component along angle ``alpha`` in the local XY plane."""

    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(canonicalize_angle(self.alpha)))

    def matrix(self) -> np.ndarray:
        return xy_observable(self.alpha)


@dataclass(frozen=True)
class Z:
    def matrix(self) -> np.ndarray:
        return SPIN_Z


@dataclass(frozen=True)
class Identity:
    def matrix(self) -> np.ndarray:
        return IDENTITY


SiteOp = Union[XY, Z, Identity]


@dataclass(frozen=True)
class QuantumState:
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.n,):
            raise ValueError(f"expected {2**self.n} amplitudes, got shape {amps.shape}")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state not normalised (|psi|^2 = {norm})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n)


def ghz_state(n: int, phi: float = 0.0) -> QuantumState:
    """``(|up...up> + e^{i phi} |down...down>) / sqrt(2)``."""
    if not 2 <= n <= MAX_SITES:
        raise ValueError(f"n must be in [2, {MAX_SITES}], got {n}")
    amps = np.zeros(2**n, dtype=complex)
    amps[-1] = 1.0 / np.sqrt(2.0)
    amps[0] = np.exp(1j * phi) / np.sqrt(2.0)
    return QuantumState(n, amps)


def xy_observable(alpha: float) -> np.ndarray:
    """``cos(alpha) sigma_x + sin(alpha) sigma_y``."""
    return np.cos(alpha) * SIGMA_X + np.sin(alpha) * SIGMA_Y


def _apply_site(psi: np.ndarray, op: np.ndarray, site: int) -> np.ndarray:
    out = np.tensordot(op, psi, axes=([1], [site]))
    return np.moveaxis(out, 0, site)


def _check_spec(state: QuantumState, spec: Sequence[SiteOp]):
    if len(spec) != state.n:
        raise ValueError(f"observable has {len(spec)} sites, state has {state.n}")


def expectation(state: QuantumState, spec: Sequence[SiteOp]) -> float:
    """``<psi| O_1 x ... x O_n |psi>`` by per-site contraction."""
    _check_spec(state, spec)
    psi = state.tensor()
    phi = psi
    for site, op in enumerate(spec):
        if isinstance(op, Identity):
            continue
        phi = _apply_site(phi, op.matrix(), site)
    val = np.vdot(psi.ravel(), phi.ravel())
    assert abs(val.imag) < 1e-12, f"non-Hermitian expectation {val}"
    return float(val.real)


def _eigen_rows(op: SiteOp) -> np.ndarray:
    """Rows are ``<v_+|`` and ``<v_-|`` for a +-1 valued observable."""
    vals, vecs = np.linalg.eigh(op.matrix())
    order = np.argsort(-vals)
    if not np.allclose(vals[order], [1.0, -1.0], atol=1e-12):
        raise ValueError("observable is not +-1 valued")
    return vecs[:, order].conj().T


def joint_distribution(state: QuantumState, spec: Sequence[SiteOp]) -> dict:
    """Born-rule probabilities for every +-1 outcome tuple on all sites."""
    _check_spec(state, spec)
    if any(isinstance(op, Identity) for op in spec):
        raise ValueError("joint_distribution needs a measured observable on every site")
    psi = state.tensor()
    for site, op in enumerate(spec):
        psi = _apply_site(psi, _eigen_rows(op), site)
    probs = np.abs(psi) ** 2
    table = {}
    for idx in itertools.product((0, 1), repeat=state.n):
        outcome = tuple(1 if b == 0 else -1 for b in idx)
        table[outcome] = float(probs[idx])
    return table


def correlator_from_distribution(table: dict, sites: Sequence[int]) -> float:
    """``E[prod_{k in sites} s_k]`` under an outcome table."""
    return float(sum(p * np.prod([o[k] for k in sites]) for o, p in table.items()))


def triple_correlator(alpha: float, beta: float, gamma: float, phi: float = 0.0) -> float:
    """Shortcut for the three-site XY correlator on ``ghz_state(3, phi)``."""
    return expectation(ghz_state(3, phi), [XY(alpha), XY(beta), XY(gamma)])


def mermin_value(phi: float = 0.0) -> float:
    """``<XXX> - <XYY> - <YXY> - <YYX>``."""
    h = np.pi / 2
    return (
        triple_correlator(0, 0, 0, phi)
        - triple_correlator(0, h, h, phi)
        - triple_correlator(h, 0, h, phi)
        - triple_correlator(h, h, 0, phi)
    )

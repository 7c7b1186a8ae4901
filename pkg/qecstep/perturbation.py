"""Second-order perturbative treatment of the bath coupling.

Integrals are taken over rescaled times ``u, v`` in [0, 1] so that the step
duration enters only through the sample times ``u t``. The frame operator
``K(s) = U_0^dagger(s) H_int U_0(s)`` uses ``H_0 = H_S ⊗ I + H_E`` and equals
`qecstep.bath.gate_frame_h` because ``H_S ⊗ I`` and ``H_E`` commute.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import logging
from collections.abc import Sequence
from typing import Final

import numpy as np
import numpy.polynomial.legendre

from qecstep import fitting
from qecstep.bath import BathModel, gate_frame_h, interaction_picture_h
from qecstep.operators import (
    OperatorMatrix,
    StateMatrix,
    expm_hermitian,
    kron,
    partial_trace,
    spectral_norm,
    trace_distance,
)

logger = logging.getLogger(__name__)

DEFAULT_NODES: Final = 32
MIN_NODES: Final = 4
THIRD_ORDER_SLOPE: Final = 2.75
PRODUCT_STATE_TOL: Final = 1e-10


class InnerLimit(enum.Enum):
    """Upper limit of the inner integral in the nested commutator term"""

    TRIANGLE = "triangle"
    SQUARE = "square"


@dataclasses.dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Legendre rules on [0, 1] and on the unit square and triangle.

    Args:
        nodes: Node count per axis.
    """

    nodes: int = DEFAULT_NODES

    def __post_init__(self):
        if self.nodes < MIN_NODES:
            raise ValueError(f"Quadrature needs at least {MIN_NODES} nodes, got {self.nodes}")

    def line(self) -> tuple[np.ndarray, np.ndarray]:
        return _gauss_legendre_unit(self.nodes)

    def square(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        u, w = self.line()
        uu, vv = np.meshgrid(u, u, indexing="ij")
        return uu.ravel(), vv.ravel(), np.outer(w, w).ravel()

    def triangle(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Collapsed rule on ``0 <= v <= u <= 1`` with ``v = u x``"""
        u, w = self.line()
        uu, xx = np.meshgrid(u, u, indexing="ij")
        weights = np.outer(w * u, w)
        return uu.ravel(), (uu * xx).ravel(), weights.ravel()

    def doubled(self) -> QuadratureSpec:
        return QuadratureSpec(self.nodes * 2)


@functools.lru_cache(maxsize=32)
def _gauss_legendre_unit(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = numpy.polynomial.legendre.leggauss(nodes)
    return (x + 1) / 2, w / 2


class _Frame:
    """Samples ``K(s)`` from one eigendecomposition of ``H_0``"""

    def __init__(self, bath: BathModel, h_sys: OperatorMatrix | None):
        h0 = OperatorMatrix(
            bath.embed_system(h_sys).data + bath.h_env.data, bath.dims, hermitian=True
        )
        self._energies, self._vectors = h0.eigh
        self._coupling = self._vectors.conj().T @ bath.h_int.data @ self._vectors
        self.dims = bath.dims
        self.side = self._vectors.shape[0]

    def __call__(self, s: float) -> np.ndarray:
        phases = np.exp(1j * self._energies * s)
        rotated = phases[:, None] * self._coupling * phases.conj()[None, :]
        return self._vectors @ rotated @ self._vectors.conj().T

    def average(self, times: np.ndarray, weights: np.ndarray) -> np.ndarray:
        return sum(w * self(s) for s, w in zip(times, weights))


def _check_time(t: float) -> None:
    if t < 0:
        raise ValueError(f"Time must be non-negative, got {t}")


def _nested(frame: _Frame, t: float, quad: QuadratureSpec, inner_limit: InnerLimit):
    """``int int [K(u t), K(v t)] du dv`` over the chosen domain"""
    u, w = quad.line()
    total = np.zeros((frame.side, frame.side), dtype=complex)
    if inner_limit is InnerLimit.SQUARE:
        # Antisymmetric integrand over a symmetric domain
        return total

    for ui, wi in zip(u, w):
        outer = frame(ui * t)
        inner = frame.average(ui * u * t, w)
        total += wi * ui * (outer @ inner - inner @ outer)

    return total


def c1(
    bath: BathModel,
    h_sys: OperatorMatrix | None,
    t: float,
    quad: QuadratureSpec | None = None,
) -> OperatorMatrix:
    """First-order coefficient ``-i int_0^t K(s) ds`` of the interaction-picture propagator"""
    _check_time(t)
    if t == 0:
        return OperatorMatrix.zeros(bath.dims)

    u, w = (quad or QuadratureSpec()).line()
    return OperatorMatrix(-1j * t * _Frame(bath, h_sys).average(u * t, w), bath.dims)


def c2(
    bath: BathModel,
    h_sys: OperatorMatrix | None,
    t: float,
    quad: QuadratureSpec | None = None,
    *,
    inner_limit: InnerLimit = InnerLimit.TRIANGLE,
) -> OperatorMatrix:
    """Second-order coefficient ``C1^2 / 2 - (1/2) int_0^t int_0^s' [K(s'), K(s'')]``"""
    _check_time(t)
    if t == 0:
        return OperatorMatrix.zeros(bath.dims)

    quad = quad or QuadratureSpec()
    frame = _Frame(bath, h_sys)
    u, w = quad.line()
    first = -1j * t * frame.average(u * t, w)
    nested = _nested(frame, t, quad, inner_limit)
    return OperatorMatrix(0.5 * first @ first - 0.5 * t**2 * nested, bath.dims)


def truncated_propagator(
    bath: BathModel,
    h_sys: OperatorMatrix | None,
    t: float,
    quad: QuadratureSpec | None = None,
) -> OperatorMatrix:
    """``1 + lam C1 + lam^2 C2``"""
    identity = np.eye(int(np.prod(bath.dims)))
    data = (
        identity
        + bath.lam * c1(bath, h_sys, t, quad).data
        + bath.lam**2 * c2(bath, h_sys, t, quad).data
    )
    return OperatorMatrix(data, bath.dims)


def exact_propagator(bath: BathModel, h_sys: OperatorMatrix | None, t: float) -> OperatorMatrix:
    """``U_0^dagger(t) U_SE(t)``, the exact interaction-picture propagator"""
    h0 = OperatorMatrix(
        bath.embed_system(h_sys).data + bath.h_env.data, bath.dims, hermitian=True
    )
    free = expm_hermitian(h0, t).data
    joint = expm_hermitian(bath.hamiltonian(h_sys), t).data
    return OperatorMatrix(free.conj().T @ joint, bath.dims)


@dataclasses.dataclass(frozen=True)
class SuperopKernel:
    """The second-order error superoperator.

    Acts as ``rho -> [K, [rho, K]] - [N, rho]`` where ``K`` is the averaged
    frame operator and ``N`` the nested commutator integral.
    """

    dims: tuple[int, ...]
    k_bar: np.ndarray
    nested: np.ndarray
    inner_limit: InnerLimit
    nodes: int

    def __call__(self, rho: OperatorMatrix | np.ndarray) -> OperatorMatrix:
        data = rho.data if isinstance(rho, OperatorMatrix) else np.asarray(rho, dtype=complex)
        if data.shape != self.k_bar.shape:
            raise ValueError(f"Kernel acts on side {self.k_bar.shape[0]}, got {data.shape}")

        k = self.k_bar
        k_rho = k @ data
        rho_k = data @ k
        double = 2 * k_rho @ k - k @ k_rho - rho_k @ k
        return OperatorMatrix(double - (self.nested @ data - data @ self.nested), self.dims)


def error_superop(
    bath: BathModel,
    h_sys: OperatorMatrix | None,
    t: float,
    quad: QuadratureSpec | None = None,
    *,
    inner_limit: InnerLimit = InnerLimit.TRIANGLE,
) -> SuperopKernel:
    """Build the error superoperator for a gate Hamiltonian, or for memory when ``h_sys`` is None.

    Raises:
        ValueError: When ``t`` is not positive.
    """
    if t <= 0:
        raise ValueError(f"Error superoperator needs t > 0, got {t}")

    quad = quad or QuadratureSpec()
    frame = _Frame(bath, h_sys)
    u, w = quad.line()
    return SuperopKernel(
        dims=bath.dims,
        k_bar=frame.average(u * t, w),
        nested=_nested(frame, t, quad, inner_limit),
        inner_limit=inner_limit,
        nodes=quad.nodes,
    )


def _system_state(rho: StateMatrix, bath: BathModel) -> StateMatrix:
    if rho.dims == bath.sys_dims:
        return rho
    if rho.dims != bath.dims:
        raise ValueError(
            f"Initial state has dims {list(rho.dims)}, expected {list(bath.sys_dims)}"
        )

    n = bath.n_sys
    rho_sys = partial_trace(rho, range(n))
    rho_env = partial_trace(rho, range(n, 2 * n))
    if np.max(np.abs(kron([rho_sys, rho_env]).data - rho.data)) > PRODUCT_STATE_TOL:
        raise ValueError("Initial joint state is correlated; a product state is required")
    if np.max(np.abs(rho_env.data - bath.env_init.data)) > PRODUCT_STATE_TOL:
        raise ValueError("Initial bath state differs from the bath model's env_init")

    return StateMatrix(rho_sys)


def predict_state(
    rho_s0: StateMatrix,
    bath: BathModel,
    h_sys: OperatorMatrix | None,
    t: float,
    quad: QuadratureSpec | None = None,
    *,
    inner_limit: InnerLimit = InnerLimit.TRIANGLE,
) -> OperatorMatrix:
    """Second-order reduced state at time ``t``.

    The trace is left unnormalized; its defect is of higher order in ``lam``.

    Args:
        rho_s0: Initial system state, or a joint state that must factor into
            a system state and the bath's initial state.
        bath: The bath model, including the coupling strength.
        h_sys: Gate Hamiltonian on the system, or None for memory.
        t: Evolution time.
        quad: Quadrature rule.
        inner_limit: Domain of the nested commutator integral.

    Raises:
        ValueError: When the initial joint state is correlated or ``t < 0``.
    """
    _check_time(t)
    rho = _system_state(rho_s0, bath)
    u_sys = (
        expm_hermitian(h_sys, t).data if h_sys is not None else np.eye(rho.side, dtype=complex)
    )
    free = u_sys @ rho.data @ u_sys.conj().T
    if t == 0 or bath.lam == 0:
        return OperatorMatrix(free, bath.sys_dims)

    kernel = error_superop(bath, h_sys, t, quad, inner_limit=inner_limit)
    correction = partial_trace(kernel(bath.joint_state(rho)), bath.system_factors).data
    data = free + 0.5 * bath.lam**2 * t**2 * u_sys @ correction @ u_sys.conj().T
    return OperatorMatrix(data, bath.sys_dims)


def exact_state(
    rho_s0: StateMatrix, bath: BathModel, h_sys: OperatorMatrix | None, t: float
) -> StateMatrix:
    """Reduced state from exact joint evolution"""
    _check_time(t)
    rho = _system_state(rho_s0, bath)
    joint = expm_hermitian(bath.hamiltonian(h_sys), t).data
    evolved = joint @ bath.joint_state(rho).data @ joint.conj().T
    reduced = partial_trace(OperatorMatrix(evolved, bath.dims), bath.system_factors)
    return StateMatrix(0.5 * (reduced.data + reduced.data.conj().T), bath.sys_dims)


def prediction_residual(
    rho_s0: StateMatrix,
    bath: BathModel,
    h_sys: OperatorMatrix | None,
    t: float,
    quad: QuadratureSpec | None = None,
    *,
    inner_limit: InnerLimit = InnerLimit.TRIANGLE,
) -> float:
    """Trace distance between the second-order prediction and exact evolution"""
    predicted = predict_state(rho_s0, bath, h_sys, t, quad, inner_limit=inner_limit)
    return trace_distance(predicted, exact_state(rho_s0, bath, h_sys, t))


def select_inner_limit(
    rho_s0: StateMatrix,
    bath: BathModel,
    h_sys: OperatorMatrix | None,
    t: float,
    lams: Sequence[float],
    quad: QuadratureSpec | None = None,
) -> tuple[InnerLimit, dict[InnerLimit, fitting.SlopeFit]]:
    """Pick the nested-integral domain whose residual is at least third order in ``lam``.

    Raises:
        RuntimeError: When neither domain reaches third order.
    """
    fits = {}
    for inner_limit in InnerLimit:
        residuals = [
            prediction_residual(
                rho_s0, bath.with_coupling(lam), h_sys, t, quad, inner_limit=inner_limit
            )
            for lam in lams
        ]
        fits[inner_limit] = fitting.fit_slope(lams, residuals)

    candidates = [limit for limit, fit in fits.items() if fit.slope >= THIRD_ORDER_SLOPE]
    if not candidates:
        raise RuntimeError(
            "No inner-limit variant reaches third order: "
            + ", ".join(f"{limit.value}={fit.slope:.3f}" for limit, fit in fits.items())
        )

    chosen = max(candidates, key=lambda limit: fits[limit].slope)
    logger.info(
        "Selected %s inner limit (slopes: %s)",
        chosen.value,
        {limit.value: round(fit.slope, 3) for limit, fit in fits.items()},
    )
    return chosen, fits


def step_commutation_residual(
    bath: BathModel, h_sys: OperatorMatrix | None, dt: float
) -> float:
    """Spectral norm of the gate-frame minus plain interaction-picture Hamiltonian at ``dt``"""
    _check_time(dt)
    if dt == 0:
        return 0.0

    return spectral_norm(
        gate_frame_h(bath, h_sys, dt).data - interaction_picture_h(bath, dt).data
    )

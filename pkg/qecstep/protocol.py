"""The stepped gate protocol: evolve for ``t_g / N``, measure the syndrome, recover, repeat.

Trials are simulated as a branching ensemble. Trials that share an identical
history share one state; a branch splits only when a sampled phase flip or
syndrome outcome differs between its trials. Alongside the sampled
trajectories the channel-averaged state is propagated, which gives the
expected number of corrections and the expected deviation from the ideal
output without sampling noise.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from collections.abc import Sequence
from typing import Final, Literal

import numpy as np
import scipy.linalg

from qecstep import fitting, gates, phase_code, utils
from qecstep.bath import (
    StochasticChannel,
    build_dephasing_bath,
    calibrated_flip_probability,
    default_frequencies,
)
from qecstep.operators import AXES, PauliString, expm_hermitian, trace_distance

logger = logging.getLogger(__name__)

Backend = Literal["stochastic", "exact"]
StepRule = Literal["fixed", "sqrt"]

COMMUTATION_TOL: Final = 1e-10
MIN_FAILURE_FLOOR: Final = 1e-9
MIN_RESOLVED_EVENTS: Final = 10
MIN_SWEEP_POINTS: Final = 4
OUTCOME_FLOOR: Final = phase_code.IMPOSSIBLE_OUTCOME_TOL
MAX_EXACT_BLOCKS: Final = 1


def bloch_amplitudes(polar: float, azimuth: float) -> tuple[complex, complex]:
    """``(cos(polar / 2), e^{i azimuth} sin(polar / 2))``"""
    return (
        complex(math.cos(polar / 2)),
        complex(np.exp(1j * azimuth) * math.sin(polar / 2)),
    )


DEFAULT_INITIAL_STATE: Final = (bloch_amplitudes(math.pi / 3, math.pi / 4),)


@dataclasses.dataclass(frozen=True)
class ProtocolConfig:
    """One stepped-gate run.

    Args:
        gate: A logical gate.
        n_steps: Number of gate slices, each followed by correction.
        lam: Coupling strength.
        backend: "stochastic" for sampled phase flips or "exact" for the
            two-level bath.
        initial_state: Logical amplitudes ``(alpha, beta)`` per block.
        trials: Number of sampled trajectories.
        seed: Top-level seed.
        frequencies: Bath mode frequencies. Defaults to ``1.0 + 0.1 k``.
        substeps: Stochastic flips are drawn after each of this many equal
            sub-slices of a step. One places every flip at the step boundary.
        reset_bath: Return the exact bath to its initial state after each
            correction.
        flip_probability: Per-step flip probability. Calibrated from
            ``lam`` and the step duration when omitted.
        flip_targets: Qubits that may flip. All system qubits when omitted.
        flip_axis: Pauli applied by the stochastic channel on a flip.
        failure_threshold: Infidelity above which a trial counts as failed.
            Defaults to ``max(lam^2 t_g^2, 1e-9)``.
    """

    gate: gates.GateSpec
    n_steps: int = 10
    lam: float = 1e-2
    backend: Backend = "stochastic"
    initial_state: tuple[tuple[complex, complex], ...] = DEFAULT_INITIAL_STATE
    trials: int = 10_000
    seed: int = 0
    frequencies: tuple[float, ...] | None = None
    substeps: int = 4
    reset_bath: bool = False
    flip_probability: float | None = None
    flip_targets: tuple[int, ...] | None = None
    flip_axis: str = "Z"
    failure_threshold: float | None = None

    def __post_init__(self):
        if not self.gate.logical:
            raise ValueError("The protocol runs logical gates only")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")
        if self.flip_axis not in AXES:
            raise ValueError(f'Unknown Pauli axis "{self.flip_axis}"')
        if self.backend not in ("stochastic", "exact"):
            raise ValueError(f'Unknown noise backend "{self.backend}"')
        if len(self.initial_state) != self.gate.n_blocks:
            raise ValueError(
                f"Expected {self.gate.n_blocks} initial block states,"
                f" got {len(self.initial_state)}"
            )

    @property
    def dt(self) -> float:
        return self.gate.t_g / self.n_steps

    @property
    def n_sys(self) -> int:
        return self.gate.n_qubits

    @property
    def threshold(self) -> float:
        if self.failure_threshold is not None:
            return self.failure_threshold

        return max(self.lam**2 * self.gate.t_g**2, MIN_FAILURE_FLOOR)

    def bath_frequencies(self) -> tuple[float, ...]:
        return self.frequencies or default_frequencies(self.n_sys)

    def channel(self) -> StochasticChannel:
        """The per-step flip channel for the stochastic backend"""
        p = self.flip_probability
        if p is None:
            omega = float(np.mean(self.bath_frequencies()))
            p = calibrated_flip_probability(self.lam, self.dt, omega)

        return StochasticChannel(
            p=p, axis=self.flip_axis, seed=self.seed, targets=self.flip_targets
        )


@dataclasses.dataclass(frozen=True)
class ProtocolResult:
    """Records and aggregates of one run.

    ``syndromes[trial, step, block]`` holds the syndrome ordinal observed
    (see `qecstep.phase_code.SYNDROMES`) and ``corrections[trial, step]``
    whether any block was corrected after that step.
    """

    config: ProtocolConfig
    stream_seed: int
    final_fidelity: np.ndarray
    syndromes: np.ndarray
    corrections: np.ndarray
    expected_corrections: float
    expected_failure: float
    min_eigenvalue: float
    max_trace_error: float

    @property
    def trials(self) -> int:
        return self.config.trials

    @property
    def correction_rate(self) -> float:
        """Fraction of (trial, step) pairs followed by a correction"""
        return float(self.corrections.mean())

    @property
    def mean_corrections(self) -> float:
        """Corrections per trial, counting every corrected block"""
        return float(np.count_nonzero(self.syndromes) / self.trials)

    @property
    def trigger_rate(self) -> float:
        """Expected corrections per step"""
        return self.expected_corrections / self.config.n_steps

    @property
    def failures(self) -> int:
        return int(np.count_nonzero(self.final_fidelity < 1 - self.config.threshold))

    @property
    def failure_rate(self) -> float:
        return self.failures / self.trials

    @property
    def failure_ci(self) -> tuple[float, float]:
        return fitting.wilson_interval(self.failures, self.trials)

    @property
    def resolved(self) -> bool:
        """Whether enough failures were sampled to resolve the failure rate"""
        return self.failures >= MIN_RESOLVED_EVENTS

    def to_records(self) -> dict:
        return {
            "stream_seed": self.stream_seed,
            "final_fidelity": self.final_fidelity.tolist(),
            "syndromes": self.syndromes.tolist(),
            "corrections": self.corrections.astype(int).tolist(),
        }


@dataclasses.dataclass
class _Branch:
    state: np.ndarray
    count: int
    events: tuple[tuple[int, int, int], ...] = ()


class _Register:
    """Syndrome projectors and phase-flip signs on the simulated register"""

    def __init__(self, n_sys: int, n_blocks: int, extra_qubits: int = 0):
        self.n_sys = n_sys
        self.extra = np.ones(1 << extra_qubits)
        self.projectors = [
            [self._lift(p) for p in phase_code.syndrome_projectors(n_sys, block)]
            for block in range(n_blocks)
        ]

    def _lift(self, op: np.ndarray) -> np.ndarray:
        return op if self.extra.size == 1 else np.kron(op, np.diag(self.extra))

    def flip_signs(self, qubit: int) -> np.ndarray:
        """Diagonal of ``Z_qubit`` on the register"""
        signs = np.real(np.diag(PauliString.single(self.n_sys, qubit, "Z").dense().data))
        return np.kron(signs, self.extra)

    def flip_operator(self, qubit: int, axis: str = "Z") -> np.ndarray:
        """``axis`` on ``qubit``: the diagonal for Z, the full matrix otherwise"""
        if axis == "Z":
            return self.flip_signs(qubit)

        return self._lift(PauliString.single(self.n_sys, qubit, axis).dense().data)

    def recovery_signs(self, block: int, syndrome: phase_code.Syndrome) -> np.ndarray | None:
        qubit = syndrome.error_qubit
        if qubit is None:
            return None

        return self.flip_signs(phase_code.N_PHYSICAL * block + qubit)


def _apply_signs(state: np.ndarray, signs: np.ndarray) -> np.ndarray:
    if state.ndim == 1:
        return signs * state

    return signs[:, None] * state * signs[None, :]


def _evolve(state: np.ndarray, u: np.ndarray) -> np.ndarray:
    if state.ndim == 1:
        return u @ state

    return u @ state @ u.conj().T


def _apply_flip(state: np.ndarray, flip: np.ndarray) -> np.ndarray:
    return _apply_signs(state, flip) if flip.ndim == 1 else _evolve(state, flip)


def _probabilities(state: np.ndarray, projectors: Sequence[np.ndarray]) -> np.ndarray:
    if state.ndim == 1:
        probs = np.array([np.real(np.vdot(state, p @ state)) for p in projectors])
    else:
        probs = np.array([np.real(np.trace(p @ state)) for p in projectors])

    probs = np.clip(probs, 0.0, 1.0)
    probs[probs < OUTCOME_FLOOR] = 0.0
    return probs / probs.sum()


def _project(state: np.ndarray, projector: np.ndarray) -> np.ndarray:
    if state.ndim == 1:
        projected = projector @ state
        return projected / np.linalg.norm(projected)

    projected = projector @ state @ projector
    return projected / np.real(np.trace(projected))


class _Ensemble:
    """Sampled branches plus the channel-averaged state"""

    def __init__(self, initial: np.ndarray, cfg: ProtocolConfig, register: _Register):
        self.register = register
        self.rng = np.random.default_rng(utils.derive_seed(cfg.seed, "protocol", 0))
        self.branches = [_Branch(initial, cfg.trials)]
        self.average = initial if initial.ndim == 2 else np.outer(initial, initial.conj())
        self.expected_corrections = 0.0
        self.min_eigenvalue = 0.0
        self.max_trace_error = 0.0

    def evolve(self, u: np.ndarray) -> None:
        for branch in self.branches:
            branch.state = _evolve(branch.state, u)
        self.average = _evolve(self.average, u)

    def flip(self, qubit: int, q: float, axis: str = "Z") -> None:
        op = self.register.flip_operator(qubit, axis)
        branches = []
        for branch in self.branches:
            flipped = int(self.rng.binomial(branch.count, q))
            if flipped:
                branches.append(
                    _Branch(_apply_flip(branch.state, op), flipped, branch.events)
                )
            if branch.count - flipped:
                branch.count -= flipped
                branches.append(branch)
        self.branches = branches
        self.average = (1 - q) * self.average + q * _apply_flip(self.average, op)

    def correct(self, step: int, block: int) -> None:
        projectors = self.register.projectors[block]
        branches = []
        for branch in self.branches:
            counts = self.rng.multinomial(branch.count, _probabilities(branch.state, projectors))
            for ordinal, count in enumerate(counts):
                if not count:
                    continue
                syndrome = phase_code.SYNDROMES[ordinal]
                state = _project(branch.state, projectors[ordinal])
                events = branch.events
                signs = self.register.recovery_signs(block, syndrome)
                if signs is not None:
                    state = _apply_signs(state, signs)
                    events = events + ((step, block, ordinal),)
                branches.append(_Branch(state, int(count), events))
        self.branches = branches

        averaged = np.zeros_like(self.average)
        for ordinal, projector in enumerate(projectors):
            part = projector @ self.average @ projector
            signs = self.register.recovery_signs(block, phase_code.SYNDROMES[ordinal])
            if signs is not None:
                self.expected_corrections += float(np.real(np.trace(part)))
                part = _apply_signs(part, signs)
            averaged += part
        self.average = averaged

    def map_states(self, fn) -> None:
        for branch in self.branches:
            branch.state = fn(branch.state)
        self.average = fn(self.average)

    def check_average(self) -> None:
        hermitian = 0.5 * (self.average + self.average.conj().T)
        self.min_eigenvalue = min(self.min_eigenvalue, float(scipy.linalg.eigvalsh(hermitian)[0]))
        self.max_trace_error = max(
            self.max_trace_error, abs(float(np.real(np.trace(self.average))) - 1)
        )


def _reduce_to_system(state: np.ndarray, n_sys: int) -> np.ndarray:
    side = 1 << n_sys
    env_side = state.shape[0] // side
    return np.trace(state.reshape(side, env_side, side, env_side), axis1=1, axis2=3)


def _run_stochastic(cfg: ProtocolConfig, psi0: np.ndarray) -> _Ensemble:
    h = gates.hamiltonian(cfg.gate)
    u_slice = expm_hermitian(h, cfg.dt / cfg.substeps).data
    channel = cfg.channel()
    q = channel.p / cfg.substeps
    targets = channel.qubits(cfg.n_sys)
    ensemble = _Ensemble(psi0, cfg, _Register(cfg.n_sys, cfg.gate.n_blocks))

    for step in range(cfg.n_steps):
        for _ in range(cfg.substeps):
            ensemble.evolve(u_slice)
            if q > 0:
                for qubit in targets:
                    ensemble.flip(qubit, q, channel.axis)
        for block in range(cfg.gate.n_blocks):
            ensemble.correct(step, block)
        ensemble.check_average()

    return ensemble


def _run_exact(cfg: ProtocolConfig, psi0: np.ndarray) -> _Ensemble:
    if cfg.gate.n_blocks > MAX_EXACT_BLOCKS:
        raise ValueError(
            f"The exact bath supports one code block ({phase_code.N_PHYSICAL} system qubits);"
            f" use the stochastic backend for {cfg.n_sys} system qubits"
        )

    bath = build_dephasing_bath(cfg.n_sys, cfg.bath_frequencies(), cfg.lam)
    u_step = expm_hermitian(bath.hamiltonian(gates.hamiltonian(cfg.gate)), cfg.dt).data
    env = bath.env_init.data
    initial = np.kron(np.outer(psi0, psi0.conj()), env)
    ensemble = _Ensemble(initial, cfg, _Register(cfg.n_sys, 1, extra_qubits=bath.n_sys))

    def reset(state: np.ndarray) -> np.ndarray:
        return np.kron(_reduce_to_system(state, cfg.n_sys), env)

    for step in range(cfg.n_steps):
        ensemble.evolve(u_step)
        ensemble.correct(step, 0)
        if cfg.reset_bath:
            ensemble.map_states(reset)
        ensemble.check_average()

    ensemble.map_states(lambda state: _reduce_to_system(state, cfg.n_sys))
    return ensemble


def run_protocol(cfg: ProtocolConfig) -> ProtocolResult:
    """Run the stepped gate with correction after every step.

    Raises:
        ValueError: When the exact backend is asked for more than one block.
    """
    psi0 = phase_code.encode_blocks(list(cfg.initial_state))
    ideal = gates.ideal_unitary(cfg.gate).data @ psi0
    runner = _run_exact if cfg.backend == "exact" else _run_stochastic
    ensemble = runner(cfg, psi0)

    n_blocks = cfg.gate.n_blocks
    syndromes = np.zeros((cfg.trials, cfg.n_steps, n_blocks), dtype=np.int8)
    corrections = np.zeros((cfg.trials, cfg.n_steps), dtype=bool)
    final_fidelity = np.empty(cfg.trials)
    start = 0
    for branch in ensemble.branches:
        rows = slice(start, start + branch.count)
        for step, block, ordinal in branch.events:
            syndromes[rows, step, block] = ordinal
            corrections[rows, step] = True
        state = branch.state
        if state.ndim == 1:
            fidelity = abs(np.vdot(ideal, state)) ** 2
        else:
            fidelity = np.real(np.vdot(ideal, state @ ideal))
        final_fidelity[rows] = min(max(float(fidelity), 0.0), 1.0)
        start += branch.count

    return ProtocolResult(
        config=cfg,
        stream_seed=utils.derive_seed(cfg.seed, "protocol", 0),
        final_fidelity=final_fidelity,
        syndromes=syndromes,
        corrections=corrections,
        expected_corrections=ensemble.expected_corrections,
        expected_failure=trace_distance(ensemble.average, np.outer(ideal, ideal.conj())),
        min_eigenvalue=ensemble.min_eigenvalue,
        max_trace_error=ensemble.max_trace_error,
    )


def memory_baseline(cfg: ProtocolConfig) -> ProtocolResult:
    """The same run with an idle gate of equal duration"""
    idle = gates.GateSpec(
        kind="idle", duration=cfg.gate.t_g, blocks=cfg.gate.n_blocks, logical=True
    )
    return run_protocol(dataclasses.replace(cfg, gate=idle))


def commuting_gate_control(cfg: ProtocolConfig) -> ProtocolResult:
    """Run a gate whose Hamiltonian commutes with every phase-flip coupling.

    Raises:
        ValueError: When the gate Hamiltonian fails to commute with some ``Z_k``.
    """
    h = gates.hamiltonian(cfg.gate).data
    for qubit in range(cfg.n_sys):
        z = PauliString.single(cfg.n_sys, qubit, "Z").dense().data
        residual = float(np.max(np.abs(h @ z - z @ h)))
        if residual > COMMUTATION_TOL:
            raise ValueError(
                f"Gate Hamiltonian does not commute with Z on qubit {qubit}"
                f" (commutator norm {residual:.3g})"
            )

    return run_protocol(cfg)


def steps_for_lambda(lam: float, scale: float = 1.0) -> int:
    """``max(1, round(scale / sqrt(lam)))``"""
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")

    return max(1, round(scale / math.sqrt(lam)))


@dataclasses.dataclass(frozen=True)
class ScalingRow:
    lam: float
    n: int
    backend: str
    correction_rate: float
    failure_rate: float
    trials: int
    ci_low: float
    ci_high: float
    expected_corrections: float
    expected_failure: float
    resolved: bool

    @classmethod
    def from_result(cls, result: ProtocolResult) -> ScalingRow:
        ci_low, ci_high = result.failure_ci
        return cls(
            lam=result.config.lam,
            n=result.config.n_steps,
            backend=result.config.backend,
            correction_rate=result.correction_rate,
            failure_rate=result.failure_rate,
            trials=result.trials,
            ci_low=ci_low,
            ci_high=ci_high,
            expected_corrections=result.expected_corrections,
            expected_failure=result.expected_failure,
            resolved=result.resolved,
        )


@dataclasses.dataclass(frozen=True)
class ScalingTable:
    """Sweep rows with log-log fits of the expected corrections and failure"""

    axis: Literal["n", "lambda"]
    rows: tuple[ScalingRow, ...]
    corrections_fit: fitting.SlopeFit
    failure_fit: fitting.SlopeFit | None
    results: tuple[ProtocolResult, ...] = dataclasses.field(default=(), repr=False)

    @property
    def resolved(self) -> bool:
        return all(row.resolved for row in self.rows)


def _check_axis(values: Sequence[float], name: str) -> None:
    if len(values) < MIN_SWEEP_POINTS:
        raise ValueError(f"A {name} sweep needs at least {MIN_SWEEP_POINTS} points")
    if min(values) <= 0:
        raise ValueError(f"{name} values must be positive")
    if max(values) / min(values) < 10:
        raise ValueError(f"{name} values must span at least one decade")


def _fit_optional(x: Sequence[float], y: Sequence[float], label: str) -> fitting.SlopeFit | None:
    if min(y) <= 0:
        logger.warning("Skipping %s fit: non-positive values", label)
        return None

    return fitting.fit_slope(x, y)


def _table(
    axis: Literal["n", "lambda"], results: list[ProtocolResult], x: Sequence[float]
) -> ScalingTable:
    rows = tuple(ScalingRow.from_result(result) for result in results)
    unresolved = [row for row in rows if not row.resolved]
    if unresolved:
        logger.warning(
            "%s of %s sweep points sampled fewer than %s failures; sampled rates are unresolved",
            len(unresolved),
            len(rows),
            MIN_RESOLVED_EVENTS,
        )

    return ScalingTable(
        axis=axis,
        rows=rows,
        corrections_fit=fitting.fit_slope(x, [row.expected_corrections for row in rows]),
        failure_fit=_fit_optional(x, [row.expected_failure for row in rows], "failure"),
        results=tuple(results),
    )


def sweep_steps(
    cfg: ProtocolConfig, n_values: Sequence[int], threads: int | None = None
) -> ScalingTable:
    """Run the protocol at each step count and fit the scaling against ``N``.

    Raises:
        ValueError: With fewer than four step counts or less than a decade of range.
    """
    n_values = [int(n) for n in n_values]
    _check_axis(n_values, "step count")
    logger.info("Sweeping %s step counts at lam=%s", len(n_values), cfg.lam)
    results = utils.parallel_map(
        lambda n: run_protocol(dataclasses.replace(cfg, n_steps=n)), n_values, threads
    )
    return _table("n", results, n_values)


def sweep_lambda(
    cfg: ProtocolConfig,
    lams: Sequence[float],
    n_rule: StepRule = "sqrt",
    n_scale: float = 1.0,
    threads: int | None = None,
) -> ScalingTable:
    """Run the protocol at each coupling strength and fit the scaling against ``lam``.

    Args:
        cfg: Template configuration.
        lams: Coupling strengths.
        n_rule: "fixed" keeps ``cfg.n_steps``; "sqrt" uses `steps_for_lambda`.
        n_scale: Prefactor of the "sqrt" rule.
        threads: Parallel workers.

    Raises:
        ValueError: With fewer than four values, less than a decade of range,
            or an unknown rule.
    """
    lams = [float(lam) for lam in lams]
    _check_axis(lams, "lambda")
    if n_rule not in ("fixed", "sqrt"):
        raise ValueError(f'Unknown step rule "{n_rule}"')

    def point(lam: float) -> ProtocolResult:
        n = cfg.n_steps if n_rule == "fixed" else steps_for_lambda(lam, n_scale)
        return run_protocol(dataclasses.replace(cfg, lam=lam, n_steps=n))

    logger.info("Sweeping %s coupling strengths with the %s step rule", len(lams), n_rule)
    return _table("lambda", utils.parallel_map(point, lams, threads), lams)



from qecstep.bath import BathModel, StochasticChannel, build_dephasing_bath
from qecstep.gates import GateSpec, gate_unitary, hamiltonian
from qecstep.operators import OperatorMatrix, PauliString, StateMatrix
from qecstep.perturbation import InnerLimit, QuadratureSpec, error_superop, predict_state
from qecstep.phase_code import (
    ImpossibleOutcomeError,
    Syndrome,
    encode,
    measure_syndrome,
    recover,
)
from qecstep.protocol import (
    ProtocolConfig,
    ProtocolResult,
    memory_baseline,
    run_protocol,
    sweep_lambda,
    sweep_steps,
)
from qecstep.synthesis import SynthesisPlan, fidelity_sweep
from qecstep.version import __version__

__all__ = [
    "BathModel",
    "build_dephasing_bath",
    "encode",
    "error_superop",
    "fidelity_sweep",
    "gate_unitary",
    "GateSpec",
    "hamiltonian",
    "ImpossibleOutcomeError",
    "InnerLimit",
    "measure_syndrome",
    "memory_baseline",
    "OperatorMatrix",
    "PauliString",
    "predict_state",
    "ProtocolConfig",
    "ProtocolResult",
    "QuadratureSpec",
    "recover",
    "run_protocol",
    "StateMatrix",
    "StochasticChannel",
    "sweep_lambda",
    "sweep_steps",
    "Syndrome",
    "SynthesisPlan",
    "__version__",
]

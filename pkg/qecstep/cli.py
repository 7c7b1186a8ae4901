"""The ``qecstep`` command line.

Exit status is 0 when every requested assertion passes, 1 when one fails and
2 on usage errors such as an invalid config file.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import pathlib
import sys
import tomllib
from typing import Any, ClassVar

import numpy as np
import pydantic

from qecstep import (
    config,
    fitting,
    gates,
    perturbation,
    phase_code,
    protocol,
    report,
    synthesis,
    verify,
)
from qecstep.bath import build_dephasing_bath
from qecstep.operators import PauliString, StateMatrix, commutator, dense, spectral_norm
from qecstep.version import __version__

logger = logging.getLogger(__name__)

MEMORY_TOL = 1e-10
MAX_PERTURB_QUBITS = phase_code.N_PHYSICAL


class UsageError(ValueError):
    """The command cannot run with the given options"""


def _gate(cfg: config.ExperimentConfig) -> gates.GateSpec:
    return gates.GateSpec(**cfg.gate.model_dump())


def _amplitudes(cfg: config.ExperimentConfig, n: int) -> tuple[tuple[complex, complex], ...]:
    """Bloch angles to amplitudes, broadcasting a single pair over ``n`` blocks"""
    angles = cfg.initial_state
    if len(angles) == 1:
        angles = angles * n
    if len(angles) != n:
        raise UsageError(f"Expected {n} initial states, got {len(angles)}")

    return tuple(protocol.bloch_amplitudes(polar, azimuth) for polar, azimuth in angles)


def _initial_vector(cfg: config.ExperimentConfig, g: gates.GateSpec) -> np.ndarray:
    amplitudes = _amplitudes(cfg, g.n_blocks)
    if g.logical:
        return phase_code.encode_blocks(list(amplitudes))

    vector = np.ones(1, dtype=complex)
    for alpha, beta in amplitudes:
        vector = np.kron(vector, np.array([alpha, beta]))
    return vector


class Command:
    """A subcommand run against a loaded config"""

    name: ClassVar[str]
    help: ClassVar[str]
    check: bool = False

    def handle(self, cfg: config.ExperimentConfig, out: pathlib.Path) -> int:
        raise NotImplementedError

    @staticmethod
    def finish(
        out: pathlib.Path,
        cfg: config.ExperimentConfig,
        checks: list[verify.CheckResult],
        check: bool,
        **summary: Any,
    ) -> int:
        passed = all(result.passed for result in checks)
        report.write_json(
            out / "summary.json",
            {
                "command": cfg.command,
                "version": __version__,
                "config": cfg.model_dump(mode="json"),
                "assertions": [result.to_dict() for result in checks] if check else [],
                "passed": passed if check else None,
                **summary,
            },
        )
        if not check:
            return 0

        for result in checks:
            sys.stdout.write(f"{result}\n")
        return 0 if passed else 1


class VerifyCommand(Command):
    name = "verify"
    help = "Run the numerical self-checks."

    def handle(self, cfg, out):
        result = verify.run_checks(cfg.seed)
        sys.stdout.write(result.format() + "\n")
        report.write_json(out / "verify.json", result.to_dict())
        return 0 if result.passed else 1


class PerturbCommand(Command):
    name = "perturb"
    help = "Compare the second-order prediction with exact evolution."

    def handle(self, cfg, out):
        g = _gate(cfg)
        if g.n_qubits > MAX_PERTURB_QUBITS:
            raise UsageError(
                f"perturb simulates at most {MAX_PERTURB_QUBITS} system qubits,"
                f" gate has {g.n_qubits}"
            )
        lams = cfg.perturb.lambdas
        if len(lams) < fitting.MIN_POINTS:
            raise UsageError(f"perturb needs at least {fitting.MIN_POINTS} lambda values")

        h = gates.hamiltonian(g)
        bath = build_dephasing_bath(g.n_qubits, cfg.noise.frequencies)
        rho = StateMatrix.from_vector(_initial_vector(cfg, g))
        quad = perturbation.QuadratureSpec(cfg.perturb.nodes)
        t = cfg.perturb.time

        if cfg.perturb.inner_limit == "auto":
            inner_limit, _ = perturbation.select_inner_limit(rho, bath, h, t, lams, quad)
        else:
            inner_limit = perturbation.InnerLimit(cfg.perturb.inner_limit)

        rows = []
        for lam in (0.0, *lams):
            residual = perturbation.prediction_residual(
                rho, bath.with_coupling(lam), h, t, quad, inner_limit=inner_limit
            )
            rows.append((lam, residual))
        report.write_perturb(out / "perturb.csv", rows)
        fit = fitting.fit_slope(lams, [residual for _, residual in rows[1:]])

        commutes = all(
            spectral_norm(commutator(h, dense(PauliString.single(g.n_qubits, k, "Z"))))
            <= MEMORY_TOL
            for k in range(g.n_qubits)
        )
        joint = bath.joint_state(rho)
        memory_gap = spectral_norm(
            perturbation.error_superop(bath, h, t, quad, inner_limit=inner_limit)(joint).data
            - perturbation.error_superop(bath, None, t, quad, inner_limit=inner_limit)(joint).data
        )

        checks = [
            verify.CheckResult(
                "perturb",
                "prediction_order",
                fit.slope,
                perturbation.THIRD_ORDER_SLOPE,
                fit.slope >= perturbation.THIRD_ORDER_SLOPE,
            ),
        ]
        step_fit = None
        if commutes:
            checks.append(
                verify.bound("perturb", "commuting_gate_matches_memory", memory_gap, MEMORY_TOL)
            )
        else:
            step_counts = cfg.perturb.steps
            step_fit = fitting.fit_slope(
                step_counts,
                [perturbation.step_commutation_residual(bath, h, g.t_g / n) for n in step_counts],
            )
            checks.append(verify.slope("perturb", "short_step_residual", step_fit, -1.0, 0.1))

        sys.stdout.write(f"Residual slope {fit.slope:.3f} ({inner_limit.value} inner limit)\n")
        return self.finish(
            out,
            cfg,
            checks,
            self.check,
            inner_limit=inner_limit.value,
            fit=fit.to_dict(),
            step_fit=step_fit.to_dict() if step_fit else None,
            commutes=commutes,
            memory_equal=memory_gap <= MEMORY_TOL,
        )


class SynthCommand(Command):
    name = "synth"
    help = "Sweep the synthesized logical gates against their ideal unitaries."

    def handle(self, cfg, out):
        rows: list[synthesis.SweepRow] = []
        for gate in cfg.synth.gates:
            for order in cfg.synth.orders:
                rows.extend(synthesis.fidelity_sweep(gate, cfg.synth.steps, order))
        report.write_synth(out / "synth.csv", rows)

        worst: dict[tuple[str, int], dict[int, float]] = {}
        for row in rows:
            per_n = worst.setdefault((row.gate, row.order), {})
            per_n[row.n] = max(per_n.get(row.n, 0.0), row.infidelity)

        checks = verify.check_synthesis(cfg.synth.epsilons)
        if 1000 in worst.get(("sigma_x", 2), {}):
            value = worst[("sigma_x", 2)][1000]
            checks.append(
                verify.CheckResult(
                    "synth",
                    "sigma_x_order2_at_1000",
                    math.log10(value) if value > 0 else -math.inf,
                    0.5,
                    value > 0 and abs(math.log10(value) + 3.0) <= 0.5,
                    -3.0,
                )
            )
        for gate in ("sigma_x", "cnot"):
            per_n = worst.get((gate, 3))
            if per_n:
                reached = [n for n, value in sorted(per_n.items()) if value <= 1e-4]
                first = reached[0] if reached else math.inf
                checks.append(verify.bound("synth", f"{gate}_order3_reaches_1e-4", first, 300))

        for check in checks:
            logger.info("%s", check)
        return self.finish(
            out,
            cfg,
            checks,
            self.check,
            worst_infidelity={
                f"{gate}:{order}": {str(n): value for n, value in sorted(per_n.items())}
                for (gate, order), per_n in worst.items()
            },
        )


class ProtocolCommand(Command):
    name = "protocol"
    help = "Run the stepped gate with error correction after every step."

    def protocol_config(self, cfg: config.ExperimentConfig) -> protocol.ProtocolConfig:
        g = _gate(cfg)
        noise = cfg.noise
        return protocol.ProtocolConfig(
            gate=g,
            n_steps=cfg.sweep.n_steps,
            lam=noise.lam,
            backend=noise.backend,
            initial_state=_amplitudes(cfg, g.n_blocks),
            trials=cfg.trials,
            seed=cfg.seed,
            frequencies=noise.frequencies,
            substeps=noise.substeps,
            reset_bath=noise.reset_bath,
            flip_probability=noise.flip_probability,
            flip_axis=noise.flip_axis,
            failure_threshold=noise.failure_threshold,
        )

    def handle(self, cfg, out):
        pcfg = self.protocol_config(cfg)
        sweep = cfg.sweep
        checks: list[verify.CheckResult] = []
        summary: dict[str, Any] = {}

        if sweep.axis == "single":
            results = [protocol.run_protocol(pcfg)]
            rows = [protocol.ScalingRow.from_result(results[0])]
        else:
            if sweep.axis == "steps":
                table = protocol.sweep_steps(pcfg, sweep.steps)
                checks.append(
                    verify.slope("protocol", "corrections_vs_n", table.corrections_fit, -1.0, 0.3)
                )
                if table.failure_fit is not None:
                    checks.append(
                        verify.slope("protocol", "failure_vs_n", table.failure_fit, -2.0, 0.3)
                    )
            else:
                table = protocol.sweep_lambda(pcfg, sweep.lambdas, sweep.n_rule, sweep.n_scale)
                checks.append(
                    verify.slope(
                        "protocol", "corrections_vs_lambda", table.corrections_fit, 2.5, 0.4
                    )
                )
                if table.failure_fit is not None:
                    checks.append(
                        verify.slope("protocol", "failure_vs_lambda", table.failure_fit, 3.0, 0.5)
                    )
            results = list(table.results)
            rows = list(table.rows)
            summary["corrections_fit"] = table.corrections_fit.to_dict()
            summary["failure_fit"] = table.failure_fit.to_dict() if table.failure_fit else None
            summary["resolved"] = table.resolved

        report.write_protocol(out / "protocol.csv", rows)
        if cfg.output.verbose_records:
            report.write_json(
                out / "records.json",
                [
                    {"lambda": r.config.lam, "N": r.config.n_steps, **r.to_records()}
                    for r in results
                ],
            )

        if sweep.baseline and pcfg.gate.kind != "idle":
            baseline = protocol.memory_baseline(pcfg)
            summary["memory_baseline"] = dataclasses.asdict(
                protocol.ScalingRow.from_result(baseline)
            )

        for row in rows:
            sys.stdout.write(
                f"lambda={row.lam:.3g} N={row.n} corrections={row.expected_corrections:.3e}"
                f" failure={row.expected_failure:.3e}\n"
            )
        return self.finish(out, cfg, checks, self.check, **summary)


COMMANDS: dict[str, type[Command]] = {
    command.name: command
    for command in (VerifyCommand, PerturbCommand, SynthCommand, ProtocolCommand)
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-c", "--config", help="A TOML experiment file")
    parser.add_argument(
        "--assert", action="store_true", dest="check", help="Check the expected scaling"
    )
    parser.add_argument("-o", "--out", help="Output directory")
    parser.add_argument("--seed", type=int, help="Top-level random seed")
    parser.add_argument(
        "--verbose-records",
        action="store_true",
        default=None,
        help="Write per-trial records",
    )
    parser.add_argument(
        "-v",
        "--verbosity",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Log level",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qecstep", description="Error correction in short time steps during gates."
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, command in COMMANDS.items():
        subparser = subparsers.add_parser(name, help=command.help)
        _add_common(subparser)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        options = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        cfg = config.get(
            options.config,
            command=options.command,
            seed=options.seed,
            output__directory=options.out,
            output__verbose_records=options.verbose_records,
        )
    except (OSError, tomllib.TOMLDecodeError, pydantic.ValidationError) as exc:
        sys.stderr.write(f"qecstep: {exc}\n")
        return 2

    logging.basicConfig(
        level=options.verbosity or cfg.verbosity or config.log_level(),
        format="%(levelname)s %(name)s: %(message)s",
    )

    command = COMMANDS[options.command]()
    command.check = options.check
    try:
        return command.handle(cfg, pathlib.Path(cfg.output.directory))
    except ValueError as exc:
        sys.stderr.write(f"qecstep: {exc}\n")
        return 2
    except RuntimeError as exc:
        sys.stderr.write(f"qecstep: {exc}\n")
        return 1

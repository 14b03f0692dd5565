import functools
import json
import math
from typing import List, Tuple

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catranspile import errors, qaoa
from catranspile.circuit_ir import Circuit, ParameterExpr, bind_parameters, make_gate
from catranspile.noise_sim import (
    CHANNEL_KINDS,
    MAX_QUBITS,
    DensityMatrix,
    NoiseChannel,
    apply_channel,
    apply_gate,
    counts_to_json,
    sample_counts,
    simulate,
    state_fidelity,
)

from .util import random_circuit, statevector

PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


PAULI_WEIGHTS = {
    "bit_flip": {"I": 0.7, "X": 0.3},
    "bit_phase_flip": {"I": 0.7, "Y": 0.3},
    "depolarizing": {"I": 1 - 3 * 0.3 / 4, "X": 0.3 / 4, "Y": 0.3 / 4, "Z": 0.3 / 4},
}


def _kraus_oracle(rho: np.ndarray, kind: str, qubit: int, n: int) -> np.ndarray:
    """Rate 0.3 channel on ``qubit`` from explicit Kraus operators ``sqrt(p) P``."""
    out = np.zeros_like(rho)
    for name, p in PAULI_WEIGHTS[kind].items():
        ops = [PAULIS[name] if q == qubit else PAULIS["I"] for q in range(n)]
        k = math.sqrt(p) * functools.reduce(np.kron, ops)
        out += k @ rho @ k.conj().T
    return out


def _bell() -> Circuit:
    return Circuit(
        2,
        (
            make_gate("h", 0),
            make_gate("cx", 0, 1),
            make_gate("measure", 0, clbit=0),
            make_gate("measure", 1, clbit=1),
        ),
        2,
    )


def test_apply_gate() -> None:
    rho = DensityMatrix.zero_state(1)
    flipped = apply_gate(rho, make_gate("x", 0))
    assert np.allclose(flipped.data, np.diag([0, 1]))

    same = apply_gate(rho, make_gate("rz", 0, param=0.0))
    assert np.allclose(same.data, rho.data)

    with pytest.raises(errors.SimulationError, match="unbound"):
        apply_gate(rho, make_gate("rz", 0, param=ParameterExpr.symbol("theta")))


@pytest.mark.parametrize("seed", range(10))
def test_apply_gate_matches_statevector(seed: int) -> None:
    c = random_circuit(seed, 3, 25, measure=False)
    rho = DensityMatrix.zero_state(3)
    for gate in c.gates:
        rho = apply_gate(rho, gate)
        assert abs(np.trace(rho.data) - 1) < 1e-12

    psi = statevector(c)
    assert np.allclose(rho.data, np.outer(psi, psi.conj()), atol=1e-10)


@pytest.mark.parametrize("kind", CHANNEL_KINDS)
def test_zero_rate_is_identity(kind: str) -> None:
    rho = DensityMatrix.from_statevector([1 / math.sqrt(2), 1j / math.sqrt(2)])
    assert np.allclose(apply_channel(rho, NoiseChannel(kind, 0.0), 0).data, rho.data)


@pytest.mark.parametrize("lam", [0.0, 0.25, 1.0])
def test_depolarizing_closed_form(lam: float) -> None:
    rho = DensityMatrix.zero_state(1)
    out = apply_channel(rho, NoiseChannel("depolarizing", lam), 0)
    expected = np.diag([1 - lam / 2, lam / 2]).astype(complex)
    assert np.max(np.abs(out.data - expected)) < 1e-12


@pytest.mark.parametrize("kind", ["bit_flip", "bit_phase_flip", "depolarizing"])
def test_channel_matches_kraus_oracle(kind: str) -> None:
    plus = DensityMatrix.from_statevector([1 / math.sqrt(2), 1 / math.sqrt(2)])
    out = apply_channel(plus, NoiseChannel(kind, 0.3), 0)
    assert np.allclose(out.data, _kraus_oracle(plus.data, kind, 0, 1), atol=1e-12)

    rho = DensityMatrix.from_statevector([0.6, 0.0, 0.0, 0.8j])
    for qubit in (0, 1):
        out = apply_channel(rho, NoiseChannel(kind, 0.3), qubit)
        assert np.allclose(out.data, _kraus_oracle(rho.data, kind, qubit, 2), atol=1e-12)


def test_bit_phase_flip_on_plus() -> None:
    plus = DensityMatrix.from_statevector([1 / math.sqrt(2), 1 / math.sqrt(2)])
    out = apply_channel(plus, NoiseChannel("bit_phase_flip", 0.3), 0)
    # Y|+> is orthogonal to |+>, so the coherence shrinks by 1 - 2λ
    assert out.data[0, 1] == pytest.approx(0.5 * (1 - 2 * 0.3))
    assert out.data[0, 0] == pytest.approx(0.5)


@settings(max_examples=50, derandomize=True, deadline=None)
@given(
    st.integers(0, 10 ** 6),
    st.sampled_from(["bit_flip", "bit_phase_flip", "depolarizing"]),
    st.floats(0.0, 1.0),
)
def test_trace_preserved(seed: int, kind: str, lam: float) -> None:
    rng = np.random.default_rng(seed)
    c = random_circuit(seed, 2, 50, measure=False)
    rho = DensityMatrix.zero_state(2)
    channel = NoiseChannel(kind, lam)
    for gate in c.gates:
        rho = apply_gate(rho, gate)
        rho = apply_channel(rho, channel, int(rng.integers(2)))
    assert abs(np.trace(rho.data) - 1) < 1e-9
    assert rho.violations(1e-9) == []


def test_simulate_bell() -> None:
    result = simulate(_bell())
    assert result.distribution == pytest.approx({"00": 0.5, "11": 0.5}, abs=1e-12)

    h = Circuit(1, (make_gate("h", 0), make_gate("measure", 0, clbit=0)), 1)
    assert simulate(h).distribution == pytest.approx({"0": 0.5, "1": 0.5}, abs=1e-12)


def test_simulate_bit_flip() -> None:
    x = Circuit(1, (make_gate("x", 0), make_gate("measure", 0, clbit=0)), 1)
    result = simulate(x, NoiseChannel("bit_flip", 0.2))
    assert result.distribution["1"] == pytest.approx(0.8)
    assert result.distribution["0"] == pytest.approx(0.2)


def test_simulate_clbit_order() -> None:
    # qubit 0 is written to classical bit 1
    c = Circuit(
        2,
        (make_gate("x", 0), make_gate("measure", 0, clbit=1), make_gate("measure", 1, clbit=0)),
        2,
    )
    assert simulate(c).distribution == pytest.approx({"01": 1.0})

    # Without classical bits the qubits are reported, qubit 0 leftmost
    assert simulate(Circuit(2, (make_gate("x", 0),))).distribution == pytest.approx({"10": 1.0})


@pytest.mark.parametrize("placement", ["acted", "layer"])
def test_simulate_repeated_measure(placement: str) -> None:
    # Both classical bits receive the outcome of qubit 0
    c = Circuit(
        2,
        (
            make_gate("x", 0),
            make_gate("measure", 0, clbit=0),
            make_gate("measure", 0, clbit=2),
            make_gate("measure", 1, clbit=1),
        ),
        3,
    )
    channel = NoiseChannel("bit_flip", 0.0, placement)
    assert simulate(c, channel).distribution == pytest.approx({"101": 1.0})

    # A classical bit written twice keeps the later measurement
    overwrite = Circuit(
        2,
        (make_gate("x", 1), make_gate("measure", 0, clbit=0), make_gate("measure", 1, clbit=0)),
        1,
    )
    assert simulate(overwrite, channel).distribution == pytest.approx({"1": 1.0})


def test_simulate_placements() -> None:
    c = Circuit(2, (make_gate("x", 0), make_gate("cx", 0, 1)))
    acted = simulate(c, NoiseChannel("bit_flip", 0.1, "acted")).distribution
    layer = simulate(c, NoiseChannel("bit_flip", 0.1, "layer")).distribution
    two_qubit = simulate(c, NoiseChannel("bit_flip", 0.1, "two_qubit")).distribution

    for dist in (acted, layer, two_qubit):
        assert sum(dist.values()) == pytest.approx(1.0)
    # Only the cx is followed by the channel under two_qubit placement
    assert two_qubit["11"] == pytest.approx(0.81)
    # A flip after x either survives the cx or not, then both qubits may flip
    assert acted["11"] == pytest.approx(0.9 * 0.81 + 0.1 * 0.01)
    assert acted != two_qubit
    assert layer != two_qubit


def test_layer_placement_barriers() -> None:
    channel = NoiseChannel("bit_flip", 0.1, "layer")
    scoped = Circuit(2, (make_gate("x", 0), make_gate("barrier", 1), make_gate("x", 1)))
    spanning = Circuit(2, (make_gate("x", 0), make_gate("barrier", 0, 1), make_gate("x", 1)))

    # One layer: each qubit sees the channel once
    assert simulate(scoped, channel).distribution["11"] == pytest.approx(0.81)
    # Two layers: each qubit sees it twice
    assert simulate(spanning, channel).distribution["11"] == pytest.approx(0.82 ** 2)


def test_simulate_errors() -> None:
    with pytest.raises(errors.SimulationError, match="exceed"):
        simulate(Circuit(MAX_QUBITS + 1))

    symbolic = qaoa.build_ansatz(qaoa.bundled_instance())
    with pytest.raises(errors.SimulationError, match="unbound"):
        simulate(symbolic)

    mid = Circuit(
        1, (make_gate("measure", 0, clbit=0), make_gate("reset", 0), make_gate("x", 0)), 1
    )
    with pytest.raises(errors.SimulationError, match="Mid-circuit"):
        simulate(mid)

    with pytest.raises(ValueError):
        NoiseChannel("amplitude_damping", 0.1)
    with pytest.raises(ValueError):
        NoiseChannel("bit_flip", 1.5)
    with pytest.raises(ValueError):
        NoiseChannel("bit_flip", 0.1, "everywhere")


def test_simulate_reset() -> None:
    c = Circuit(
        1, (make_gate("x", 0), make_gate("reset", 0), make_gate("measure", 0, clbit=0)), 1
    )
    assert simulate(c).distribution == pytest.approx({"0": 1.0})


def test_qaoa_zero_angles_uniform() -> None:
    ansatz = qaoa.build_ansatz(qaoa.bundled_instance())
    result = simulate(bind_parameters(ansatz, {"gamma_1": 0.0, "beta_1": 0.0}))
    assert len(result.distribution) == 32
    for p in result.distribution.values():
        assert p == pytest.approx(1 / 32, abs=1e-9)


def test_state_fidelity() -> None:
    zero = DensityMatrix.zero_state(1)
    one = DensityMatrix.from_statevector([0, 1])
    assert state_fidelity(zero, zero) == pytest.approx(1.0, abs=1e-9)
    assert state_fidelity(zero, one) == pytest.approx(0.0, abs=1e-9)

    with pytest.raises(errors.SimulationError, match="dimensions"):
        state_fidelity(zero, DensityMatrix.zero_state(2))
    with pytest.raises(errors.SimulationError, match="trace"):
        state_fidelity(zero, DensityMatrix(1, np.eye(2, dtype=complex)))


@pytest.mark.parametrize("seed", range(5))
def test_state_fidelity_pure_shortcut(seed: int) -> None:
    psi = statevector(random_circuit(seed, 2, 12, measure=False))
    pure = DensityMatrix.from_statevector(psi)

    other = random_circuit(seed + 100, 2, 12, measure=False)
    noisy = simulate(other, NoiseChannel("bit_flip", 0.2))
    expected = float(np.real(psi.conj() @ noisy.density.data @ psi))

    assert state_fidelity(pure, noisy.density) == pytest.approx(expected, abs=1e-9)
    assert state_fidelity(noisy.density, pure) == pytest.approx(expected, abs=1e-9)


def test_state_fidelity_mixed() -> None:
    # Commuting diagonal states reduce to the classical Bhattacharyya overlap
    p = np.array([0.5, 0.3, 0.15, 0.05])
    q = np.array([0.1, 0.2, 0.3, 0.4])
    rho = DensityMatrix(2, np.diag(p).astype(complex))
    sigma = DensityMatrix(2, np.diag(q).astype(complex))
    expected = float(np.sum(np.sqrt(p * q)) ** 2)
    assert state_fidelity(rho, sigma) == pytest.approx(expected, abs=1e-9)
    assert state_fidelity(sigma, rho) == pytest.approx(expected, abs=1e-9)

    mixed = DensityMatrix(1, np.eye(2, dtype=complex) / 2)
    assert state_fidelity(mixed, mixed) == pytest.approx(1.0, abs=1e-9)


def _bound_ansatz() -> Circuit:
    ansatz = qaoa.build_ansatz(qaoa.bundled_instance())
    return bind_parameters(ansatz, {"gamma_1": 2.3, "beta_1": 2.1})


def test_fidelity_monotone_in_rate() -> None:
    c = _bound_ansatz()
    reference = simulate(c).density
    previous = 1.0
    for lam in [0.0, 0.001, 0.002, 0.005, 0.01]:
        noisy = simulate(c, NoiseChannel("depolarizing", lam)).density
        fidelity = state_fidelity(reference, noisy)
        assert fidelity <= previous + 1e-9
        previous = fidelity


def test_channel_ordering() -> None:
    c = _bound_ansatz()
    reference = simulate(c).density
    fidelity = {
        kind: state_fidelity(reference, simulate(c, NoiseChannel(kind, 0.01)).density)
        for kind in ("bit_flip", "bit_phase_flip", "depolarizing")
    }
    assert fidelity["bit_flip"] > fidelity["depolarizing"] > fidelity["bit_phase_flip"]


def test_sample_counts() -> None:
    first = sample_counts({"0": 0.5, "1": 0.5}, 4, seed=0)
    assert sum(first.values()) == 4
    assert sample_counts({"0": 0.5, "1": 0.5}, 4, seed=0) == first

    assert sample_counts({"101": 1.0}, 100, seed=3) == {"101": 100}

    with pytest.raises(ValueError):
        sample_counts({"0": 1.0}, 0)


def test_sample_counts_chi_square() -> None:
    distribution = simulate(_bound_ansatz()).distribution
    shots = 100000
    counts = sample_counts(distribution, shots, seed=11)

    # Outcomes expected fewer than 5 times share one bin
    bins: List[Tuple[float, int]] = []
    rare = (0.0, 0)
    for key, p in distribution.items():
        if shots * p < 5:
            rare = (rare[0] + shots * p, rare[1] + counts.get(key, 0))
        else:
            bins.append((shots * p, counts.get(key, 0)))
    if rare[0] >= 5:
        bins.append(rare)
    else:
        bins.sort()
        bins[0] = (bins[0][0] + rare[0], bins[0][1] + rare[1])

    statistic = sum((observed - expected) ** 2 / expected for expected, observed in bins)
    df = len(bins) - 1
    # Wilson-Hilferty approximation of the 99.9th percentile
    z = 2 / (9 * df)
    critical = df * (1 - z + 3.09 * math.sqrt(z)) ** 3
    assert statistic < critical


def test_counts_to_json() -> None:
    data = json.loads(counts_to_json({"1": 3, "0": 1}, {"seed": 0}))
    assert data == {"counts": {"0": 1, "1": 3}, "shots": 4, "seed": 0}

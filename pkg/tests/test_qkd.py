import math

import numpy as np
import pytest
from scipy import stats

from pbsent.entanglement import make_target, phi_probability
from pbsent.fock import QuantumState, vacuum
from pbsent.optics import OUTPUT_REGISTRY, SourceParams, build_fig2_circuit
from pbsent.qkd import Basis, QkdParams, bits_per_outcome, run_session, sample_measurement

RECT, DIAG = Basis.RECTILINEAR, Basis.DIAGONAL
SINGLET = make_target("singlet").realized


@pytest.fixture(scope="module")
def session_r03():
    return run_session(QkdParams(r=0.3, rounds=10_000, seed=11))


class TestBitsPerOutcome:
    @pytest.mark.parametrize("n,bits", [(1, 1.0), (3, 2.0), (7, 3.0)])
    def test_values(self, n, bits):
        assert bits_per_outcome(n) == bits

    @pytest.mark.parametrize("n", [0, -2])
    def test_invalid(self, n):
        with pytest.raises(ValueError):
            bits_per_outcome(n)


class TestSampleMeasurement:
    def test_vacuum(self, rng):
        for _ in range(20):
            assert sample_measurement(vacuum(OUTPUT_REGISTRY), (RECT, DIAG), rng) == ((0, 0), (0, 0))

    def test_unnormalised_rejected(self, rng):
        s = QuantumState(OUTPUT_REGISTRY, {(0, 0, 0, 0): 2.0}, cutoff=0)
        with pytest.raises(ValueError):
            sample_measurement(s, (RECT, RECT), rng)

    @pytest.mark.parametrize("basis", [RECT, DIAG])
    def test_singlet_anticorrelated(self, basis, rng):
        samples = 10_000
        outcomes = [sample_measurement(SINGLET, (basis, basis), rng) for _ in range(samples)]
        assert set(outcomes) <= {((1, 0), (0, 1)), ((0, 1), (1, 0))}
        frac = sum(o == ((1, 0), (0, 1)) for o in outcomes) / samples
        assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / samples)

    def test_phi_arm_histogram(self):
        r, rounds = 0.5, 100_000
        report = run_session(QkdParams(r=r, rounds=rounds, seed=5, cutoff=10), keep_records=False)
        ns = sorted(report.photon_histogram)
        observed = np.array([report.photon_histogram[n] for n in ns], dtype=float)
        expected = np.array([phi_probability(r, n) for n in ns])
        # pool the sparse tail
        keep = expected * rounds >= 5
        obs = np.append(observed[keep], observed[~keep].sum())
        exp = np.append(expected[keep], 1 - expected[keep].sum()) * rounds
        _, pvalue = stats.chisquare(obs, exp * obs.sum() / exp.sum())
        assert pvalue > 0.0027


class TestSession:
    def test_ideal_channel(self, session_r03):
        rep = session_r03
        assert rep.symbol_errors == 0 and rep.symbol_error_rate == 0.0 and rep.erasures == 0
        for rec in rep.records:
            if rec.sifted:
                assert rec.bob_counts == rec.alice_counts[::-1]
                assert rec.symbol == rec.alice_counts[1] == rec.bob_counts[0]
            else:
                assert rec.symbol is None
                assert rec.alice_basis is not rec.bob_basis or rec.n == 0

    def test_sift_rate(self, session_r03):
        x = math.tanh(0.3) ** 2
        p = 0.5 * (1 - (1 - x) ** 2)
        assert abs(session_r03.sift_rate - p) <= 3 * math.sqrt(p * (1 - p) / session_r03.rounds)

    def test_report_consistency(self, session_r03):
        rep = session_r03
        assert sum(rep.photon_histogram.values()) == rep.rounds
        assert rep.sifted == sum(r.sifted for r in rep.records)
        bits = [bits_per_outcome(r.n) for r in rep.records if r.sifted]
        assert rep.mean_bits_per_sifted_round == pytest.approx(np.mean(bits))
        assert rep.raw_key_rate == pytest.approx(sum(bits) / rep.rounds)
        assert 0 <= rep.sift_rate <= 1

    def test_deterministic(self):
        p = QkdParams(r=0.4, rounds=2000, seed=3)
        assert run_session(p) == run_session(p)
        assert run_session(p) != run_session(QkdParams(r=0.4, rounds=2000, seed=4))

    @pytest.mark.parametrize("bad", [
        dict(rounds=0), dict(seed=-1), dict(eta=1.2), dict(cutoff=0), dict(r=float("inf")),
    ])
    def test_invalid_params(self, bad):
        kwargs = dict(r=0.3, rounds=10, seed=1) | bad
        with pytest.raises(ValueError):
            run_session(QkdParams(**kwargs))

    def test_loss_creates_erasures_not_errors(self):
        r, eta, cutoff = 0.6, 0.6, 8
        rep = run_session(QkdParams(r=r, rounds=5000, seed=9, eta=eta, cutoff=cutoff))
        assert rep.symbol_errors == 0
        state = build_fig2_circuit(SourceParams.squeezed(r), cutoff)
        probs = {n: sum(abs(a) ** 2 for k, a in state.items() if k[0] + k[1] == n) for n in range(1, cutoff + 1)}
        expected = 1 - sum(p * eta**n for n, p in probs.items()) / sum(probs.values())
        sigma = math.sqrt(expected * (1 - expected) / rep.sifted)
        assert abs(rep.erasure_rate - expected) <= 3 * sigma
        assert run_session(QkdParams(r=r, rounds=300, seed=9, eta=eta)) == run_session(
            QkdParams(r=r, rounds=300, seed=9, eta=eta))

    def test_basis_independence(self):
        rep = run_session(QkdParams(r=0.5, rounds=40_000, seed=21))
        outcomes = sorted({rec.alice_counts for rec in rep.records})
        table = np.zeros((2, len(outcomes)))
        for rec in rep.records:
            table[int(rec.bob_basis is DIAG), outcomes.index(rec.alice_counts)] += 1
        table = table[:, table.min(axis=0) >= 5]
        _, pvalue, _, _ = stats.chi2_contingency(table)
        assert pvalue > 0.0027

    def test_mean_photon_number_monotone(self):
        reps = [run_session(QkdParams(r=r, rounds=100_000, seed=2, cutoff=10), keep_records=False)
                for r in (0.2, 0.5, 0.8)]
        means = [rep.mean_photon_number for rep in reps]
        assert means == sorted(means)
        for rep, r in zip(reps, (0.2, 0.5, 0.8)):
            p = np.array([phi_probability(r, n) for n in range(11)])
            p /= p.sum()
            n = np.arange(11)
            mean, sd = (n * p).sum(), math.sqrt((n**2 * p).sum() - (n * p).sum() ** 2)
            assert abs(rep.mean_photon_number - mean) <= 3 * sd / math.sqrt(rep.rounds)

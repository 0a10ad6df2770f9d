"""Integrability thresholds, germ classification, stalk extraction."""

import math

import numpy as np
import pytest

from radialma import (
    KahlerModel,
    PotentialSequence,
    SGrid,
    StalkDescriptor,
    build_dirac_rhs,
    constant_rhs,
    crucial_integral,
    germ_integral,
    stalk_from_sequence,
    trivial_lemma_report,
)


def slope_potential(model, nu, pivot=0.0):
    """phi with left slope nu, flattening past the pivot."""
    s = model.grid.nodes
    return nu * np.minimum(s - pivot, 0.0)


class TestCrucialIntegral:
    def test_flat_unit_case_gives_model_mass(self, model_n1, model_n2):
        for m in (model_n1, model_n2):
            val = crucial_integral(np.zeros(m.grid.points), 0.5, constant_rhs(m), m)
            assert val == pytest.approx(m.degree**m.n, abs=1e-8)

    def test_integrable_slope_is_stable_under_domain_extension(self):
        # tau * nu < n: widening the truncation changes the value only
        # through the convergent tail
        nu, tau = 1.5, 0.4  # tau*nu = 0.6 < 1
        vals = []
        for smin in (-40.0, -60.0, -80.0):
            m = KahlerModel(1, 2.0, SGrid(smin, 40.0, int((40.0 - smin) / 0.02) + 1))
            phi = slope_potential(m, nu)
            vals.append(crucial_integral(phi, tau, constant_rhs(m), m))
        assert vals[2] == pytest.approx(vals[0], rel=1e-6)

    def test_critical_slope_grows_without_bound(self):
        # tau * nu > n: the truncated value grows like e^{(tau nu - n)|s_min|}
        nu, tau = 3.5, 0.4  # tau*nu = 1.4 > 1
        vals = []
        for smin in (-40.0, -50.0, -60.0):
            m = KahlerModel(1, 2.0, SGrid(smin, 40.0, int((40.0 - smin) / 0.02) + 1))
            phi = slope_potential(m, nu)
            vals.append(crucial_integral(phi, tau, constant_rhs(m), m))
        assert vals[1] / vals[0] > 5.0
        assert vals[2] / vals[1] > 5.0


class TestGermIntegral:
    def test_threshold_example(self, model_n1):
        # left slope 3.5 at tau = 1: order 3 integrable, order 2 not
        phi = slope_potential(model_n1, 3.5)
        g3 = germ_integral(3, phi, 1.0, model_n1)
        g2 = germ_integral(2, phi, 1.0, model_n1)
        assert g3.finite and math.isfinite(g3.value)
        assert not g2.finite and g2.value == math.inf
        assert g3.tail_exponent == pytest.approx(0.5)
        assert g2.tail_exponent == pytest.approx(-0.5)

    def test_weak_singularity_keeps_unit_germ(self, model_n1):
        # tau * nu < n: the trivial germ (order 0) is already integrable
        phi = slope_potential(model_n1, 1.2)
        assert germ_integral(0, phi, 0.5, model_n1).finite

    def test_borderline_is_divergent(self, model_n1):
        # tau * nu = n exactly: log-divergent, classified divergent
        phi = slope_potential(model_n1, 2.0)
        g = germ_integral(0, phi, 0.5, model_n1)
        assert not g.finite
        assert g.tail_exponent == pytest.approx(0.0, abs=1e-12)

    def test_monotone_in_vanishing_order(self, model_n1):
        phi = slope_potential(model_n1, 2.5)
        vals = []
        for k in range(4):
            g = germ_integral(k, phi, 0.7, model_n1)
            vals.append(g.value)
        finite = [v for v in vals if math.isfinite(v)]
        assert all(b <= a for a, b in zip(finite, finite[1:]))

    def test_monotone_in_time(self, model_n1):
        # for phi <= 0 near the pole, integrability at larger tau implies it
        # at smaller tau
        phi = slope_potential(model_n1, 2.5)
        for k in (0, 1, 2, 3):
            for t1, t2 in ((0.2, 0.5), (0.3, 0.8)):
                if germ_integral(k, phi, t2, model_n1).finite:
                    assert germ_integral(k, phi, t1, model_n1).finite

    def test_lattice_classification_exact(self, model_n1):
        # 20-point (k, tau*nu) lattice, classification matches k + n > tau*nu
        # exactly, including borderline integer cases
        cases = []
        for k in (0, 1, 2, 3):
            for p in (0.5, 1.0, float(k + 1), k + 1.5, k + 0.25):
                cases.append((k, p))
        cases = cases[:20]
        tau = 0.5
        for k, p in cases:
            nu = p / tau
            phi = slope_potential(model_n1, nu)
            g = germ_integral(k, phi, tau, model_n1)
            assert g.finite == (k + 1 > p), (k, p)

    def test_growth_factors_reported(self, model_n1):
        phi = slope_potential(model_n1, 3.0)
        g = germ_integral(0, phi, 0.9, model_n1)  # alpha = 1 - 2.7 < 0
        assert not g.finite
        assert all(f >= 5.0 for f in g.growth_factors)


class TestStalk:
    def test_flat_sequence_is_trivial(self, model_n1):
        zero = np.zeros(model_n1.grid.points)
        seq = PotentialSequence(model_n1, tuple((zero, t, None) for t in (0.3, 0.5, 0.7)))
        stalk = stalk_from_sequence(seq)
        assert stalk.k_min == 0
        assert not stalk.nontrivial
        assert not stalk.equals_maximal_ideal

    def test_synthetic_order_three(self, model_n1):
        # tau * nu -> 3.5 with n = 1 forces vanishing to order 3
        entries = []
        for tau, nu in ((0.5, 6.6), (0.5, 6.9), (0.5, 7.0)):
            entries.append((slope_potential(model_n1, nu), tau, None))
        stalk = stalk_from_sequence(PotentialSequence(model_n1, tuple(entries)))
        assert stalk.k_min == 3
        assert stalk.nontrivial
        assert not stalk.equals_maximal_ideal
        assert stalk.tau_nu_product == pytest.approx(3.5, rel=1e-6)

    def test_maximal_ideal_case_flagged(self, model_n1):
        entries = [(slope_potential(model_n1, 3.0), 0.5, None)]
        stalk = stalk_from_sequence(PotentialSequence(model_n1, tuple(entries)))
        assert stalk.k_min == 1
        assert stalk.equals_maximal_ideal

    def test_reordering_invariance(self, model_n1):
        entries = [(slope_potential(model_n1, nu), 0.5, None) for nu in (2.0, 5.0, 3.0)]
        a = stalk_from_sequence(PotentialSequence(model_n1, tuple(entries)))
        b = stalk_from_sequence(PotentialSequence(model_n1, tuple(reversed(entries))))
        assert a == b

    def test_solved_sequence(self, model_n1):
        # a real amplifying sweep at small tau produces a trivial stalk: the
        # slope saturates at the model mass and tau stays below 1/d
        from radialma import magnifying, sweep_epsilon
        trace, results = sweep_epsilon(model_n1, 1.8, magnifying(0.2), 0.2,
                                       (1e-2, 1e-3))
        entries = []
        for eps, res in zip((1e-2, 1e-3), results):
            rhs = build_dirac_rhs(1.8, eps, model_n1)
            entries.append((res.phi, 0.2, rhs))
        stalk = stalk_from_sequence(PotentialSequence(model_n1, tuple(entries)))
        assert stalk.k_min == 0
        assert stalk.tau_nu_product == pytest.approx(0.4, abs=0.02)


class TestTrivialLemmaReport:
    def test_all_hypotheses_pass(self):
        stalk = StalkDescriptor(k_min=2, nontrivial=True,
                                equals_maximal_ideal=False, tau_nu_product=2.5)
        rep = trivial_lemma_report(stalk, curvature_margin=1.5)
        assert rep.all_checkable_pass
        assert rep.conclusion == "deferred"
        assert rep.notes == ()

    def test_missing_curvature_bound(self):
        stalk = StalkDescriptor(k_min=2, nontrivial=True,
                                equals_maximal_ideal=False, tau_nu_product=2.5)
        rep = trivial_lemma_report(stalk, curvature_margin=0.0)
        assert not rep.curvature_bound_ok
        assert not rep.all_checkable_pass
        assert any("elliptic" in note for note in rep.notes)

    def test_maximal_ideal_caveat(self):
        stalk = StalkDescriptor(k_min=1, nontrivial=True,
                                equals_maximal_ideal=True, tau_nu_product=1.5)
        rep = trivial_lemma_report(stalk, curvature_margin=1.0)
        assert not rep.not_maximal_ideal_ok
        assert any("maximal ideal" in note for note in rep.notes)

import unittest

import numpy as np

from facetflow.canonical_section import (
    detect_facets,
    minimal_section_1d,
    minimal_section_radial,
    monotonicity_sign,
)
from facetflow.cahn_hoffman import ch_pinned, classify_facet
from facetflow.errors import DomainMismatch, Infeasible, NonMonotone
from facetflow.geometry import FacetSpec, make_domain
from facetflow.states_energy import State, trace_state


class TestDetectFacets(unittest.TestCase):
    """Unit tests for flat-region detection."""

    def test_single_boundary_facet(self):
        """Test that x ^ 0.5 has one facet [0.5, 1] with chi = +1."""
        domain = make_domain("interval", L=1.0, n=401)
        facets = detect_facets(np.minimum(domain.nodes, 0.5), domain)
        self.assertEqual(len(facets), 1)
        self.assertAlmostEqual(facets[0].inner, 0.5)
        self.assertEqual(facets[0].outer, 1.0)
        self.assertEqual(facets[0].chi, 1)

    def test_two_facets_decreasing(self):
        """Test both boundary facets of a decreasing clipped ramp."""
        domain = make_domain("interval", L=1.0, n=401)
        facets = detect_facets(-np.clip(domain.nodes, 0.25, 0.75), domain)
        self.assertEqual([f.chi for f in facets], [-1, -1])
        self.assertEqual(facets[0].inner, 0.0)
        self.assertAlmostEqual(facets[1].inner, 0.75)

    def test_extremum_is_rejected(self):
        """Test that a flat top between a rise and a fall raises NonMonotone."""
        domain = make_domain("interval", L=1.0, n=21)
        bump = np.minimum(np.minimum(domain.nodes, 1.0 - domain.nodes), 0.3)
        with self.assertRaises(NonMonotone):
            detect_facets(bump, domain)
        with self.assertRaises(NonMonotone):
            monotonicity_sign(bump)

    def test_size_mismatch(self):
        """Test that an array of the wrong size is rejected."""
        with self.assertRaises(DomainMismatch):
            detect_facets(np.zeros(5), make_domain("interval", L=1.0, n=21))


class TestMinimalSection(unittest.TestCase):
    """Unit tests for the minimal section on facets."""

    def test_interval_boundary_facet(self):
        """Test z(L) = 2/3 and lambda = -2/3 for u0 = x ^ 0.5 with tau = 1."""
        domain = make_domain("interval", L=1.0, n=401)
        section = minimal_section_1d(trace_state(domain, np.minimum(domain.nodes, 0.5)), domain, 1.0)
        self.assertAlmostEqual(section.zL, 2.0 / 3.0, places=8)
        self.assertEqual(section.z0, 1.0)
        self.assertEqual(section.chi, 1)
        self.assertEqual(len(section.sections), 1)
        self.assertAlmostEqual(section.sections[0].lam, -2.0 / 3.0, places=8)
        self.assertAlmostEqual(section.sections[0].mu["outer"], 2.0 / 3.0, places=8)

    def test_interval_two_facets(self):
        """Test lambda = +-1/(tau + 1/4) for the facets of x clipped to [1/4, 3/4]."""
        domain = make_domain("interval", L=1.0, n=401)
        state = trace_state(domain, np.clip(domain.nodes, 0.25, 0.75))
        section = minimal_section_1d(state, domain, 1.0)
        lams = [s.lam for s in section.sections]
        np.testing.assert_allclose(lams, [0.8, -0.8], atol=1e-8)
        self.assertAlmostEqual(section.z0, 0.8, places=8)

    def test_interval_needs_interval(self):
        """Test that the 1D section refuses a radial domain."""
        domain = make_domain("ball", R=1.0, n=21)
        with self.assertRaises(DomainMismatch):
            minimal_section_1d(trace_state(domain, np.zeros(21)), domain)

    def test_ball_facet_matches_closed_form(self):
        """Test the sampled ball section against lambda = -2/7."""
        domain = make_domain("ball", R=2.0, n=200)
        result = minimal_section_radial(FacetSpec(1.0, 2.0, 1), domain, 1.0)
        self.assertAlmostEqual(result.lams[0], -2.0 / 7.0, places=7)
        self.assertAlmostEqual(result.mus["outer"], 2.0 / 7.0, places=7)

    def test_sampled_sections_match_closed_forms(self):
        """Test the box QP against classify_facet over twenty ball and annulus facets."""
        configs = [("ball", dict(R=2.0), rho, tau) for rho in (0.5, 1.0, 1.5) for tau in (0.5, 1.0, 2.0)]
        configs += [("annulus", dict(r0=r0, R=r0 + width + 1.0, gamma="inner"), r0 + width, tau)
                    for r0 in (0.5, 1.0, 3.0) for width in (0.5, 1.5) for tau in (0.5, 1.0)]
        self.assertGreaterEqual(len(configs), 20)
        for kind, kwargs, rho, tau in configs:
            with self.subTest(kind=kind, rho=rho, tau=tau, **kwargs):
                domain = make_domain(kind, n=200, **kwargs)
                facet = FacetSpec(rho, domain.outer, 1) if kind == "ball" else FacetSpec(domain.inner, rho, 1)
                side = "outer" if kind == "ball" else "inner"
                closed = classify_facet(domain, facet, tau)
                result = minimal_section_radial(facet, domain, tau)
                self.assertAlmostEqual(result.lams[0], closed.lam, delta=1e-5)
                self.assertAlmostEqual(result.mus[side], closed.mu, delta=1e-5)

    def test_annulus_detaching_facet(self):
        """Test that the box pins the inner trace of the thin annulus facet at mu = -1."""
        domain = make_domain("annulus", r0=0.5, R=2.0, gamma="inner", n=200)
        result = minimal_section_radial(FacetSpec(0.5, 1.0, 1), domain, 1.0)
        self.assertAlmostEqual(result.mus["inner"], -1.0, places=7)
        self.assertAlmostEqual(result.lams[0], 4.0 / 3.0, places=6)

    def test_annulus_coherent_facet(self):
        """Test the coherent inner facet of A(3, 5)."""
        domain = make_domain("annulus", r0=3.0, R=5.0, gamma="inner", n=200)
        result = minimal_section_radial([FacetSpec(3.0, 4.0, 1)], domain, 1.0)
        self.assertAlmostEqual(result.lams[0], 8.0 / 13.0, places=7)
        self.assertFalse(result.sections[0].pinned["inner"])

    def test_pinned_trace_from_state(self):
        """Test that a gap v - gamma u pins [z.nu] to its sign."""
        domain = make_domain("annulus", r0=1.0, R=3.0, gamma="inner", n=201)
        u = np.minimum(np.maximum(domain.nodes, 2.0), 2.5)
        result = minimal_section_radial(State(u, [2.5]), domain, 1.0)
        inner = result.sections[0]
        self.assertTrue(inner.pinned["inner"])
        self.assertAlmostEqual(inner.mu["inner"], 1.0)
        self.assertAlmostEqual(inner.field.w(1.0), -1.0)

    def test_pinned_explicit_facet_sign(self):
        """Test an explicit unmatched facet: gap_sign sets mu, and without it w = chi as in ch_pinned."""
        domain = make_domain("annulus", r0=1.0, R=3.0, gamma="inner", n=201)
        facet = FacetSpec(1.0, 2.0, 1)
        signed = minimal_section_radial(facet, domain, 1.0, trace_matched=False, gap_sign=1.0).sections[0]
        self.assertTrue(signed.pinned["inner"])
        self.assertAlmostEqual(signed.mu["inner"], 1.0)
        self.assertAlmostEqual(signed.field.w(1.0), -1.0)
        by_side = minimal_section_radial(facet, domain, 1.0, trace_matched=False, gap_sign={"inner": 1.0})
        self.assertAlmostEqual(by_side.mus["inner"], 1.0)
        default = minimal_section_radial(facet, domain, 1.0, trace_matched=False).sections[0]
        self.assertAlmostEqual(default.field.w(1.0), 1.0)
        closed = ch_pinned(domain, facet, 1.0)
        self.assertAlmostEqual(default.mu["inner"], closed.mu)
        self.assertAlmostEqual(default.lam, closed.lam, places=6)

    def test_onset_facet_is_infeasible(self):
        """Test that a zero-width facet has no section."""
        domain = make_domain("annulus", r0=0.5, R=2.0, gamma="inner", n=50)
        with self.assertRaises(Infeasible):
            minimal_section_radial(FacetSpec(0.5, 0.5, 1, onset=True), domain, 1.0)


if __name__ == "__main__":
    unittest.main()

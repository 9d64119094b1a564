import unittest

import numpy as np

from facetflow.errors import NonMonotone, ValidationError
from facetflow.geometry import make_domain
from facetflow.profiles import (
    check_monotone,
    linear_ramp,
    piecewise_ramp,
    profile_from_dict,
    tabulated,
)


class TestProfiles(unittest.TestCase):
    """Unit tests for the initial profiles."""

    def test_piecewise_ramp_values(self):
        """Test the flat parts and the slope of a piecewise ramp."""
        profile = piecewise_ramp(0.25, 1.0, slope=4.0)
        self.assertEqual(profile(0.0), 0.0)
        self.assertEqual(profile(0.5), 1.0)
        self.assertEqual(profile(2.0), 3.0)
        self.assertEqual(profile.derivative(0.5), 4.0)
        self.assertEqual(profile.derivative(1.5), 0.0)
        self.assertEqual(profile.bulk_interval(0.0, 2.0), (0.25, 1.0))

    def test_inverse(self):
        """Test that the inverse recovers a point in the bulk and clamps outside it."""
        profile = linear_ramp(2.0, 1.0)
        self.assertAlmostEqual(profile.inverse(2.0, 0.0, 1.0), 0.5, places=12)
        self.assertEqual(profile.inverse(-5.0, 0.0, 1.0), 0.0)
        self.assertEqual(profile.inverse(9.0, 0.0, 1.0), 1.0)

    def test_chi_and_negation(self):
        """Test the orientation of a profile and of its negative."""
        profile = piecewise_ramp(0.0, 0.5)
        self.assertEqual(profile.chi(0.0, 1.0), 1)
        self.assertEqual(profile.negated().chi(0.0, 1.0), -1)
        self.assertEqual(linear_ramp(0.0, 1.0).chi(0.0, 1.0), 0)

    def test_tabulated_derivative(self):
        """Test the centred-difference derivative of tabulated samples."""
        profile = tabulated([0.0, 1.0, 2.0], [0.0, 2.0, 4.0])
        self.assertAlmostEqual(profile.derivative(0.5), 2.0, places=6)

    def test_from_dict(self):
        """Test scenario profiles, including a negated one."""
        profile = profile_from_dict({"kind": "piecewise_ramp", "start": 0.0, "stop": 0.5, "sign": -1})
        self.assertEqual(profile(1.0), -0.5)
        self.assertEqual(profile_from_dict(profile.to_dict()), profile)
        for data in ({"kind": "spline"}, {"kind": "piecewise_ramp", "start": 0.0},
                     {"kind": "tabulated", "nodes": [0, 1], "values": [0]},
                     {"kind": "tabulated", "nodes": [1, 0], "values": [0, 1]}):
            with self.subTest(data=data):
                with self.assertRaises(ValidationError):
                    profile_from_dict(data)

    def test_check_monotone(self):
        """Test the monotonicity check on the grid."""
        domain = make_domain("interval", L=1.0, n=21)
        self.assertEqual(check_monotone(piecewise_ramp(0.0, 0.5), domain), 1)
        self.assertEqual(check_monotone(linear_ramp(-1.0), domain), -1)
        self.assertEqual(check_monotone(linear_ramp(0.0, 3.0), domain), 0)
        bump = tabulated([0.0, 0.5, 1.0], [0.0, 1.0, 0.0])
        with self.assertRaises(NonMonotone):
            check_monotone(bump, domain)
        np.testing.assert_allclose(piecewise_ramp(0.0, 0.5).sample(domain)[-1], 0.5)


if __name__ == "__main__":
    unittest.main()

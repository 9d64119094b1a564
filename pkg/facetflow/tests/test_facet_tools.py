import json
import os
import shutil
import tempfile
import unittest

from facetflow.tools.facet_tools import (
    PROJECT_ROOT,
    _is_path_safe,
    boundary_onset_tool,
    classify_facet_tool,
    detachment_sweep_tool,
    run_scenario_tool,
)


class TestFacetTools(unittest.TestCase):
    """Unit tests for the agent-facing facet tools."""

    def setUp(self):
        """Create a scratch directory inside the project root"""
        self.test_dir = tempfile.mkdtemp(dir=PROJECT_ROOT)
        self.rel_dir = os.path.relpath(self.test_dir, PROJECT_ROOT)

    def tearDown(self):
        """Remove the scratch directory"""
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_path_safety(self):
        """Test the path safety check"""
        safe_paths = ["scenario.json", "runs/out", "./facetflow", "."]
        unsafe_paths = ["../outside.json", "/etc/passwd", "runs/../../x"]
        for path in safe_paths:
            with self.subTest(path=path):
                self.assertTrue(_is_path_safe(path))
        for path in unsafe_paths:
            with self.subTest(path=path):
                self.assertFalse(_is_path_safe(path))

    def test_classify_facet(self):
        """Test classifying the boundary facet of B(0, 2)"""
        result = classify_facet_tool("ball", 1.0, 2.0, R=2.0)
        report = json.loads(result)
        self.assertAlmostEqual(report["lambda"], -2.0 / 7.0)
        self.assertEqual(report["case"], "ball_coherent")

    def test_classify_facet_bad_geometry(self):
        """Test that an impossible annulus is reported, not raised"""
        result = classify_facet_tool("annulus", 1.0, 2.0, r0=3.0, R=2.0)
        self.assertTrue(result.startswith("Error:"))

    def test_boundary_onset(self):
        """Test onset on the thin annulus A(0.5, 4)"""
        report = json.loads(boundary_onset_tool(0.5, 4.0))
        self.assertEqual(report["case"], "onset_detach")
        self.assertTrue(boundary_onset_tool(5.0, 4.0).startswith("Error:"))

    def test_detachment_sweep(self):
        """Test the sweep summary and its argument check"""
        self.assertEqual(detachment_sweep_tool(n=0), "Error: n must be between 1 and 200.")
        result = detachment_sweep_tool(n=10)
        self.assertTrue(result.startswith("Sweep complete over 100 cells"))
        self.assertIn("annulus_detached", result)
        self.assertIn("threshold 2 tau = 2", result)

    def test_run_scenario_rejects_paths(self):
        """Test that scenarios outside the project or missing files are refused"""
        result = run_scenario_tool("../scenario.json")
        self.assertIn("outside the allowed project directory", result)
        result = run_scenario_tool(os.path.join(self.rel_dir, "scenario.json"), out_dir="/tmp/out")
        self.assertIn("outside the allowed project directory", result)
        result = run_scenario_tool(os.path.join(self.rel_dir, "missing.json"))
        self.assertEqual(result, f"Error: Scenario not found at '{os.path.join(self.rel_dir, 'missing.json')}'.")

    def test_run_scenario(self):
        """Test running a classify scenario end to end"""
        scenario_path = os.path.join(self.rel_dir, "scenario.json")
        with open(os.path.join(PROJECT_ROOT, scenario_path), "w") as f:
            json.dump({"mode": "classify", "domain": {"kind": "annulus", "r0": 3.0, "R": 5.0, "n": 20},
                       "facet": {"inner": 3.0, "outer": 4.0}}, f)
        out_dir = os.path.join(self.rel_dir, "out")
        result = run_scenario_tool(scenario_path, out_dir=out_dir)
        self.assertIn("finished with exit code 0", result)
        self.assertIn("Status: ok", result)
        with open(os.path.join(PROJECT_ROOT, out_dir, "report.json"), "r") as f:
            report = json.load(f)
        self.assertAlmostEqual(report["reports"][0]["lambda"], 8.0 / 13.0)

    def test_run_scenario_invalid(self):
        """Test that a scenario failing validation comes back as an error string"""
        scenario_path = os.path.join(self.rel_dir, "bad.json")
        with open(os.path.join(PROJECT_ROOT, scenario_path), "w") as f:
            f.write('{"mode": "pde"')
        self.assertTrue(run_scenario_tool(scenario_path).startswith("Error:"))


if __name__ == "__main__":
    unittest.main()

import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from cqed_app.exceptions import ScenarioError
from cqed_app.presets_cache import get_preset, get_presets
from cqed_app.scenarios import (
    ScenarioMode,
    build_scenario,
    load_scenario,
    parse_scenario_text,
    raw_scenario,
)
from cqed_app.trajectory import TrajectoryMode


# Test class for the flat key = value scenario format
class ScenarioTextTests(SimpleTestCase):
    # Test case: Comments, blank lines, lists and null values
    def test_parse(self):
        raw = parse_scenario_text(
            "# low intensity\n"
            "mode = qrt\n"
            "\n"
            "g = 38.0   # MHz\n"
            "drive_over_kappa = 1.2, 1.4,1.6\n"
            "tau_max = none\n"
        )
        self.assertEqual(
            raw,
            {"mode": "qrt", "g": "38.0", "drive_over_kappa": ["1.2", "1.4", "1.6"], "tau_max": None},
        )

    # Test case: A line without '=' is reported with its number
    def test_missing_separator(self):
        with self.assertRaisesMessage(ScenarioError, "line 2"):
            parse_scenario_text("mode = qrt\ng 38\n")

    # Test case: A key given twice is an error
    def test_duplicate_key(self):
        with self.assertRaises(ScenarioError):
            parse_scenario_text("g = 38\ng = 30\n")


# Test class for presets and scenario validation
class ScenarioLoadingTests(SimpleTestCase):
    # Test case: Presets are loaded when the app starts
    def test_presets_loaded(self):
        self.assertTrue({"fig3", "fig5", "fig8", "fig9", "fig10", "fig12", "fig13"} <= set(get_presets()))

    # Test case: Preset lookups return copies
    def test_preset_copy(self):
        preset = get_preset("fig5")
        preset["g"] = 1.0
        self.assertEqual(get_preset("fig5")["g"], 38.0)
        self.assertIsNone(get_preset("fig99"))

    # Test case: The low-intensity preset becomes a correlate scenario
    def test_load_fig5(self):
        scenario = load_scenario("fig5")
        self.assertEqual(scenario.name, "fig5")
        self.assertIs(scenario.mode, ScenarioMode.CORRELATE)
        self.assertEqual(scenario.target_X, 0.000299)
        self.assertEqual(scenario.n_max, 3)
        self.assertEqual(scenario.params.g, 38.0)
        self.assertEqual(scenario.params.epsilon, 0.0)
        self.assertIs(scenario.detection, TrajectoryMode.HOMODYNE)

    # Test case: Command-line overrides replace preset values, None is ignored
    def test_overrides(self):
        scenario = load_scenario("fig5", {"seed": 5, "starts": 10, "duration": None})
        self.assertEqual((scenario.seed, scenario.starts, scenario.duration), (5, 10, 20.0))

    # Test case: Automatic truncation and scan grids
    def test_load_fwhm_scan(self):
        scenario = load_scenario("fig13")
        self.assertIsNone(scenario.n_max)
        self.assertEqual(scenario.params.N, 2)
        self.assertEqual(scenario.gamma_values, (3.0, 1.0, 0.5))
        self.assertEqual(scenario.drive_over_kappa, (0.9, 1.0, 1.1, 1.2, 1.3))
        self.assertEqual(scenario.as_dict()["normalization"], "both")

    # Test case: A file can start from a preset and override keys
    def test_file_on_top_of_preset(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "quick.txt"
            path.write_text("preset = fig5\nmode = params\nseed = 12\n")
            raw = raw_scenario(str(path))
        scenario = build_scenario(raw)
        self.assertEqual(scenario.name, "fig5")
        self.assertIs(scenario.mode, ScenarioMode.PARAMS)
        self.assertEqual(scenario.seed, 12)

    # Test case: A plain file is named after itself
    def test_plain_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "weak.txt"
            path.write_text("mode = qrt\ng = 38\nkappa = 8.7\ngamma = 3\nepsilon = 0.02\nn_max = 3\n")
            scenario = load_scenario(str(path))
        self.assertEqual(scenario.name, "weak")
        self.assertEqual(scenario.params.epsilon, 0.02)
        self.assertIsNone(scenario.target_X)

    # Test case: Neither a preset nor a file
    def test_unknown_source(self):
        with self.assertRaises(ScenarioError):
            raw_scenario("fig99")

    # Test case: Keys outside the scenario schema are rejected
    def test_unknown_key(self):
        with self.assertRaisesMessage(ScenarioError, "bogus"):
            build_scenario(get_preset("fig5") | {"bogus": "1"})

    # Test case: Drive must be given exactly once
    def test_both_drives(self):
        with self.assertRaises(ScenarioError):
            build_scenario(get_preset("fig5") | {"epsilon": 1.0})
        without = get_preset("fig5")
        del without["target_X"]
        with self.assertRaises(ScenarioError):
            build_scenario(without)

    # Test case: Truncation outside the supported range
    def test_bad_nmax(self):
        for value in ("1", "41", "many"):
            with self.assertRaises(ScenarioError):
                build_scenario(get_preset("fig5") | {"n_max": value})

    # Test case: A FWHM scan needs its drive grid
    def test_scan_without_grid(self):
        raw = get_preset("fig12")
        raw["drive_over_kappa"] = []
        with self.assertRaises(ScenarioError):
            build_scenario(raw)

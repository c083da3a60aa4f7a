import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from capsules.datasets import read_dataset, read_outcomes, scene_to_record, write_dataset, write_outcomes
from capsules.exceptions import DatasetFormatError
from capsules.geometry import default_library
from capsules.scenegen import GenConfig, generate_dataset


# Tests for dataset files
class DatasetFileTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / "dataset.jsonl"
        self.scenes = generate_dataset(GenConfig(sigma=0.1, draws=12), master_seed=21)

    def test_round_trip(self):
        write_dataset(self.path, self.scenes)
        self.assertEqual(read_dataset(self.path, library=default_library()), self.scenes)

    def test_writes_are_byte_identical(self):
        other = Path(self.tmp.name) / "again.jsonl"
        write_dataset(self.path, self.scenes)
        write_dataset(other, generate_dataset(GenConfig(sigma=0.1, draws=12), master_seed=21))
        self.assertEqual(self.path.read_bytes(), other.read_bytes())

    def test_invalid_json_reports_line(self):
        write_dataset(self.path, self.scenes[:1])
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write("{not json\n")
        with self.assertRaises(DatasetFormatError) as ctx:
            read_dataset(self.path)
        self.assertEqual(ctx.exception.line, 2)
        self.assertIn("line 2", str(ctx.exception))

    def test_invariant_violation(self):
        record = scene_to_record(self.scenes[0])
        record["labels"] = record["labels"][:-1]
        self.path.write_text(json.dumps(record) + "\n", encoding="utf-8")
        with self.assertRaises(DatasetFormatError) as ctx:
            read_dataset(self.path)
        self.assertIn("Invariant violated", str(ctx.exception))

    def test_points_outside_unit_box(self):
        record = scene_to_record(self.scenes[0])
        record["points"][0] = [1.5, 0.0]
        self.path.write_text(json.dumps(record) + "\n", encoding="utf-8")
        with self.assertRaises(DatasetFormatError):
            read_dataset(self.path)

    def test_mask_length_checked_against_library(self):
        record = scene_to_record(self.scenes[0])
        record["missing_mask"].append(True)
        self.path.write_text(json.dumps(record) + "\n", encoding="utf-8")
        self.assertEqual(len(read_dataset(self.path)), 1)
        with self.assertRaises(DatasetFormatError):
            read_dataset(self.path, library=default_library())

    def test_blank_lines_skipped(self):
        write_dataset(self.path, self.scenes[:2])
        text = self.path.read_text(encoding="utf-8").replace("\n", "\n\n", 1)
        self.path.write_text(text, encoding="utf-8")
        self.assertEqual(len(read_dataset(self.path)), 2)


# Tests for outcome files
class OutcomeFileTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / "outcomes" / "ransac_sigma0.jsonl"
        self.record = {
            "scene": 3,
            "method": "ransac",
            "sigma": 0.0,
            "lambda_init": None,
            "labels": [1, 1, 1, 1],
            "phantoms": [],
            "missing_slots": [4, 5, 6, 7, 8, 9, 10],
            "objects": [{"template": 1, "pose": [0.0, 0.0, 1.0, 0.0]}],
            "degenerate": False,
            "scores": {"full": {"sa": 1.0}, "gt": {"sa": 1.0}},
        }

    def test_round_trip(self):
        write_outcomes(self.path, [self.record])
        (loaded,) = read_outcomes(self.path)
        self.assertEqual(loaded["scene"], 3)
        self.assertIsNone(loaded["lambda_init"])
        self.assertEqual(loaded["objects"][0]["template"], 1)

    def test_unknown_method(self):
        self.record["method"] = "ccae"
        write_outcomes(self.path, [self.record])
        with self.assertRaises(DatasetFormatError):
            read_outcomes(self.path)

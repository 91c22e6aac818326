"""
Unit tests for artifact writers.
"""
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from src import __version__
from src.utils.io import append_line, header_lines, read_csv, read_header, write_csv


class TestArtifacts(unittest.TestCase):
    """Test cases for CSV artifacts and summary files."""

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.frame = pd.DataFrame({"t": [0.5, 1.0], "value": [1.0 / 3.0, np.exp(-1.0)]})

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_header_lines(self):
        """Hash, seed, version and extras in order."""
        text = header_lines("abc", None, {"model_hash": "def"})
        self.assertEqual(
            text.splitlines(),
            ["# config_hash=abc", "# seed=none", f"# version={__version__}", "# model_hash=def"],
        )

    def test_write_and_read(self):
        """The table reads back without its header."""
        path = write_csv(self.frame, self.tmp / "sub" / "values.csv", "abc", seed=7)
        table = read_csv(path)
        self.assertEqual(table.columns.tolist(), ["t", "value"])
        self.assertTrue(np.allclose(table["value"], self.frame["value"], rtol=1e-11))
        self.assertEqual(read_header(path), {"config_hash": "abc", "seed": "7", "version": __version__})

    def test_byte_identical(self):
        """Equal inputs give equal bytes."""
        first = write_csv(self.frame, self.tmp / "a.csv", "abc", extra={"k": 1})
        second = write_csv(self.frame.copy(), self.tmp / "b.csv", "abc", extra={"k": 1})
        self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_append_line(self):
        """Summary lines accumulate one per call."""
        path = self.tmp / "summary.txt"
        append_line(path, "check=a status=pass")
        append_line(path, "check=b status=fail\n")
        self.assertEqual(path.read_text().splitlines(), ["check=a status=pass", "check=b status=fail"])


if __name__ == "__main__":
    unittest.main()

"""
Unit tests for the result cache.
"""
import os
import shutil
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from src.cache import cache_manager
from src.cache.cache_manager import cache_result, clear_cache, clear_expired_cache, get_cache_key


class TestCacheManager(unittest.TestCase):
    """Test cases for the memoizing decorator."""

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        patcher = patch.object(cache_manager, "CACHE_DIR", self.tmp)
        patcher.start()
        self.addCleanup(patcher.stop)
        cache_manager._memory_cache.clear()
        self.calls = 0

    def tearDown(self):
        cache_manager._memory_cache.clear()
        shutil.rmtree(self.tmp, ignore_errors=True)

    def _square(self, **decorator_kwargs):
        @cache_result(**decorator_kwargs)
        def square(x):
            self.calls += 1
            return x * x
        return square

    def test_cache_key(self):
        """Keys are deterministic and ignore keyword order."""
        self.assertEqual(get_cache_key("f", 1, 2), get_cache_key("f", 1, 2))
        self.assertNotEqual(get_cache_key("f", 1, 2), get_cache_key("g", 1, 2))
        self.assertEqual(get_cache_key("f", a=1, b=2), get_cache_key("f", b=2, a=1))

    @patch.dict(os.environ, {cache_manager.DISABLE_ENV: ""})
    def test_memoizes(self):
        """A second call is served from the cache."""
        square = self._square()

        # Call twice with the same argument
        self.assertEqual(square(3), 9)
        self.assertEqual(square(3), 9)

        # Assertions
        self.assertEqual(self.calls, 1)
        self.assertEqual(len(list(self.tmp.glob("*.pkl"))), 1)
        self.assertEqual(square(4), 16)
        self.assertEqual(self.calls, 2)

    @patch.dict(os.environ, {cache_manager.DISABLE_ENV: ""})
    def test_file_hit_runs_on_load(self):
        """Entries restored from disk pass through on_load."""
        loaded = []
        square = self._square(on_load=lambda value: loaded.append(value) or value)
        square(5)
        cache_manager._memory_cache.clear()

        self.assertEqual(square(5), 25)
        self.assertEqual(self.calls, 1)
        self.assertEqual(loaded, [25])

    @patch.dict(os.environ, {cache_manager.DISABLE_ENV: ""})
    def test_rejected_entry_is_recomputed(self):
        """An on_load failure discards the stored entry."""
        def reject(value):
            raise ValueError("stale")

        square = self._square(on_load=reject)
        square(6)
        cache_manager._memory_cache.clear()
        self.assertEqual(square(6), 36)
        self.assertEqual(self.calls, 2)

    @patch.dict(os.environ, {cache_manager.DISABLE_ENV: "1"})
    def test_disabled_by_environment(self):
        """The opt-out variable bypasses the cache."""
        square = self._square()
        square(2)
        square(2)
        self.assertEqual(self.calls, 2)
        self.assertEqual(list(self.tmp.glob("*.pkl")), [])

    @patch.dict(os.environ, {cache_manager.DISABLE_ENV: ""})
    def test_key_args(self):
        """key_args selects what enters the key."""
        square = self._square(key_args=lambda x: (abs(x),))
        self.assertEqual(square(3), 9)
        self.assertEqual(square(-3), 9)
        self.assertEqual(self.calls, 1)

    @patch.dict(os.environ, {cache_manager.DISABLE_ENV: ""})
    def test_clear(self):
        """clear_cache empties memory and disk; expiry zero clears everything."""
        square = self._square()
        square(7)
        clear_cache()
        self.assertEqual(list(self.tmp.glob("*.pkl")), [])
        square(7)
        self.assertEqual(self.calls, 2)
        clear_expired_cache(expires=0)
        self.assertEqual(cache_manager._memory_cache, {})
        self.assertEqual(list(self.tmp.glob("*.pkl")), [])


if __name__ == "__main__":
    unittest.main()

import os

import numpy as np
import pytest

from cache_tools import (GRID_KIND, GRID_MAGIC, CacheCorruptionWarning, ResultCache, get_cache_dir)
from ed_tools import magnetization_grid
from utils import CACHE_ENV_VAR, DEFAULT_CACHE_DIR

T_GRID = [0.0, 0.5, 1.0]
DELTA_GRID = [0.0, 1.0]


def test_cache_dir_precedence(tmp_path, monkeypatch):
    config_file = tmp_path / "config.json"
    config_file.write_text('{"cache": {"dir": "from_config"}}')
    monkeypatch.delenv(CACHE_ENV_VAR, raising=False)
    assert get_cache_dir(config_path=str(tmp_path / "missing.json")) == DEFAULT_CACHE_DIR
    assert get_cache_dir(config_path=str(config_file)) == "from_config"
    monkeypatch.setenv(CACHE_ENV_VAR, "from_env")
    assert get_cache_dir(config_path=str(config_file)) == "from_env"
    assert get_cache_dir("explicit", str(config_file)) == "explicit"


def test_entry_layout(tmp_path):
    cache = ResultCache(tmp_path)
    entry = cache.entry(GRID_KIND, {"instance": "abc"})
    assert entry.path == os.path.join(str(tmp_path), GRID_KIND, entry.key[:2], entry.key + ".bin")
    assert cache.entry("classification", {"instance": "abc"}).path.endswith(".json")
    assert cache.entry(GRID_KIND, {"instance": "abd"}).key != entry.key
    assert not entry.exists()


def test_magnetization_grid_is_computed_once(tmp_path, ferromagnet):
    cache = ResultCache(tmp_path)
    first = cache.magnetization_grid(ferromagnet, T_GRID, DELTA_GRID)
    assert (cache.hits, cache.misses) == (0, 1)
    second = cache.magnetization_grid(ferromagnet, T_GRID, DELTA_GRID)
    assert (cache.hits, cache.misses) == (1, 1)
    np.testing.assert_array_equal(first, second)
    np.testing.assert_array_equal(first, magnetization_grid(ferromagnet, T_GRID, DELTA_GRID))


def test_grid_file_header(tmp_path, ferromagnet):
    cache = ResultCache(tmp_path)
    cache.magnetization_grid(ferromagnet, T_GRID, DELTA_GRID)
    entry = cache.entry(GRID_KIND, {"instance": ferromagnet.content_hash(), "T_grid": T_GRID,
                                    "delta_grid": DELTA_GRID, "ground_tolerance": 1e-9})
    grid, header = cache.read_grid(entry)
    assert grid.shape == (9, 3, 2)
    assert header["instance_hash"] == ferromagnet.content_hash()
    with open(entry.path, "rb") as cache_file:
        assert cache_file.read(4) == GRID_MAGIC


def test_corrupt_grid_is_recomputed(tmp_path, ferromagnet):
    cache = ResultCache(tmp_path)
    expected = cache.magnetization_grid(ferromagnet, T_GRID, DELTA_GRID)
    (path,) = [os.path.join(root, name) for root, _, names in os.walk(tmp_path) for name in names]
    with open(path, "r+b") as cache_file:
        cache_file.seek(-3, os.SEEK_END)
        cache_file.write(b"\x00\x01\x02")

    with pytest.warns(CacheCorruptionWarning):
        recomputed = cache.magnetization_grid(ferromagnet, T_GRID, DELTA_GRID)
    np.testing.assert_array_equal(recomputed, expected)
    np.testing.assert_array_equal(cache.magnetization_grid(ferromagnet, T_GRID, DELTA_GRID), expected)
    assert cache.hits == 1


def test_truncated_grid_is_corrupt(tmp_path, ferromagnet):
    cache = ResultCache(tmp_path)
    cache.magnetization_grid(ferromagnet, T_GRID, DELTA_GRID)
    (path,) = [os.path.join(root, name) for root, _, names in os.walk(tmp_path) for name in names]
    with open(path, "r+b") as cache_file:
        cache_file.truncate(6)
    with pytest.warns(CacheCorruptionWarning):
        cache.magnetization_grid(ferromagnet, T_GRID, DELTA_GRID)


def test_cached_json(tmp_path):
    cache = ResultCache(tmp_path)
    calls = []

    def compute():
        calls.append(1)
        return {"records": [1, 2, 3]}

    assert cache.cached_json("classification", {"class": 4}, compute) == {"records": [1, 2, 3]}
    assert cache.cached_json("classification", {"class": 4}, compute) == {"records": [1, 2, 3]}
    assert len(calls) == 1

    entry = cache.entry("classification", {"class": 4})
    with open(entry.path, "w", encoding="utf-8") as cache_file:
        cache_file.write('{"truncated": ')
    with pytest.warns(CacheCorruptionWarning):
        cache.cached_json("classification", {"class": 4}, compute)
    assert len(calls) == 2

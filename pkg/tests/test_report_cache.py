import json
import os

import pytest

from config.settings import SchemeId
from src.core.report_cache import ReportCache, cache_key, get_cache
from src.experiments.models import ExperimentReport
from src.experiments.runner import ExperimentRunner


@pytest.fixture
def cache(tmp_path):
    c = get_cache()
    c.use_directory(str(tmp_path))
    yield c
    c.clear()


@pytest.fixture
def report(small_config):
    return ExperimentRunner(show_progress=False).run(small_config(SchemeId.TDMA_BASELINE, trials=2))


def key_of(name: str) -> str:
    return cache_key({"scheme": name})


def test_singleton():
    assert ReportCache() is get_cache()


def test_key_ignores_dict_order():
    assert cache_key({"a": 1, "b": [1, 2]}) == cache_key({"b": [1, 2], "a": 1})
    assert cache_key({"a": 1}) != cache_key({"a": 2})


def test_set_get_from_disk(cache, report):
    key = key_of("X_CHANNEL")
    assert cache.set(key, report, summary={"scheme": "TDMA_BASELINE"})
    cache.mem_cache.clear()
    loaded = cache.get(key, ExperimentReport)
    assert loaded.points == report.points
    assert loaded.config == report.config
    assert cache.keys() == [key]


def test_entry_file_is_json(cache, report):
    key = key_of("json")
    cache.set(key, report, summary={"trials": 2})
    with open(os.path.join(cache.cache_dir, f"{key}.json"), encoding="utf-8") as f:
        payload = json.load(f)
    assert payload["summary"] == {"trials": 2}
    assert payload["report"]["config"]["scheme"] == "TDMA_BASELINE"


def test_missing(cache):
    assert cache.get(key_of("nothing"), ExperimentReport) is None


def test_invalid_key_rejected(cache, report):
    with pytest.raises(KeyError):
        cache.set("../escape", report)
    with pytest.raises(KeyError):
        cache.get("NOT-HEX", ExperimentReport)


def test_delete(cache, report):
    key = key_of("delete")
    cache.set(key, report)
    assert cache.delete(key)
    assert cache.get(key, ExperimentReport) is None
    assert not cache.delete(key)


def test_corrupt_file_is_quarantined(cache):
    key = key_of("broken")
    path = os.path.join(cache.cache_dir, f"{key}.json")
    with open(path, "w", encoding="utf-8") as f:
        f.write("{not json")
    assert cache.get(key, ExperimentReport) is None
    assert os.path.exists(path + ".corrupt")
    assert cache.keys() == []


def test_wrong_shape_is_quarantined(cache):
    key = key_of("shape")
    path = os.path.join(cache.cache_dir, f"{key}.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"summary": {}, "report": {"points": "nope"}}, f)
    assert cache.get(key, ExperimentReport) is None
    assert os.path.exists(path + ".corrupt")


def test_clear_returns_count(cache, report):
    cache.set(key_of("one"), report)
    cache.set(key_of("two"), report)
    assert cache.clear() == 2
    assert cache.keys() == []
    assert cache.clear() == 0


def test_keys_skip_foreign_files(cache, report):
    key = key_of("kept")
    cache.set(key, report)
    with open(os.path.join(cache.cache_dir, "notes.json"), "w", encoding="utf-8") as f:
        f.write("{}")
    assert cache.keys() == [key]


class TestResolve:
    def test_unique_prefix(self, cache, report):
        key = key_of("resolve")
        cache.set(key, report)
        assert cache.resolve(key[:6]) == key
        assert cache.resolve(key[:6].upper()) == key

    def test_no_match(self, cache):
        with pytest.raises(KeyError):
            cache.resolve("abc")

    def test_ambiguous_prefix(self, cache, report):
        cache.set(key_of("a"), report)
        cache.set(key_of("b"), report)
        with pytest.raises(KeyError):
            cache.resolve("")


def test_entries_carry_summary(cache, report):
    key = key_of("summary")
    cache.set(key, report, summary={"scheme": "TDMA_BASELINE", "trials": 2})
    entries = cache.entries()
    assert [e.key for e in entries] == [key]
    assert entries[0].summary["trials"] == 2


def test_unreadable_entry_is_listed(cache):
    key = key_of("garbled")
    with open(os.path.join(cache.cache_dir, f"{key}.json"), "w", encoding="utf-8") as f:
        f.write("[1, 2")
    assert cache.entries()[0].summary == {"status": "unreadable"}

import pytest

from circular_pat.utils import flatten_dotted, list_items, merge_dicts, timed, unflatten_dotted


def test_merge_dicts():
    base = {"a": 1, "b": {"c": 2, "d": 3}, "e": [1, 2]}
    merged = merge_dicts(base, {"b": {"c": 20}, "e": [3], "f": 4})
    assert merged == {"a": 1, "b": {"c": 20, "d": 3}, "e": [3], "f": 4}
    assert base["b"]["c"] == 2


class TestDotted:
    def test_unflatten(self):
        nested = unflatten_dotted({"grid.counts": [8, 8, 8], "grid": {"spacing.x": 0.1}, "kind": "plane"})
        assert nested == {"grid": {"counts": [8, 8, 8], "spacing": {"x": 0.1}}, "kind": "plane"}

    def test_conflict_with_a_scalar(self):
        with pytest.raises(ValueError):
            unflatten_dotted({"grid": 1, "grid.counts": [8, 8, 8]})

    def test_flatten_inverts_unflatten(self):
        flat = {"a.b": 1, "a.c.d": [1, 2], "e": None}
        assert flatten_dotted(unflatten_dotted(flat)) == flat


def test_list_items():
    assert list_items(["a", "b"], indent=2) == "  - a\n  - b"


class TestTimed:
    def test_measures_wall_time(self, mocker):
        mocker.patch("circular_pat.utils.time.perf_counter", side_effect=[1.0, 1.25])
        timings = {}
        with timed("invert", timings) as t:
            pass
        assert t["wall_ms"] == pytest.approx(250.0)
        assert timings == {"invert": pytest.approx(250.0)}

    def test_records_on_error(self):
        timings = {}
        with pytest.raises(RuntimeError):
            with timed("forward", timings):
                raise RuntimeError
        assert "forward" in timings

import numpy as np
import pytest

from waveplate.report import format_csv, format_kv, rows_to_csv, sha256, svg_plot


def test_csv_roundtrip_is_exact():
    x = np.random.default_rng(0).standard_normal(50) * 10.0 ** np.arange(-25, 25)
    text = format_csv(["x"], [x])
    back = np.array([float(v) for v in text.splitlines()[1:]])
    assert np.array_equal(back, x)


def test_csv_shapes_and_types():
    text = format_csv(["a", "b", "c"], [[1, 2], [0.5, 1.5], [True, False]])
    assert text.splitlines() == ["a,b,c", "1,5.00000000000000000e-01,1", "2,1.50000000000000000e+00,0"]
    with pytest.raises(ValueError):
        format_csv(["a", "b"], [[1], [1, 2]])
    with pytest.raises(ValueError):
        rows_to_csv([])


def test_kv_and_hash():
    assert format_kv({"a": 1, "b": 0.25}) == "a = 1\nb = 2.50000000000000000e-01\n"
    assert sha256(b"") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_svg_deterministic_and_refuses_empty():
    s = [(np.arange(5.0), np.exp(-np.arange(5.0)), "E")]
    a = svg_plot(s, "t", "E", logy=True)
    assert a == svg_plot(s, "t", "E", logy=True)
    assert a.startswith("<svg") and "log10" in a
    with pytest.raises(ValueError):
        svg_plot([([], [], "x")], "t", "E")

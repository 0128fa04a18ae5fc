import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfpp.field import GridSpec, sample_spectral_lgf
from lfpp.io import (FormatError, dumps_json, field_bytes, kernel_bytes, read_csv, read_field, read_kernel,
                     write_csv, write_field, write_json)
from lfpp.kernel import build_kernel, named_bump


def test_kernel_round_trip(tmp_path):
    k = build_kernel(0.25, named_bump("standard", 2))
    from lfpp.io import write_kernel
    write_kernel(tmp_path / "k.lfpk", k)
    back = read_kernel(tmp_path / "k.lfpk")
    assert back["d"] == 2 and back["epsilon"] == 0.25
    assert np.array_equal(back["r"], k.radius_grid) and np.array_equal(back["K"], k.values)


def test_field_round_trip_bitwise(tmp_path):
    s = sample_spectral_lgf(GridSpec.from_box(2, 64, 4.0), seed=11)
    write_field(tmp_path / "f.lfpf", s)
    back = read_field(tmp_path / "f.lfpf")
    assert back["seed"] == 11 and back["n"] == 64
    assert np.array_equal(back["values"], s.values)
    assert (tmp_path / "f.lfpf").read_bytes() == field_bytes(2, 64, s.grid.spacing, s.epsilon, s.sampler_id,
                                                           11, s.values)


def test_corrupt_files_rejected(tmp_path):
    good = kernel_bytes(2, 0.5, np.arange(4.0), np.ones(4))
    p = tmp_path / "k.lfpk"
    p.write_bytes(b"XXXX" + good[4:])
    with pytest.raises(FormatError, match="magic"):
        read_kernel(p)
    p.write_bytes(good[:-8])
    with pytest.raises(FormatError):
        read_kernel(p)
    p.write_bytes(good[:10])
    with pytest.raises(FormatError, match="truncated"):
        read_kernel(p)
    with pytest.raises(FormatError):
        field_bytes(2, 4, 1.0, 0.1, 0, 0, np.zeros((4, 5)))


def test_csv_round_trip_exact(tmp_path):
    vals = [[0.1, 1 / 3, 7], [math.pi, -2.5e-300, 0]]
    write_csv(tmp_path / "t.csv", ["a", "b", "c"], vals)
    header, rows = read_csv(tmp_path / "t.csv")
    assert header == ["a", "b", "c"]
    assert [[float(x) for x in r] for r in rows] == [[float(x) for x in r] for r in vals]


def test_json_is_deterministic_and_handles_special_values(tmp_path):
    obj = {"b": np.float64(np.inf), "a": np.arange(3), "c": {"z": np.bool_(True), "y": float("nan")}}
    text = dumps_json(obj)
    assert text == dumps_json(dict(reversed(list(obj.items()))))
    data = json.loads(text)
    assert data["b"] == "inf" and data["a"] == [0, 1, 2] and data["c"]["y"] == "nan"
    write_json(tmp_path / "x.json", obj)
    assert (tmp_path / "x.json").read_text() == text


@settings(max_examples=30, deadline=None)
@given(vals=st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20),
       eps=st.floats(1e-6, 10))
def test_kernel_bytes_round_trip(tmp_path_factory, vals, eps):
    r = np.arange(len(vals), dtype=float)
    p = tmp_path_factory.mktemp("k") / "k.lfpk"
    p.write_bytes(kernel_bytes(3, eps, r, np.array(vals)))
    back = read_kernel(p)
    assert back["epsilon"] == eps and np.array_equal(back["K"], np.array(vals))

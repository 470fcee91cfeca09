import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chtumor import __version__
from chtumor.grid import Grid
from chtumor.io import (MAGIC, config_hash, read_csv, read_report, read_snapshot, write_columns, write_csv,
                        write_report, write_snapshot)


@given(st.sampled_from([(5,), (3, 4), (1,)]), st.floats(-1e3, 1e3), st.data())
def test_snapshot_round_trip(tmp_path_factory, n, t, data):
    g = Grid(n, tuple(1.0 + i for i in range(len(n))))
    v = data.draw(arrays(float, g.shape, elements=st.floats(-1e300, 1e300)))
    p = tmp_path_factory.mktemp("snap") / "f.pfc"
    write_snapshot(p, g, t, v)
    g2, t2, v2 = read_snapshot(p)
    assert g2 == g and t2 == t
    assert np.array_equal(v2, v)


def test_snapshot_layout(tmp_path):
    g = Grid((2, 3), (1.0, 2.0))
    v = np.arange(6.0).reshape(2, 3)
    write_snapshot(tmp_path / "a.pfc", g, 0.5, v)
    raw = (tmp_path / "a.pfc").read_bytes()
    assert raw[:4] == MAGIC
    assert len(raw) == 4 + 4 + 1 + 2 * 4 + 2 * 8 + 8 + 6 * 8
    assert np.array_equal(np.frombuffer(raw[-48:], "<f8"), np.arange(6.0))


def test_snapshot_rejects_corruption(tmp_path):
    g = Grid((4,), (1.0,))
    p = tmp_path / "a.pfc"
    write_snapshot(p, g, 0.0, np.zeros(4))
    raw = p.read_bytes()
    (tmp_path / "m.pfc").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "s.pfc").write_bytes(raw[:-8])
    (tmp_path / "v.pfc").write_bytes(raw[:4] + (9).to_bytes(4, "little") + raw[8:])
    for name in ("m.pfc", "s.pfc", "v.pfc"):
        with pytest.raises(ValueError):
            read_snapshot(tmp_path / name)
    with pytest.raises(ValueError):
        write_snapshot(p, g, 0.0, np.zeros(5))


def test_csv_round_trip(tmp_path):
    x = np.array([0.1, 1 / 3, -2e-300])
    write_columns(tmp_path / "a.csv", {"step": np.arange(3), "x": x, "ok": [True, False, True]})
    header, a = read_csv(tmp_path / "a.csv")
    assert header == ["step", "x", "ok"]
    assert np.array_equal(a[:, 1], x)
    assert list(a[:, 2]) == [1.0, 0.0, 1.0]
    assert (tmp_path / "a.csv").read_text().splitlines()[2] == "1,0.33333333333333331,false"
    with pytest.raises(ValueError):
        write_csv(tmp_path / "b.csv", ["a", "b"], [[1]])


def test_report_and_hash(tmp_path):
    h = config_hash({"b": "2", "a": "1"}, 5)
    assert h == config_hash({"a": "1", "b": "2"}, 5)
    assert h != config_hash({"a": "1", "b": "2"}, 6)
    assert len(h) == 64
    write_report(tmp_path / "r.txt", {"x": 0.5, "flag": True, "v": [1.0, 2.0]}, h)
    lines = (tmp_path / "r.txt").read_text().splitlines()
    assert lines[0] == f"artifact_version = {__version__}"
    assert lines[1] == f"config_hash = {h}"
    assert read_report(tmp_path / "r.txt")["v"] == "1 2"
    assert read_report(tmp_path / "r.txt")["flag"] == "true"

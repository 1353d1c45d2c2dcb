import numpy as np
import pytest

from mcsvortex import io as mio
from mcsvortex.green import GreenTable, TorusLattice
from mcsvortex.radial import shoot


def test_profile_round_trip(tmp_path):
    p = shoot(-1.0, 0)
    path = tmp_path / "p.txt"
    mio.save_profile(p, path)
    q = mio.load_profile(path)
    assert (q.m, q.s, q.beta, q.a1, q.I1) == (p.m, p.s, p.beta, p.a1, p.I1)
    assert np.array_equal(q.w, p.w) and np.array_equal(q.r_grid, p.r_grid)
    r = np.linspace(0.5, 20, 11)
    assert np.allclose(q(r), p(r), atol=1e-12)


def test_profile_missing_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 2 3\n")
    with pytest.raises(ValueError):
        mio.load_profile(path)


def test_state_round_trip(tmp_path, topo_state):
    path = tmp_path / "s.state"
    mio.save_state(topo_state, path)
    back = mio.load_state(path)
    assert np.array_equal(back.v, topo_state.v) and np.array_equal(back.N, topo_state.N)
    assert (back.lam, back.mu) == (topo_state.lam, topo_state.mu)
    assert back.vortices.points == topo_state.vortices.points
    assert np.array_equal(back.background.u0, topo_state.background.u0)
    same = mio.load_state(path, topo_state.background)
    assert same.background is topo_state.background


def test_state_rejects_garbage(tmp_path):
    path = tmp_path / "x.state"
    path.write_bytes(b"not a state")
    with pytest.raises(ValueError):
        mio.load_state(path)


def test_atomic_write_leaves_no_temporaries(tmp_path):
    path = tmp_path / "sub" / "a.txt"
    mio.atomic_write(path, "one")
    mio.atomic_write(path, b"two")
    assert path.read_bytes() == b"two"
    assert [p.name for p in path.parent.iterdir()] == ["a.txt"]


def test_atomic_write_failure_keeps_old_file(tmp_path):
    path = tmp_path / "a.txt"
    mio.atomic_write(path, "old")
    with pytest.raises(TypeError):
        mio.atomic_write(path, 12345)
    assert path.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]


def test_csv_deterministic(tmp_path):
    rows = [[1, 0.1, True, float("nan")], [2, -1e-300, False, float("inf")]]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    mio.write_csv(a, ["i", "x", "flag", "y"], rows)
    mio.write_csv(b, ["i", "x", "flag", "y"], rows)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text() == ("i,x,flag,y\n1,1.000000000000e-01,true,nan\n"
                             "2,-1.000000000000e-300,false,inf\n")


def test_green_cache(tmp_path, monkeypatch):
    lat = TorusLattice((1.0, 0.0), (0.2, 1.1))
    monkeypatch.setenv(mio.CACHE_ENV, str(tmp_path))
    t1 = mio.load_green_table(lat, 32, (0.1, 0.2))
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    t2 = mio.load_green_table(lat, 32, (0.1, 0.2))
    ref = GreenTable(lat, 32, (0.1, 0.2))
    for t in (t1, t2):
        assert np.array_equal(t.gamma, ref.gamma)
        fin = np.isfinite(ref.G)
        assert np.array_equal(t.G[fin], ref.G[fin])
    assert mio.green_cache_key(lat, 32, (0.1, 0.2)) != mio.green_cache_key(lat, 64, (0.1, 0.2))


def test_green_without_cache(monkeypatch):
    monkeypatch.delenv(mio.CACHE_ENV, raising=False)
    assert mio.cache_dir() is None
    t = mio.load_green_table(TorusLattice.square(), 32)
    assert t.gamma.shape == (32, 32)

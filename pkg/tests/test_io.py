import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from stabtopo.io import (ConfigError, load_config, parse_config, read_density_csv,
                         read_pgm, write_density_csv, write_pgm, write_summary)

MINIMAL = """
[problem]
type = "double_clamped_beam"
[optimizer]
V_f = 0.4
"""


def test_defaults_filled():
    cfg = parse_config(MINIMAL, "optimize")
    assert cfg.optimizer["V_f"] == 0.4
    assert cfg.optimizer["m"] == 6
    assert cfg.filter["r_min"] == 1.5
    assert cfg.problem["nx"] == 60


@pytest.mark.parametrize("text,needle", [
    (MINIMAL + "[extra]\na = 1\n", "unknown section"),
    (MINIMAL + "typo_key = 3\n", "typo_key"),
    ('[problem]\ntype = "grid"\n', "optimizer"),
    ('[problem]\ntype = "grid"\n[optimizer]\nm = 2\n', "V_f"),
    (MINIMAL.replace("0.4", '"big"'), "V_f"),
    ("[problem\n", "<string>"),
])
def test_strict_parsing(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text, "optimize")


def test_int_promoted_to_float_but_not_bool():
    cfg = parse_config(MINIMAL.replace("0.4", "1"), "optimize")
    assert cfg.optimizer["V_f"] == 1.0 and isinstance(cfg.optimizer["V_f"], float)
    cfg = parse_config(MINIMAL + "theta = 0\n", "optimize")
    assert isinstance(cfg.optimizer["theta"], float)
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "max_iter = true\n", "optimize")


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.toml")


@given(grid=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                   elements=st.floats(allow_nan=False, allow_infinity=False,
                                      width=64)),
       h=st.floats(1e-3, 1e3))
def test_density_csv_round_trip_is_bit_exact(tmp_path_factory, grid, h):
    f = tmp_path_factory.mktemp("d") / "rho.csv"
    ny, nx = grid.shape
    write_density_csv(f, grid.ravel(), nx, ny, h)
    rho, nx2, ny2, h2 = read_density_csv(f)
    assert (nx2, ny2) == (nx, ny) and h2 == h
    assert np.array_equal(rho.view(np.uint64), grid.ravel().view(np.uint64))


def test_density_csv_errors(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("0.1,0.2\n")
    with pytest.raises(ConfigError, match="header"):
        read_density_csv(f)
    f.write_text("# nx=3 ny=1 elem_size=1.0\n0.1,0.2\n")
    with pytest.raises(ConfigError, match="shape"):
        read_density_csv(f)
    with pytest.raises(ValueError):
        write_density_csv(f, np.ones(5), 2, 2, 1.0)


def test_pgm_orientation_and_scale(tmp_path):
    rho = np.array([1.0, 0.0, 0.0,      # bottom row
                    0.0, 0.0, 0.5])     # top row
    f = tmp_path / "r.pgm"
    write_pgm(f, rho, 3, 2, scale=2)
    img = read_pgm(f)
    assert img.shape == (4, 6)
    assert img[-1, 0] == 0               # solid bottom-left is black
    assert img[0, -1] == 128              # grey top-right
    assert img[0, 0] == 255


def test_summary_serializes_numpy(tmp_path):
    f = tmp_path / "s.json"
    write_summary(f, {"a": np.float64(1.5), "b": np.arange(3), "c": np.int64(2)})
    assert json.loads(f.read_text()) == {"a": 1.5, "b": [0, 1, 2], "c": 2}

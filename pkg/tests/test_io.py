import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpi.grid import GridSpec
from fpi.io import (
    AnalysisSpec, ConfigError, Experiment, OutputDir, config_to_dict, csv_text, emit_plot_data, parse_config,
    parse_config_text, read_csv, read_snapshot, serialize_config, sha256_of, write_snapshot,
)
from fpi.plate import PotentialSpec
from fpi.stepper import EnergyLedger, ForcingSpec, InitialSpec, RunConfig, initial_state, run


def test_minimal_config_gets_defaults():
    exp = parse_config_text('{"grid": {"cells": [8, 8]}}')
    assert exp.run.grid.cells == (8, 8)
    assert exp.run.grid.nu == 1.0
    assert exp.run.dt == RunConfig().dt
    assert exp.analysis == AnalysisSpec()
    assert parse_config_text("{}") == Experiment()


def test_unknown_keys_rejected_with_line():
    text = '{\n  "grid": {\n    "cells": [8, 8],\n    "cellz": 3\n  }\n}'
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text)
    assert exc.value.field == "grid.cellz" and exc.value.line == 4
    with pytest.raises(ConfigError, match="unknown key steps"):
        parse_config_text('{"steps": 3}')


def test_malformed_json_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config_text('{\n  "dt": 0.1,\n  "T": \n}')
    assert exc.value.line == 4


def test_inconsistent_mu_lambda_names_field():
    with pytest.raises(ConfigError) as exc:
        parse_config_text('{"grid": {"lame_lambda": 5.0, "poisson_mu": 0.25}}')
    assert exc.value.field.startswith("grid.")
    with pytest.raises(ConfigError) as exc:
        parse_config_text('{"dt": 0}')
    assert exc.value.field == "dt"


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "nope.json")


experiments = st.builds(
    lambda n, nu, lam, kind, amp, ikind, seed, dt, theta: Experiment(
        RunConfig(GridSpec(2, (n, n + 2), nu=nu, lame_lambda=lam), PotentialSpec("quartic", 2.0),
                  ForcingSpec(kind, amp), InitialSpec(ikind, 0.5, seed=seed), dt=dt, T=1.0, theta=theta),
        AnalysisSpec(seed=seed)),
    st.integers(3, 20), st.floats(0.01, 10), st.floats(0, 10), st.sampled_from(["zero", "vortex", "shear"]),
    st.floats(0, 5), st.sampled_from(["zero", "bump", "random"]), st.integers(0, 2**64 - 1),
    st.floats(1e-4, 0.1), st.floats(0.5, 1.0))


@settings(max_examples=40, deadline=None)
@given(experiments)
def test_serialize_round_trip(exp):
    text = serialize_config(exp)
    back = parse_config_text(text)
    assert back == exp
    assert serialize_config(back) == text


def test_config_dict_is_fully_resolved():
    d = config_to_dict(Experiment())
    assert set(d) >= {"grid", "potential", "forcing", "initial", "analysis", "dt", "T", "theta"}
    assert d["grid"]["lame_lambda"] is not None


def test_empty_ledger_is_header_only(tmp_path):
    out = OutputDir(tmp_path)
    emit_plot_data(out, "ledger", EnergyLedger())
    header, data = read_csv(tmp_path / "energy.csv")
    assert header[0] == "t" and data.shape == (0, len(header))


def test_spectrum_ordering(tmp_path):
    ev = np.array([-3 + 1j, -1, -3 - 1j, -0.5 + 2j, -0.5 - 2j])
    emit_plot_data(OutputDir(tmp_path), "spectrum", ev)
    _, d = read_csv(tmp_path / "spectrum.csv")
    assert d.tolist() == [[-0.5, 2], [-0.5, -2], [-1, 0], [-3, 1], [-3, -1]]


def test_unknown_plot_kind(tmp_path):
    with pytest.raises(ValueError):
        emit_plot_data(OutputDir(tmp_path), "histogram", None)


def test_csv_is_bit_exact():
    x = 0.1 + 0.2
    text = csv_text(("a",), [(x,)])
    assert float(text.splitlines()[1]) == x


def test_snapshot_round_trip(tmp_path, g2, g3):
    out = OutputDir(tmp_path)
    for name, g in (("s2", g2), ("s3", g3)):
        U = dataclasses.replace(initial_state(g, InitialSpec("random", 1.0, seed=4)), t=0.75)
        write_snapshot(out, name, U)
        V = read_snapshot(tmp_path / name)
        assert V.t == 0.75 and V.grid.spec == g.spec
        for a, b in ((U.v, V.v), (U.u, V.u), (U.w, V.w)):
            assert np.array_equal(a, b)
        header = json.loads((tmp_path / f"{name}.json").read_text())
        assert header["dtype"] == "<f8"
        assert (tmp_path / f"{name}.bin").stat().st_size == 8 * sum(f["count"] for f in header["fields"])


def test_manifest_hashes(tmp_path):
    out = OutputDir(tmp_path)
    out.write_text("a.txt", "hello\n")
    out.write_json("sub/b.json", {"x": np.float64(1.5), "y": np.inf})
    out.write_manifest(Experiment(), "simulate", 7, {"wall_seconds": 0.1})
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["seed"] == 7 and m["subcommand"] == "simulate"
    assert {f["path"] for f in m["files"]} == {"a.txt", "sub/b.json"}
    for f in m["files"]:
        assert f["sha256"] == sha256_of(tmp_path / f["path"])
        assert f["bytes"] == (tmp_path / f["path"]).stat().st_size
    assert json.loads((tmp_path / "sub/b.json").read_text()) == {"x": 1.5, "y": "inf"}
    assert set(m["versions"]) == {"fpi", "python", "numpy", "scipy"}


def test_csv_outputs_identical_across_runs(tmp_path):
    cfg = RunConfig(GridSpec(2, (6, 6), lame_lambda=2.0), PotentialSpec("quartic", 1.0), ForcingSpec("vortex", 1.0),
                    InitialSpec("random", 0.5, seed=3), dt=0.01, T=0.2)
    for k in range(2):
        emit_plot_data(OutputDir(tmp_path / str(k)), "ledger", run(cfg)[1])
    assert (tmp_path / "0/energy.csv").read_bytes() == (tmp_path / "1/energy.csv").read_bytes()

import json

import numpy as np
import pytest

from s2inverse.cli import EXIT_CONFIG, main
from s2inverse.mapio import read_map, write_map
from s2inverse.sphere import HarmonicCoeffs, SphMap


def _write_config(tmp_path, **overrides):
    raw = {
        "scenario": "topography",
        "L": 8,
        "seed": 5,
        "regularizer": "weighted-lp",
        "mask": {"fraction": 0.25},
        "output_dir": str(tmp_path / "out"),
        "solver": {"max_iter": 200},
    }
    raw.update(overrides)
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    return str(path)


def _read_json(path):
    with open(path, encoding="utf-8") as file:
        return json.load(file)


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "s2inverse" in capsys.readouterr().out


def test_simulate_writes_outputs(tmp_path, capsys):
    main(["-c", _write_config(tmp_path), "simulate"])
    out = tmp_path / "out"
    truth = read_map(out / "truth.s2map")
    mask = read_map(out / "mask.s2map")
    assert truth.grid.L == 8
    assert int(mask.values.sum()) == 120 - 30
    summary = _read_json(out / "simulate.json")
    assert summary["measurements"] == 90
    assert "simulated" in capsys.readouterr().out


def test_seed_and_output_overrides(tmp_path):
    config = _write_config(tmp_path)
    main(["-c", config, "--seed", "11", "-o", str(tmp_path / "a"), "simulate"])
    main(["-c", config, "--seed", "11", "-o", str(tmp_path / "b"), "simulate"])
    main(["-c", config, "-o", str(tmp_path / "c"), "simulate"])
    a = read_map(tmp_path / "a" / "observed.s2map").values
    b = read_map(tmp_path / "b" / "observed.s2map").values
    c = read_map(tmp_path / "c" / "observed.s2map").values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert _read_json(tmp_path / "a" / "simulate.json")["settings"]["seed"] == 11


def test_reconstruct_writes_solution_and_summary(tmp_path, capsys):
    main(["-c", _write_config(tmp_path), "reconstruct"])
    out = tmp_path / "out"
    assert read_map(out / "solution.s2map").values.shape == (8, 15)
    summary = _read_json(out / "reconstruct.json")
    assert summary["lambda"] > 0.0
    assert summary["iterations"] >= 1
    assert "SNR" in capsys.readouterr().out


def test_reconstruct_is_bit_reproducible(tmp_path):
    config = _write_config(tmp_path)
    main(["-c", config, "--seed", "7", "-o", str(tmp_path / "first"), "reconstruct"])
    main(["-c", config, "--seed", "7", "-o", str(tmp_path / "second"), "reconstruct"])
    first = (tmp_path / "first" / "solution.s2map").read_bytes()
    second = (tmp_path / "second" / "solution.s2map").read_bytes()
    assert first == second


def test_uq_lci_command(tmp_path):
    config = _write_config(
        tmp_path,
        regularizer="l2-squared",
        lam=1.0,
        sigma=2.0,
        uq={"method": "gaussian-analytic", "blocks": [2, 3]},
    )
    main(["-c", config, "uq-lci"])
    out = tmp_path / "out"
    summary = _read_json(out / "uq_lci.json")
    assert summary["regions"] == 6
    lengths = read_map(out / "lci_length.s2map").values
    assert lengths.shape == (8, 15)
    assert np.all(lengths > 0.0)


def test_uq_test_command(tmp_path):
    config = _write_config(
        tmp_path,
        regularizer="l2-squared",
        lam=1.0,
        sigma=2.0,
        uq={"method": "gaussian-analytic", "feature": [2, 4, 3, 6]},
    )
    main(["-c", config, "uq-test"])
    summary = _read_json(tmp_path / "out" / "uq_test.json")
    assert summary["verdict"] in ("significant", "indeterminate")
    assert read_map(tmp_path / "out" / "surrogate.s2map").values.shape == (8, 15)


def test_transform_commands(tmp_path, real_map8):
    source = write_map(tmp_path / "map.s2map", real_map8)
    main(["transform", "--input", str(source), "--kind", "forward-sht", "--output", str(tmp_path / "alm.s2map")])
    coeffs = read_map(tmp_path / "alm.s2map")
    assert isinstance(coeffs, HarmonicCoeffs)

    main(["transform", "--input", str(tmp_path / "alm.s2map"), "--kind", "inverse-sht", "--output", str(tmp_path / "back.s2map")])
    back = read_map(tmp_path / "back.s2map")
    assert np.allclose(back.values, real_map8.values, atol=1e-10)

    main(["transform", "--input", str(source), "--kind", "wavelet", "--output", str(tmp_path / "wav")])
    assert (tmp_path / "wav" / "scaling.s2map").exists()
    assert list((tmp_path / "wav").glob("wavelet_j*_k0.s2map"))


def test_transform_rejects_wrong_file_kind(tmp_path, real_map8):
    source = write_map(tmp_path / "map.s2map", real_map8)
    with pytest.raises(SystemExit) as info:
        main(["transform", "--input", str(source), "--kind", "inverse-sht", "--output", str(tmp_path / "x.s2map")])
    assert info.value.code == EXIT_CONFIG


def test_render_command(tmp_path, real_map8):
    source = write_map(tmp_path / "map.s2map", real_map8)
    main(["render", "--input", str(source), "--output", str(tmp_path / "map.ppm"), "--width", "32"])
    assert (tmp_path / "map.ppm").read_bytes().startswith(b"P6\n32 16\n255\n")
    with pytest.raises(SystemExit) as info:
        main(["render", "--input", str(source), "--output", str(tmp_path / "tiny.ppm"), "--width", "4"])
    assert info.value.code == EXIT_CONFIG


def test_missing_config_exits_with_config_code(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate"])
    assert info.value.code == EXIT_CONFIG
    assert "needs --config" in capsys.readouterr().err

    with pytest.raises(SystemExit) as info:
        main(["-c", str(tmp_path / "absent.yaml"), "simulate"])
    assert info.value.code == EXIT_CONFIG


def test_invalid_config_exits_with_config_code(tmp_path, capsys):
    config = _write_config(tmp_path, L=1)
    with pytest.raises(SystemExit) as info:
        main(["-c", config, "reconstruct"])
    assert info.value.code == EXIT_CONFIG
    assert "L must be an integer >= 2." in capsys.readouterr().err


def test_unreadable_map_exits_with_config_code(tmp_path):
    bad = tmp_path / "bad.s2map"
    bad.write_bytes(b"not a map")
    with pytest.raises(SystemExit) as info:
        main(["render", "--input", str(bad), "--output", str(tmp_path / "bad.ppm")])
    assert info.value.code == EXIT_CONFIG


def test_pixel_map_values_survive_render_sidecar(tmp_path, grid8):
    source = write_map(tmp_path / "ones.s2map", SphMap(grid8, 0, np.ones(grid8.shape)))
    main(["render", "--input", str(source), "--output", str(tmp_path / "img" / "ones.ppm"), "--width", "16"])
    assert np.all(read_map(tmp_path / "img" / "ones.s2map").values == 1.0)

import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from spflow.cli import EXIT_CONFIG, EXIT_OK, EXIT_VERIFY_FAIL, main
from spflow.config import load_run_config
from spflow.grid import Field, Grid3, read_field, write_field
from spflow.model import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def small_doc(tmp_path):
    return {
        "box": {"L": 4.0, "n": 12},
        "model": {"potential": {"constant": 1.0}, "p": 4.5},
        "cones": {"eps": 0.05},
        "minimax": {
            "m": 4,
            "seeds": {
                "center1": [-1.6, 0, 0],
                "center2": [1.6, 0, 0],
                "radius": 1.4,
                "amplitude": 2.0,
            },
        },
        "output": {"dir": str(tmp_path / "out")},
        "seed": 99,
    }


def test_missing_config_file_exit_1(capsys):
    assert main(["solve", "/nonexistent/config.json"]) == EXIT_CONFIG
    assert "/nonexistent/config.json" in capsys.readouterr().err


def test_invalid_exponent_exit_1(tmp_path, small_doc, capsys):
    small_doc["model"]["p"] = 2.5
    path = write_config(tmp_path, small_doc)
    assert main(["solve", str(path)]) == EXIT_CONFIG
    assert "3 < mu <= p < 6" in capsys.readouterr().err


def test_unknown_keys_rejected(tmp_path, small_doc):
    small_doc["extra_section"] = {}
    path = write_config(tmp_path, small_doc)
    assert main(["solve", str(path)]) == EXIT_CONFIG
    with pytest.raises(ConfigError, match="unknown top-level"):
        load_run_config(path)


def test_unknown_nested_key_rejected(tmp_path, small_doc):
    small_doc["model"]["typo_key"] = 1
    with pytest.raises(ConfigError, match="typo_key"):
        load_run_config(write_config(tmp_path, small_doc))


def test_solve_small_end_to_end(tmp_path, small_doc, capsys):
    path = write_config(tmp_path, small_doc)
    assert main(["solve", str(path)]) == EXIT_OK
    out_dir = Path(small_doc["output"]["dir"])
    manifests = list(out_dir.glob("manifest_*.json"))
    assert len(manifests) == 1
    manifest = json.loads(manifests[0].read_text())
    # every registered output exists
    for fname in manifest["outputs"]:
        assert Path(fname).exists()
    sols = list(out_dir.glob("solution_*.spfld"))
    assert len(sols) == 1
    u = read_field(sols[0])
    assert u.grid.n == 12
    assert np.isfinite(u.values).all()
    diag = list(out_dir.glob("diagnostics_*.csv"))
    assert len(diag) == 1


def test_solve_determinism(tmp_path, small_doc):
    path = write_config(tmp_path, small_doc)
    assert main(["solve", str(path)]) == EXIT_OK
    out_dir = Path(small_doc["output"]["dir"])
    sol = next(out_dir.glob("solution_*.spfld"))
    first = sol.read_bytes()
    shutil.rmtree(out_dir)
    assert main(["solve", str(path)]) == EXIT_OK
    sol = next(out_dir.glob("solution_*.spfld"))
    assert sol.read_bytes() == first


def test_continuation_requires_positive_lambda(tmp_path, small_doc, capsys):
    path = write_config(tmp_path, small_doc)
    assert main(["continuation", str(path)]) == EXIT_CONFIG
    assert "lambda" in capsys.readouterr().err


def test_verify_passes_on_default_config(tmp_path, capsys):
    doc = json.loads((CONFIGS / "verify_small.json").read_text())
    doc["output"] = {"dir": str(tmp_path / "out")}
    path = write_config(tmp_path, doc)
    assert main(["verify", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_verify_fault_injection_fails(tmp_path, capsys):
    doc = json.loads((CONFIGS / "verify_small.json").read_text())
    doc["output"] = {"dir": str(tmp_path / "out")}
    doc["fault"] = "kernel_sign_flip"
    path = write_config(tmp_path, doc)
    assert main(["verify", str(path)]) == EXIT_VERIFY_FAIL
    assert "FAIL" in capsys.readouterr().out


def test_export_vtk_roundtrip(tmp_path, rng):
    g = Grid3(L=2.0, n=6)
    u = Field(g, rng.standard_normal((6, 6, 6)))
    dump = tmp_path / "u.spfld"
    write_field(dump, u)
    out = tmp_path / "u.vtk"
    assert main(["export-vtk", str(dump), str(out)]) == EXIT_OK
    text = out.read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert "DATASET STRUCTURED_POINTS" in text[3]
    assert f"DIMENSIONS {g.n} {g.n} {g.n}" in text[4]
    data = []
    start = text.index("LOOKUP_TABLE default") + 1
    for line in text[start:]:
        data.extend(float(tok) for tok in line.split())
    # x varies fastest in legacy VTK ordering
    np.testing.assert_allclose(
        np.array(data).reshape((6, 6, 6)).transpose(2, 1, 0), u.values, rtol=1e-15
    )


def test_export_vtk_zero_field(tmp_path):
    g = Grid3(L=1.0, n=4)
    dump = tmp_path / "z.spfld"
    write_field(dump, Field.zeros(g))
    out = tmp_path / "z.vtk"
    assert main(["export-vtk", str(dump), str(out)]) == EXIT_OK
    assert "0.0" in out.read_text()


def test_export_vtk_truncated_dump(tmp_path, rng, capsys):
    g = Grid3(L=2.0, n=6)
    dump = tmp_path / "u.spfld"
    write_field(dump, Field(g, rng.standard_normal((6, 6, 6))))
    raw = dump.read_bytes()
    dump.write_bytes(raw[:-17])
    assert main(["export-vtk", str(dump), str(tmp_path / "u.vtk")]) == EXIT_CONFIG
    assert "byte" in capsys.readouterr().err


def test_shipped_configs_parse():
    for name in ("solve_small.json", "solve_p45.json", "continuation_p35.json", "verify_small.json"):
        rc = load_run_config(CONFIGS / name)
        assert rc.model.p > 3.0

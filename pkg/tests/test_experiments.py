import json
from pathlib import Path

import pandas as pd
import pytest
from omegaconf import OmegaConf

from src.configutil import load_config
from src.errors import ConfigValidationError
from src.experiments import EXPERIMENTS, collect, evaluate_point, get_experiment, grid_for, run
from src.polymer_lab import EFFWALK, SUBCOMMANDS


def config(experiment, **extra):
    return load_config({
        "name": f"{experiment}-test", "experiment": experiment,
        "constants": {"beta": 4.0, "chi": 2.0}, **extra,
    })


def test_registry_matches_cli():
    assert set(EXPERIMENTS) == set(SUBCOMMANDS) | {f"effwalk-{name}" for name in EFFWALK}
    with pytest.raises(ConfigValidationError):
        get_experiment("teleport")


def test_twopoint_grid():
    cfg = config("twopoint", sweep={"beta": [3.0, 4.0], "points": [[1, 0], [2, 1]]},
                 options={"variants": ["free", "pinned"]})
    grid = grid_for(cfg)
    assert len(grid) == 8
    assert grid[0] == {"beta": 3.0, "x": 1, "y": 0, "variant": "FREE"}
    with pytest.raises(ConfigValidationError):
        grid_for(config("twopoint", sweep={"points": [[1, 0, 2]]}))


def test_ratio_zero_run(tmp_path):
    cfg = config("ratio", sweep={"L": [2, 3]})
    manifest = run(cfg, out=tmp_path)
    assert manifest.passed, manifest.failures()
    assert manifest.n_rows == 2
    assert set(manifest.payloads) == {"ratio-test.csv", "ratio-test.fits.csv"}
    rows = pd.read_csv(tmp_path / "ratio-test.csv")
    assert list(rows.L) == [2, 3]
    assert (rows.ratio_log.abs() <= 1e-9).all()
    saved = json.loads((tmp_path / "ratio-test.manifest.json").read_text())
    assert saved["config_hash"] == manifest.config_hash
    assert [c["name"] for c in saved["checks"]] == [c["name"] for c in manifest.checks]

    again = run(cfg, out=tmp_path / "again")
    assert again.payloads == manifest.payloads


def test_ratio_run_with_cache(tmp_path):
    cfg = config("ratio", sweep={"L": [2]})
    cold = run(cfg, out=tmp_path / "a", cache_dir=tmp_path / "cache")
    warm = run(cfg, out=tmp_path / "b", cache_dir=tmp_path / "cache")
    assert cold.payloads == warm.payloads


def test_pinned_equals_restricted(tmp_path):
    cfg = config(
        "twopoint", sweep={"points": [[2, 0], [2, 1]]},
        options={"variants": ["PINNED", "RESTRICTED_HALFPLANE"], "mode": "CLUSTER"},
        constants={"beta": 4.0, "chi": 2.0, "cutoffs": {"len_cap": 4}},
    )
    manifest = run(cfg, out=tmp_path)
    assert [c["name"] for c in manifest.checks] == ["pinned-equals-restricted"]
    assert manifest.passed


def test_budget_exhaustion_is_reported():
    cfg = config("twopoint", constants={"beta": 4.0, "chi": 2.0, "cutoffs": {"max_contours": 1}})
    container = OmegaConf.to_container(cfg, resolve=True)
    rows = evaluate_point((container, {"beta": 4.0, "x": 3, "y": 1, "variant": "FREE"}, None))
    assert rows[0]["flags"] == "budget-exceeded"
    assert rows[0]["x"] == 3
    _, _, checks = collect(cfg, [rows])
    assert any(c.name == "enumeration-budget" and not c.passed for c in checks)


def test_tilt_run(tmp_path):
    cfg = config("tilt", sweep={"directions": [[1, 0], [1, 1]]}, options={"len_cap": 5})
    manifest = run(cfg, out=tmp_path)
    assert manifest.passed, manifest.failures()
    rows = pd.read_csv(tmp_path / "tilt-test.csv")
    assert rows.converged.all()


def test_effwalk_dp_run(tmp_path):
    cfg = config("effwalk-dp", sweep={"points": [[2, 1], [3, 2]]}, options={"len_cap": 5})
    manifest = run(cfg, out=tmp_path)
    assert manifest.passed, manifest.failures()
    rows = pd.read_csv(tmp_path / "effwalk-dp-test.csv")
    assert rows.oracle_rel_err.notna().all()


def test_effwalk_alili_doney_run(tmp_path):
    cfg = config("effwalk-alili-doney", sweep={"points": [[2, 1], [3, 0]]}, options={"len_cap": 5})
    manifest = run(cfg, out=tmp_path)
    assert manifest.passed, manifest.failures()
    rows = pd.read_csv(tmp_path / "effwalk-alili-doney-test.csv")
    assert list(rows.heights_apply) == [True, True, False, False]


def test_effwalk_decomp_run(tmp_path):
    cfg = config("effwalk-decomp", sweep={"eps": [0.01, 0.2]}, options={"len_cap": 5})
    manifest = run(cfg, out=tmp_path)
    checks = {c["name"]: c["passed"] for c in manifest.checks}
    assert checks["mixture-reconstruction"]
    assert checks["sandwich"]
    assert "v-nondegenerate" in checks
    rows = pd.read_csv(tmp_path / "effwalk-decomp-test.csv")
    assert (rows.sandwich_ratio_min >= 1 - 1e-12).all()
    assert (rows.delta1 > 0).all() and rows.ev_e1.notna().all()


def test_wulff_run(tmp_path):
    cfg = config("wulff", options={"n_angles": 3, "len_cap": 5})
    manifest = run(cfg, out=tmp_path)
    checks = {c["name"]: c["passed"] for c in manifest.checks}
    assert checks["tilt-converged"]
    assert checks["gradient-norm"]
    rows = pd.read_csv(tmp_path / "wulff-test.csv")
    assert len(rows) == 3
    assert rows.residual.notna().all()


@pytest.mark.slow
@pytest.mark.parametrize("name", ["ratio-zero", "twopoint-zero", "tilt"])
def test_shipped_config_passes(name, tmp_path):
    cfg = load_config(Path(__file__).parent.parent / "configurations" / f"{name}.json")
    manifest = run(cfg, out=tmp_path, threads=2)
    assert manifest.passed, manifest.failures()

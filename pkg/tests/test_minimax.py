import json

import numpy as np
import pytest

from spflow import model
from spflow.cones import ConeGeometry
from spflow.coulomb import CoulombSolver
from spflow.functional import energy as energy_of
from spflow.functional import nodal_count
from spflow.grid import Field
from spflow.minimax import (
    BOUNDARY0,
    BOUNDARY1,
    BOUNDARY2,
    INTERIOR,
    FiberGeometryError,
    MinimaxParams,
    SeedError,
    SeedPair,
    TuneRError,
    build_phi0,
    bump_seed_pair,
    deflated_multisolve,
    fiber_max,
    fiber_center,
    minimax_solve,
    mollifier_bump,
    peak_descend,
    seed_combination,
    tune_R,
    write_minimax_manifest,
)


@pytest.fixture(scope="module")
def setup16():
    cfg = model.ModelConfig(
        L=4.0, n=16, potential="constant", potential_constant=1.0, p=4.5, eps_cone=0.05
    )
    solver = CoulombSolver(cfg.grid, "freespace")
    V = model.eval_V(cfg)
    geom = ConeGeometry(eps=cfg.eps_cone)
    seeds = bump_seed_pair(cfg.grid, (-1.6, 0, 0), (1.6, 0, 0), radius=1.4, amplitude=2.0)
    return cfg, solver, V, geom, seeds


def test_seed_pair_validation(setup16):
    cfg, *_ = setup16
    g = cfg.grid
    b = mollifier_bump(g, (0, 0, 0), 1.0, 1.0)
    with pytest.raises(SeedError):
        SeedPair(v1=b, v2=b)  # v1 must be nonpositive
    with pytest.raises(SeedError):
        SeedPair(v1=-b, v2=b)  # overlapping supports
    with pytest.raises(SeedError):
        SeedPair(v1=Field.zeros(g), v2=b)  # trivial seed
    with pytest.raises(SeedError):
        bump_seed_pair(g, (-0.5, 0, 0), (0.5, 0, 0), radius=1.0)  # centers too close


def test_build_phi0_tags_and_signs(setup16):
    cfg, _, _, _, seeds = setup16
    path = build_phi0(cfg, seeds, mode="amplitude", m=4, R=2.0)
    assert len(path.samples) == 15  # (m+1)(m+2)/2
    from fractions import Fraction

    zero_key = (Fraction(0), Fraction(0))
    assert not np.any(path.samples[zero_key].values)
    for (t1, t2), tag in path.tags.items():
        u = path.samples[(t1, t2)]
        if t1 + t2 == 1:
            assert tag == BOUNDARY0
        elif t1 == 0:
            assert tag == BOUNDARY1
            assert np.min(u.values) >= 0.0
        elif t2 == 0:
            assert tag == BOUNDARY2
            assert np.max(u.values) <= 0.0
        else:
            assert tag == INTERIOR


def test_seed_combination_scaled_exact(setup16):
    cfg, _, _, _, seeds = setup16
    # at R=1 the scaled map equals the amplitude map
    a = seed_combination(seeds, "amplitude", 1.0, 0.3, 0.4)
    s = seed_combination(seeds, "scaled", 1.0, 0.3, 0.4)
    np.testing.assert_allclose(a.values, s.values, atol=1e-14)


def test_scaled_mode_resolution_guard(setup16):
    cfg, solver, V, geom, seeds = setup16
    with pytest.raises(TuneRError):
        build_phi0(cfg, seeds, mode="scaled", m=4, R=16.0)


def test_tune_R_terminates(setup16):
    cfg, solver, V, geom, seeds = setup16
    R = tune_R(cfg, solver, V, geom, seeds, mode="amplitude", m=4)
    assert R >= 1.0
    # conditions hold at the returned amplitude
    edge = [seed_combination(seeds, "amplitude", R, a / 4, (4 - a) / 4) for a in range(5)]
    assert max(energy_of(cfg, solver, u, V).total for u in edge) < 0.0


def test_fiber_max_consistency(setup16, rng):
    cfg, solver, V, _, _ = setup16
    u = Field(cfg.grid, rng.standard_normal((16, 16, 16)))
    w, val, (a, b) = fiber_max(cfg, solver, u, V)
    assert val == pytest.approx(energy_of(cfg, solver, w, V).total, rel=1e-9)
    assert a > 0 and b > 0
    # peak along both part-scalings
    from spflow.cones import split_pm

    up, um = split_pm(u)
    for da, db in ((1.02, 1.0), (0.98, 1.0), (1.0, 1.02), (1.0, 0.98)):
        trial = Field(u.grid, da * a * up.values + db * b * um.values)
        assert energy_of(cfg, solver, trial, V).total <= val + 1e-10


def test_fiber_max_needs_growth():
    cfg = model.ModelConfig(L=4.0, n=8, potential="constant", potential_constant=1.0, p=3.5)
    solver = CoulombSolver(cfg.grid, "freespace")
    V = model.eval_V(cfg)
    u = Field(cfg.grid, np.random.default_rng(0).standard_normal((8, 8, 8)))
    with pytest.raises(FiberGeometryError):
        fiber_max(cfg, solver, u, V)


def test_fiber_center_restores_criticality(setup16, rng):
    cfg, solver, V, _, _ = setup16
    from spflow.functional import dI_action
    from spflow.cones import split_pm

    u0 = Field(cfg.grid, rng.standard_normal((16, 16, 16)))
    w, _, _ = fiber_max(cfg, solver, u0, V)
    centered, (a, b) = fiber_center(cfg, solver, 1.01 * w, V)
    up, um = split_pm(centered)
    assert abs(dI_action(cfg, solver, centered, up, V)) < 1e-6
    assert abs(dI_action(cfg, solver, centered, um, V)) < 1e-6


def test_minimax_finds_certified_solution(setup16):
    cfg, solver, V, geom, seeds = setup16
    R = tune_R(cfg, solver, V, geom, seeds, mode="amplitude", m=6)
    path = build_phi0(cfg, seeds, mode="amplitude", m=6, R=R)
    pinned_before = {
        k: path.samples[k].values.copy() for k, t in path.tags.items() if t == BOUNDARY0
    }
    result = minimax_solve(cfg, solver, V, geom, path, MinimaxParams())
    cert = result.certificate
    assert cert.residual <= 1e-8
    assert cert.sign_changing and cert.pos_nodes >= 1 and cert.neg_nodes >= 1
    assert cert.outside_w
    assert cert.dist_pplus > geom.eps and cert.dist_pminus > geom.eps
    assert cert.level >= 0.5 * geom.eps**2 - 1e-8
    # the pinned edge never moved
    for k, vals in pinned_before.items():
        np.testing.assert_array_equal(path.samples[k].values, vals)


def test_minimax_symmetric_seeds_give_odd_solution(setup16):
    cfg, solver, V, geom, _ = setup16
    seeds = bump_seed_pair(cfg.grid, (-1.6, 0, 0), (1.6, 0, 0), radius=1.4, amplitude=2.0)
    R = tune_R(cfg, solver, V, geom, seeds, mode="amplitude", m=6)
    path = build_phi0(cfg, seeds, mode="amplitude", m=6, R=R)
    result = minimax_solve(cfg, solver, V, geom, path, MinimaxParams())
    u = result.solution.values
    mirrored = -u[::-1, :, :]
    rel = np.linalg.norm(u - mirrored) / np.linalg.norm(u)
    assert rel < 1e-6


def test_peak_descend_from_rough_start(setup16, rng):
    cfg, solver, V, geom, seeds = setup16
    u0 = seed_combination(seeds, "amplitude", 4.0, 0.5, 0.5)
    out = peak_descend(cfg, solver, V, geom, u0, MinimaxParams())
    assert out.converged
    assert out.residual <= 1e-8
    # peak values decrease monotonically
    e = out.energy_trace
    assert all(e[i + 1] <= e[i] + 1e-10 * max(1, abs(e[i])) for i in range(len(e) - 1))


def test_deflation_input_validation(setup16):
    cfg, solver, V, geom, _ = setup16
    b = mollifier_bump(cfg.grid, (0, 0, 0), 1.0, 1.0)
    with pytest.raises(SeedError):
        deflated_multisolve(cfg, solver, V, geom, [b], count=1)
    with pytest.raises(SeedError):
        deflated_multisolve(cfg, solver, V, geom, [b, b], count=1)  # overlap


def test_deflation_count_one_reduces_to_minimax(setup16):
    cfg, solver, V, geom, _ = setup16
    bumps = [
        mollifier_bump(cfg.grid, (-1.6, 0, 0), 1.2, 2.0),
        mollifier_bump(cfg.grid, (1.6, 0, 0), 1.2, 2.0),
    ]
    sols, report = deflated_multisolve(cfg, solver, V, geom, bumps, count=1, m=4)
    assert report.found >= 1
    assert len(sols) == 1
    pos, neg = nodal_count(sols[0])
    assert pos >= 1 and neg >= 1


def test_manifest_roundtrip(tmp_path, setup16):
    cfg, solver, V, geom, seeds = setup16
    R = tune_R(cfg, solver, V, geom, seeds, mode="amplitude", m=4)
    path = build_phi0(cfg, seeds, mode="amplitude", m=4, R=R)
    result = minimax_solve(cfg, solver, V, geom, path, MinimaxParams())
    out = tmp_path / "manifest.json"
    write_minimax_manifest(
        out,
        seeds=seeds,
        geom=geom,
        result=result,
        lattice_m=4,
        R=R,
        solution_files=["solution.spfld"],
    )
    doc = json.loads(out.read_text())
    assert doc["R"] == R
    assert doc["eps"] == geom.eps
    assert doc["lattice_m"] == 4
    assert doc["solution_files"] == ["solution.spfld"]
    assert doc["level"] == pytest.approx(result.level)

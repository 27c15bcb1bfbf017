import numpy as np
import pytest

from holeale.ader_solver import initial_state
from holeale.bench_cli import (EXACT_PROFILES, MASS_PROFILES, OUTPUT_ENV, RunConfig, central_h,
                               cli_main, convergence_checks, convergence_report, emit_hole_snapshots,
                               emit_vtk, l2_error, make_scenario, read_config, run, sanity_checks,
                               stationary_state)
from holeale.euler_physics import GasModel
from holeale.scenarios import kuhn_lattice

GAS = GasModel()


@pytest.fixture(scope="module")
def small_state():
    gens, mesh = kuhn_lattice((0, 0, 0), (1, 1, 1), 2)
    func = stationary_state(MASS_PROFILES["linear"], GAS)
    return initial_state(gens, mesh, 1, func), func


def test_profiles_values():
    x = np.array([1.0, 2.0, 0.0])
    assert MASS_PROFILES["constant"](x) == 10.0
    assert MASS_PROFILES["linear"](x) == 13.0
    assert MASS_PROFILES["polynomial"](x) == 10.0 + 1 + 4
    assert MASS_PROFILES["transcendental"](x) == pytest.approx(10 + np.exp(2 + 8) + 0.2)
    assert EXACT_PROFILES[2](x) == 15.0 and EXACT_PROFILES[3](x) == 19.0


def test_l2_error_of_exact_state_is_zero(small_state):
    st, func = small_state
    assert np.all(l2_error(st, 1, func) <= 1e-12)


def test_l2_error_of_constant_offset(small_state):
    st, func = small_state
    shifted = lambda x: func(x) + np.array([0.5, 0, 0, 0, 0])
    # ||0.5||_L2 over the unit cube
    assert l2_error(st, 1, shifted)[0] == pytest.approx(0.5, rel=1e-13)


def test_central_h_picks_nearest_generator(small_state):
    st, _ = small_state
    i = int(np.argmin(np.linalg.norm(st.gens.positions - 0.5, axis=1)))
    assert central_h(st, (0.5, 0.5, 0.5)) == st.dual.h[i]


def test_convergence_report_orders():
    rep = convergence_report([(1.0, 0.4), (0.5, 0.1), (0.25, 0.0125)])
    assert rep[0]["order"] is None
    assert rep[1]["order"] == pytest.approx(2.0)
    assert rep[2]["order"] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        convergence_report([(1.0, 0.1)])
    with pytest.raises(ValueError):
        convergence_report([(1.0, 0.1), (0.5, 0.0)])


def test_convergence_checks():
    rep = convergence_report([(1.0, 0.2), (0.5, 0.05)])
    names = {n: ok for n, _, _, ok in convergence_checks(1, rep)}
    assert names == {"N1_coarse_error": True, "N1_order": True}
    rep = convergence_report([(1.0, 0.9), (0.5, 0.8)])
    assert not any(ok for *_, ok in convergence_checks(1, rep))


def test_emit_vtk(tmp_path, small_state):
    st, _ = small_state
    n = emit_vtk(st.dual, {"volume": st.dual.volumes}, tmp_path / "c.vtk")
    text = (tmp_path / "c.vtk").read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert f"CELLS {n} {5 * n}" in text and "SCALARS cell_id int 1" in text
    # sub-tets cover every cell exactly
    lines = text.splitlines()
    k = lines.index("SCALARS cell_id int 1") + 2
    ids = np.array(lines[k:k + n], dtype=int)
    assert set(ids.tolist()) == set(range(st.dual.NP))


def test_sanity_run_and_hole_snapshots(tmp_path):
    res = run(RunConfig("sanity_44", 1, output=str(tmp_path), hole_dumps=True, profile="linear"))
    assert res.holes == 1
    assert all(ok for *_, ok in sanity_checks(res))
    snaps = list(tmp_path.glob("*holes*.vtk"))
    assert len(snaps) == 1 and "SCALARS tau double 1" in snaps[0].read_text()
    assert (tmp_path / "sanity_44_N1_diagnostics.csv").exists()


def test_hole_snapshot_without_holes(tmp_path, small_state):
    from holeale.spacetime_geom import build_spacetime
    st, _ = small_state
    geo = build_spacetime(st.dual, st.dual, [], 0.0, 1.0)
    emit_hole_snapshots(geo, 3, tmp_path / "h.vtk")
    assert "POINTS 0 double" in (tmp_path / "h.vtk").read_text()


def test_make_scenario_rejects_unknown():
    with pytest.raises(ValueError):
        make_scenario("sanity_55")
    with pytest.raises(ValueError):
        make_scenario("shu_vortex", level=9)
    with pytest.raises(ValueError):
        make_scenario("sanity_32", profile="cosine")
    with pytest.raises(ValueError):
        make_scenario("kelvin")


def test_read_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("picard_tol = 1e-10  # tighter\nboosted = yes\nnewton_max = 7\ncfl = none\n")
    assert read_config(p) == {"picard_tol": 1e-10, "boosted": True, "newton_max": 7, "cfl": None}
    p.write_text("warp_speed = 9\n")
    assert cli_main(["sanity", "--flip", "32", "--order", "0", "--config", str(p)]) == 2


@pytest.mark.parametrize("flip", ["32", "23", "44"])
def test_cli_sanity_exit_code(tmp_path, flip, capsys):
    assert cli_main(["sanity", "--flip", flip, "--order", "1", "-o", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "closure" in out and "FAIL" not in out


def test_cli_usage_errors(tmp_path):
    assert cli_main(["sanity", "--flip", "99", "--order", "1"]) == 2
    assert cli_main(["sanity", "--flip", "32", "--order", "5"]) == 2
    assert cli_main(["run"]) == 2
    assert cli_main(["convergence", "--levels", "1", "-o", str(tmp_path)]) == 2
    assert cli_main(["--help"]) == 0


def test_output_env_var_wins(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert cli_main(["sanity", "--flip", "23", "--order", "0", "-o", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "sanity_23_N0_diagnostics.csv").exists()
    assert not (tmp_path / "flag").exists()

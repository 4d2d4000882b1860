from types import SimpleNamespace

import numpy as np
import pytest

from apsadapt.adapt import (
    TRACE_COLUMNS,
    AdaptConfig,
    AdaptError,
    AdaptTrace,
    NodalIndicators,
    adapt_loop,
    carry_direction,
    directional_sizes,
    metric_update,
    thresholds,
    update_direction,
    update_sizes,
    vertex_directional_indicators,
)
from apsadapt.estimate import element_indicators
from apsadapt.experiments import read_csv
from apsadapt.fem import ApsSolution, solve_aps
from apsadapt.mesh import Mesh, build_structured_mesh, classify_boundary, element_geometry, perturbed_mesh
from apsadapt.problem import make_case


def fake_report(mesh, W, variant_q=None):
    """Report with rho_phi = 1 and G_phi = W on every element."""
    W = np.broadcast_to(np.asarray(W, dtype=float), (mesh.nt, 2, 2)).copy()
    Gq = np.zeros_like(W) if variant_q is None else np.broadcast_to(variant_q, W.shape).copy()
    return SimpleNamespace(rho_phi_K=np.ones(mesh.nt), rho_q_K=np.ones(mesh.nt), G_phi=W, G_q=Gq)


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(tol=0.0)
    with pytest.raises(ValueError):
        AdaptConfig(tol=0.1, band=(1.2, 0.8))
    with pytest.raises(ValueError):
        AdaptConfig(tol=0.1, growth=0.9)
    with pytest.raises(ValueError):
        AdaptConfig(tol=0.1, h_min=1.0, h_max=0.5)
    with pytest.raises(ValueError):
        AdaptConfig(tol=0.1, indicator="other")
    assert AdaptConfig(tol=0.1).coarsen == 4.0
    assert AdaptConfig(tol=0.1, indicator="simplified").coarsen == 2.0


def test_thresholds_formula():
    lo, hi = thresholds(100, 0.1, 2.0)
    base = 3.0 / 100**2 * 0.1**4 * 4.0
    assert lo == pytest.approx(base * 0.75**4)
    assert hi == pytest.approx(base * 1.25**4)


def test_direction_error_along_x_gives_vertical_stretch():
    mesh = perturbed_mesh(4, 4, seed=0)
    theta = update_direction(mesh, fake_report(mesh, np.diag([1.0, 0.0])), "simplified")
    assert np.allclose(theta, np.pi / 2)


def test_direction_error_along_y_gives_horizontal_stretch():
    mesh = perturbed_mesh(4, 4, seed=0)
    theta = update_direction(mesh, fake_report(mesh, np.diag([0.0, 2.0])), "simplified")
    assert np.allclose(np.minimum(theta, np.pi - theta), 0.0)


def test_direction_tie_keeps_previous():
    mesh = perturbed_mesh(4, 4, seed=0)
    prev = np.linspace(0.1, 3.0, mesh.nv)
    theta = update_direction(mesh, fake_report(mesh, np.eye(2)), "full", prev)
    assert np.array_equal(theta, prev)
    assert np.all(update_direction(mesh, fake_report(mesh, np.zeros((2, 2))), "full") == 0.0)


def test_direction_full_uses_q_matrix():
    mesh = perturbed_mesh(3, 3, seed=0)
    rep = fake_report(mesh, np.zeros((2, 2)), np.diag([1.0, 0.0]))
    assert np.allclose(update_direction(mesh, rep, "full"), np.pi / 2)
    assert np.all(update_direction(mesh, rep, "simplified") == 0.0)


def test_zero_indicator_coarsens_by_growth_factor():
    lam = np.array([[0.1, 0.05], [0.2, 0.2]])
    nodal = NodalIndicators(np.zeros((2, 2)), lam)
    h = directional_sizes(nodal, AdaptConfig(tol=0.1), 1.0)
    assert np.allclose(h, 1.5 * lam)


def test_coarsening_clamped_at_h_max():
    nodal = NodalIndicators(np.zeros((1, 2)), np.array([[0.4, 0.4]]))
    assert np.allclose(directional_sizes(nodal, AdaptConfig(tol=0.1), 1.0), 0.5)


def test_keep_branch():
    cfg = AdaptConfig(tol=0.1)
    nv = 4
    lo, hi = thresholds(nv, cfg.tol, 1.0)
    # 4 eta >= T_low and 2 eta <= T_high
    eta = np.full((nv, 2), 0.5 * (lo / 4 + hi / 2))
    assert 4 * eta[0, 0] >= lo and 2 * eta[0, 0] <= hi
    lam = np.tile([0.1, 0.02], (nv, 1))
    assert np.allclose(directional_sizes(NodalIndicators(eta, lam), cfg, 1.0), lam)


@pytest.mark.parametrize("variant", ["full", "simplified"])
def test_synthetic_anisotropy(variant):
    cfg = AdaptConfig(tol=0.1, indicator=variant)
    nv = 3
    lo, hi = thresholds(nv, cfg.tol, 1.0)
    eta = np.tile([hi, 0.0], (nv, 1))  # 2 eta1 > T_high and eta2 = 0
    lam = np.full((nv, 2), 0.05)
    h = directional_sizes(NodalIndicators(eta, lam), cfg, 1.0)
    assert np.allclose(h[:, 0], 0.05 * 2 / 3)
    assert np.allclose(h[:, 1], 0.075)
    h1, h2 = update_sizes(NodalIndicators(eta, lam), cfg, 1.0)
    assert np.all(h1 / h2 == pytest.approx(2.25))


def test_simplified_coarsens_more_readily():
    lo, _ = thresholds(1, 0.1, 1.0)
    eta = np.full((1, 2), lo / 3)  # 4 eta > T_low but 2 eta < T_low
    lam = np.full((1, 2), 0.1)
    full = directional_sizes(NodalIndicators(eta, lam), AdaptConfig(tol=0.1), 1.0)
    simpl = directional_sizes(NodalIndicators(eta, lam), AdaptConfig(tol=0.1, indicator="simplified"), 1.0)
    assert np.allclose(full, 0.1) and np.allclose(simpl, 0.15)


def test_aspect_clamp():
    cfg = AdaptConfig(tol=0.1, max_aspect=10.0, h_min=1e-5)
    nodal = NodalIndicators(np.array([[0.0, 1e9]]), np.array([[0.4, 0.001]]))
    h1, h2 = update_sizes(nodal, cfg, 1.0)
    assert h1[0] == pytest.approx(10.0 * h2[0])


def test_two_element_nodal_oracle():
    """Hand evaluation of the per-vertex sum of lambda_i^2 r_i^T W r_i."""
    case = make_case("layer", 1.0, 1e-3)
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    mesh = classify_boundary(Mesh.from_triangles(verts, [[0, 1, 2], [0, 2, 3]]), case.field)
    sol = ApsSolution(np.array([0.0, 0.3, -0.2, 0.1]), np.array([0.05, 0.0, 0.02, -0.04]), case.eps)
    rep = element_indicators(mesh, sol, case.problem)
    W = rep.rho_phi_K[:, None, None] ** 2 * rep.G_phi + rep.rho_q_K[:, None, None] ** 2 * rep.G_q
    expected = np.zeros((4, 2))
    for k in range(2):
        g = element_geometry(mesh, k)
        for i, (lam, r) in enumerate(((g.lambda1, g.r1), (g.lambda2, g.r2))):
            val = lam**2 * (r @ W[k] @ r)
            for v in mesh.triangles[k]:
                expected[v, i] += val
    nodal = vertex_directional_indicators(rep, mesh, "full")
    assert np.allclose(nodal.eta4, expected, rtol=1e-12, atol=0)
    assert np.allclose(nodal.lam[1], [element_geometry(mesh, 0).lambda1, element_geometry(mesh, 0).lambda2])


def test_metric_frame_independent_of_corner_labels():
    mesh = perturbed_mesh(5, 5, jitter=0.25, seed=3)
    rot = Mesh.from_triangles(mesh.vertices, mesh.triangles[:, [1, 2, 0]])
    W = np.array([[2.0, 0.5], [0.5, 1.0]])
    theta = np.full(mesh.nv, 0.3)
    rep = fake_report(mesh, W)
    a = vertex_directional_indicators(rep, mesh, "simplified", theta)
    b = vertex_directional_indicators(rep, rot, "simplified", theta)
    assert np.allclose(a.eta4, b.eta4, rtol=1e-12)
    assert np.allclose(a.lam, b.lam, rtol=1e-12)


def test_metric_frame_sizes_on_structured_cells():
    mesh = build_structured_mesh(10, 40)
    rep = fake_report(mesh, np.zeros((2, 2)))
    nodal = vertex_directional_indicators(rep, mesh, "simplified", np.zeros(mesh.nv))
    # the equilateral-reference extent of a right triangle along x scales with its x size
    ratio = nodal.lam[:, 0] / nodal.lam[:, 1]
    assert np.allclose(ratio[(mesh.vertices.min(axis=1) > 0) & (mesh.vertices.max(axis=1) < 1)], 4.0, rtol=0.35)


def test_metric_update_outputs_valid_field():
    case = make_case("smooth", 2.0, 1e-6)
    mesh = classify_boundary(perturbed_mesh(10, 10, seed=1), case.field)
    sol = solve_aps(mesh, case.problem)
    rep = element_indicators(mesh, sol, case.problem, case)
    for frame in ("metric", "element"):
        m = metric_update(mesh, rep, AdaptConfig(tol=0.1, frame=frame), None)
        assert np.all(m.h1 >= m.h2) and np.all(m.h2 >= 1e-5) and np.all(m.h1 <= 0.5)
        assert np.all((m.theta >= 0) & (m.theta < np.pi))


def test_carry_direction_identity():
    mesh = perturbed_mesh(6, 6, seed=2)
    theta = np.full(mesh.nv, 0.4)
    assert np.allclose(carry_direction(mesh, theta, mesh), 0.4)
    theta = np.full(mesh.nv, np.pi - 1e-3)
    out = carry_direction(mesh, theta, build_structured_mesh(3, 3))
    assert np.allclose(np.minimum(out, np.pi - out), 1e-3, atol=1e-9)


def test_huge_tol_saturates_quickly():
    case = make_case("smooth", 0.0, 1.0)
    start = build_structured_mesh(4, 4)
    mesh, sol, trace = adapt_loop(start, case.problem, AdaptConfig(tol=10.0, max_iterations=10), case)
    assert trace.status == "saturated"
    assert len(trace) <= 3


def test_band_convergence_and_trace_csv(tmp_path):
    case = make_case("smooth", 0.0, 1.0)
    cfg = AdaptConfig(tol=0.5, max_iterations=6)
    mesh, sol, trace = adapt_loop(perturbed_mesh(12, 12, seed=0), case.problem, cfg, case)
    assert trace.status in ("converged", "saturated", "max_iterations")
    assert len(trace) <= 6
    assert trace.column("nv")[-1] == mesh.nv
    trace.write_csv(tmp_path / "t.csv")
    rows = read_csv(tmp_path / "t.csv")
    assert list(rows[0]) == TRACE_COLUMNS
    assert len(rows) == len(trace)


def test_fixed_iterations_runs_all():
    case = make_case("smooth", 0.0, 1.0)
    cfg = AdaptConfig(tol=10.0, max_iterations=3, fixed_iterations=True)
    _, _, trace = adapt_loop(build_structured_mesh(4, 4), case.problem, cfg, case)
    assert len(trace) == 3 and trace.status == "max_iterations"


def test_callback_sees_every_iteration():
    case = make_case("smooth", 0.0, 1.0)
    seen = []
    cfg = AdaptConfig(tol=10.0, max_iterations=2, fixed_iterations=True)
    adapt_loop(build_structured_mesh(4, 4), case.problem, cfg, case, callback=lambda i, m, s, r: seen.append(i))
    assert seen == [0, 1]


def test_adapt_error_carries_trace(monkeypatch):
    import apsadapt.adapt as mod

    def boom(*args, **kwargs):
        raise RuntimeError("stop")

    monkeypatch.setattr(mod, "adapt_to_metric", boom)
    case = make_case("smooth", 0.0, 1.0)
    with pytest.raises(AdaptError) as info:
        adapt_loop(build_structured_mesh(4, 4), case.problem, AdaptConfig(tol=0.01, max_iterations=3), case)
    assert isinstance(info.value.trace, AdaptTrace)
    assert info.value.trace.status == "failed"
    assert len(info.value.trace) == 1

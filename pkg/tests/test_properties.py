import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from apsadapt.adapt import AdaptConfig, NodalIndicators, update_sizes
from apsadapt.estimate import element_indicators, gradient_matrix, recover_gradient
from apsadapt.fem import ApsSolution
from apsadapt.mesh import Mesh, classify_boundary, element_geometry, perturbed_mesh
from apsadapt.problem import make_case

coord = st.floats(-10.0, 10.0, allow_nan=False)
triangle = arrays(float, (3, 2), elements=coord)


def area(p):
    return 0.5 * abs((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0]))


@given(triangle)
def test_svd_reconstruction(p):
    scale = np.abs(p - p.mean(axis=0)).max()
    assume(scale > 1e-3 and area(p) > 1e-6 * scale**2)
    g = element_geometry(Mesh.from_triangles(p, [[0, 1, 2]]), 0)
    rec = g.r_factor.T @ np.diag([g.lambda1, g.lambda2]) @ g.p_factor
    assert np.abs(rec - g.map_matrix).max() <= 1e-12 * max(1.0, g.lambda1)
    assert g.lambda1 >= g.lambda2 > 0
    assert abs(g.lambda1 * g.lambda2 - 2 * area(p)) <= 1e-9 * g.lambda1**2
    assert np.allclose(g.r_factor @ g.r_factor.T, np.eye(2), atol=1e-12)
    assert np.allclose(g.p_factor @ g.p_factor.T, np.eye(2), atol=1e-12)


@given(triangle)
def test_longest_edge_is_diameter(p):
    scale = np.abs(p - p.mean(axis=0)).max()
    assume(scale > 1e-3 and area(p) > 1e-6 * scale**2)
    g = element_geometry(Mesh.from_triangles(p, [[0, 1, 2]]), 0)
    d = max(np.linalg.norm(p[i] - p[j]) for i in range(3) for j in range(i))
    assert abs(g.h_k - d) <= 1e-12 * d


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_linear_fields_have_zero_zz(seed, c, a, b):
    mesh = perturbed_mesh(6, 5, jitter=0.25, seed=seed)
    u = c + a * mesh.vertices[:, 0] + b * mesh.vertices[:, 1]
    rg = recover_gradient(mesh, u)
    assert np.abs(rg.differences).max() <= 1e-12 * max(1.0, abs(a) + abs(b))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_random_fields_give_psd_gradient_matrices(seed):
    mesh = perturbed_mesh(6, 6, jitter=0.25, seed=seed)
    u = np.random.default_rng(seed).standard_normal(mesh.nv)
    G = gradient_matrix(mesh, recover_gradient(mesh, u))
    assert np.linalg.eigvalsh(G).min() >= -1e-14 * np.abs(G).max()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1.0, 1e-3, 1e-10]), st.floats(0.0, 2.0))
def test_indicator_identities_on_random_states(seed, eps, alpha):
    case = make_case("layer", alpha, eps)
    mesh = classify_boundary(perturbed_mesh(7, 7, jitter=0.25, seed=seed), case.field)
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal(mesh.nv)
    q = rng.standard_normal(mesh.nv)
    rep = element_indicators(mesh, ApsSolution(phi, q, eps), case.problem)
    for variant, nodal in (("full", rep.eta_P4_full), ("simplified", rep.eta_P4_simpl)):
        assert abs(nodal.sum() - 3 * (rep.eta_K(variant) ** 4).sum()) <= 1e-12 * nodal.sum()
        d = rep.eta_dir(variant).sum(axis=1)
        slack = 1e-12 * nodal.max()
        assert np.all(d <= nodal + slack) and np.all(nodal <= 2 * d + slack)


@given(
    arrays(float, (5, 2), elements=st.floats(0.0, 1e3)),
    arrays(float, (5, 2), elements=st.floats(1e-4, 0.4)),
    st.sampled_from(["full", "simplified"]),
)
def test_update_sizes_respects_clamps(eta, lam, variant):
    cfg = AdaptConfig(tol=0.1, indicator=variant, max_aspect=50.0)
    h1, h2 = update_sizes(NodalIndicators(eta, lam), cfg, 1.0)
    assert np.all(h1 >= h2)
    assert np.all(h2 >= cfg.h_min) and np.all(h1 <= cfg.h_max)
    assert np.all(h1 <= cfg.max_aspect * h2 * (1 + 1e-12))
    allowed = np.concatenate([lam * cfg.shrink, lam, lam * cfg.growth], axis=1)
    clamped = np.clip(allowed, cfg.h_min, cfg.h_max)
    for i in range(5):
        assert np.any(np.isclose(h2[i], clamped[i]))

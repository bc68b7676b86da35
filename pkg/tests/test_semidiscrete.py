import numpy as np
import pytest

from hpsbp.mesh import assign_random_degrees, build_box_mesh, perturb_interfaces, refine_random, set_degree
from hpsbp.metrics import compute_metrics
from hpsbp.physics import (BurgersModel, EulerModel, GasModel, burgers_two_point, conserved_from_primitives,
                           ec_two_point_flux, euler_flux_normal, roe_dissipation, entropy_vars, viscous_coeff)
from hpsbp.problems import VortexParams, vortex_exact
from hpsbp.sbp_core import build_sbp
from hpsbp.semidiscrete import Discretization, SchemeFlags, entropy_rate, rhs

CUBE = [[-5.0, 5.0]] * 3
GAS = GasModel(gamma=1.4, R=1 / 1.4, Pr=0.72, mu=0.02)


def smooth_state(x, gas=GAS, noise=0.0, seed=0):
    k = np.pi / 5.0
    rho = 1.0 + 0.2 * np.sin(k * x[:, 0]) * np.cos(k * x[:, 1])
    u = np.stack([0.3 + 0.1 * np.cos(k * x[:, 2]), -0.2 * np.sin(k * x[:, 0]), 0.1 * np.sin(k * x[:, 1])], axis=-1)
    T = 1.0 + 0.1 * np.cos(k * x[:, 0] + k * x[:, 2])
    if noise:
        rng = np.random.default_rng(seed)
        rho = rho * (1 + noise * rng.uniform(-1, 1, rho.shape))
        u = u + noise * rng.uniform(-1, 1, u.shape)
        T = T * (1 + noise * rng.uniform(-1, 1, T.shape))
    return conserved_from_primitives(rho, u, T, gas)


def make(mesh, model=None, flags=SchemeFlags(), optimize=True, boundary=None, compiled=True):
    model = model or EulerModel(GAS, viscous=flags.viscous)
    return Discretization(mesh, compute_metrics(mesh, optimize), model, flags, boundary, compiled)


@pytest.fixture(scope="module")
def curved_mesh():
    # with 2 cells per direction every perturbed node sits on a zero of the displacement
    m = build_box_mesh(CUBE, (3, 3, 3))
    m = refine_random(m, 3, 1, 0.2)
    m = assign_random_degrees(m, 3, [2, 3, 4])
    return perturb_interfaces(m, 2)


@pytest.fixture(scope="module")
def curved_disc(curved_mesh):
    return make(curved_mesh)


def test_mesh_with_walls_needs_boundary_data():
    with pytest.raises(ValueError):
        make(build_box_mesh(CUBE, (1, 1, 1), (False,) * 3))


def _brute_volume(disc, q, model):
    # O(n^2) per line: sum_l (2/delta_l) sum_j 2 D_ij f(q_i, q_j; (a_i + a_j) / 2)
    out = disc.zeros()
    for e in disc.mesh.elements:
        n = e.degree + 1
        D = build_sbp(e.degree).D
        qe = disc.element_view(q, e.id)
        ae = disc.metrics.metrics[e.id]
        oe = disc.element_view(out, e.id)
        for i in np.ndindex(n, n, n):
            for l in range(3):
                for j in range(n):
                    k = list(i)
                    k[l] = j
                    k = tuple(k)
                    nbar = 0.5 * (ae[i][l] + ae[k][l])
                    if isinstance(model, BurgersModel):
                        f = burgers_two_point(qe[i], qe[k]) * nbar.sum()
                    else:
                        f = ec_two_point_flux(qe[i], qe[k], nbar, model.gas)
                    oe[i] += 2.0 / e.delta[l] * 2.0 * D[i[l], j] * f
    return out


@pytest.mark.parametrize("compiled", [True, False])
def test_volume_term_matches_brute_force(compiled):
    m = perturb_interfaces(set_degree(build_box_mesh(CUBE, (3, 3, 3)), 2), 2)
    disc = make(m, compiled=compiled)
    q = smooth_state(disc.node_coordinates(), noise=0.2, seed=1)
    ref = _brute_volume(disc, q, disc.model)
    got = disc.volume_inviscid(q, include_boundary=True)
    assert np.max(np.abs(got - ref)) <= 1e-12 * np.abs(ref).max()


def test_burgers_volume_matches_split_form():
    m = set_degree(build_box_mesh([[0, 2], [0, 4], [0, 1]], (1, 1, 1)), 4)
    disc = make(m, model=BurgersModel())
    rng = np.random.default_rng(2)
    u = rng.uniform(-1, 2, (disc.nnodes, 1))
    got = disc.volume_inviscid(u, include_boundary=True)
    # Cartesian metrics are diagonal constants a_ll
    a = disc.metrics.metrics[0][0, 0, 0]
    D = build_sbp(4).D
    ue = u.reshape(5, 5, 5)
    ref = np.zeros_like(ue)
    for l in range(3):
        du2 = np.moveaxis(np.tensordot(D, ue * ue, axes=(1, l)), 0, l)
        du = np.moveaxis(np.tensordot(D, ue, axes=(1, l)), 0, l)
        ref += a[l, l] * (du2 + ue * du) / 3.0
    assert np.max(np.abs(got.reshape(5, 5, 5) - ref)) < 1e-13 * max(1, np.abs(ref).max())
    assert np.max(np.abs(got - _brute_volume(disc, u, disc.model))) < 1e-13 * np.abs(ref).max()


def test_burgers_linear_data_on_periodic_element():
    # a linear field is exactly differentiated, so the split form returns u u_x summed over directions
    m = set_degree(build_box_mesh([[-1, 1]] * 3, (1, 1, 1)), 3)
    disc = make(m, model=BurgersModel())
    x = disc.node_coordinates()
    u = (0.5 + 0.3 * x[:, 0] - 0.2 * x[:, 1] + 0.1 * x[:, 2])[:, None]
    got = disc.volume_inviscid(u, include_boundary=True)
    assert np.max(np.abs(got[:, 0] - u[:, 0] * (0.3 - 0.2 + 0.1))) < 1e-13


def _dense_reference(disc, q, qb_fn, dissipation):
    # strong form on one Cartesian element: full 2 D o F volume plus W (f* - F.n) surface corrections
    gas = disc.model.gas
    e = disc.mesh.elements[0]
    n = e.degree + 1
    op = build_sbp(e.degree)
    x = disc.node_coordinates()
    out = -disc.volume_inviscid(q, include_boundary=True)
    M = disc.mass
    for face in range(6):
        ids = disc.face_node_ids(0, face)
        b = next(bf for bf in disc.metrics.boundary if bf.face.face == face)
        qb = qb_fn(x[ids], 0.0)
        fstar = ec_two_point_flux(q[ids], qb, b.normal, gas)
        corr = fstar - euler_flux_normal(q[ids], b.normal, gas)
        if dissipation:
            A = roe_dissipation(q[ids], qb, b.normal, gas)
            corr += np.einsum("nij,nj->ni", A, entropy_vars(q[ids], gas) - entropy_vars(qb, gas))
        out[ids] -= b.weights[:, None] * corr / M[ids, None]
    return out / disc.jac[:, None]


@pytest.mark.parametrize("dissipation", [False, True])
def test_single_element_matches_dense_reference(dissipation):
    vp = VortexParams()
    m = set_degree(build_box_mesh([[-2, 2], [-2, 2], [-1, 1]], (1, 1, 1), (False,) * 3), 2)
    bdata = lambda x, t: vortex_exact(vp, x, t + 0.3)
    disc = Discretization(m, compute_metrics(m), EulerModel(vp.gas), SchemeFlags(dissipation=dissipation), bdata)
    q = vortex_exact(vp, disc.node_coordinates(), 0.0)
    got = rhs(disc, q, 0.0)
    ref = _dense_reference(disc, q, bdata, dissipation)
    assert np.max(np.abs(got - ref)) <= 1e-12 * max(1.0, np.abs(ref).max())


def test_boundary_data_equal_to_trace_has_no_dissipation():
    m = set_degree(build_box_mesh(CUBE, (1, 1, 1), (False,) * 3), 3)
    vp = VortexParams()
    bdata = lambda x, t: vortex_exact(vp, x, t)
    d0 = Discretization(m, compute_metrics(m), EulerModel(vp.gas), SchemeFlags(False), bdata)
    d1 = Discretization(m, compute_metrics(m), EulerModel(vp.gas), SchemeFlags(True), bdata)
    q = vortex_exact(vp, d0.node_coordinates(), 0.0)
    assert np.max(np.abs(d0.residual(q) - d1.residual(q))) < 1e-14 * np.abs(d0.residual(q)).max()


def test_free_stream_preserved_on_curved_mesh(curved_disc):
    q = np.tile(conserved_from_primitives(np.array(1.0), np.array([0.35, 0.35, 0.1]), np.array(1.0), GAS),
                (curved_disc.nnodes, 1))
    assert np.max(np.abs(curved_disc.rhs(q))) <= 1e-12


def test_free_stream_violated_with_raw_metrics(curved_mesh):
    disc = make(curved_mesh, optimize=False)
    q = np.tile(conserved_from_primitives(np.array(1.0), np.array([0.35, 0.35, 0.1]), np.array(1.0), GAS),
                (disc.nnodes, 1))
    assert np.max(np.abs(disc.rhs(q))) > 1e-6


def test_free_stream_cartesian_any_metric_path():
    m = assign_random_degrees(refine_random(build_box_mesh(CUBE, (2, 2, 2)), 1, 1, 0.3), 1, [2, 3])
    for opt in (True, False):
        disc = make(m, optimize=opt)
        q = np.tile(conserved_from_primitives(np.array(1.2), np.array([0.2, -0.4, 0.3]), np.array(0.9), GAS),
                    (disc.nnodes, 1))
        assert np.max(np.abs(disc.rhs(q))) <= 1e-13


@pytest.mark.parametrize("noise", [0.0, 0.3])
def test_entropy_conservation_and_conservation(curved_disc, noise):
    q = smooth_state(curved_disc.node_coordinates(), noise=noise, seed=4)
    dq = curved_disc.rhs(q)
    scale = np.sum(curved_disc.mass_jac * q[:, 0]) * GAS.cv
    assert abs(entropy_rate(curved_disc, q, dq)) <= 1e-11 * scale
    totals = curved_disc.integrals(dq)
    mag = np.sum(curved_disc.mass_jac[:, None] * np.abs(curved_disc.residual(q) / curved_disc.mass_jac[:, None]),
                 axis=0)
    assert np.max(np.abs(totals)) <= 1e-12 * max(1.0, mag.max())


def test_two_element_nonconforming_telescoping():
    m = build_box_mesh([[-1, 1], [-0.5, 0.5], [-0.5, 0.5]], (2, 1, 1))
    from hpsbp.mesh import _refine_marked, _with_elements
    m = _with_elements(m, _refine_marked(list(m.elements), {1}))
    m = assign_random_degrees(m, 8, [2, 3, 4])
    assert any(i.kind == "nonconforming" for i in m.interfaces)
    disc = make(m)
    x = disc.node_coordinates()
    rho = 1 + 0.2 * np.sin(np.pi * x[:, 0])
    u = np.stack([0.5 + 0.1 * np.cos(np.pi * x[:, 0]), 0.1 * np.sin(2 * np.pi * x[:, 1]), 0 * x[:, 2]], axis=-1)
    q = conserved_from_primitives(rho, u, 1 + 0.1 * np.cos(np.pi * x[:, 0]), GAS)
    res = disc.residual(q)
    w = entropy_vars(q, GAS)
    assert abs(np.sum(w * res)) <= 1e-12 * np.sum(np.abs(w * res))
    assert np.max(np.abs(res.sum(axis=0))) <= 1e-12 * np.abs(res).sum()


@pytest.mark.parametrize("viscous", [False, True])
def test_compiled_matches_numpy(curved_mesh, viscous):
    flags = SchemeFlags(dissipation=True, viscous=viscous, ip_scale=1.5)
    a = make(curved_mesh, flags=flags)
    b = make(curved_mesh, flags=flags, compiled=False)
    q = smooth_state(a.node_coordinates(), noise=0.1, seed=5)
    ra, rb = a.rhs(q), b.rhs(q)
    assert np.max(np.abs(ra - rb)) <= 1e-11 * np.abs(ra).max()


def test_compiled_matches_numpy_with_boundaries():
    m = assign_random_degrees(refine_random(build_box_mesh(CUBE, (3, 2, 2), (False, True, False)), 4, 1, 0.3),
                              4, [2, 3])
    m = perturb_interfaces(m, 2)
    bdata = lambda x, t: smooth_state(x.reshape(-1, 3)).reshape(x.shape[:-1] + (5,))
    flags = SchemeFlags(dissipation=True, viscous=True)
    a = make(m, flags=flags, boundary=bdata)
    b = make(m, flags=flags, boundary=bdata, compiled=False)
    q = smooth_state(a.node_coordinates(), noise=0.1, seed=8)
    ra, rb = a.rhs(q, 0.3), b.rhs(q, 0.3)
    assert np.max(np.abs(ra - rb)) <= 1e-11 * np.abs(ra).max()


def test_rhs_is_deterministic(curved_mesh):
    disc = make(curved_mesh, flags=SchemeFlags(dissipation=True, viscous=True))
    q = smooth_state(disc.node_coordinates(), noise=0.1, seed=6)
    assert np.array_equal(disc.rhs(q), disc.rhs(q.copy()))


def test_dissipation_is_entropy_stable(curved_mesh):
    base = make(curved_mesh)
    diss = make(curved_mesh, flags=SchemeFlags(dissipation=True))
    for seed in range(3):
        q = smooth_state(base.node_coordinates(), noise=0.3, seed=seed)
        scale = np.sum(base.mass_jac * q[:, 0]) * GAS.cv
        r = diss.entropy_rate(q, diss.rhs(q))
        assert r <= 1e-12 * scale
        assert r - base.entropy_rate(q, base.rhs(q)) < 0.0


def test_continuous_traces_give_zero_dissipation():
    m = set_degree(build_box_mesh(CUBE, (2, 2, 2)), 3)
    a, b = make(m), make(m, flags=SchemeFlags(dissipation=True))
    q = smooth_state(a.node_coordinates())
    assert np.max(np.abs(a.residual(q) - b.residual(q))) < 1e-14 * np.abs(a.residual(q)).max()


def test_viscous_terms_dissipate(curved_mesh):
    visc = make(curved_mesh, flags=SchemeFlags(viscous=True))
    base = make(curved_mesh)
    q = smooth_state(visc.node_coordinates(), noise=0.2, seed=7)
    scale = np.sum(visc.mass_jac * q[:, 0]) * GAS.cv
    rv = visc.entropy_rate(q, visc.rhs(q))
    assert rv <= 1e-12 * scale
    assert rv < base.entropy_rate(q, base.rhs(q))
    assert np.max(np.abs(visc.integrals(visc.rhs(q))[:1])) < 1e-12 * scale


def test_viscous_with_zero_viscosity_or_constant_state(curved_mesh):
    gas0 = GasModel(gamma=1.4, R=1 / 1.4, mu=0.0)
    a = make(curved_mesh, model=EulerModel(gas0, viscous=True), flags=SchemeFlags(viscous=True))
    b = make(curved_mesh, model=EulerModel(gas0))
    q = smooth_state(a.node_coordinates(), gas0, noise=0.1)
    assert np.array_equal(a.rhs(q), b.rhs(q))
    v = make(curved_mesh, flags=SchemeFlags(viscous=True))
    qc = np.tile(conserved_from_primitives(np.array(1.0), np.array([0.3, 0.2, 0.1]), np.array(1.0), GAS),
                 (v.nnodes, 1))
    assert np.max(np.abs(v.rhs(qc))) <= 1e-12


def test_viscous_ip_penalty_dissipates_jumps():
    m = set_degree(build_box_mesh(CUBE, (2, 2, 2)), 2)
    lo = make(m, flags=SchemeFlags(viscous=True, ip_scale=0.0))
    hi = make(m, flags=SchemeFlags(viscous=True, ip_scale=2.0))
    q = smooth_state(lo.node_coordinates(), noise=0.3, seed=9)
    assert hi.entropy_rate(q, hi.rhs(q)) < lo.entropy_rate(q, lo.rhs(q))


def test_viscous_volume_matches_dense_oracle():
    # linear entropy variables on a Cartesian element with exact Dirichlet data: lifts and penalties vanish
    m = set_degree(build_box_mesh([[0, 2], [0, 1], [0, 3]], (1, 1, 1), (False,) * 3), 2)
    gas = GasModel(gamma=1.4, R=1 / 1.4, Pr=0.72, mu=0.3)
    from hpsbp.physics import conserved_from_entropy

    w0 = entropy_vars(conserved_from_primitives(np.array(1.0), np.array([0.2, 0.1, -0.1]), np.array(1.0), gas), gas)
    G = np.array([[0.01, 0.02, -0.01, 0.0, 0.005], [0.0, 0.01, 0.02, 0.01, -0.004], [0.02, 0.0, 0.0, 0.02, 0.003]])

    def wfield(x):
        return w0 + x @ G

    bdata = lambda x, t: conserved_from_entropy(wfield(x), gas)
    model = EulerModel(gas, viscous=True)
    mets = compute_metrics(m)
    v = Discretization(m, mets, model, SchemeFlags(viscous=True), bdata)
    e = Discretization(m, mets, model, SchemeFlags(), bdata)
    x = v.node_coordinates()
    q = bdata(x, 0.0)
    got = (v.residual(q) - e.residual(q)) / v.mass[:, None]
    # dense oracle: sum_{l,a} (2/d_l)(2/d_a) a_ll a_aa / J  D_l C_la D_a w
    n = 3
    D = build_sbp(2).D
    I = np.eye(n)
    Ds = [np.kron(np.kron(D, I), I), np.kron(np.kron(I, D), I), np.kron(np.kron(I, I), D)]
    a = mets.metrics[0][0, 0, 0]
    J = mets.jac[0][0, 0, 0]
    w = entropy_vars(q, gas)
    C = viscous_coeff(w, gas)
    ref = np.zeros_like(w)
    for l in range(3):
        inner = np.zeros_like(w)
        for k in range(3):
            inner += a[l, l] * a[k, k] / J * np.einsum("nij,nj->ni", C[:, l, k], Ds[k] @ w)
        ref += Ds[l] @ inner
    assert np.max(np.abs(got - ref)) <= 1e-12 * max(1.0, np.abs(ref).max())


def test_burgers_energy_stable():
    m = assign_random_degrees(refine_random(build_box_mesh(CUBE, (3, 3, 3)), 2, 1, 0.2), 2, [2, 3, 4])
    m = perturb_interfaces(m, 2)
    cons = make(m, model=BurgersModel())
    diss = make(m, model=BurgersModel(), flags=SchemeFlags(dissipation=True))
    x = cons.node_coordinates()
    u = (1.0 + 0.5 * np.sin(np.pi / 5 * x[:, 0]) + 0.2 * np.random.default_rng(0).uniform(-1, 1, x.shape[0]))[:, None]
    assert abs(cons.entropy_rate(u, cons.rhs(u))) <= 1e-12 * cons.total_entropy(u)
    assert diss.entropy_rate(u, diss.rhs(u)) < 0.0


def test_entropy_rate_of_zero_rhs(curved_disc):
    q = smooth_state(curved_disc.node_coordinates())
    assert curved_disc.entropy_rate(q, np.zeros_like(q)) == 0.0

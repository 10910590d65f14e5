import numpy as np
import pytest

from conftest import gradcheck, random_graph
from gadl.autodiff import ShapeError, Tape
from gadl.fmap import (FmHyper, FunctionalMaps, bijectivity_loss, fm_align_loss, fm_align_terms,
                       init_maps, orthogonality_loss, project_spectral)
from gadl.graph import normalized_laplacian
from gadl.model import AdamState, adam_step
from gadl.spectral import eig_smallest


def basis_for(n=10, r=4, seed=0):
    return eig_smallest(normalized_laplacian(random_graph(n, 0.4, seed)), r)


# -- projection -------------------------------------------------------------------------

def test_project_phi_gives_identity():
    b = basis_for()
    tape = Tape()
    assert np.allclose(project_spectral(tape.variable(b.phi), b).value, np.eye(4), atol=1e-8)


def test_project_zero():
    b = basis_for()
    tape = Tape()
    assert np.array_equal(project_spectral(tape.variable(np.zeros((10, 3))), b).value, np.zeros((4, 3)))


def test_full_basis_round_trip():
    b = basis_for(8, 8, 1)
    z = np.random.default_rng(0).normal(size=(8, 3))
    tape = Tape()
    f = project_spectral(tape.variable(z), b).value
    assert np.linalg.norm(b.phi @ f - z) <= 1e-8


def test_project_shape_error():
    with pytest.raises(ShapeError):
        project_spectral(Tape().variable(np.ones((9, 2))), basis_for())


# -- alignment and commutativity -----------------------------------------------------------

def scalar_loop_fm(c, f_src, f_dst, lam_src, lam_dst, alpha, beta):
    r, d = f_src.shape
    a_term = 0.0
    for i in range(r):
        for j in range(d):
            acc = sum(c[i, k] * f_src[k, j] for k in range(r))
            a_term += (acc - f_dst[i, j]) ** 2
    b_term = 0.0
    for i in range(r):
        for j in range(r):
            b_term += (lam_dst[i] * c[i, j] - c[i, j] * lam_src[j]) ** 2
    return alpha * a_term + beta * b_term


@pytest.mark.parametrize("seed", range(5))
def test_fm_matches_scalar_loop(seed):
    rng = np.random.default_rng(seed)
    r, d = 4, 3
    c12, c21 = rng.normal(size=(r, r)), rng.normal(size=(r, r))
    f1, f2 = rng.normal(size=(r, d)), rng.normal(size=(r, d))
    l1, l2 = np.sort(rng.uniform(0, 2, r)), np.sort(rng.uniform(0, 2, r))
    hyper = FmHyper(0.3, 0.7)
    tape = Tape()
    maps = FunctionalMaps(c12, c21).bind(tape)
    got = fm_align_loss(maps, tape.variable(f1), tape.variable(f2), l1, l2, hyper).item()
    expect = (scalar_loop_fm(c12, f1, f2, l1, l2, 0.3, 0.7) + scalar_loop_fm(c21, f2, f1, l2, l1, 0.3, 0.7))
    assert abs(got - expect) <= 1e-10 * max(1.0, expect)


def test_fm_zero_cases():
    rng = np.random.default_rng(0)
    f = rng.normal(size=(4, 3))
    lam = np.linspace(0, 1, 4)
    tape = Tape()
    maps = init_maps(4).bind(tape)
    assert fm_align_loss(maps, tape.variable(f), tape.variable(f), lam, lam, FmHyper()).item() == 0.0
    tape = Tape()
    maps = FunctionalMaps(rng.normal(size=(4, 4)), rng.normal(size=(4, 4))).bind(tape)
    g = rng.normal(size=(4, 3))
    assert fm_align_loss(maps, tape.variable(f), tape.variable(g), lam, lam[::-1], FmHyper(0, 0)).item() == 0.0


def test_fm_zero_on_exact_solution_only():
    rng = np.random.default_rng(1)
    r = 4
    q, _ = np.linalg.qr(rng.normal(size=(r, r)))
    f1 = rng.normal(size=(r, 3))
    lam = np.full(r, 0.5)  # equal spectra: every map commutes
    tape = Tape()
    maps = FunctionalMaps(q, q.T).bind(tape)
    l12, l21 = fm_align_terms(maps, tape.variable(f1), tape.variable(q @ f1), lam, lam, FmHyper(1.0, 1.0))
    assert l12.item() <= 1e-24 and l21.item() <= 1e-24
    tape = Tape()
    maps = FunctionalMaps(q, q.T).bind(tape)
    l12, _ = fm_align_terms(maps, tape.variable(f1), tape.variable(q @ f1 + 1e-3), lam, lam, FmHyper(1.0, 1.0))
    assert l12.item() > 0


def test_fm_shape_errors():
    tape = Tape()
    maps = init_maps(3).bind(tape)
    with pytest.raises(ShapeError):
        fm_align_loss(maps, tape.variable(np.ones((4, 2))), tape.variable(np.ones((4, 2))),
                      np.zeros(3), np.zeros(3), FmHyper())
    with pytest.raises(ShapeError):
        fm_align_loss(maps, tape.variable(np.ones((3, 2))), tape.variable(np.ones((3, 2))),
                      np.zeros(2), np.zeros(3), FmHyper())
    with pytest.raises(ShapeError):
        FunctionalMaps(np.eye(3), np.eye(2))
    with pytest.raises(ValueError):
        FmHyper(-1.0, 0.0)


# -- bijectivity and orthogonality ------------------------------------------------------------

def maps_loss(fn, c12, c21):
    tape = Tape()
    return fn(FunctionalMaps(c12, c21).bind(tape)).item()


def test_bijectivity_examples():
    assert maps_loss(bijectivity_loss, np.eye(3), np.eye(3)) == 0.0
    assert maps_loss(bijectivity_loss, 2 * np.eye(3), 0.5 * np.eye(3)) == 0.0
    assert maps_loss(bijectivity_loss, np.zeros((3, 3)), np.zeros((3, 3))) == 6.0


def test_orthogonality_examples():
    perm = np.eye(4)[[2, 0, 3, 1]]
    assert maps_loss(orthogonality_loss, perm, perm.T) == 0.0
    assert maps_loss(orthogonality_loss, np.eye(2), np.eye(2)) == 0.0
    assert maps_loss(orthogonality_loss, 2 * np.eye(2), np.eye(2)) == 18.0


def test_init_maps():
    m = init_maps(5)
    assert np.array_equal(m.c12, np.eye(5)) and np.array_equal(m.c21, np.eye(5))
    assert maps_loss(bijectivity_loss, m.c12, m.c21) == 0.0
    assert maps_loss(orthogonality_loss, m.c12, m.c21) == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_losses_nonnegative(seed):
    rng = np.random.default_rng(seed)
    c12, c21 = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    assert maps_loss(bijectivity_loss, c12, c21) >= 0
    assert maps_loss(orthogonality_loss, c12, c21) >= 0


@pytest.mark.parametrize("seed", range(10))
def test_gradcheck_map_losses(seed):
    rng = np.random.default_rng(seed)
    r, d = 3, 2
    lam1, lam2 = np.sort(rng.uniform(0, 2, r)), np.sort(rng.uniform(0, 2, r))
    hyper = FmHyper(0.5, 0.2)

    def build(tape, v):
        maps = FunctionalMaps(v["c12"], v["c21"])
        return (fm_align_loss(maps, v["f1"], v["f2"], lam1, lam2, hyper)
                + bijectivity_loss(maps) + orthogonality_loss(maps))

    inputs = {k: rng.normal(size=(r, r)) for k in ("c12", "c21")}
    inputs.update(f1=rng.normal(size=(r, d)), f2=rng.normal(size=(r, d)))
    assert gradcheck(build, inputs) < 1e-4


def test_alpha_term_reaches_closed_form_optimum():
    """With beta = 0 and invertible F1, the optimum is C12 = F2 F1^-1 (loss 0)."""
    rng = np.random.default_rng(0)
    r = 4
    q1, _ = np.linalg.qr(rng.normal(size=(r, r)))
    f1 = q1 * np.array([2.0, 1.5, 1.2, 1.0])  # well conditioned
    f2 = rng.normal(size=(r, r))
    c_star = f2 @ np.linalg.inv(f1)
    lam = np.zeros(r)
    hyper = FmHyper(alpha=1.0, beta=0.0)

    def loss_and_grad(c):
        tape = Tape()
        cv = tape.variable(c)
        maps = FunctionalMaps(cv, tape.variable(np.eye(r)))
        l12, _ = fm_align_terms(maps, tape.constant(f1), tape.constant(f2), lam, lam, hyper)
        return l12.item(), tape.backward(l12)[cv.node_id]

    assert loss_and_grad(c_star)[0] <= 1e-20
    params, state = {"c": np.eye(r)}, AdamState()
    for _ in range(200):
        _, g = loss_and_grad(params["c"])
        params, state = adam_step(params, {"c": g}, state, lr=0.1)
    assert loss_and_grad(params["c"])[0] < 1e-6
    assert np.allclose(params["c"], c_star, atol=1e-3)

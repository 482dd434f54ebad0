import math

import numpy as np
import pytest
import scipy.linalg

from soliton_lab import shrinker, spectrum
from soliton_lab.core import ROUND, ParameterError, derive_params, theta_grid

# sharp sup ||(0,g)||_h^2 / ||g||^2 on 128 points, measured from the gram matrix and frozen
ZERO_F_RATIO = {"round": 20.634954, "fold3": 23.061345}


@pytest.fixture(scope="module")
def round_spec(round01):
    return spectrum.eigen_spectrum(round01, 512, j_max=8)


@pytest.fixture(scope="module")
def fold3_spec(fold3):
    return spectrum.eigen_spectrum(fold3, 512, j_max=8)


def test_round_head_against_closed_form(p01, round_spec):
    head = [0.16, 0, 0, -0.48, -0.48, -1.28, -1.28, -2.4, -2.4]
    assert np.max(np.abs(round_spec.lambdas[:9] - head)) < 1e-10


def test_round_beta_family3(round_spec):
    # family j = 3 sits at indices 5, 6 when counted with multiplicity
    want = -0.5 + math.sqrt(6.12) / 2
    assert round_spec.betas_plus[5] == pytest.approx(want, abs=1e-10)
    assert round_spec.betas_plus[6] == pytest.approx(want, abs=1e-10)


def test_round_counts(round_spec):
    assert round_spec.count == 7
    assert spectrum.round_slow_count(derive_params(0.1)) == 7


def test_fold3_rotation_mode(p01, fold3_spec):
    r = fold3_spec.rotation_index
    assert r is not None
    assert fold3_spec.lambdas[r] == pytest.approx(-1.44, abs=1e-8)
    assert fold3_spec.checks["rotation_simple"]
    assert fold3_spec.betas_plus[r] == p01.cutoff
    assert fold3_spec.exact_resonant[r]
    assert fold3_spec.count == 5


@pytest.mark.parametrize("which", ["round_spec", "fold3_spec"])
def test_recorded_invariants(which, request):
    sp = request.getfixturevalue(which)
    P = sp.params
    assert sp.checks["orthonormality_defect"] < 1e-8
    assert sp.checks["lambda0_defect"] < 1e-8
    assert sp.checks["lambda12_defect"] < 1e-8
    assert sp.checks["phi0_parallel_h"] == pytest.approx(1.0, abs=1e-10)
    assert sp.betas_plus[0] == pytest.approx(P.beta_plus_0, abs=1e-8)
    assert sp.betas_minus[0] == pytest.approx(P.beta_minus_0, abs=1e-8)
    bp, bm = spectrum.jacobi_exponents(sp)
    ok = ~sp.exact_resonant
    assert np.allclose((bp * bm)[ok], sp.lambdas[ok], atol=1e-12)
    assert np.allclose((bp + bm)[ok], -1.0, atol=1e-12)


def test_translation_pair_spans_sin_cos(round_spec):
    th = theta_grid(512)
    V = round_spec.eigenfunctions[1:3]
    for f in (np.sin(th), np.cos(th)):
        coef, *_ = np.linalg.lstsq(V.T, f, rcond=None)
        assert np.max(np.abs(V.T @ coef - f)) < 1e-10


def test_degenerate_groups(round_spec):
    groups = spectrum.degenerate_groups(round_spec)
    assert groups[:4] == [[0], [1, 2], [3, 4], [5, 6]]


def test_assembled_pencil(round01, fold3):
    A, W = spectrum.assemble_weighted_eigenproblem(round01, 64)
    d = np.diag(W)
    assert np.allclose(d, d[0]) and np.count_nonzero(W - np.diag(d)) == 0
    A, W = spectrum.assemble_weighted_eigenproblem(fold3, 64, stencil="fd2")
    assert np.max(np.abs(A - A.T)) == 0.0
    assert np.all(np.diag(W) > 0)
    with pytest.raises(ParameterError):
        spectrum.assemble_weighted_eigenproblem(fold3, 63)
    with pytest.raises(ParameterError):
        spectrum.assemble_weighted_eigenproblem(fold3, 64, stencil="fd9")


def test_fd2_stencil_is_second_order(round01):
    errs = []
    for n in (64, 128):
        lam, _ = spectrum.full_eigenbasis(round01, n, stencil="fd2")
        errs.append(abs(lam[5] + 1.28))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_jmax_must_bracket_cutoff(round01):
    with pytest.raises(ParameterError):
        spectrum.eigen_spectrum(round01, 64, j_max=2)
    with pytest.raises(ParameterError):
        spectrum.eigen_spectrum(round01, 16, j_max=8)


def test_resonant_round_pair_is_excluded():
    P = derive_params(1 / 9)
    sp = spectrum.eigen_spectrum(shrinker.round_shrinker(P, 256), 256, j_max=8)
    assert sp.exact_resonant[5] and sp.exact_resonant[6]
    assert sp.count == 5 == spectrum.round_slow_count(P)


def test_resample_roundtrip():
    th = theta_grid(96)
    f = np.cos(3 * th) + 0.5 * np.sin(th)
    g = spectrum.resample_periodic(spectrum.resample_periodic(f, 160), 96)
    assert np.max(np.abs(f - g)) < 1e-12


# --- paired form -------------------------------------------------------------------

@pytest.fixture(scope="module", params=["round", "fold3"])
def form(request, p01):
    prof = shrinker.round_shrinker(p01, 128) if request.param == "round" else shrinker.shoot_shrinker(p01, 3, 128)
    return request.param, spectrum.PairedForm(prof.values, p01.alpha)


def test_paired_zero_and_definiteness(form):
    _, F = form
    z = spectrum.PairedFunction(np.zeros(F.n), np.zeros(F.n))
    assert F.inner(z, z) == 0.0
    assert np.linalg.eigvalsh(F.gram_matrix())[0] > 1e-3


def test_paired_form_constants(form):
    name, F = form
    n = F.n
    G = F.gram_matrix()
    Wm = F.dth * np.diag(F.w)
    sup_zero_f = scipy.linalg.eigh(G[n:, n:], Wm, eigvals_only=True)[-1]
    schur = G[n:, n:] - G[n:, :n] @ np.linalg.solve(G[:n, :n], G[:n, n:])
    inf_ratio = scipy.linalg.eigh(schur, Wm, eigvals_only=True)[0]
    C = spectrum.equivalence_constant(F.alpha)
    assert inf_ratio == pytest.approx(1.0 / C**2, rel=1e-9)  # second inequality, sharp
    assert sup_zero_f == pytest.approx(ZERO_F_RATIO[name], rel=1e-6)
    assert sup_zero_f > C**2  # the equivalence constant does not cover the first inequality


def test_paired_inequalities_on_random_pairs(form):
    name, F = form
    C = spectrum.equivalence_constant(F.alpha)
    rng = np.random.default_rng(3)
    for _ in range(20):
        f, g = rng.standard_normal((2, F.n))
        g_norm = F.l2h_norm(g)
        assert g_norm <= C * F.norm(spectrum.PairedFunction(f, g)) * (1 + 1e-12)
        zero_f = F.norm(spectrum.PairedFunction(np.zeros(F.n), g))
        assert zero_f <= math.sqrt(ZERO_F_RATIO[name]) * g_norm * (1 + 1e-6)


def test_operator_self_adjoint(form):
    _, F = form
    rng = np.random.default_rng(7)
    th = theta_grid(F.n)
    # smooth random pairs: the operator involves a second derivative
    def smooth():
        c = rng.standard_normal((2, 6))
        k = np.arange(6)[:, None]
        return (c[0] @ np.cos(k * th) + c[1] @ np.sin(k * th))
    for _ in range(10):
        u = spectrum.PairedFunction(smooth(), smooth())
        v = spectrum.PairedFunction(smooth(), smooth())
        lhs = F.inner(F.apply_operator(u), v)
        rhs = F.inner(u, F.apply_operator(v))
        assert abs(lhs - rhs) < 1e-8 * F.norm(u) * F.norm(v)


def test_paired_eigenbasis_orthogonal(fold3_spec):
    h = fold3_spec.h.values
    F = spectrum.PairedForm(h, fold3_spec.params.alpha)
    pairs = []
    for j in range(7):
        phi = fold3_spec.eigenfunctions[j]
        for b in (fold3_spec.betas_plus[j], fold3_spec.betas_minus[j]):
            pairs.append(spectrum.PairedFunction(phi, b * phi))
    norms = [F.norm(p) for p in pairs]
    worst = 0.0
    for i in range(len(pairs)):
        for j in range(i):
            worst = max(worst, abs(F.inner(pairs[i], pairs[j])) / (norms[i] * norms[j]))
    assert worst < 1e-8


def test_paired_grid_mismatch(p01):
    F = spectrum.PairedForm(np.full(16, p01.c_alpha), p01.alpha)
    u = spectrum.PairedFunction(np.zeros(8), np.zeros(8))
    with pytest.raises(ParameterError):
        F.inner(u, u)
    with pytest.raises(ParameterError):
        spectrum.PairedFunction(np.zeros(8), np.zeros(9))
    with pytest.raises(ValueError):
        spectrum.paired_inner_product(u, u, np.ones(8))

import itertools
import warnings
from fractions import Fraction

import numpy as np
import pytest

from propcross import (
    ApproxDesign,
    DesignError,
    DesignSpace,
    ExactDesign,
    compute_lambda_star,
    criterion_value,
    design_from_json,
    design_moments,
    design_to_json,
    fisher_lambda,
    fisher_tau,
    lambda_information_matrix,
    materialize,
    phi_exchangeable,
    point_prior_value,
    spectrum,
    symmetrize,
)
from oracles import full_orbit_design, random_tau
from propcross.design import center_tau, criterion_from_eigenvalues, criterion_from_uv

CRITS = ["A", "D", "E", "T"]


# --------------------------------------------------------------- moments

def test_d2_moments(d2):
    m = design_moments(d2)
    assert (m.c11, m.c12, m.c22) == pytest.approx((2, -2 / 3, 10 / 9), abs=1e-14)
    assert m.x_d == pytest.approx(3 / 5) and m.q_min == pytest.approx(8 / 5)


def test_d1_moments(d1):
    m = design_moments(d1)
    assert (m.c11, m.c12, m.c22) == pytest.approx((17 / 9, -5 / 9, 10 / 9), abs=1e-14)
    assert m.x_d == pytest.approx(0.5) and m.q_min == pytest.approx(29 / 18)


def test_constant_design_degenerate(s33):
    m = design_moments(ApproxDesign(s33, {"111": 1}))
    assert m.c11 == pytest.approx(0, abs=1e-14) and m.c12 == pytest.approx(0, abs=1e-14)
    d = ApproxDesign(DesignSpace(2, 2), {"11": 1})
    m = design_moments(d)
    assert m.q_min == pytest.approx(0, abs=1e-14)
    assert criterion_value(d, "E") == pytest.approx(0, abs=1e-14)
    assert criterion_value(d, "A") == 0


def test_weights_validation(s33):
    with pytest.warns(UserWarning, match="renormalizing"):
        d = ApproxDesign(s33, {"123": 2, "122": 2})
    assert d.labelled() == {"122": 0.5, "123": 0.5}
    with pytest.raises(DesignError):
        ApproxDesign(s33, {"123": -0.5, "122": 1.5})
    with pytest.raises(DesignError):
        ApproxDesign(s33, {"123": 0})
    with pytest.raises(ValueError):
        ApproxDesign(s33, {"1234": 1})
    # orbit members collapse onto their block
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert ApproxDesign(s33, {"231": 0.5, "312": 0.5}).labelled() == {"123": 1.0}


# --------------------------------------------------------------- spectrum and criteria

def test_d2_spectrum(d2):
    assert spectrum(d2, 0.0) == pytest.approx([0, 0.8, 1.0], abs=1e-14)


def test_two_treatment_spectrum():
    d = ApproxDesign(DesignSpace(4, 2), {"1122": 0.5, "1212": 0.5})
    eig = spectrum(d, 0.3)
    assert len(eig) == 2 and eig[0] == 0
    vals = [criterion_value(d, c, 0.3) for c in CRITS]
    assert vals == pytest.approx([eig[1]] * 4, rel=1e-12)


@pytest.mark.parametrize("lam", [-1, 0, 0.4, 2])
def test_d1_middle_eigenvalue_ignores_lambda(d1, lam):
    assert criterion_value(d1, "E", lam) == pytest.approx(29 / 36, abs=1e-14)


def test_d2_a_value(d2):
    assert criterion_value(d2, "A", 0) == pytest.approx(1 / (1 / 1.6 + 1 / 2), abs=1e-14)


@pytest.mark.parametrize("crit", CRITS)
@pytest.mark.parametrize("lam", [-0.7, 0.0, 0.35, 0.9])
def test_closed_form_matches_eigenvalues(d1, crit, lam):
    assert criterion_value(d1, crit, lam) == pytest.approx(
        criterion_from_eigenvalues(spectrum(d1, lam), crit), rel=1e-12)


def test_unknown_criterion():
    with pytest.raises(DesignError):
        criterion_from_uv("Q", 1, 1, 3)


@pytest.mark.parametrize("seed", range(20))
def test_minimum_property(seed):
    rng = np.random.default_rng(seed)
    space = DesignSpace(4, 3)
    w = rng.dirichlet(np.ones(len(space.blocks)))
    m = design_moments(ApproxDesign.from_vector(space, w))
    for lam in rng.uniform(-2, 2, 10):
        assert m.q_min <= m.q(lam) + 1e-12


# --------------------------------------------------------------- full information

@pytest.mark.parametrize("seed", range(40))
def test_fisher_spectrum_matches_closed_form(seed):
    rng = np.random.default_rng(1000 + seed)
    p, t = rng.integers(2, 5), rng.integers(2, 5)
    rho = float(rng.choice([-0.5, 0.0, 0.5]))
    if p == 2 and rho:
        rho = rho / 2
    lam = float(rng.choice([-1, -0.3, 0, 0.5, 1]))
    space = DesignSpace.with_rho(int(p), int(t), rho)
    counts = {}
    n = 0
    order = rng.permutation(len(space.blocks))
    for i in order:
        b = space.blocks[i]
        k = int(rng.integers(0, 3))
        if k and n + k * b.orbit_size(t) <= 48:
            counts[b] = k
            n += k * b.orbit_size(t)
    if not counts:
        b = space.blocks[-1]
        counts[b] = 1
        n = b.orbit_size(t)
    d = full_orbit_design(space, counts)
    approx = symmetrize(d)
    if design_moments(approx).degenerate:
        pytest.skip("no carryover information")
    got = np.linalg.eigvalsh(fisher_tau(d, random_tau(rng, t), lam))
    want = n * spectrum(approx, lam)
    assert got == pytest.approx(want, rel=1e-8, abs=1e-8 * max(want.max(), 1))


def test_six_subject_d2(s33):
    d = full_orbit_design(s33, {s33.blocks[-1]: 1})
    tau = np.array([1, -1, 0]) / np.sqrt(2)
    assert np.linalg.eigvalsh(fisher_tau(d, tau, 0.0)) == pytest.approx([0, 4.8, 6.0], abs=1e-12)


def test_information_matrix_invariants(s33):
    rng = np.random.default_rng(5)
    for _ in range(10):
        cols = [tuple(rng.integers(1, 4, 3)) for _ in range(7)]
        M = fisher_tau(ExactDesign.from_sequences(s33, cols), random_tau(rng, 3), 0.4)
        tr = max(np.trace(M), 1e-12)
        assert np.allclose(M, M.T)
        assert np.linalg.eigvalsh(M)[0] >= -1e-9 * tr
        assert np.abs(M.sum(axis=0)).max() <= 1e-9 * tr


def test_n36_exchangeable_e_value(s33, d1):
    d = full_orbit_design(s33, {b: int(round(36 * w / 6)) for b, w in d1.weights.items()})
    assert d.n == 36
    assert 36 * phi_exchangeable(d, [1, -1, 0], 0.0, "E") == pytest.approx(29, abs=1e-10)


def test_tau_centering_and_zero():
    with pytest.warns(UserWarning, match="centered"):
        assert center_tau([1, 2, 3]) == pytest.approx([-1, 0, 1])
    with pytest.raises(DesignError), pytest.warns(UserWarning):
        center_tau([2, 2, 2])


# --------------------------------------------------------------- lambda information

def test_lambda_information_constant_columns(s33):
    d = ExactDesign.from_sequences(s33, ["111", "222", "333"])
    assert fisher_lambda(d, [1, -1, 0], 0.2) == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("lam", [-0.5, 0.0, 0.5])
def test_lambda_information_symmetric(s33, d1, lam):
    d = full_orbit_design(s33, {s33.blocks[3]: 1, s33.blocks[4]: 5})
    A = lambda_information_matrix(d, lam)
    rng = np.random.default_rng(3)
    for _ in range(5):
        tau = random_tau(rng, 3)
        want = tau @ tau * np.trace(A) / 2
        assert fisher_lambda(d, tau, lam) == pytest.approx(want, rel=1e-10)
        assert fisher_lambda(d, -tau, lam) == pytest.approx(fisher_lambda(d, tau, lam), rel=1e-12)


# --------------------------------------------------------------- symmetrization

def test_symmetrize_examples(s33, d1):
    d = full_orbit_design(s33, {s33.blocks[-1]: 1})
    assert symmetrize(d).labelled() == {"123": 1.0}
    d = ExactDesign.from_sequences(s33, ["123", "122"])
    assert symmetrize(d).labelled() == {"122": 0.5, "123": 0.5}
    d = full_orbit_design(s33, {s33.blocks[3]: 1, s33.blocks[4]: 5})
    assert symmetrize(d).labelled() == pytest.approx({"122": 1 / 6, "123": 5 / 6})


@pytest.mark.parametrize("seed", range(100))
def test_symmetrization_never_hurts(seed):
    rng = np.random.default_rng(seed)
    p, t = int(rng.integers(3, 5)), int(rng.integers(3, 5))
    space = DesignSpace.with_rho(p, t, float(rng.choice([-0.3, 0.0, 0.3])))
    n = int(rng.integers(3, 13))
    d = ExactDesign(space, rng.integers(1, t + 1, size=(p, n)))
    sym = symmetrize(d)
    lam = float(rng.uniform(-1, 1))
    tau = random_tau(rng, t)
    for crit in CRITS:
        assert criterion_value(sym, crit, lam) >= phi_exchangeable(d, tau, lam, crit) - 1e-9


@pytest.mark.parametrize("crit", CRITS)
def test_prior_free_for_symmetric_designs(s33, crit):
    d = full_orbit_design(s33, {s33.blocks[2]: 1, s33.blocks[4]: 2})
    rng = np.random.default_rng(11)
    vals = []
    for _ in range(5):
        tau = random_tau(rng, 3)
        vals.append(phi_exchangeable(d, 2 * tau / np.linalg.norm(tau), 0.3, crit))
    assert np.ptp(vals) <= 1e-9
    assert vals[0] == pytest.approx(criterion_value(symmetrize(d), crit, 0.3), rel=1e-9)


def test_relabeling_invariance(s33):
    rng = np.random.default_rng(2)
    d = ExactDesign(s33, rng.integers(1, 4, size=(3, 5)))
    for perm in itertools.permutations([1, 2, 3]):
        assert phi_exchangeable(d.relabel(perm), [1, 0, -1], 0.2, "A") == pytest.approx(
            phi_exchangeable(d, [1, 0, -1], 0.2, "A"), rel=1e-12)


def test_exchangeable_size_limit():
    d = ExactDesign(DesignSpace(2, 9), np.array([[1], [2]]))
    with pytest.raises(DesignError, match="t <= 8"):
        phi_exchangeable(d, np.arange(9) - 4.0, 0.0, "E")


def test_point_prior_on_symmetric_design(s33, d1):
    assert point_prior_value(materialize(d1), [0, 1, -1], 0.0, "E") == pytest.approx(29 / 36)


# --------------------------------------------------------------- lambda star

def test_lambda_star_rational():
    assert compute_lambda_star(3, 3, exact=True) == Fraction(11, 32)
    assert compute_lambda_star(3, 4) == pytest.approx(0.4455, abs=1e-4)
    v = compute_lambda_star(3, 5)
    assert 0 < v < 0.5
    with pytest.raises(DesignError):
        compute_lambda_star(3, 2)


# --------------------------------------------------------------- files

def test_json_round_trip(d1):
    back = design_from_json(design_to_json(d1))
    assert back.labelled() == pytest.approx(d1.labelled())
    space = DesignSpace.with_rho(3, 3, -0.4)
    e = ExactDesign.from_sequences(space, ["123", "231"])
    back = design_from_json(design_to_json(e))
    assert np.array_equal(back.layout, e.layout) and back.space == space


@pytest.mark.parametrize("obj", [
    {"t": 3, "weights": {"123": 1}},
    {"p": 3, "t": 3, "type": "approx"},
    {"p": 3, "t": 3, "type": "exact"},
    {"p": 3, "t": 3, "type": "other"},
])
def test_bad_design_files(obj):
    with pytest.raises(DesignError):
        design_from_json(obj)

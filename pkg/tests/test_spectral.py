"""Tests for the sine basis, heat kernel, and Gaussian-envelope fits.

Every numeric expectation here is computed by an independent route inside
the test: scipy.integrate.quad for projections, closed-form eigenpair
values, and plain Python re-summation of the image and eigen series.
"""

import json
import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from sgbh.spectral import (
    EstimateFitReport,
    Field,
    apply_semigroup,
    build_basis,
    build_grid,
    gaussian_lp_norm,
    gaussian_lp_norm_closed_form,
    heat_kernel,
    heat_kernel_dy,
    to_grid,
    to_spectral,
    validate_kernel_estimates,
)


# --- grid ---------------------------------------------------------------


def test_grid_nodes_and_spacing():
    grid = build_grid(7)
    assert grid.spacing == pytest.approx(1.0 / 8.0, rel=1e-15)
    np.testing.assert_allclose(grid.nodes, np.arange(1, 8) / 8.0, rtol=1e-15)
    with pytest.raises(ValueError):
        grid.nodes[0] = 0.0


def test_grid_rejects_empty():
    with pytest.raises(ValueError):
        build_grid(0)


def test_trapezoid_is_exact_on_the_resolved_modes():
    # discrete orthonormality of sin(j pi x) on the uniform interior grid
    grid = build_grid(64)
    basis = build_basis(8, grid)
    assert grid.trapezoid(basis.phi[1] ** 2) == pytest.approx(1.0, abs=1e-12)
    assert grid.trapezoid(basis.phi[0] * basis.phi[2]) == pytest.approx(0.0, abs=1e-12)


def test_trapezoid_shape_check():
    grid = build_grid(16)
    with pytest.raises(ValueError):
        grid.trapezoid(np.zeros(15))


def test_lp_norm_values_and_batching():
    grid = build_grid(64)
    basis = build_basis(4, grid)
    assert grid.lp_norm(basis.phi[0], 2) == pytest.approx(1.0, abs=1e-12)
    batch = np.stack([basis.phi[0], 2.0 * basis.phi[0], np.zeros(64)])
    out = grid.lp_norm(batch, 2)
    np.testing.assert_allclose(out, [1.0, 2.0, 0.0], atol=1e-12)
    with pytest.raises(ValueError):
        grid.lp_norm(basis.phi[0], 0.5)


# --- basis --------------------------------------------------------------


def test_eigenvalues_and_mode_samples():
    # n_points = 63 puts x = 1/2 exactly at node index 31
    grid = build_grid(63)
    basis = build_basis(4, grid)
    np.testing.assert_allclose(
        basis.eigenvalues, [(j * np.pi) ** 2 for j in (1, 2, 3, 4)], rtol=1e-14
    )
    mid = 31
    assert grid.nodes[mid] == pytest.approx(0.5, abs=1e-15)
    assert basis.phi[0, mid] == pytest.approx(math.sqrt(2.0), rel=1e-14)
    assert basis.phi[1, mid] == pytest.approx(0.0, abs=1e-12)
    # phi_1'(1/2) = sqrt(2) pi cos(pi/2) = 0, phi_2'(1/2) = -2 sqrt(2) pi
    assert basis.dphi[0, mid] == pytest.approx(0.0, abs=1e-12)
    assert basis.dphi[1, mid] == pytest.approx(-2.0 * math.sqrt(2.0) * np.pi, rel=1e-12)


def test_basis_rejects_coarse_grid():
    with pytest.raises(ValueError):
        build_basis(8, build_grid(31))
    with pytest.raises(ValueError):
        build_basis(0, build_grid(64))


def test_discrete_gram_identity():
    grid = build_grid(64)
    basis = build_basis(8, grid)
    gram = grid.spacing * (basis.phi @ basis.phi.T)
    np.testing.assert_allclose(gram, np.eye(8), atol=1e-10)


# --- fields and conversions ----------------------------------------------


def test_field_validation():
    with pytest.raises(ValueError):
        Field("nodal", np.zeros(4))
    with pytest.raises(ValueError):
        Field("grid", np.zeros((2, 2)))
    f = Field.from_coeffs([1.0, 0.0])
    assert f.kind == "spectral"
    with pytest.raises(ValueError):
        f.data[0] = 2.0


def test_project_pure_mode():
    grid = build_grid(64)
    basis = build_basis(8, grid)
    f = Field.from_grid(basis.phi[2])
    coeffs = to_spectral(f, basis).data
    expected = np.zeros(8)
    expected[2] = 1.0
    np.testing.assert_allclose(coeffs, expected, atol=1e-12)


def test_round_trip_band_limited():
    rng = np.random.default_rng(7)
    grid = build_grid(64)
    basis = build_basis(8, grid)
    c = rng.standard_normal(8)
    f = Field.from_coeffs(c)
    back = to_spectral(to_grid(f, basis), basis)
    np.testing.assert_allclose(back.data, c, atol=1e-12)
    # pass-throughs keep the object
    assert to_spectral(f, basis) is f
    g = to_grid(f, basis)
    assert to_grid(g, basis) is g


def test_conversion_shape_errors():
    basis = build_basis(8, build_grid(64))
    with pytest.raises(ValueError):
        to_spectral(Field.from_grid(np.zeros(32)), basis)
    with pytest.raises(ValueError):
        to_spectral(Field.from_coeffs(np.zeros(4)), basis)
    with pytest.raises(ValueError):
        to_grid(Field.from_coeffs(np.zeros(4)), basis)
    with pytest.raises(ValueError):
        to_grid(Field.from_grid(np.zeros(32)), basis)


def test_parabola_projection_against_quadrature():
    """Coefficients of x(1-x) agree with adaptive quadrature and closed form."""
    grid = build_grid(2048)
    basis = build_basis(8, grid)
    f = Field.from_grid(grid.nodes * (1.0 - grid.nodes))
    coeffs = to_spectral(f, basis).data
    for j in range(1, 9):
        oracle, _ = quad(
            lambda x, j=j: x * (1.0 - x) * math.sqrt(2.0) * math.sin(j * np.pi * x),
            0.0,
            1.0,
            epsabs=1e-14,
        )
        closed = 2.0 * math.sqrt(2.0) * (1.0 - (-1.0) ** j) / (j * np.pi) ** 3
        assert oracle == pytest.approx(closed, abs=1e-13)
        assert coeffs[j - 1] == pytest.approx(closed, abs=1e-11)


def test_parseval_band_limited():
    rng = np.random.default_rng(11)
    grid = build_grid(128)
    basis = build_basis(16, grid)
    c = rng.standard_normal(16)
    u = to_grid(Field.from_coeffs(c), basis)
    assert grid.trapezoid(u.data**2) == pytest.approx(float(np.sum(c**2)), rel=1e-12)


# --- semigroup ------------------------------------------------------------


def test_semigroup_mode_decay():
    basis = build_basis(4, build_grid(64))
    f = Field.from_coeffs([1.0, 0.0, 0.0, 0.0])
    out = apply_semigroup(f, 1.0 / np.pi**2, basis)
    assert out.kind == "spectral"
    assert out.data[0] == pytest.approx(math.exp(-1.0), rel=1e-13)
    np.testing.assert_allclose(out.data[1:], 0.0, atol=1e-15)


def test_semigroup_identity_and_kind():
    basis = build_basis(4, build_grid(64))
    g = to_grid(Field.from_coeffs([0.3, -0.2, 0.1, 0.0]), basis)
    out = apply_semigroup(g, 0.0, basis)
    assert out.kind == "grid"
    np.testing.assert_allclose(out.data, g.data, atol=1e-14)
    with pytest.raises(ValueError):
        apply_semigroup(g, -0.1, basis)


def test_semigroup_composition():
    rng = np.random.default_rng(3)
    basis = build_basis(8, build_grid(64))
    f = Field.from_coeffs(rng.standard_normal(8))
    one = apply_semigroup(apply_semigroup(f, 0.004, basis), 0.006, basis)
    two = apply_semigroup(f, 0.01, basis)
    np.testing.assert_allclose(one.data, two.data, rtol=1e-13)


def test_semigroup_matches_kernel_quadrature():
    """Diagonal multiplier equals trapezoid integration against the kernel."""
    rng = np.random.default_rng(5)
    grid = build_grid(128)
    basis = build_basis(16, grid)
    u = to_grid(Field.from_coeffs(rng.standard_normal(16)), basis)
    t = 0.01
    smooth = apply_semigroup(u, t, basis).data
    kern = heat_kernel(t, grid).values
    quadrature = grid.spacing * (kern @ u.data)
    np.testing.assert_allclose(quadrature, smooth, atol=1e-8)


# --- heat kernel ----------------------------------------------------------


def _image_sum_scalar(t, x, y, truncation):
    # plain-loop oracle for the image series at one point pair
    total = 0.0
    for m in range(-truncation, truncation + 1):
        total += math.exp(-((y - x - 2 * m) ** 2) / (4 * t))
        total -= math.exp(-((y + x - 2 * m) ** 2) / (4 * t))
    return (4 * np.pi * t) ** -0.5 * total


def _eigen_sum_scalar(t, x, y, n_terms):
    total = 0.0
    for j in range(1, n_terms + 1):
        total += (
            2.0
            * math.exp(-((j * np.pi) ** 2) * t)
            * math.sin(j * np.pi * x)
            * math.sin(j * np.pi * y)
        )
    return total


def test_heat_kernel_values_against_loop_oracles():
    grid = build_grid(127)
    mid, quarter = 63, 31
    assert grid.nodes[mid] == pytest.approx(0.5, abs=1e-15)
    assert grid.nodes[quarter] == pytest.approx(0.25, abs=1e-15)
    t = 0.05
    img = heat_kernel(t, grid, method="images").values
    assert img[mid, mid] == pytest.approx(_image_sum_scalar(t, 0.5, 0.5, 10), rel=1e-14)
    assert img[quarter, mid] == pytest.approx(
        _image_sum_scalar(t, 0.25, 0.5, 10), rel=1e-14
    )
    eig = heat_kernel(t, grid, method="eigen", truncation=200).values
    assert eig[mid, mid] == pytest.approx(_eigen_sum_scalar(t, 0.5, 0.5, 200), rel=1e-13)


def test_heat_kernel_symmetry_positivity_substochastic():
    grid = build_grid(128)
    for t in (0.01, 0.05, 0.2):
        vals = heat_kernel(t, grid).values
        np.testing.assert_allclose(vals, vals.T, atol=1e-13)
        assert vals.min() >= -1e-12
        mass = grid.spacing * vals.sum(axis=1)
        assert mass.max() <= 1.0 + 1e-10
        assert mass.min() >= 0.0


def test_heat_kernel_methods_agree():
    grid = build_grid(64)
    img = heat_kernel(0.1, grid, method="images").values
    eig = heat_kernel(0.1, grid, method="eigen", truncation=200).values
    assert np.abs(img - eig).max() < 1e-12


def test_heat_kernel_truncation_warnings():
    grid = build_grid(32)
    with pytest.warns(RuntimeWarning):
        heat_kernel(0.5, grid, method="images", truncation=1)
    with pytest.warns(RuntimeWarning):
        heat_kernel(1e-3, grid, method="eigen", truncation=5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        heat_kernel(0.1, grid, method="images")
        heat_kernel(0.1, grid, method="eigen")


def test_heat_kernel_validation():
    grid = build_grid(32)
    with pytest.raises(ValueError):
        heat_kernel(0.0, grid)
    with pytest.raises(ValueError):
        heat_kernel(-0.1, grid)
    with pytest.raises(ValueError):
        heat_kernel(0.1, grid, method="fourier")
    with pytest.raises(ValueError):
        heat_kernel(0.1, grid, method="images", truncation=0)
    with pytest.raises(ValueError):
        heat_kernel_dy(0.0, grid)


def test_kernel_dy_matches_eigen_derivative():
    """Image-series derivative vs term-by-term eigen-series derivative."""
    grid = build_grid(64)
    t = 0.05
    got = heat_kernel_dy(t, grid)
    j = np.arange(1, 401)
    decay = 2.0 * (j * np.pi) * np.exp(-((j * np.pi) ** 2) * t)
    sx = np.sin(np.pi * np.outer(j, grid.nodes))
    cy = np.cos(np.pi * np.outer(j, grid.nodes))
    oracle = (sx * decay[:, None]).T @ cy
    np.testing.assert_allclose(got, oracle, atol=1e-10)


# --- envelope fits ----------------------------------------------------------


def test_gaussian_lp_norm_against_closed_form():
    for s in (0.02, 0.1, 0.5):
        for p in (2, 8):
            for a in (1.0, 4.0):
                num = gaussian_lp_norm(s, p, a)
                ref = gaussian_lp_norm_closed_form(s, p, a)
                assert num == pytest.approx(ref, rel=1e-6)


def test_validate_kernel_estimates_fits_and_roundtrip():
    grid = build_grid(128)
    t_samples = np.linspace(0.01, 0.5, 8)
    report = validate_kernel_estimates(t_samples, grid)
    assert report.all_pass()
    sup = report["kernel_sup"]
    # the on-diagonal value at small t forces C >= (4 pi)^(-1/2)
    assert sup.fitted_C >= (4.0 * np.pi) ** -0.5 - 1e-9
    assert sup.fitted_C < 1.0
    grad = report["kernel_gradient"]
    assert np.isfinite(grad.fitted_C) and grad.fitted_C > 0
    gauss = report["gaussian_lp"]
    ratios = [
        gaussian_lp_norm_closed_form(s, 2, 1.0) / s**0.25 for s in t_samples
    ]
    assert gauss.fitted_C == pytest.approx(max(ratios), rel=0.05)
    assert gauss.max_violation <= 1e-12
    round_trip = EstimateFitReport.from_json(report.to_json())
    assert round_trip == report
    parsed = json.loads(report.to_json())
    assert {d["estimate_id"] for d in parsed} == {
        "kernel_sup",
        "kernel_gradient",
        "gaussian_lp",
    }
    assert all("pass" in d for d in parsed)
    with pytest.raises(KeyError):
        report["unknown"]


def test_validate_kernel_estimates_input_checks():
    grid = build_grid(64)
    with pytest.raises(ValueError):
        validate_kernel_estimates([], grid)
    with pytest.raises(ValueError):
        validate_kernel_estimates([0.1, 1.5], grid)
    with pytest.raises(ValueError):
        validate_kernel_estimates([0.0, 0.1], grid)

"""Monge-Ampere solver on the flat torus model."""

import numpy as np
import pytest

from parachern.masolver import (
    ConvergenceError,
    HypothesisError,
    MAProblem,
    TorusField,
    chern_crosscheck,
    conformal_fields,
    ddc_potential,
    det_field,
    fd_hessian,
    grid_coordinates,
    interpolant_residual,
    min_eigenvalue,
    normalize_problem,
    solve,
    spectral_hessian,
    verify_conclusion,
    wedge_density,
)


def constant_problem(M=32, r=2, c=2.0, c2val=3.0, etaval=1.0):
    c1 = TorusField("(1,1)", np.broadcast_to(c * np.eye(2), (M, M, 2, 2)).copy())
    c2 = TorusField("(2,2)", np.full((M, M), c2val))
    eta = TorusField("(2,2)", np.full((M, M), etaval))
    return MAProblem(r, c1, c2, eta)


def perturbed_problem(M=64, r=2, eps=0.1):
    """F = (1 + eps cos 2 pi x1) * compatible constant, via eta."""
    x1, x2 = grid_coordinates(M)
    c1 = np.broadcast_to(r * np.eye(2), (M, M, 2, 2)).copy()
    c1sq = wedge_density(c1, c1)
    kl = np.full((M, M), 0.4)
    c2 = (2 * r * kl + (r - 1) * c1sq) / (2 * r)
    eta = (1 + eps * np.cos(2 * np.pi * x1)) * 1.0
    return MAProblem(
        r,
        TorusField("(1,1)", c1),
        TorusField("(2,2)", c2),
        TorusField("(2,2)", eta),
    )


def hermite_einstein_problem(M=64, r=2):
    """Synthetic Hermite-Einstein-like fields with non-constant c1."""
    x1, x2 = grid_coordinates(M)
    psi = 0.05 * np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2)
    c1 = r * (np.broadcast_to(np.eye(2), (M, M, 2, 2)).copy() + ddc_potential(psi))
    c1sq = wedge_density(c1, c1)
    c2 = (r - 1) / (2 * r) * c1sq + 0.3 * (1 + 0.2 * np.cos(2 * np.pi * x2))
    eta = 1.0 + 0.1 * np.cos(2 * np.pi * x1)
    return MAProblem(
        r,
        TorusField("(1,1)", c1),
        TorusField("(2,2)", c2),
        TorusField("(2,2)", eta),
    )


def manufactured_problem(M, r=2, amp=0.02):
    """Continuum solution phi* with analytic Hessian; returns (problem, phi*)."""
    x1, x2 = grid_coordinates(M)
    s1, c1x = np.sin(2 * np.pi * x1), np.cos(2 * np.pi * x1)
    s2, c2x = np.sin(2 * np.pi * x2), np.cos(2 * np.pi * x2)
    phi = amp * s1 * c2x + amp / 2 * c2x
    w = (2 * np.pi) ** 2
    H = np.empty((M, M, 2, 2))
    H[..., 0, 0] = -amp * w * s1 * c2x
    H[..., 1, 1] = -amp * w * s1 * c2x - amp / 2 * w * c2x
    H[..., 0, 1] = -amp * w * c1x * s2
    H[..., 1, 0] = H[..., 0, 1]
    c1 = np.broadcast_to(r * np.eye(2), (M, M, 2, 2)).copy()
    g = c1 / r + 0.25 * H
    F = r * (r + 1) * det_field(g)
    kl = np.full((M, M), 0.2)
    c2 = (2 * r * kl + (r - 1) * wedge_density(c1, c1)) / (2 * r)
    eta = F - kl
    prob = MAProblem(
        r,
        TorusField("(1,1)", c1),
        TorusField("(2,2)", c2),
        TorusField("(2,2)", eta),
    )
    return prob, phi - phi.mean()


# ---------------------------------------------------------------------------
# fields and operators
# ---------------------------------------------------------------------------


class TestTorusField:
    def test_roundtrip_binary(self, tmp_path):
        f = TorusField("(2,2)", np.arange(16.0).reshape(4, 4))
        f.save(tmp_path / "f.bin", tmp_path / "f.json")
        g = TorusField.load(tmp_path / "f.bin", tmp_path / "f.json")
        assert g.kind == "(2,2)" and np.array_equal(f.data, g.data)

    def test_roundtrip_csv(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(4, 4, 2, 2))
        data = 0.5 * (data + np.swapaxes(data, 2, 3))
        f = TorusField("(1,1)", data)
        f.save_csv(tmp_path / "f.csv")
        g = TorusField.load_csv(tmp_path / "f.csv", "(1,1)")
        assert np.allclose(f.data, g.data)

    def test_rejects_bad_kind(self):
        with pytest.raises(ValueError):
            TorusField("(3,3)", np.zeros((4, 4)))

    def test_rejects_asymmetric_matrix_field(self):
        data = np.zeros((4, 4, 2, 2))
        data[..., 0, 1] = 1.0
        with pytest.raises(ValueError):
            TorusField("(1,1)", data)

    def test_shift(self):
        f = TorusField("scalar", np.arange(16.0).reshape(4, 4))
        assert np.array_equal(f.shifted(1, 0).data, np.roll(f.data, 1, axis=0))


class TestOperators:
    def test_spectral_hessian_exact_on_modes(self):
        M = 32
        x1, x2 = grid_coordinates(M)
        phi = np.sin(2 * np.pi * x1) * np.cos(4 * np.pi * x2)
        H = spectral_hessian(phi)
        w1, w2 = 2 * np.pi, 4 * np.pi
        assert np.allclose(H[..., 0, 0], -w1**2 * phi, atol=1e-10)
        assert np.allclose(H[..., 1, 1], -w2**2 * phi, atol=1e-10)
        assert np.allclose(
            H[..., 0, 1],
            -w1 * w2 * np.cos(2 * np.pi * x1) * np.sin(4 * np.pi * x2),
            atol=1e-10,
        )

    def test_fd_hessian_second_order(self):
        errs = []
        for M in (16, 32, 64):
            x1, x2 = grid_coordinates(M)
            phi = np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2)
            errs.append(
                np.abs(fd_hessian(phi) - spectral_hessian(phi)).max()
            )
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert all(o > 1.9 for o in orders)

    def test_wedge_density_is_twice_det(self):
        rng = np.random.default_rng(1)
        g = rng.normal(size=(5, 5, 2, 2))
        g = 0.5 * (g + np.swapaxes(g, 2, 3))
        assert np.allclose(wedge_density(g, g), 2 * det_field(g))

    def test_min_eigenvalue(self):
        g = np.array([[[[2.0, 1.0], [1.0, 2.0]]]])
        assert np.allclose(min_eigenvalue(g), 1.0)

    def test_ddc_exactness_zero_mass(self):
        # mean of every dd^c phi coefficient vanishes: exactness on the torus
        rng = np.random.default_rng(2)
        phi = rng.normal(size=(16, 16))
        d = ddc_potential(phi)
        assert np.abs(d.mean(axis=(0, 1))).max() < 1e-14


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


class TestNormalize:
    def test_compatible_input_scale_one(self):
        M, r = 16, 2
        raw = constant_problem(M, r, c=2.0, c2val=3.0, etaval=1.0)
        target = (r + 1) / r * det_field(raw.c1.data).mean()
        etaval = target - raw.kl_density().mean()
        raw = constant_problem(M, r, c=2.0, c2val=3.0, etaval=float(etaval))
        prob = normalize_problem(raw)
        assert abs(prob.eta_scale - 1.0) < 1e-12

    def test_doubled_eta_scale_half(self):
        raw1 = hermite_einstein_problem(M=16)
        raw2 = MAProblem(
            raw1.rank, raw1.c1, raw1.c2, TorusField("(2,2)", 2 * raw1.eta.data)
        )
        s1 = normalize_problem(raw1).eta_scale
        s2 = normalize_problem(raw2).eta_scale
        assert abs(s2 - s1 / 2) < 1e-12

    def test_random_positive_eta_compatible_to_1e12(self):
        rng = np.random.default_rng(3)
        M = 16
        x1, x2 = grid_coordinates(M)
        raw = hermite_einstein_problem(M=M)
        eta = 1.0 + 0.3 * np.cos(2 * np.pi * x1) * np.sin(2 * np.pi * x2)
        raw = MAProblem(raw.rank, raw.c1, raw.c2, TorusField("(2,2)", eta))
        prob = normalize_problem(raw)
        assert prob.compatibility_defect() < 1e-12

    def test_rejects_nonpositive_rhs(self):
        raw = hermite_einstein_problem(M=16)
        bad = MAProblem(
            raw.rank,
            raw.c1,
            TorusField("(2,2)", -np.abs(raw.c2.data) * 10),
            TorusField("(2,2)", raw.eta.data * 1e-6),
        )
        with pytest.raises(HypothesisError):
            normalize_problem(bad)

    def test_rejects_nonpositive_background(self):
        M = 8
        c1 = TorusField("(1,1)", np.broadcast_to(-np.eye(2), (M, M, 2, 2)).copy())
        with pytest.raises(ValueError):
            MAProblem(
                2,
                c1,
                TorusField("(2,2)", np.ones((M, M))),
                TorusField("(2,2)", np.ones((M, M))),
            )


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


class TestSolve:
    def test_constant_data_zero_iterations(self):
        prob = normalize_problem(constant_problem())
        phi, diag = solve(prob)
        assert diag.iterations == 0
        assert np.abs(phi.data).max() == 0.0

    def test_perturbed_residual_below_1e8_at_64(self):
        prob = normalize_problem(perturbed_problem(M=64, eps=0.1))
        phi, diag = solve(prob, tol=1e-9)
        assert diag.converged
        assert diag.residuals[-1] < 1e-8
        assert abs(phi.data.mean()) < 1e-13

    def test_hermite_einstein_like_converges_positive(self):
        prob = normalize_problem(hermite_einstein_problem(M=64))
        phi, diag = solve(prob, tol=1e-10)
        assert diag.converged
        assert min(diag.min_eigs) > 0

    def test_monotone_residuals(self):
        prob = normalize_problem(hermite_einstein_problem(M=32))
        _, diag = solve(prob, tol=1e-10)
        assert all(b < a for a, b in zip(diag.residuals, diag.residuals[1:]))

    def test_discrete_conservation(self):
        prob = normalize_problem(hermite_einstein_problem(M=32))
        _, diag = solve(prob, tol=1e-10)
        assert max(diag.conservation) < 1e-12

    def test_symmetry_equivariance(self):
        M = 32
        x1, _ = grid_coordinates(M)
        c1 = np.broadcast_to(2 * np.eye(2), (M, M, 2, 2)).copy() + ddc_potential(
            0.02 * np.cos(4 * np.pi * x1)
        )
        kl = np.full((M, M), 0.3)
        c2 = (4 * kl + wedge_density(c1, c1)) / 4
        eta = 1 + 0.1 * np.cos(4 * np.pi * x1)
        prob = normalize_problem(
            MAProblem(
                2,
                TorusField("(1,1)", c1),
                TorusField("(2,2)", c2),
                TorusField("(2,2)", eta),
            )
        )
        phi, _ = solve(prob)
        # data have period 1/2 in x1: the solution must too
        assert np.abs(phi.data - np.roll(phi.data, M // 2, axis=0)).max() < 1e-10

    def test_unnormalized_problem_rejected(self):
        with pytest.raises(ValueError):
            solve(perturbed_problem(M=16, eps=0.1))

    def test_nonconvergence_raises(self):
        prob = normalize_problem(hermite_einstein_problem(M=16))
        with pytest.raises(ConvergenceError):
            solve(prob, tol=1e-13, max_iter=1)


class TestManufactured:
    def test_spectral_solver_recovers_continuum(self):
        prob, phi_ex = manufactured_problem(64)
        prob = normalize_problem(prob)
        assert abs(prob.eta_scale - 1.0) < 1e-10
        phi, diag = solve(prob, tol=1e-10)
        assert diag.residuals[-1] < 1e-8
        assert np.abs(phi.data - phi_ex).max() < 1e-10

    def test_fd_interpolant_order_two(self):
        res = []
        for M in (16, 32, 64):
            prob, phi_ex = manufactured_problem(M)
            res.append(interpolant_residual(phi_ex, prob))
        orders = [np.log2(res[i] / res[i + 1]) for i in range(2)]
        assert all(o >= 1.9 for o in orders)


# ---------------------------------------------------------------------------
# conclusion verification
# ---------------------------------------------------------------------------


class TestConclusion:
    def test_constant_case_exact(self):
        prob = normalize_problem(constant_problem())
        phi, _ = solve(prob)
        rep = verify_conclusion(phi, prob)
        assert rep.c1_positive and rep.c2_positive and rep.schur_positive
        assert rep.eta_match < 1e-12

    def test_perturbed_case_positive_margins(self):
        prob = normalize_problem(hermite_einstein_problem(M=64))
        phi, _ = solve(prob, tol=1e-10)
        rep = verify_conclusion(phi, prob)
        assert rep.c1_min_eig > 0 and rep.c2_min > 0 and rep.schur_min > 0
        assert rep.eta_match < 1e-8

    def test_rank_one_display_consistency(self):
        # for r = 1 the equation (dd^c phi + c_1)^2 = eta + c_2 must give
        # back c_1(G)^2 - c_2(G) = eta identically: the two displays agree
        M, r = 32, 1
        x1, x2 = grid_coordinates(M)
        c1 = np.broadcast_to(np.eye(2), (M, M, 2, 2)).copy() + ddc_potential(
            0.03 * np.sin(2 * np.pi * x1)
        )
        c2 = np.full((M, M), 0.1)
        eta = 1 + 0.05 * np.cos(2 * np.pi * x2)
        prob = normalize_problem(
            MAProblem(
                r,
                TorusField("(1,1)", c1),
                TorusField("(2,2)", c2),
                TorusField("(2,2)", eta),
            )
        )
        phi, _ = solve(prob, tol=1e-11)
        rep = verify_conclusion(phi, prob)
        assert rep.eta_match < 1e-9

    def test_exterior_forms_crosscheck(self):
        M, r = 32, 2
        x1, x2 = grid_coordinates(M)
        theta = np.zeros((M, M, r, r, 2, 2))
        bump = 0.1 * np.sin(2 * np.pi * x1)
        theta[:, :, 0, 0] = np.eye(2) + ddc_potential(0.03 * np.cos(2 * np.pi * x2))
        theta[:, :, 1, 1] = 1.5 * np.eye(2)
        for a, b in ((0, 1), (1, 0)):
            theta[:, :, a, b, 0, 1] = bump
            theta[:, :, a, b, 1, 0] = bump
        eta = TorusField("(2,2)", 1.0 + 0.05 * np.cos(2 * np.pi * x1))
        prob = normalize_problem(MAProblem.from_theta(r, theta, eta))
        phi, _ = solve(prob)
        assert chern_crosscheck(prob, phi.data, theta, stride=8) < 1e-12

    def test_conformal_fields_algebra(self):
        # c1^2 - c2 of the conformal change minus eta equals the equation
        # residual: zero at the solution by construction
        prob = normalize_problem(hermite_einstein_problem(M=32))
        phi, _ = solve(prob, tol=1e-11)
        c1G, c2G = conformal_fields(prob, phi.data)
        schur = wedge_density(c1G, c1G) - c2G
        assert np.abs(schur - prob.eta.data).max() < 1e-9

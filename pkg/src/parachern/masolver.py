"""Surface Monge-Ampere solver on a flat torus model.

Model reduction: the compact surface is replaced by a flat model with two
complex coordinates z_j = x_j + i y_j whose data depend on the two real
coordinates (x_1, x_2) only, both of period 1 (the real 4-torus reduced to
an M x M grid).  A real (1,1)-form is stored as its Hermitian 2x2
coefficient field g with respect to the normalized frame (i/2pi) dz_j dzbar_k,
so positivity is g > 0 and dd^c phi has coefficient field (1/4) Hess phi
(for x-only data, d/dz_j d/dzbar_k = (1/4) D_j D_k).  A (2,2)-form is stored
as its density against the normalized volume form; the wedge of two (1,1)
fields has density a_00 b_11 + a_11 b_00 - a_01 b_10 - a_10 b_01, so the
square of a (1,1) field g has density 2 det(g).

The equation solved, for a rank-r bundle with a conformal change
G = H e^{-phi}:

    (r(r+1)/2) (dd^c phi + c_1(H)/r)^2 = eta + (2r c_2(H) - (r-1) c_1(H)^2)/(2r)

which in density form reads  r(r+1) det(g) = F  with g = c_1(H)/r + dd^c phi.

Differentiation is spectral (FFT), so exactness of dd^c phi is exact up to
roundoff and the total mass of det(g) is conserved at every iterate; the
finite-difference Hessian is provided only for grid-refinement studies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .forms import CurvatureMatrix, FormValue, chern_forms


class HypothesisError(RuntimeError):
    """Solvability hypothesis (pointwise positive right side) fails."""


class ConvergenceError(RuntimeError):
    """Damped Newton failed to reach the requested residual."""


# ---------------------------------------------------------------------------
# grid fields
# ---------------------------------------------------------------------------

_KINDS = ("scalar", "(1,1)", "(2,2)")


@dataclass
class TorusField:
    """Periodic field on the M x M grid x_i = n_i / M.

    kind 'scalar' and '(2,2)' hold an (M, M) array ('(2,2)' is a density
    against the normalized volume form); '(1,1)' holds an (M, M, 2, 2)
    Hermitian coefficient field."""

    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        self.data = np.asarray(self.data, dtype=float)
        want = 4 if self.kind == "(1,1)" else 2
        if self.data.ndim != want or self.data.shape[0] != self.data.shape[1]:
            raise ValueError("field data has the wrong shape")
        if self.kind == "(1,1)":
            if self.data.shape[2:] != (2, 2):
                raise ValueError("(1,1) field needs 2x2 coefficient matrices")
            if not np.allclose(self.data, np.swapaxes(self.data, 2, 3)):
                raise ValueError("(1,1) coefficient field must be symmetric")

    @property
    def grid(self) -> int:
        return self.data.shape[0]

    def mean(self):
        return self.data.mean(axis=(0, 1))

    def shifted(self, s1: int, s2: int) -> "TorusField":
        return TorusField(self.kind, np.roll(self.data, (s1, s2), axis=(0, 1)))

    # -- I/O: flat binary + JSON descriptor, or row-major CSV ---------------

    def save(self, path_bin, path_json):
        self.data.astype("<f8").tofile(path_bin)
        with open(path_json, "w") as fh:
            json.dump(
                {"kind": self.kind, "shape": list(self.data.shape), "dtype": "<f8"},
                fh,
            )

    @classmethod
    def load(cls, path_bin, path_json) -> "TorusField":
        with open(path_json) as fh:
            meta = json.load(fh)
        data = np.fromfile(path_bin, dtype=meta["dtype"]).reshape(meta["shape"])
        return cls(meta["kind"], data)

    def save_csv(self, path):
        np.savetxt(path, self.data.reshape(self.data.shape[0], -1), delimiter=",")

    @classmethod
    def load_csv(cls, path, kind) -> "TorusField":
        flat = np.loadtxt(path, delimiter=",", ndmin=2)
        M = flat.shape[0]
        shape = (M, M, 2, 2) if kind == "(1,1)" else (M, M)
        return cls(kind, flat.reshape(shape))


def grid_coordinates(M: int):
    x = np.arange(M) / M
    return np.meshgrid(x, x, indexing="ij")


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------


def _wavenumbers(M: int):
    return 2 * np.pi * np.fft.fftfreq(M, d=1.0 / M)


def spectral_hessian(phi: np.ndarray) -> np.ndarray:
    """H[..., j, k] = D_j D_k phi by FFT; exact for band-limited data."""
    M = phi.shape[0]
    k = _wavenumbers(M)
    k1 = k[:, None]
    k2 = k[None, :]
    ph = np.fft.fft2(phi)
    H = np.empty(phi.shape + (2, 2))
    H[..., 0, 0] = np.fft.ifft2(-(k1**2) * ph).real
    H[..., 1, 1] = np.fft.ifft2(-(k2**2) * ph).real
    H[..., 0, 1] = np.fft.ifft2(-(k1 * k2) * ph).real
    H[..., 1, 0] = H[..., 0, 1]
    return H


def fd_hessian(phi: np.ndarray) -> np.ndarray:
    """Second-order centered periodic Hessian (refinement studies only)."""
    M = phi.shape[0]
    h = 1.0 / M

    def d2(a, axis):
        return (np.roll(a, -1, axis) - 2 * a + np.roll(a, 1, axis)) / h**2

    def d1(a, axis):
        return (np.roll(a, -1, axis) - np.roll(a, 1, axis)) / (2 * h)

    H = np.empty(phi.shape + (2, 2))
    H[..., 0, 0] = d2(phi, 0)
    H[..., 1, 1] = d2(phi, 1)
    H[..., 0, 1] = d1(d1(phi, 0), 1)
    H[..., 1, 0] = H[..., 0, 1]
    return H


def ddc_potential(phi: np.ndarray, hessian=spectral_hessian) -> np.ndarray:
    """(1,1) coefficient field of dd^c phi = (i/2pi) del delbar phi for
    x-only data: one quarter of the real Hessian."""
    return 0.25 * hessian(phi)


def wedge_density(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Density of the wedge of two (1,1) coefficient fields."""
    return (
        a[..., 0, 0] * b[..., 1, 1]
        + a[..., 1, 1] * b[..., 0, 0]
        - a[..., 0, 1] * b[..., 1, 0]
        - a[..., 1, 0] * b[..., 0, 1]
    )


def det_field(g: np.ndarray) -> np.ndarray:
    return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]


def min_eigenvalue(g: np.ndarray) -> np.ndarray:
    tr = g[..., 0, 0] + g[..., 1, 1]
    disc = np.sqrt(
        np.maximum((g[..., 0, 0] - g[..., 1, 1]) ** 2 + 4 * g[..., 0, 1] * g[..., 1, 0], 0.0)
    )
    return 0.5 * (tr - disc)


# ---------------------------------------------------------------------------
# problem setup
# ---------------------------------------------------------------------------


@dataclass
class MAProblem:
    """rank r, background c_1(H) coefficient field, c_2(H) density,
    target eta density; F = eta + (2r c_2 - (r-1) c_1^2)/(2r)."""

    rank: int
    c1: TorusField
    c2: TorusField
    eta: TorusField
    eta_scale: float = 1.0
    normalized: bool = False

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if (self.c1.kind, self.c2.kind, self.eta.kind) != ("(1,1)", "(2,2)", "(2,2)"):
            raise ValueError("c1 must be (1,1); c2 and eta must be (2,2)")
        if not (self.c1.grid == self.c2.grid == self.eta.grid):
            raise ValueError("grids disagree")
        if min_eigenvalue(self.c1.mean()[None, None]) .min() <= 0:
            raise ValueError("c1 background must have positive mean")

    @property
    def grid(self) -> int:
        return self.c1.grid

    def kl_density(self) -> np.ndarray:
        """(2r c_2 - (r-1) c_1^2) / (2r) as a density field."""
        r = self.rank
        c1sq = wedge_density(self.c1.data, self.c1.data)
        return (2 * r * self.c2.data - (r - 1) * c1sq) / (2 * r)

    def rhs(self) -> np.ndarray:
        return self.eta.data + self.kl_density()

    def compatibility_defect(self) -> float:
        """| mean F - r(r+1) mean det(c_1/r) | (zero iff Calabi-compatible)."""
        r = self.rank
        target = (r + 1) / r * det_field(self.c1.data).mean()
        return abs(self.rhs().mean() - target)

    @classmethod
    def from_theta(cls, rank, theta: np.ndarray, eta: TorusField) -> "MAProblem":
        """Build c_1, c_2 fields from a full curvature coefficient field
        theta[x, y, a, b, p, q] (entry (a,b) of the normalized curvature,
        coefficient of dz_p dzbar_q)."""
        r = rank
        if theta.shape[2:] != (r, r, 2, 2):
            raise ValueError("theta field has the wrong shape")
        c1 = np.einsum("xyaapq->xypq", theta)
        c1 = 0.5 * (c1 + np.swapaxes(c1, 2, 3))
        c2 = np.zeros(theta.shape[:2])
        for a in range(r):
            for b in range(a + 1, r):
                c2 += wedge_density(theta[:, :, a, a], theta[:, :, b, b])
                c2 -= wedge_density(theta[:, :, a, b], theta[:, :, b, a])
        return cls(r, TorusField("(1,1)", c1), TorusField("(2,2)", c2), eta)


def normalize_problem(raw: MAProblem) -> MAProblem:
    """Rescale eta by the unique positive constant making the problem
    Calabi-compatible: mean(eta*kappa + KL) = r(r+1) mean det(c_1/r).
    Rejects if the raw right side or the rescaled right side is not
    positive pointwise."""
    if raw.rhs().min() <= 0:
        raise HypothesisError("right side F must be positive pointwise")
    r = raw.rank
    target = (r + 1) / r * det_field(raw.c1.data).mean()
    kappa = (target - raw.kl_density().mean()) / raw.eta.data.mean()
    if kappa <= 0:
        raise HypothesisError("no positive rescale achieves compatibility")
    scaled = replace(
        raw,
        eta=TorusField("(2,2)", kappa * raw.eta.data),
        eta_scale=kappa,
        normalized=True,
    )
    if scaled.rhs().min() <= 0:
        raise HypothesisError("rescaled right side lost positivity")
    return scaled


# ---------------------------------------------------------------------------
# damped Newton solver
# ---------------------------------------------------------------------------


@dataclass
class SolveDiagnostics:
    iterations: int
    residuals: list = field(default_factory=list)
    damping: list = field(default_factory=list)
    min_eigs: list = field(default_factory=list)
    conservation: list = field(default_factory=list)
    converged: bool = False

    def to_json_dict(self):
        return {
            "iterations": self.iterations,
            "residuals": self.residuals,
            "damping": self.damping,
            "min_eigs": self.min_eigs,
            "conservation": self.conservation,
            "converged": self.converged,
        }


def _metric(problem: MAProblem, phi: np.ndarray) -> np.ndarray:
    return problem.c1.data / problem.rank + ddc_potential(phi)


def _residual(problem: MAProblem, g: np.ndarray) -> np.ndarray:
    r = problem.rank
    return r * (r + 1) * det_field(g) - problem.rhs()


def _newton_step(problem: MAProblem, g: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Solve J delta = -R by GMRES with a constant-coefficient spectral
    preconditioner; J delta = (r(r+1)/4)(g11 D11 - 2 g12 D12 + g22 D22)delta."""
    r = problem.rank
    M = problem.grid
    k = _wavenumbers(M)
    k1, k2 = k[:, None], k[None, :]
    gbar = g.mean(axis=(0, 1))
    symbol = -(r * (r + 1) / 4) * (
        gbar[1, 1] * k1**2 - 2 * gbar[0, 1] * k1 * k2 + gbar[0, 0] * k2**2
    )
    inv = np.zeros_like(symbol)
    nonzero = np.abs(symbol) > 0
    inv[nonzero] = 1.0 / symbol[nonzero]

    def apply_J(vec):
        delta = vec.reshape(M, M)
        delta = delta - delta.mean()
        H = spectral_hessian(delta)
        out = (r * (r + 1) / 4) * (
            g[..., 1, 1] * H[..., 0, 0]
            - 2 * g[..., 0, 1] * H[..., 0, 1]
            + g[..., 0, 0] * H[..., 1, 1]
        )
        return (out - out.mean()).ravel()

    def apply_pre(vec):
        delta = vec.reshape(M, M)
        out = np.fft.ifft2(np.fft.fft2(delta) * inv).real
        return (out - out.mean()).ravel()

    n = M * M
    J = LinearOperator((n, n), matvec=apply_J)
    P = LinearOperator((n, n), matvec=apply_pre)
    b = (-(R - R.mean())).ravel()
    delta, info = gmres(J, b, M=P, rtol=1e-12, atol=0.0, maxiter=200)
    if info != 0:
        raise ConvergenceError(f"inner linear solve stalled (gmres info={info})")
    delta = delta.reshape(M, M)
    return delta - delta.mean()


def solve(problem: MAProblem, tol=1e-10, max_iter=50):
    """Damped Newton iteration for r(r+1) det(g) = F with mean-zero phi.

    Steps are accepted only if the sup-norm residual decreases and the
    metric g stays positive at every node; otherwise the step is halved.
    Returns (phi: TorusField('scalar'), SolveDiagnostics)."""
    if not problem.normalized and problem.compatibility_defect() > 1e-10:
        raise ValueError("problem must be normalized first")
    M = problem.grid
    phi = np.zeros((M, M))
    mass0 = det_field(_metric(problem, phi)).mean()
    diag = SolveDiagnostics(iterations=0)

    g = _metric(problem, phi)
    R = _residual(problem, g)
    res = np.abs(R).max()
    diag.residuals.append(float(res))
    diag.min_eigs.append(float(min_eigenvalue(g).min()))
    diag.conservation.append(0.0)

    for it in range(max_iter):
        if res < tol:
            diag.converged = True
            break
        delta = _newton_step(problem, g, R)
        t = 1.0
        while True:
            trial = phi + t * delta
            g_trial = _metric(problem, trial)
            if min_eigenvalue(g_trial).min() > 0:
                R_trial = _residual(problem, g_trial)
                res_trial = np.abs(R_trial).max()
                if res_trial < res:
                    break
            t *= 0.5
            if t < 1e-8:
                raise ConvergenceError("step rejected below minimal damping")
        phi, g, R, res = trial, g_trial, R_trial, res_trial
        diag.iterations = it + 1
        diag.damping.append(t)
        diag.residuals.append(float(res))
        diag.min_eigs.append(float(min_eigenvalue(g).min()))
        diag.conservation.append(float(abs(det_field(g).mean() - mass0)))
    else:
        if res >= tol:
            raise ConvergenceError(
                f"no convergence after {max_iter} iterations (residual {res:.3e})"
            )
    diag.converged = res < tol
    return TorusField("scalar", phi), diag


# ---------------------------------------------------------------------------
# post-solve verification
# ---------------------------------------------------------------------------


@dataclass
class ConclusionReport:
    c1_min_eig: float
    c2_min: float
    schur_min: float
    eta_match: float
    c1_positive: bool
    c2_positive: bool
    schur_positive: bool

    def to_json_dict(self):
        return self.__dict__.copy()


def conformal_fields(problem: MAProblem, phi: np.ndarray):
    """Chern data of G = H e^{-phi}: c_1(G) = c_1 + r dd^c phi (coefficient
    field) and c_2(G) = c_2 + (r-1) c_1 ^ dd^c phi + (r(r-1)/2)(dd^c phi)^2
    (density)."""
    r = problem.rank
    d = ddc_potential(phi)
    c1G = problem.c1.data + r * d
    c2G = (
        problem.c2.data
        + (r - 1) * wedge_density(problem.c1.data, d)
        + (r * (r - 1) / 2) * wedge_density(d, d)
    )
    return c1G, c2G


def verify_conclusion(phi: TorusField, problem: MAProblem, tol=1e-8) -> ConclusionReport:
    """Pointwise positivity of c_1(G), c_2(G) and the Schur density
    c_1^2(G) - c_2(G), and the identity c_1^2(G) - c_2(G) = eta."""
    c1G, c2G = conformal_fields(problem, phi.data)
    schur = wedge_density(c1G, c1G) - c2G  # c1^2 density = 2 det(c1G)
    eta_match = float(np.abs(schur - problem.eta.data).max())
    c1_min = float(min_eigenvalue(c1G).min())
    c2_min = float(c2G.min())
    schur_min = float(schur.min())
    return ConclusionReport(
        c1_min_eig=c1_min,
        c2_min=c2_min,
        schur_min=schur_min,
        eta_match=eta_match,
        c1_positive=bool(c1_min > 0),
        c2_positive=bool(c2_min > 0),
        schur_positive=bool(
            schur_min > 0 and eta_match <= tol * max(1.0, float(np.abs(schur).max()))
        ),
    )


def chern_crosscheck(problem: MAProblem, phi: np.ndarray, theta: np.ndarray, stride=8):
    """Independent check through the exterior-forms machinery: at a strided
    subset of nodes, build the curvature of G = H e^{-phi} as the FormValue
    matrix Theta_H + (del delbar phi) Id and compare its Chern densities with
    the field-level conformal_fields computation.  theta is the curvature
    coefficient field of H as in MAProblem.from_theta.  Returns the max
    absolute deviation over (c1 coefficients, c2 density)."""
    r = problem.rank
    M = problem.grid
    d = ddc_potential(phi)
    c1G, c2G = conformal_fields(problem, phi)
    dev = 0.0
    for ix in range(0, M, stride):
        for iy in range(0, M, stride):
            entries = []
            for a in range(r):
                row = []
                for b in range(r):
                    f = FormValue.zero(2)
                    for p in range(2):
                        for q in range(2):
                            coeff = theta[ix, iy, a, b, p, q]
                            if a == b:
                                coeff = coeff + d[ix, iy, p, q]
                            f = f + FormValue.monomial(2, (p,), (q,), complex(coeff))
                    row.append(f)
                entries.append(row)
            # entries are pre-normalized coefficients: use trivial scaling
            c = chern_forms(CurvatureMatrix(entries), normalization=1.0 + 0.0j)
            c1_mat = np.array(
                [[c[1].coefficient((p,), (q,)) for q in range(2)] for p in range(2)],
                dtype=complex,
            )
            dev = max(dev, float(np.abs(c1_mat - c1G[ix, iy]).max()))
            # pre-normalized coefficients carry no factors of i, so the
            # canonical-order top coefficient is minus the density
            c2_density = -complex(c[2].coefficient((0, 1), (0, 1))).real
            dev = max(dev, abs(c2_density - c2G[ix, iy]))
    return dev


def interpolant_residual(phi_exact: np.ndarray, problem: MAProblem) -> float:
    """Sup-norm residual of a continuum solution sampled on the grid when the
    Hessian is discretized at second order; used for refinement studies."""
    r = problem.rank
    g = problem.c1.data / r + ddc_potential(phi_exact, hessian=fd_hessian)
    return float(np.abs(r * (r + 1) * det_field(g) - problem.rhs()).max())

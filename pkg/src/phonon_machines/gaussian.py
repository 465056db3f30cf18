"""Bosonic Gaussian-state algebra for discretized phonon fields.

States live on a lattice of ``N`` pixels of size ``dz`` (um).  The
quadrature vector is ordered ``X = (drho_1..drho_N, phi_1..phi_N)`` with
density fluctuations in atoms/um and dimensionless phases.  The pixel
operators obey rescaled commutation relations ``[X_j, X_k] = i Omega_jk / dz``,
so every entropic formula below operates on the dimensionless matrix
``dz * cov``, whose symplectic eigenvalues are >= 1 for physical states.

Covariance convention: ``cov_ij = <X_i X_j + X_j X_i> - 2 <X_i><X_j>``
(vacuum of a canonical mode has covariance 1, not 1/2).

A quadratic Hamiltonian ``H = 1/2 X^T (H_rho + H_phi) X`` generates the
symplectic flow ``G(t) = exp(Omega H t / (hbar dz))``; energies are
``E = 1/4 Tr(H cov) + 1/2 mean^T H mean`` which reproduces the normal-mode
sum ``sum_k hbar w_k (n_k + 1/2)`` for thermal states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import schur

from .units import DEFAULT_CONSTANTS, PhysicalConstants

__all__ = [
    "InvariantViolation",
    "GaussianState",
    "QuadraticHamiltonian",
    "NormalModeDecomposition",
    "TemperatureFit",
    "symplectic_form",
    "symplectic_eigenvalues",
    "normal_modes",
    "thermal_state",
    "evolve",
    "propagator",
    "total_energy",
    "von_neumann_entropy",
    "entropy_from_symplectic_spectrum",
    "relative_entropy",
    "relative_entropy_to_thermal",
    "reduced_state",
    "mutual_information",
    "free_energy",
    "thermal_free_energy",
    "thermal_entropy",
    "temperature_fit",
    "heisenberg_defect",
]

# Public numeric contract (also stamped into run summaries by cli_io).
TOLERANCES = {
    "symmetry_rel": 1e-10,
    "symplectic_max": 1e-9,
    "heisenberg_min": 1e-8,
    "entropy_clamp": 1e-6,
    "zero_mode_rel": 1e-12,
    "psd_rel": 1e-10,
}


class InvariantViolation(RuntimeError):
    """A physics invariant failed beyond its documented tolerance."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        msg = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(msg)


def symplectic_form(n_pixels: int) -> np.ndarray:
    """Symplectic form Omega = [[0, I], [-I, 0]] in (drho..., phi...) ordering."""
    if n_pixels < 1:
        raise ValueError("need at least one mode")
    eye = np.eye(n_pixels)
    zero = np.zeros((n_pixels, n_pixels))
    return np.block([[zero, eye], [-eye, zero]])


def _check_symmetric(m: np.ndarray, what: str, rtol: float) -> None:
    scale = max(1.0, float(np.abs(m).max()))
    defect = float(np.abs(m - m.T).max())
    if defect > rtol * scale:
        raise InvariantViolation(f"{what} symmetry", f"defect {defect:.3e}")


@dataclass
class GaussianState:
    """Full Gaussian description of the phonon field on one lattice.

    Attributes:
        cov: 2N x 2N real symmetric covariance matrix.
        mean: length-2N vector of first moments.
        dz: pixel size in um (sets the rescaled commutator).
    """

    cov: np.ndarray
    mean: np.ndarray
    dz: float

    def __post_init__(self) -> None:
        self.cov = np.asarray(self.cov, dtype=float)
        self.mean = np.asarray(self.mean, dtype=float)
        if self.cov.ndim != 2 or self.cov.shape[0] != self.cov.shape[1]:
            raise ValueError("covariance must be square")
        if self.cov.shape[0] % 2 or self.cov.shape[0] < 4:
            raise ValueError("covariance must be 2N x 2N with N >= 2")
        if self.mean.shape != (self.cov.shape[0],):
            raise ValueError("mean length must match covariance")
        if not self.dz > 0:
            raise ValueError("dz must be positive")
        _check_symmetric(self.cov, "covariance", TOLERANCES["symmetry_rel"])

    @property
    def n_pixels(self) -> int:
        return self.cov.shape[0] // 2

    def canonical_cov(self) -> np.ndarray:
        """Dimensionless covariance dz*cov (canonical commutators)."""
        return self.dz * self.cov

    def canonical_mean(self) -> np.ndarray:
        return math.sqrt(self.dz) * self.mean

    def copy(self) -> "GaussianState":
        return GaussianState(self.cov.copy(), self.mean.copy(), self.dz)

    def validate(self) -> None:
        """Check the Heisenberg cone; raises InvariantViolation on breach."""
        defect = heisenberg_defect(self)
        if defect > TOLERANCES["heisenberg_min"]:
            raise InvariantViolation(
                "heisenberg cone", f"min symplectic eigenvalue 1 - {defect:.3e}")


@dataclass
class QuadraticHamiltonian:
    """Block Hamiltonian matrix H = diag(h_rho) (+) h_phi on one lattice.

    ``h_rho`` holds the diagonal density-sector couplings dz*g(z) in J*um^2
    (pairing with drho^2); ``h_phi`` is the symmetric phase-sector matrix in J.
    """

    h_rho: np.ndarray
    h_phi: np.ndarray
    dz: float

    def __post_init__(self) -> None:
        self.h_rho = np.asarray(self.h_rho, dtype=float)
        self.h_phi = np.asarray(self.h_phi, dtype=float)
        n = self.h_rho.shape[0]
        if self.h_rho.ndim != 1 or n < 2:
            raise ValueError("h_rho must be a vector of length N >= 2")
        if self.h_phi.shape != (n, n):
            raise ValueError("h_phi must be N x N")
        if not self.dz > 0:
            raise ValueError("dz must be positive")
        if np.any(self.h_rho <= 0):
            raise ValueError("h_rho entries must be strictly positive")
        _check_symmetric(self.h_phi, "h_phi", TOLERANCES["symmetry_rel"])

    @property
    def n_pixels(self) -> int:
        return self.h_rho.shape[0]

    def full_matrix(self) -> np.ndarray:
        """Dense 2N x 2N block matrix (mostly for tests and cross-checks)."""
        n = self.n_pixels
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = np.diag(self.h_rho)
        out[n:, n:] = self.h_phi
        return out

    def check_positive(self) -> None:
        ev_min = float(np.linalg.eigvalsh(self.h_phi).min())
        scale = max(1.0, float(np.abs(self.h_phi).max()))
        if ev_min < -TOLERANCES["psd_rel"] * scale:
            raise InvariantViolation("h_phi positive semidefinite",
                                     f"min eigenvalue {ev_min:.3e}")


@dataclass
class NormalModeDecomposition:
    """Normal modes of a quadratic Hamiltonian.

    ``transform`` is the symplectic block matrix M = M1 M2 such that the
    canonical coordinates r = sqrt(dz) M^-1 X decouple the Hamiltonian;
    ``frequencies`` lists the gapped mode frequencies in rad/ms ascending,
    and ``n_zero`` counts exact zero modes (sorted first internally).
    """

    frequencies: np.ndarray
    transform: np.ndarray
    n_zero: int
    dz: float
    # Internal factors reused by fast paths.
    _sqrt_h_rho: np.ndarray = field(repr=False, default=None)
    _eigvecs: np.ndarray = field(repr=False, default=None)
    _eigvals: np.ndarray = field(repr=False, default=None)

    @property
    def n_pixels(self) -> int:
        return self.transform.shape[0] // 2

    def inverse_transform(self) -> np.ndarray:
        """M^-1, assembled from the explicit two-stage factors."""
        n = self.n_pixels
        w = self._sqrt_h_rho
        o = self._eigvecs
        quart = self._sigma_quarter()
        inv = np.zeros((2 * n, 2 * n))
        # (M1 M2)^-1 with M1 = diag(1/w) (+) diag(w), M2 = O s^1/4 (+) O s^-1/4.
        inv[:n, :n] = (o.T * w[None, :]) / quart[:, None]
        inv[n:, n:] = (o.T / w[None, :]) * quart[:, None]
        return inv

    def _sigma_quarter(self) -> np.ndarray:
        lam = np.where(np.arange(self.n_pixels) < self.n_zero, 1.0, self._eigvals)
        return np.power(lam, 0.25)


def _symplectic_spectrum_canonical(gamma: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues of a dimensionless covariance matrix.

    Returns the N deduplicated eigenvalues of |i Omega Gamma| ascending.
    """
    n2 = gamma.shape[0]
    n = n2 // 2
    w, u = np.linalg.eigh(gamma)
    w = np.clip(w, 0.0, None)
    root = (u * np.sqrt(w)) @ u.T
    omega = symplectic_form(n)
    k = root @ omega @ root
    m = k @ k.T  # = -K^2, symmetric PSD with doubly degenerate spectrum d^2
    ev = np.clip(np.linalg.eigvalsh(m), 0.0, None)
    d = np.sqrt(ev)
    return 0.5 * (d[0::2] + d[1::2])


def symplectic_eigenvalues(state: GaussianState) -> np.ndarray:
    """Symplectic spectrum of dz*cov, ascending; >= 1 for physical states."""
    return _symplectic_spectrum_canonical(state.canonical_cov())


def heisenberg_defect(state: GaussianState) -> float:
    """How far below 1 the smallest symplectic eigenvalue sits (>= 0)."""
    d_min = float(symplectic_eigenvalues(state)[0])
    return max(0.0, 1.0 - d_min)


def _williamson_canonical(gamma: np.ndarray):
    """Williamson normal form of a dimensionless covariance matrix.

    Returns ``(d, m, m_inv)`` with ``gamma = m diag(repeat(d, 2)) m^T`` in
    interleaved (q_1, p_1, q_2, p_2, ...) mode ordering and ``m`` symplectic
    (it maps the interleaved form onto the block form used elsewhere).
    """
    n2 = gamma.shape[0]
    n = n2 // 2
    w, u = np.linalg.eigh(gamma)
    if w.min() <= 0:
        raise InvariantViolation("covariance positive definite",
                                 f"min eigenvalue {w.min():.3e}")
    root = (u * np.sqrt(w)) @ u.T
    root_inv = (u / np.sqrt(w)) @ u.T
    omega = symplectic_form(n)
    k = root @ omega @ root
    k = 0.5 * (k - k.T)
    t, q = schur(k, output="real")
    # Antisymmetric Schur form: 2x2 blocks [[0, b], [-b, 0]]; flip negative b.
    d = np.empty(n)
    for i in range(n):
        b = 0.5 * (t[2 * i, 2 * i + 1] - t[2 * i + 1, 2 * i])
        if b < 0:
            q[:, [2 * i, 2 * i + 1]] = q[:, [2 * i + 1, 2 * i]]
            b = -b
        d[i] = b
    order = np.argsort(d)
    d = d[order]
    cols = np.empty(n2, dtype=int)
    cols[0::2] = 2 * order
    cols[1::2] = 2 * order + 1
    q = q[:, cols]
    d_rep = np.repeat(d, 2)
    m = root @ q / np.sqrt(d_rep)[None, :]
    m_inv = np.sqrt(d_rep)[:, None] * (q.T @ root_inv)
    return d, m, m_inv


def normal_modes(ham: QuadraticHamiltonian,
                 zero_tol: float = TOLERANCES["zero_mode_rel"],
                 constants: PhysicalConstants = DEFAULT_CONSTANTS
                 ) -> NormalModeDecomposition:
    """Diagonalize a block Hamiltonian by the two-stage symplectic transform.

    Stage one rescales by sqrt(h_rho); stage two orthogonally diagonalizes
    the rescaled phase matrix and applies quartic-root mode scaling.  Phase
    eigenvalues below ``zero_tol`` times the largest one count as zero modes.
    """
    n = ham.n_pixels
    w = np.sqrt(ham.h_rho)
    h_tilde = w[:, None] * ham.h_phi * w[None, :]
    h_tilde = 0.5 * (h_tilde + h_tilde.T)
    lam, o = np.linalg.eigh(h_tilde)
    lam_max = float(lam.max())
    if lam_max <= 0:
        raise InvariantViolation("h_phi positive semidefinite",
                                 "no positive phase eigenvalues")
    n_zero = int(np.sum(lam < zero_tol * lam_max))
    lam = np.clip(lam, 0.0, None)
    quart = np.power(np.where(np.arange(n) < n_zero, 1.0, lam), 0.25)

    m = np.zeros((2 * n, 2 * n))
    m[:n, :n] = (o * quart[None, :]) / w[:, None]
    m[n:, n:] = (o / quart[None, :]) * w[:, None]

    omega_k = np.sqrt(lam[n_zero:]) / (constants.hbar_j_ms * ham.dz)
    return NormalModeDecomposition(
        frequencies=omega_k, transform=m, n_zero=n_zero, dz=ham.dz,
        _sqrt_h_rho=w, _eigvecs=o, _eigvals=lam)


def thermal_state(ham: QuadraticHamiltonian, temperature_nk: float,
                  constants: PhysicalConstants = DEFAULT_CONSTANTS,
                  modes: NormalModeDecomposition | None = None) -> GaussianState:
    """Gibbs state of ``ham``: mode occupations follow coth(hbar w / 2 kT).

    The Hamiltonian must be fully gapped; regularize the phase zero mode
    with a finite tunnel coupling J first.
    """
    if not temperature_nk > 0:
        raise ValueError("temperature must be positive")
    if modes is None:
        modes = normal_modes(ham, constants=constants)
    if modes.n_zero:
        raise ValueError(
            f"Hamiltonian has {modes.n_zero} zero mode(s); regularize J first")
    kt = constants.thermal_energy(temperature_nk)
    x = constants.hbar_j_ms * modes.frequencies / (2.0 * kt)
    d = 1.0 / np.tanh(x)
    m = modes.transform
    cov = (m * np.tile(d, 2)[None, :]) @ m.T / ham.dz
    cov = 0.5 * (cov + cov.T)
    return GaussianState(cov=cov, mean=np.zeros(2 * ham.n_pixels), dz=ham.dz)


# ---------------------------------------------------------------------------
# Symplectic evolution


def _rotation_factors(lam: np.ndarray, dt: float, dz: float, hbar_jms: float):
    """Mode-wise propagator entries cos, sqrt(lam) sin, sin/sqrt(lam)."""
    a = dt / (hbar_jms * dz)
    lam = np.clip(lam, 0.0, None)
    root = np.sqrt(lam)
    theta = a * root
    cos_t = np.cos(theta)
    s_plus = root * np.sin(theta)
    small = theta < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        s_minus = np.where(small, a * (1.0 - theta**2 / 6.0),
                           np.sin(theta) / np.where(small, 1.0, root))
    return cos_t, s_plus, s_minus


def propagator(ham: QuadraticHamiltonian, dt: float,
               constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Symplectic matrix G = exp(Omega H dt / (hbar dz)), exact via spectra.

    Built from the eigendecomposition of the rescaled phase matrix, so it is
    the matrix exponential to working precision and handles zero modes
    (free drift) exactly.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    n = ham.n_pixels
    w = np.sqrt(ham.h_rho)
    h_tilde = w[:, None] * ham.h_phi * w[None, :]
    lam, o = np.linalg.eigh(0.5 * (h_tilde + h_tilde.T))
    cos_t, s_plus, s_minus = _rotation_factors(lam, dt, ham.dz, constants.hbar_j_ms)
    c_mat = (o * cos_t[None, :]) @ o.T
    p_mat = (o * s_plus[None, :]) @ o.T
    m_mat = (o * s_minus[None, :]) @ o.T
    g = np.zeros((2 * n, 2 * n))
    g[:n, :n] = c_mat / w[:, None] * w[None, :]
    g[:n, n:] = p_mat / w[:, None] / w[None, :]
    g[n:, :n] = -m_mat * w[:, None] * w[None, :]
    g[n:, n:] = c_mat * w[:, None] / w[None, :]
    return g


def symplectic_defect(g: np.ndarray) -> float:
    """max |G Omega G^T - Omega|."""
    n = g.shape[0] // 2
    omega = symplectic_form(n)
    return float(np.abs(g @ omega @ g.T - omega).max())


def evolve(state: GaussianState, ham: QuadraticHamiltonian, dt: float,
           constants: PhysicalConstants = DEFAULT_CONSTANTS) -> GaussianState:
    """Evolve a state for ``dt`` ms under a time-independent Hamiltonian."""
    if state.n_pixels != ham.n_pixels:
        raise ValueError("state and Hamiltonian dimensions differ")
    if abs(state.dz - ham.dz) > 1e-12 * state.dz:
        raise ValueError("state and Hamiltonian use different cutoffs")
    g = propagator(ham, dt, constants)
    defect = symplectic_defect(g)
    if defect > TOLERANCES["symplectic_max"]:
        raise InvariantViolation("symplectic propagator", f"defect {defect:.3e}")
    cov = g @ state.cov @ g.T
    return GaussianState(cov=0.5 * (cov + cov.T), mean=g @ state.mean, dz=state.dz)


def _phase_mode_decomposition(h_rho: np.ndarray, h_phi: np.ndarray):
    """(w, lam, O) with w = sqrt(h_rho) and W h_phi W = O diag(lam) O^T."""
    w = np.sqrt(h_rho)
    h_tilde = w[:, None] * h_phi * w[None, :]
    lam, o = np.linalg.eigh(0.5 * (h_tilde + h_tilde.T))
    return w, lam, o


def _apply_rotation(cov: np.ndarray, mean: np.ndarray, w: np.ndarray,
                    lam: np.ndarray, o: np.ndarray, dt: float, dz: float,
                    hbar_jms: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact evolution of (cov, mean) in the normal-mode frame.

    Hot path for Trotterized ramps: a dozen N-sized products instead of
    dense 2N x 2N exponentials.
    """
    n = w.shape[0]
    cos_t, s_plus, s_minus = _rotation_factors(lam, dt, dz, hbar_jms)

    a = w[:, None] * cov[:n, :n] * w[None, :]
    b = (w[:, None] / w[None, :]) * cov[:n, n:]
    c = cov[n:, n:] / (w[:, None] * w[None, :])
    a = o.T @ a @ o
    b = o.T @ b @ o
    c = o.T @ c @ o

    ca = cos_t[:, None] * a + s_plus[:, None] * b.T
    cb = cos_t[:, None] * b + s_plus[:, None] * c
    da = -s_minus[:, None] * a + cos_t[:, None] * b.T
    db = -s_minus[:, None] * b + cos_t[:, None] * c
    a2 = ca * cos_t[None, :] + cb * s_plus[None, :]
    b2 = -ca * s_minus[None, :] + cb * cos_t[None, :]
    c2 = -da * s_minus[None, :] + db * cos_t[None, :]

    a2 = o @ a2 @ o.T
    b2 = o @ b2 @ o.T
    c2 = o @ c2 @ o.T

    out = np.empty_like(cov)
    out[:n, :n] = 0.5 * (a2 + a2.T) / (w[:, None] * w[None, :])
    out[:n, n:] = b2 * (w[None, :] / w[:, None])
    out[n:, :n] = out[:n, n:].T
    out[n:, n:] = 0.5 * (c2 + c2.T) * (w[:, None] * w[None, :])

    mr = o.T @ (w * mean[:n])
    mp = o.T @ (mean[n:] / w)
    mr2 = cos_t * mr + s_plus * mp
    mp2 = -s_minus * mr + cos_t * mp
    new_mean = np.concatenate(((o @ mr2) / w, (o @ mp2) * w))
    return out, new_mean


def _step_cov_mean(cov: np.ndarray, mean: np.ndarray, h_rho: np.ndarray,
                   h_phi: np.ndarray, dt: float, dz: float,
                   hbar_jms: float) -> tuple[np.ndarray, np.ndarray]:
    """One exact evolution step under an instantaneous Hamiltonian."""
    w, lam, o = _phase_mode_decomposition(h_rho, h_phi)
    return _apply_rotation(cov, mean, w, lam, o, dt, dz, hbar_jms)


# ---------------------------------------------------------------------------
# Energetics


def total_energy(state: GaussianState, ham: QuadraticHamiltonian) -> float:
    """<H> in J: 1/4 Tr(H cov) + 1/2 mean^T H mean."""
    if state.n_pixels != ham.n_pixels:
        raise ValueError("state and Hamiltonian dimensions differ")
    n = ham.n_pixels
    quad = float(ham.h_rho @ np.diag(state.cov[:n, :n]))
    quad += float(np.einsum("ij,ij->", ham.h_phi, state.cov[n:, n:]))
    mr, mp = state.mean[:n], state.mean[n:]
    lin = float(ham.h_rho @ mr**2) + float(mp @ ham.h_phi @ mp)
    return 0.25 * quad + 0.5 * lin


def energy_density(state: GaussianState, ham: QuadraticHamiltonian) -> np.ndarray:
    """Energy per pixel (J); sums exactly to ``total_energy``.

    Both quadrature sectors contribute at each pixel:
    E_z = 1/4 [(H cov)_zz + (H cov)_(z+N)(z+N)] plus the mean-field part.
    """
    n = ham.n_pixels
    rho_part = ham.h_rho * np.diag(state.cov[:n, :n])
    phi_part = np.einsum("ij,ji->i", ham.h_phi, state.cov[n:, n:])
    mr, mp = state.mean[:n], state.mean[n:]
    lin = ham.h_rho * mr**2 + mp * (ham.h_phi @ mp)
    return 0.25 * (rho_part + phi_part) + 0.5 * lin


# ---------------------------------------------------------------------------
# Entropic functionals


def _entropy_terms(d: np.ndarray) -> np.ndarray:
    """Per-mode entropy ((d+1)/2)log((d+1)/2) - ((d-1)/2)log((d-1)/2)."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 1.0 - TOLERANCES["entropy_clamp"]):
        raise InvariantViolation(
            "symplectic eigenvalue >= 1",
            f"min {d.min():.12f} clamped beyond {TOLERANCES['entropy_clamp']:.0e}")
    d = np.clip(d, 1.0, None)
    e = d - 1.0
    out = np.zeros_like(d)
    small = e < 1e-7
    big = ~small
    half = 0.5 * e[big]
    out[big] = (1.0 + half) * np.log1p(half) - half * np.log(half)
    es = e[small]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(es > 0, np.log(es / 2.0), 0.0)
    out[small] = 0.5 * es * (1.0 - log_term)
    return out


def entropy_from_symplectic_spectrum(d: Sequence[float]) -> float:
    """Von Neumann entropy (nats) from symplectic eigenvalues."""
    return float(np.sum(_entropy_terms(np.asarray(d, dtype=float))))


def von_neumann_entropy(state: GaussianState) -> float:
    """Entropy of the full state in nats; zero for pure states."""
    return entropy_from_symplectic_spectrum(symplectic_eigenvalues(state))


def reduced_state(state: GaussianState, pixels: slice | Sequence[int]) -> GaussianState:
    """Restriction of the state to a pixel window (principal submatrix)."""
    n = state.n_pixels
    idx = np.arange(n)[pixels] if isinstance(pixels, slice) else np.asarray(pixels)
    if idx.size == 0:
        raise ValueError("empty pixel selection")
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError("pixel selection out of range")
    sel = np.concatenate((idx, n + idx))
    return GaussianState(cov=state.cov[np.ix_(sel, sel)].copy(),
                         mean=state.mean[sel].copy(), dz=state.dz)


def mutual_information(state: GaussianState, cut: int) -> float:
    """I(A:B) = S(A) + S(B) - S(AB) across a pixel cut."""
    n = state.n_pixels
    if not 0 < cut < n:
        raise ValueError("cut must split the lattice into two non-empty parts")
    s_left = von_neumann_entropy(reduced_state(state, slice(0, cut)))
    s_right = von_neumann_entropy(reduced_state(state, slice(cut, n)))
    s_joint = von_neumann_entropy(state)
    value = s_left + s_right - s_joint
    if value < -1e-9:
        raise InvariantViolation("mutual information >= 0", f"value {value:.3e}")
    return max(value, 0.0)


def _log_z_from_spectrum(d: np.ndarray) -> float:
    """log Z of a faithful Gaussian state: sum_k log(sqrt(d_k^2 - 1)/2)."""
    return float(np.sum(0.5 * np.log(d**2 - 1.0) - math.log(2.0)))


def relative_entropy(state: GaussianState, reference: GaussianState) -> float:
    """Quantum relative entropy S(state || reference) in nats.

    Uses the closed covariance-matrix form
    ``-S(state) + log Z_ref + 1/4 Tr(H_ref cov) + 1/2 dmean^T H_ref dmean``
    where ``H_ref`` is the modular Hamiltonian of the reference, obtained
    from its Williamson normal form.  The reference must be faithful.
    """
    if state.n_pixels != reference.n_pixels:
        raise ValueError("states have different sizes")
    if abs(state.dz - reference.dz) > 1e-12 * state.dz:
        raise ValueError("states use different cutoffs")
    ups, _, m_inv = _williamson_canonical(reference.canonical_cov())
    if ups.min() <= 1.0 + 1e-9:
        raise ValueError("reference state not faithful")
    beta_omega = 2.0 * np.arctanh(1.0 / ups)  # arccoth(d)
    h_ref = (m_inv.T * np.repeat(beta_omega, 2)[None, :]) @ m_inv

    gamma = state.canonical_cov()
    d_state = _symplectic_spectrum_canonical(gamma)
    value = -entropy_from_symplectic_spectrum(d_state)
    value += _log_z_from_spectrum(ups)
    value += 0.25 * float(np.einsum("ij,ij->", h_ref, gamma))
    delta = reference.canonical_mean() - state.canonical_mean()
    value += 0.5 * float(delta @ h_ref @ delta)
    if value < -1e-9:
        raise InvariantViolation("relative entropy >= 0", f"value {value:.3e}")
    return max(value, 0.0)


def _mode_frame_moments(state: GaussianState, modes: NormalModeDecomposition):
    """Per-mode symmetric variances and mean components of a state."""
    m_inv = modes.inverse_transform()
    gamma = m_inv @ state.canonical_cov() @ m_inv.T
    n = modes.n_pixels
    e = 0.5 * (np.diag(gamma)[:n] + np.diag(gamma)[n:])
    mu = m_inv @ state.canonical_mean()
    mu2 = mu[:n] ** 2 + mu[n:] ** 2
    return e, mu2


def relative_entropy_to_thermal(state: GaussianState, ham: QuadraticHamiltonian,
                                temperature_nk: float,
                                constants: PhysicalConstants = DEFAULT_CONSTANTS,
                                modes: NormalModeDecomposition | None = None,
                                _cache: tuple | None = None) -> float:
    """S(state || thermal(ham, T)) evaluated in the normal-mode frame.

    Equivalent to ``relative_entropy`` against ``thermal_state(ham, T)`` but
    O(N) per temperature once the mode frame is known, which makes
    temperature fits cheap.
    """
    if _cache is None:
        if modes is None:
            modes = normal_modes(ham, constants=constants)
        if modes.n_zero:
            raise ValueError("thermal reference needs a gapped Hamiltonian")
        e, mu2 = _mode_frame_moments(state, modes)
        s_state = von_neumann_entropy(state)
        _cache = (modes.frequencies, e, mu2, s_state)
    omega, e, mu2, s_state = _cache
    kt = constants.thermal_energy(temperature_nk)
    x = constants.hbar_j_ms * omega / (2.0 * kt)
    # log(2 sinh x) = x + log1p(-exp(-2x)), stable for large x
    log_z = -np.sum(x + np.log1p(-np.exp(-2.0 * x)))
    value = -s_state + float(log_z) + float(np.sum(x * e)) + float(np.sum(x * mu2))
    return max(value, 0.0)


def free_energy(state: GaussianState, ham: QuadraticHamiltonian,
                temperature_nk: float,
                constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Non-equilibrium free energy F = <H> - k_B T S(state) in J."""
    if not temperature_nk > 0:
        raise ValueError("temperature must be positive")
    kt = constants.thermal_energy(temperature_nk)
    return total_energy(state, ham) - kt * von_neumann_entropy(state)


def thermal_free_energy(ham: QuadraticHamiltonian, temperature_nk: float,
                        constants: PhysicalConstants = DEFAULT_CONSTANTS,
                        modes: NormalModeDecomposition | None = None) -> float:
    """Closed-form F of the Gibbs state: sum_k [hw/2 + kT log(1 - e^-hw/kT)]."""
    if modes is None:
        modes = normal_modes(ham, constants=constants)
    if modes.n_zero:
        raise ValueError("free energy needs a gapped Hamiltonian")
    kt = constants.thermal_energy(temperature_nk)
    hw = constants.hbar_j_ms * modes.frequencies
    return float(np.sum(0.5 * hw + kt * np.log1p(-np.exp(-hw / kt))))


def thermal_entropy(ham: QuadraticHamiltonian, temperature_nk: float,
                    constants: PhysicalConstants = DEFAULT_CONSTANTS,
                    modes: NormalModeDecomposition | None = None) -> float:
    """Closed-form Gibbs entropy sum_k [x n(x) - log(1 - e^-x)], x = hw/kT."""
    if modes is None:
        modes = normal_modes(ham, constants=constants)
    kt = constants.thermal_energy(temperature_nk)
    hw = constants.hbar_j_ms * modes.frequencies
    x = hw / kt
    occ = np.exp(-x) / (1.0 - np.exp(-x))
    return float(np.sum(x * occ - np.log1p(-np.exp(-x))))


@dataclass(frozen=True)
class TemperatureFit:
    """Result of fitting the closest thermal state by relative entropy."""

    temperature_nk: float
    residual: float
    at_boundary: bool


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def temperature_fit(state: GaussianState, ham: QuadraticHamiltonian,
                    t_range: tuple[float, float] = (1.0, 200.0),
                    resolution_nk: float = 0.1,
                    constants: PhysicalConstants = DEFAULT_CONSTANTS,
                    modes: NormalModeDecomposition | None = None) -> TemperatureFit:
    """Golden-section fit of T minimizing S(state || thermal(ham, T)).

    The search is resolved to ``resolution_nk``; a minimum pinned to either
    end of ``t_range`` is flagged via ``at_boundary``.
    """
    lo, hi = t_range
    if not (0 < lo < hi):
        raise ValueError("temperature range must be positive and ordered")
    if modes is None:
        modes = normal_modes(ham, constants=constants)
    if modes.n_zero:
        raise ValueError("temperature fit needs a gapped Hamiltonian")
    e, mu2 = _mode_frame_moments(state, modes)
    s_state = von_neumann_entropy(state)
    cache = (modes.frequencies, e, mu2, s_state)

    def objective(t: float) -> float:
        return relative_entropy_to_thermal(state, ham, t, constants, _cache=cache)

    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = objective(c), objective(d)
    while (b - a) > resolution_nk:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = objective(d)
    # Parabolic polish inside the final bracket; the certified resolution
    # stays at resolution_nk but an exactly thermal input fits essentially
    # exactly.
    xs = np.array([a, 0.5 * (a + b), b])
    fs = np.array([objective(x) for x in xs])
    denom = ((xs[1] - xs[0]) * (fs[1] - fs[2])
             - (xs[1] - xs[2]) * (fs[1] - fs[0]))
    if denom != 0.0:
        vertex = xs[1] - 0.5 * (
            (xs[1] - xs[0]) ** 2 * (fs[1] - fs[2])
            - (xs[1] - xs[2]) ** 2 * (fs[1] - fs[0])) / denom
        if a <= vertex <= b:
            xs = np.append(xs, vertex)
            fs = np.append(fs, objective(vertex))
    i_min = int(np.argmin(fs))
    t_best, best = float(xs[i_min]), float(fs[i_min])
    at_boundary = (t_best - lo) <= resolution_nk or (hi - t_best) <= resolution_nk
    return TemperatureFit(temperature_nk=t_best, residual=best,
                          at_boundary=at_boundary)

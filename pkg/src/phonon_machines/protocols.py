"""Full machine protocols: piston strokes, piston-bath contact, Otto
refrigeration cycles, and the correlated two-condensate heat-flow run.

A machine is a spatial row of condensates ("pieces").  Pieces that are
currently uncorrelated live in separate Gaussian states; opening a valve
joins neighbours into one state, and splitting either projects the
correlations away (default) or keeps the joint state when correlation
tracking is the point of the run.  Subsystem energies are read off the
per-pixel energy density, so they sum to the joint total exactly even
while a valve is open.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import qtp
from .gaussian import (GaussianState, QuadraticHamiltonian, TemperatureFit,
                       _apply_rotation, _phase_mode_decomposition,
                       mutual_information, reduced_state, relative_entropy,
                       temperature_fit, thermal_state)
from .lattice import (CouplingSpec, DensityProfile, build_profile, discretize,
                      join_hamiltonians)
from .qtp import DT_MAX_MS_DEFAULT, MergeConfig, TrajectoryFrame, default_step_count
from .units import DEFAULT_CONSTANTS, PhysicalConstants

__all__ = [
    "SubsystemSpec",
    "MachineLayout",
    "OttoConfig",
    "ValveConfig",
    "MachineFrame",
    "RunRecord",
    "run_merge",
    "run_anomalous",
    "run_piston_stroke",
    "run_piston_bath",
    "run_otto",
    "cooling_report",
    "sound_traversal_ms",
]


@dataclass(frozen=True)
class SubsystemSpec:
    """One condensate in the machine row."""

    role: str
    length_um: float
    temperature_nk: float
    profile_kind: str = "erf_box"
    peak_density_per_um: float = 100.0
    edge_width_um: float = 4.0
    edge_floor: float = 0.5

    def __post_init__(self) -> None:
        if self.length_um <= 0 or self.temperature_nk <= 0:
            raise ValueError("length and temperature must be positive")


@dataclass
class MachineLayout:
    """Machine geometry: subsystems in spatial order sharing one cutoff."""

    subsystems: list[SubsystemSpec]
    dz_um: float = 0.5
    sound_speed_um_ms: float = 2.0
    j_hz: float = 0.01
    constants: PhysicalConstants = field(default_factory=lambda: DEFAULT_CONSTANTS)

    def __post_init__(self) -> None:
        if not self.subsystems:
            raise ValueError("layout needs at least one subsystem")
        roles = [s.role for s in self.subsystems]
        if len(set(roles)) != len(roles):
            raise ValueError("subsystem roles must be unique")
        if self.dz_um <= 0:
            raise ValueError("dz must be positive")

    def coupling(self) -> CouplingSpec:
        peak = max(s.peak_density_per_um for s in self.subsystems)
        return CouplingSpec(sound_speed_um_ms=self.sound_speed_um_ms,
                            reference_density_per_um=peak, j_hz=self.j_hz,
                            constants=self.constants)

    def index_of(self, role: str) -> int:
        for i, s in enumerate(self.subsystems):
            if s.role == role:
                return i
        raise KeyError(f"no subsystem with role {role!r}")


def sound_traversal_ms(length_um: float, c_um_ms: float) -> float:
    """Time for a wave-packet to cross a condensate, for valve scheduling."""
    return length_um / c_um_ms


@dataclass(frozen=True)
class ValveConfig:
    """Timing of one open-hold-close valve episode."""

    t_merge_ms: float = 20.0
    t_hold_ms: float = 0.0
    t_split_ms: float = 20.0
    decorrelate_on_split: bool = True


@dataclass(frozen=True)
class OttoConfig:
    """Timing and options of the refrigeration cycle."""

    t_comp_ms: float = 15.0
    t_merge_ms: float = 20.0
    t_split_ms: float = 20.0
    t_hold_ms: float = 0.0
    compression_ratio: float = 0.5
    n_cycles: int = 3
    reset_bath_and_piston: bool = False
    decorrelate_on_split: bool = True

    def __post_init__(self) -> None:
        for name in ("t_comp_ms", "t_merge_ms", "t_split_ms", "t_hold_ms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.compression_ratio <= 1:
            raise ValueError("compression ratio must lie in (0, 1]")
        if self.n_cycles < 0:
            raise ValueError("cycle count must be non-negative")

    @property
    def cycle_period_ms(self) -> float:
        return (2 * self.t_comp_ms + 2 * self.t_merge_ms + 2 * self.t_split_ms
                + 2 * self.t_hold_ms)


@dataclass
class MachineFrame:
    """Machine-wide snapshot used for the energy-density output."""

    time_ms: float
    energy: np.ndarray  # J per pixel, all pieces stacked
    pixel_width_um: np.ndarray
    boundaries: tuple[int, ...]


@dataclass
class RunRecord:
    """Per-frame time series of a protocol run."""

    subsystem_names: list[str]
    times_ms: list[float] = field(default_factory=list)
    energy_j: dict[str, list[float]] = field(default_factory=dict)
    rel_entropy: dict[str, list[float]] = field(default_factory=dict)
    temp_fit_nk: dict[str, list[float]] = field(default_factory=dict)
    mutual_info: list[float] = field(default_factory=list)
    frames: list[MachineFrame] = field(default_factory=list)
    cycle_boundaries_ms: list[float] = field(default_factory=list)
    series: dict[str, list[float]] = field(default_factory=dict)
    reversal_intervals_ms: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for name in self.subsystem_names:
            self.energy_j.setdefault(name, [])
            self.rel_entropy.setdefault(name, [])
            self.temp_fit_nk.setdefault(name, [])

    def energy_rel(self, name: str) -> np.ndarray:
        e = np.asarray(self.energy_j[name])
        return e / e[0]

    def initial_bulk_energy_per_um(self) -> float:
        frame = self.frames[0]
        density = frame.energy / frame.pixel_width_um
        return float(np.median(density))

    def per_cycle_extracted_j(self, name: str = "system") -> list[float]:
        if not self.cycle_boundaries_ms:
            return []
        e = np.asarray(self.energy_j[name])
        t = np.asarray(self.times_ms)
        values = [float(np.interp(b, t, e)) for b in
                  [0.0, *self.cycle_boundaries_ms]]
        return [values[i] - values[i + 1] for i in range(len(values) - 1)]


# ---------------------------------------------------------------------------
# Machine engine


class _Cluster:
    """Contiguous pieces sharing one Gaussian state."""

    def __init__(self, names, hams, state, widths):
        self.names = list(names)
        self.hams = list(hams)  # local (uncoupled) piece Hamiltonians
        self.state = state
        self.widths = list(widths)  # physical pixel width per piece (um)

    @property
    def sizes(self):
        return [h.n_pixels for h in self.hams]

    def block_ham(self) -> QuadraticHamiltonian:
        if len(self.hams) == 1:
            return self.hams[0]
        n = sum(self.sizes)
        h_rho = np.concatenate([h.h_rho for h in self.hams])
        h_phi = np.zeros((n, n))
        at = 0
        for h in self.hams:
            h_phi[at:at + h.n_pixels, at:at + h.n_pixels] = h.h_phi
            at += h.n_pixels
        return QuadraticHamiltonian(h_rho=h_rho, h_phi=h_phi, dz=self.state.dz)


def _edge_density(ham: QuadraticHamiltonian, edge: str,
                  constants: PhysicalConstants) -> float:
    """Effective boundary-pixel density read from the tridiagonal bond."""
    stiff = constants.hbar_j_ms**2 / (constants.mass_internal * ham.dz)
    if edge == "right":
        return float(-ham.h_phi[-1, -2] / stiff)
    return float(-ham.h_phi[0, 1] / stiff)


class _Machine:
    """Evolution bookkeeping for a row of condensates."""

    def __init__(self, layout: MachineLayout, frame_stride: int = 20,
                 dt_max_ms: float = DT_MAX_MS_DEFAULT,
                 validate_frames: bool = True):
        self.layout = layout
        self.coupling = layout.coupling()
        self.constants = layout.constants
        self.frame_stride = frame_stride
        self.dt_max_ms = dt_max_ms
        self.validate_frames = validate_frames
        self.time_ms = 0.0
        self.record = RunRecord([s.role for s in layout.subsystems])
        self.frame_hook: Callable[["_Machine"], None] | None = None
        self._stepper_cache: dict = {}

        self.profiles: dict[str, DensityProfile] = {}
        self.clusters: list[_Cluster] = []
        self.initial_states: dict[str, GaussianState] = {}
        self.initial_hams: dict[str, QuadraticHamiltonian] = {}
        for spec in layout.subsystems:
            prof = build_profile(spec.profile_kind, spec.length_um,
                                 spec.peak_density_per_um,
                                 spec.edge_width_um, spec.edge_floor,
                                 layout.dz_um)
            ham = discretize(prof, self.coupling)
            state = thermal_state(ham, spec.temperature_nk,
                                  constants=self.constants)
            self.profiles[spec.role] = prof
            self.initial_states[spec.role] = state.copy()
            self.initial_hams[spec.role] = ham
            self.clusters.append(_Cluster([spec.role], [ham], state,
                                          [layout.dz_um]))
        self._emit()

    # -- bookkeeping -------------------------------------------------------

    def cluster_of(self, role: str) -> tuple[_Cluster, int]:
        for cl in self.clusters:
            if role in cl.names:
                return cl, cl.names.index(role)
        raise KeyError(role)

    def _emit(self, acting: tuple[_Cluster, TrajectoryFrame] | None = None,
              mutual_cut: str | None = None,
              diagnostics: dict | None = None) -> None:
        """Append one record row plus a machine frame at the current time.

        ``acting`` supplies the instantaneous Hamiltonian of the cluster a
        ramp is driving, so interface-bond energy is attributed correctly.
        """
        rec = self.record
        rec.times_ms.append(self.time_ms)
        energies: dict[str, float] = {}
        stacked = []
        widths = []
        for cl in self.clusters:
            if acting is not None and cl is acting[0]:
                dens = acting[1].energy
            else:
                dens = qtp.energy_density(cl.state, cl.block_ham())
            at = 0
            for name, n, w in zip(cl.names, cl.sizes, cl.widths):
                energies[name] = float(dens[at:at + n].sum())
                stacked.append(dens[at:at + n])
                widths.append(np.full(n, w))
                at += n
        for name in rec.subsystem_names:
            rec.energy_j[name].append(energies[name])
        boundaries = tuple(int(b) for b in
                           np.cumsum([len(v) for v in stacked])[:-1])
        rec.frames.append(MachineFrame(
            time_ms=self.time_ms, energy=np.concatenate(stacked),
            pixel_width_um=np.concatenate(widths), boundaries=boundaries))

        diagnostics = diagnostics or {}
        for name in rec.subsystem_names:
            fit: TemperatureFit | None = diagnostics.get(name)
            rec.rel_entropy[name].append(fit.residual if fit else math.nan)
            rec.temp_fit_nk[name].append(fit.temperature_nk if fit else math.nan)
        if mutual_cut is not None:
            cl, idx = self.cluster_of(mutual_cut)
            cut = sum(cl.sizes[:idx + 1])
            if 0 < cut < cl.state.n_pixels:
                rec.mutual_info.append(mutual_information(cl.state, cut))
            else:
                rec.mutual_info.append(0.0)
        else:
            rec.mutual_info.append(math.nan)
        if self.frame_hook is not None:
            self.frame_hook(self)

    def reduced_piece(self, role: str) -> GaussianState:
        cl, idx = self.cluster_of(role)
        at = sum(cl.sizes[:idx])
        n = cl.sizes[idx]
        m = cl.state.n_pixels
        sel = np.concatenate((np.arange(at, at + n), m + np.arange(at, at + n)))
        return GaussianState(cl.state.cov[np.ix_(sel, sel)].copy(),
                             cl.state.mean[sel].copy(), cl.state.dz)

    def fit_temperature(self, role: str,
                        t_range=(1.0, 200.0)) -> TemperatureFit:
        cl, idx = self.cluster_of(role)
        sub = self.reduced_piece(role)
        return temperature_fit(sub, cl.hams[idx], t_range,
                               constants=self.constants)

    # -- phases ------------------------------------------------------------

    def _advance_others(self, skip: _Cluster, dt: float) -> None:
        for cl in self.clusters:
            if cl is skip:
                continue
            cache = self._stepper_cache.get(id(cl))
            if cache is None:
                ham = cl.block_ham()
                cache = _phase_mode_decomposition(ham.h_rho, ham.h_phi)
                self._stepper_cache[id(cl)] = cache
            w, lam, o = cache
            cov, mean = _apply_rotation(cl.state.cov, cl.state.mean, w, lam, o,
                                        dt, cl.state.dz,
                                        self.constants.hbar_j_ms)
            cl.state = GaussianState(cov, mean, cl.state.dz)

    def run_frames(self, frames: list[TrajectoryFrame], cluster: _Cluster,
                   mutual_cut=None, fit_roles=(), track_ham: bool = False
                   ) -> None:
        """Consume a qtp frame list for ``cluster``, idling every other
        cluster to the same frame times."""
        self._stepper_cache = {}
        t0 = self.time_ms
        last = frames[0].time_ms
        for fr in frames[1:]:
            dt = fr.time_ms - last
            last = fr.time_ms
            self._advance_others(cluster, dt)
            cluster.state = fr.state
            if track_ham and len(cluster.names) == 1:
                cluster.hams = [fr.ham]
                cluster.widths = [fr.state.dz]
            self.time_ms = t0 + fr.time_ms
            diagnostics = {role: self.fit_temperature(role)
                           for role in fit_roles}
            self._emit(acting=(cluster, fr), mutual_cut=mutual_cut,
                       diagnostics=diagnostics)

    def idle_all(self, duration_ms: float, mutual_cut=None, fit_roles=()) -> None:
        if duration_ms <= 0:
            return
        lead = max(self.clusters, key=lambda cl: cl.state.n_pixels)
        frames = qtp.idle(lead.state, lead.block_ham(), duration_ms,
                          self.frame_stride, self.dt_max_ms,
                          constants=self.constants,
                          validate_frames=self.validate_frames)
        self.run_frames(frames, lead, mutual_cut=mutual_cut,
                        fit_roles=fit_roles)

    def valve(self, left_role: str, right_role: str, cfg: ValveConfig,
              mutual_cut=None, fit_roles=()) -> None:
        """Open, hold, and close the valve between two adjacent pieces."""
        i = self.layout.index_of(left_role)
        if self.layout.index_of(right_role) != i + 1:
            raise ValueError("valves connect spatially adjacent subsystems")
        cl_l, idx_l = self.cluster_of(left_role)
        cl_r, idx_r = self.cluster_of(right_role)
        if cl_l is not cl_r:
            if idx_l != len(cl_l.names) - 1 or idx_r != 0:
                raise ValueError("valve endpoints must touch their cluster edge")
            cl = _join_clusters(cl_l, cl_r, self.layout.dz_um)
            self.clusters[self.clusters.index(cl_l)] = cl
            self.clusters.remove(cl_r)
        else:
            cl = cl_l
        cut_piece = cl.names.index(left_role)
        cut = sum(cl.sizes[:cut_piece + 1])

        h_open = cl.block_ham()
        h_joint = self._bonded_ham(cl, cut_piece, h_open)

        if cfg.t_merge_ms > 0:
            n_steps = default_step_count(cfg.t_merge_ms, self.dt_max_ms)
            frames = qtp.ramp_valve(
                cl.state, h_open, h_joint,
                MergeConfig(cfg.t_merge_ms, n_steps, "merge"),
                self.frame_stride, labels=(cut,), constants=self.constants,
                validate_frames=self.validate_frames)
            self.run_frames(frames, cl, mutual_cut=mutual_cut,
                            fit_roles=fit_roles)

        if cfg.t_hold_ms > 0:
            frames = qtp.idle(cl.state, h_joint, cfg.t_hold_ms,
                              self.frame_stride, self.dt_max_ms,
                              labels=(cut,), constants=self.constants,
                              validate_frames=self.validate_frames)
            self.run_frames(frames, cl, mutual_cut=mutual_cut,
                            fit_roles=fit_roles)

        if cfg.t_split_ms > 0:
            n_steps = default_step_count(cfg.t_split_ms, self.dt_max_ms)
            frames = qtp.ramp_valve(
                cl.state, h_open, h_joint,
                MergeConfig(cfg.t_split_ms, n_steps, "split"),
                self.frame_stride, labels=(cut,), constants=self.constants,
                validate_frames=self.validate_frames)
            self.run_frames(frames, cl, mutual_cut=mutual_cut,
                            fit_roles=fit_roles)

            if cfg.decorrelate_on_split:
                cl.state = qtp.decorrelate(cl.state, cut)
                self._split_cluster(cl, cut_piece)
                for role in (left_role, right_role):
                    self._restore_native_cutoff(role)

    def _bonded_ham(self, cl: _Cluster, cut_piece: int,
                    h_open: QuadraticHamiltonian) -> QuadraticHamiltonian:
        """Joint Hamiltonian with the physical tunnel bond at a piece boundary.

        The bond couples the physical boundary phases over the physical
        pixel spacing; in the common-cutoff representation of a compressed
        piece the stencil becomes asymmetric,

            (hbar^2 eta_p / m delta) [[1/aL^2, -1/(aL aR)],
                                      [-1/(aL aR), 1/aR^2]],

        with a = sqrt(w_physical/dz), delta the distance of the two boundary
        pixel centres, and eta_p the geometric mean of the physical edge
        densities.  For equal widths this is the standard eta stencil.
        """
        cut = sum(cl.sizes[:cut_piece + 1])
        dz0 = cl.state.dz
        w_l = cl.widths[cut_piece]
        w_r = cl.widths[cut_piece + 1]
        rho_l = _edge_density(cl.hams[cut_piece], "right", self.constants) \
            * (w_l / dz0) ** 2
        rho_r = _edge_density(cl.hams[cut_piece + 1], "left", self.constants) \
            * (w_r / dz0) ** 2
        eta_p = math.sqrt(rho_l * rho_r)
        delta = 0.5 * (w_l + w_r)
        stiff = self.constants.hbar_j_ms**2 * eta_p \
            / (self.constants.mass_internal * delta)
        inv_al2 = dz0 / w_l
        inv_ar2 = dz0 / w_r
        h_phi = h_open.h_phi.copy()
        h_phi[cut - 1, cut - 1] += stiff * inv_al2
        h_phi[cut, cut] += stiff * inv_ar2
        h_phi[cut - 1, cut] -= stiff * math.sqrt(inv_al2 * inv_ar2)
        h_phi[cut, cut - 1] -= stiff * math.sqrt(inv_al2 * inv_ar2)
        return QuadraticHamiltonian(h_open.h_rho.copy(), h_phi, dz0)

    def _restore_native_cutoff(self, role: str) -> None:
        """Bring a decoupled piece back to its own lattice representation.

        Valves run in the common cutoff; a compressed piston must return to
        its native dz afterwards so later strokes see consistent state,
        profile and Hamiltonian.
        """
        cl, _ = self.cluster_of(role)
        if len(cl.names) != 1:
            return
        native_dz = self.profiles[role].dz
        if abs(cl.state.dz - native_dz) <= 1e-12 * native_dz:
            return
        state, ham = qtp.rescale_representation(cl.state, cl.hams[0], native_dz)
        cl.state = state
        cl.hams = [ham]
        cl.widths = [native_dz]

    def _split_cluster(self, cl: _Cluster, cut_piece: int) -> None:
        cut = sum(cl.sizes[:cut_piece + 1])
        n = cl.state.n_pixels
        sel_l = np.concatenate((np.arange(cut), n + np.arange(cut)))
        sel_r = np.concatenate((np.arange(cut, n), n + np.arange(cut, n)))
        left = _Cluster(cl.names[:cut_piece + 1], cl.hams[:cut_piece + 1],
                        GaussianState(cl.state.cov[np.ix_(sel_l, sel_l)].copy(),
                                      cl.state.mean[sel_l].copy(), cl.state.dz),
                        cl.widths[:cut_piece + 1])
        right = _Cluster(cl.names[cut_piece + 1:], cl.hams[cut_piece + 1:],
                         GaussianState(cl.state.cov[np.ix_(sel_r, sel_r)].copy(),
                                       cl.state.mean[sel_r].copy(), cl.state.dz),
                         cl.widths[cut_piece + 1:])
        pos = self.clusters.index(cl)
        self.clusters[pos:pos + 1] = [left, right]

    def compress(self, role: str, length_ratio: float, t_comp_ms: float,
                 fit_roles=()) -> None:
        cl, _ = self.cluster_of(role)
        if len(cl.names) != 1:
            raise ValueError("cannot compress a coupled subsystem")
        profile = self.profiles[role]
        n_steps = default_step_count(t_comp_ms, self.dt_max_ms)
        frames, new_prof = qtp.compress(cl.state, profile, self.coupling,
                                        length_ratio, t_comp_ms, n_steps,
                                        self.frame_stride,
                                        constants=self.constants,
                                        validate_frames=self.validate_frames)
        self.profiles[role] = new_prof
        self.run_frames(frames, cl, fit_roles=fit_roles, track_ham=True)

    def reset(self, roles) -> None:
        """Reinitialize pieces to their t=0 thermal states (Markovian bath)."""
        for role in roles:
            cl, _ = self.cluster_of(role)
            if len(cl.names) != 1:
                raise ValueError("reset requires a decoupled subsystem")
            cl.state = self.initial_states[role].copy()
            cl.hams = [self.initial_hams[role]]
            cl.widths = [self.layout.dz_um]
            spec = self.layout.subsystems[self.layout.index_of(role)]
            self.profiles[role] = build_profile(
                spec.profile_kind, spec.length_um, spec.peak_density_per_um,
                spec.edge_width_um, spec.edge_floor, self.layout.dz_um)

    def mark_cycle(self) -> None:
        self.record.cycle_boundaries_ms.append(self.time_ms)


def _join_clusters(left: _Cluster, right: _Cluster, dz_common: float) -> _Cluster:
    """Blockdiag two uncorrelated clusters on a common cutoff."""
    l_state, l_hams = left.state, left.hams
    r_state, r_hams = right.state, right.hams
    if abs(l_state.dz - dz_common) > 1e-12 * dz_common:
        if len(l_hams) != 1:
            raise ValueError("cannot rescale a multi-piece cluster")
        l_state, ham = qtp.rescale_representation(l_state, l_hams[0], dz_common)
        l_hams = [ham]
    if abs(r_state.dz - dz_common) > 1e-12 * dz_common:
        if len(r_hams) != 1:
            raise ValueError("cannot rescale a multi-piece cluster")
        r_state, ham = qtp.rescale_representation(r_state, r_hams[0], dz_common)
        r_hams = [ham]
    nl, nr = l_state.n_pixels, r_state.n_pixels
    n = nl + nr
    cov = np.zeros((2 * n, 2 * n))
    mean = np.zeros(2 * n)
    sl = np.concatenate((np.arange(nl), n + np.arange(nl)))
    sr = np.concatenate((nl + np.arange(nr), n + nl + np.arange(nr)))
    cov[np.ix_(sl, sl)] = l_state.cov
    cov[np.ix_(sr, sr)] = r_state.cov
    mean[sl] = l_state.mean
    mean[sr] = r_state.mean
    return _Cluster(left.names + right.names, l_hams + r_hams,
                    GaussianState(cov, mean, dz_common),
                    left.widths + right.widths)


# ---------------------------------------------------------------------------
# Protocol drivers


def run_merge(layout: MachineLayout, t_merge_ms: float = 40.0,
              t_hold_ms: float = 0.0, t_split_ms: float = 0.0,
              frame_stride: int = 20, dt_max_ms: float = DT_MAX_MS_DEFAULT,
              decorrelate_on_split: bool = True,
              reference_temperature_nk: float | None = None,
              bulk_fraction: float = 0.5,
              validate_frames: bool = True) -> RunRecord:
    """Valve experiment between two thermal condensates.

    Tracks the relative entropy of the evolving state, both of the full
    system and of the central bulk window, against the joint thermal
    reference at ``reference_temperature_nk`` (defaults to the first
    subsystem's temperature).  With ``t_split_ms = 0`` the run ends with
    the valve open, which is the plain merge experiment.
    """
    if len(layout.subsystems) != 2:
        raise ValueError("merge protocol needs exactly two subsystems")
    machine = _Machine(layout, frame_stride, dt_max_ms, validate_frames)
    left, right = (s.role for s in layout.subsystems)
    t_ref = reference_temperature_nk or layout.subsystems[0].temperature_nk

    h_left = machine.initial_hams[left]
    h_right = machine.initial_hams[right]
    n = h_left.n_pixels + h_right.n_pixels
    eta0 = math.sqrt(_edge_density(h_left, "right", layout.constants)
                     * _edge_density(h_right, "left", layout.constants))
    h_joint, _ = join_hamiltonians(h_left, h_right, eta0, layout.constants)
    sigma = thermal_state(h_joint, t_ref, constants=layout.constants)
    half_window = int(round(bulk_fraction * n / 2))
    bulk = slice(n // 2 - half_window, n // 2 + half_window)
    sigma_bulk = reduced_state(sigma, bulk)

    rec = machine.record
    rec.series["joint_rel_entropy"] = []
    rec.series["bulk_rel_entropy"] = []

    def joint_state(m: _Machine) -> GaussianState:
        cl, _ = m.cluster_of(left)
        if cl.state.n_pixels == n:
            return cl.state
        return _join_clusters(*m.clusters, m.layout.dz_um).state

    def track(m: _Machine) -> None:
        state = joint_state(m)
        rec.series["joint_rel_entropy"].append(relative_entropy(state, sigma))
        rec.series["bulk_rel_entropy"].append(
            relative_entropy(reduced_state(state, bulk), sigma_bulk))

    track(machine)  # covers the t = 0 frame emitted by the constructor
    machine.frame_hook = track
    machine.valve(left, right,
                  ValveConfig(t_merge_ms, t_hold_ms, t_split_ms,
                              decorrelate_on_split))
    return rec


def run_anomalous(layout: MachineLayout, t_merge_ms: float = 60.0,
                  t_hold_ms: float = 240.0, t_split_ms: float = 60.0,
                  frame_stride: int = 20, dt_max_ms: float = DT_MAX_MS_DEFAULT,
                  reversal_min_fraction: float = 1e-4,
                  validate_frames: bool = True) -> RunRecord:
    """Correlated heat flow between two condensates at unequal temperatures.

    Correlations are the subject here, so the split never decorrelates.
    Flags every hold-phase interval in which net energy flows into the
    initially hotter subsystem.
    """
    if len(layout.subsystems) != 2:
        raise ValueError("anomalous protocol needs exactly two subsystems")
    t_a, t_b = (s.temperature_nk for s in layout.subsystems)
    if t_a == t_b:
        raise ValueError("subsystem temperatures must differ")
    hot = layout.subsystems[0].role if t_a > t_b else layout.subsystems[1].role
    machine = _Machine(layout, frame_stride, dt_max_ms, validate_frames)
    left, right = (s.role for s in layout.subsystems)

    machine.valve(left, right,
                  ValveConfig(t_merge_ms, t_hold_ms, t_split_ms,
                              decorrelate_on_split=False),
                  mutual_cut=left)

    rec = machine.record
    rec.mutual_info[0] = 0.0  # uncoupled thermal start
    t = np.asarray(rec.times_ms)
    e_hot = np.asarray(rec.energy_j[hot])
    hold_mask = (t >= t_merge_ms - 1e-9) & (t <= t_merge_ms + t_hold_ms + 1e-9)
    idx = np.where(hold_mask)[0]
    scale = abs(e_hot[0]) * reversal_min_fraction
    start = None
    gained = 0.0
    for a, b in zip(idx[:-1], idx[1:]):
        rising = e_hot[b] > e_hot[a]
        if rising:
            if start is None:
                start = t[a]
                gained = 0.0
            gained += e_hot[b] - e_hot[a]
        elif start is not None:
            if gained > scale:
                rec.reversal_intervals_ms.append((float(start), float(t[a])))
            start = None
    if start is not None and gained > scale:
        rec.reversal_intervals_ms.append((float(start), float(t[idx[-1]])))
    return rec


def run_piston_stroke(layout: MachineLayout, compression_ratio: float = 0.5,
                      t_comp_ms: float = 15.0, frame_stride: int = 20,
                      dt_max_ms: float = DT_MAX_MS_DEFAULT,
                      validate_frames: bool = True) -> RunRecord:
    """Compress and re-expand a single condensate, tracking how far from
    thermal it strays (temperature-fit residual per frame)."""
    if len(layout.subsystems) != 1:
        raise ValueError("piston stroke needs a single subsystem")
    role = layout.subsystems[0].role
    machine = _Machine(layout, frame_stride, dt_max_ms, validate_frames)
    if compression_ratio != 1.0:
        machine.compress(role, compression_ratio, t_comp_ms, fit_roles=(role,))
        machine.compress(role, 1.0 / compression_ratio, t_comp_ms,
                         fit_roles=(role,))
    else:
        machine.idle_all(2 * t_comp_ms, fit_roles=(role,))
    return machine.record


def run_piston_bath(layout: MachineLayout, compression_ratio: float = 0.5,
                    t_comp_ms: float = 15.0, valve: ValveConfig | None = None,
                    frame_stride: int = 20,
                    dt_max_ms: float = DT_MAX_MS_DEFAULT,
                    validate_frames: bool = True) -> RunRecord:
    """Compress the piston, contact it with the bath, expand it again."""
    roles = [s.role for s in layout.subsystems]
    if roles != ["piston", "bath"]:
        raise ValueError("layout must be [piston, bath]")
    valve = valve or ValveConfig()
    machine = _Machine(layout, frame_stride, dt_max_ms, validate_frames)
    if compression_ratio < 1.0:
        machine.compress("piston", compression_ratio, t_comp_ms,
                         fit_roles=("piston",))
    machine.valve("piston", "bath", valve, fit_roles=("piston",))
    if compression_ratio < 1.0:
        machine.compress("piston", 1.0 / compression_ratio, t_comp_ms,
                         fit_roles=("piston",))
    return machine.record


def run_otto(layout: MachineLayout, cfg: OttoConfig, frame_stride: int = 40,
             dt_max_ms: float = DT_MAX_MS_DEFAULT,
             fit_each_cycle: bool = True,
             validate_frames: bool = True) -> RunRecord:
    """Otto refrigeration: repeat compress-contact-expand-contact cycles.

    Per cycle: compress the piston, open the piston-bath valve to dump heat,
    expand the piston, then open the system-piston valve to absorb heat.
    With ``reset_bath_and_piston`` the auxiliary pieces are reinitialized to
    their t = 0 thermal states at each cycle boundary.
    """
    roles = [s.role for s in layout.subsystems]
    if roles != ["system", "piston", "bath"]:
        raise ValueError("layout must be [system, piston, bath]")
    machine = _Machine(layout, frame_stride, dt_max_ms, validate_frames)
    valve = ValveConfig(cfg.t_merge_ms, cfg.t_hold_ms, cfg.t_split_ms,
                        cfg.decorrelate_on_split)
    for _ in range(cfg.n_cycles):
        machine.compress("piston", cfg.compression_ratio, cfg.t_comp_ms)
        machine.valve("piston", "bath", valve)
        machine.compress("piston", 1.0 / cfg.compression_ratio, cfg.t_comp_ms)
        machine.valve("system", "piston", valve)
        if cfg.reset_bath_and_piston:
            machine.reset(("piston", "bath"))
        machine.mark_cycle()
        if fit_each_cycle:
            fit = machine.fit_temperature("system")
            machine.record.series.setdefault("system_temp_fit_nk", []).append(
                fit.temperature_nk)
    return machine.record


def cooling_report(record: RunRecord, initial_temperature_nk: float,
                   rho_before_per_um: float, rho_after_per_um: float) -> dict:
    """Compare the machine's cooling against the dilution scaling law.

    The machine cools at fixed density; dilution reaches lower temperature
    only by thinning the gas, so at matched (unchanged) density the
    dilution-law prediction is no cooling at all.
    """
    from .oracles import evaporative_scaling

    extracted = record.per_cycle_extracted_j("system")
    e = np.asarray(record.energy_j["system"])
    machine_ratio = float(e[-1] / e[0]) if len(e) else 1.0
    dilution_t = evaporative_scaling(initial_temperature_nk,
                                     rho_before_per_um, rho_after_per_um)
    report = {
        "machine_energy_ratio": machine_ratio,
        "machine_extracted_fraction": 1.0 - machine_ratio,
        "per_cycle_extracted_j": extracted,
        "dilution_temperature_ratio": dilution_t / initial_temperature_nk,
        "dilution_density_ratio": rho_after_per_um / rho_before_per_um,
    }
    fits = record.series.get("system_temp_fit_nk")
    if fits:
        report["machine_temperature_ratio"] = fits[-1] / initial_temperature_nk
    return report

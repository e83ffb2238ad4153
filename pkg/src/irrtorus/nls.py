"""Split-step Fourier solver for the cubic Schrodinger equation on a 2-torus.

The equation is ``i u_t + Laplacian u = sigma |u|^2 u`` on ``T x alpha T``
with ``sigma = +1`` (defocusing) by default.  A plane wave ``c e^{2 pi i k.x}``
then rotates with angular frequency ``|2 pi k|^2 + sigma |c|^2``, which fixes
both sub-flows:

    linear     u_hat(k) <- exp(-i |2 pi k|^2 dt) u_hat(k)
    nonlinear  u(x)     <- exp(-i sigma |u(x)|^2 dt) u(x)

Checkpoint byte layout (little-endian, 48-byte header then samples)::

    offset  size  field
    0       8     magic b"IRRNLS01"
    8       4     uint32 endianness tag 0x01020304
    12      4     uint32 d (always 2)
    16      8     float64 alpha (length of the second axis)
    24      4     uint32 n0 (samples along x1)
    28      4     uint32 n1 (samples along x2)
    32      8     float64 t
    40      8     float64 dt
    48      8*n0*n1  complex64 samples, C order (x1 slowest)
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft

from .lattice import TorusShape, make_torus
from .wavefield import SpectralData

HEADER = struct.Struct("<8sIIdIIdd")
MAGIC = b"IRRNLS01"
ENDIAN_TAG = 0x01020304


class BlowupError(RuntimeError):
    """Raised when a field stops being finite or exceeds the amplitude guard."""


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class NlsState:
    alpha: float
    u: np.ndarray
    t: float = 0.0
    dt: float = 1e-2

    def __post_init__(self):
        TorusShape(2, (self.alpha,))
        u = np.asarray(self.u, dtype=complex)
        if u.ndim != 2 or not all(_is_pow2(n) for n in u.shape):
            raise ValueError("resolution must be a power of two on each axis")
        if not np.all(np.isfinite(u)):
            raise BlowupError("field is not finite")
        object.__setattr__(self, "u", u)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([1.0, self.alpha])

    @property
    def measure(self) -> float:
        return float(self.alpha)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.u.shape

    def points(self) -> np.ndarray:
        axes = [np.arange(n) * L / n for n, L in zip(self.u.shape, self.lengths)]
        g = np.meshgrid(*axes, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=-1)


def wavenumbers(shape, lengths) -> list[np.ndarray]:
    """Frequencies ``k`` (cycles per unit length) in FFT order per axis."""
    return [sfft.fftfreq(n, d=L / n) for n, L in zip(shape, lengths)]


def _k2(shape, lengths) -> np.ndarray:
    k = wavenumbers(shape, lengths)
    return (2 * np.pi) ** 2 * (k[0][:, None] ** 2 + k[1][None, :] ** 2)


def dealias_mask(shape) -> np.ndarray:
    """Two-thirds rule: keep integer modes with ``|m| <= n/3`` on each axis."""
    keep = [np.abs(sfft.fftfreq(n, d=1.0 / n)) <= n / 3 for n in shape]
    return keep[0][:, None] & keep[1][None, :]


def state_from_data(data: SpectralData, resolution, dt: float = 1e-2, t: float = 0.0) -> NlsState:
    """Sample the free wave of ``data`` (a ``lam = 1`` torus) at time zero."""
    torus = data.torus
    if torus.d != 2 or abs(torus.lam - 1) > 1e-12:
        raise ValueError("the solver lives on the unscaled 2-torus")
    shape = tuple(int(n) for n in resolution)
    m = data.indices
    if np.any(2 * np.abs(m).max(axis=0, initial=0) >= np.asarray(shape)):
        raise ValueError("resolution too coarse for the data")
    spec = np.zeros(shape, dtype=complex)
    np.add.at(spec, (m[:, 0] % shape[0], m[:, 1] % shape[1]), data.coeffs)
    u = sfft.ifftn(spec, norm="forward")
    return NlsState(torus.shape.alphas[0], u, t, dt)


def plane_wave(alpha: float, k_index, c: complex, resolution, dt: float = 1e-2) -> NlsState:
    n = tuple(int(v) for v in resolution)
    x = NlsState(alpha, np.zeros(n, dtype=complex)).points()
    k = np.asarray(k_index, dtype=float) / np.array([1.0, alpha])
    u = c * np.exp(2j * np.pi * (x @ k)).reshape(n)
    return NlsState(alpha, u, 0.0, dt)


def linear_step(state: NlsState, dt: float) -> NlsState:
    if dt == 0:
        return state
    mult = np.exp(-1j * _k2(state.u.shape, state.lengths) * dt)
    u = sfft.ifftn(sfft.fftn(state.u) * mult)
    return replace(state, u=u, t=state.t + dt)


def nonlinear_step(state: NlsState, dt: float, focusing: bool = False) -> NlsState:
    if dt == 0:
        return state
    sigma = -1.0 if focusing else 1.0
    u = state.u * np.exp(-1j * sigma * np.abs(state.u) ** 2 * dt)
    return replace(state, u=u)


@dataclass(frozen=True)
class SolverOptions:
    nonlinear: bool = True
    focusing: bool = False
    dealias: bool = True
    s: float = 1.0
    cadence: int = 1
    amplitude_guard: float = 1e8


def strang_step(state: NlsState, opts: SolverOptions = SolverOptions(), dt=None) -> NlsState:
    """Half linear, full nonlinear (then 2/3 truncation), half linear."""
    h = state.dt if dt is None else dt
    s = linear_step(state, h / 2)
    if opts.nonlinear:
        s = nonlinear_step(s, h, opts.focusing)
        if opts.dealias:
            spec = sfft.fftn(s.u)
            spec[~dealias_mask(spec.shape)] = 0
            s = replace(s, u=sfft.ifftn(spec))
    s = linear_step(s, h / 2)
    if not np.all(np.isfinite(s.u)) or np.max(np.abs(s.u)) > opts.amplitude_guard:
        raise BlowupError(f"field left the finite range at t = {s.t:.6g}")
    return s


@dataclass(frozen=True)
class NlsDiagnostics:
    t: float
    mass: float
    energy: float
    hs: float
    s: float


def _spectrum(u) -> np.ndarray:
    return sfft.fftn(u, norm="forward")


def quartic_integral(u: np.ndarray, measure: float, pad: int = 2) -> float:
    """``int |u|^4``, exact for band-limited samples via zero padding."""
    spec = _spectrum(u)
    shape = tuple(pad * n for n in u.shape)
    big = np.zeros(shape, dtype=complex)
    # embed modes at their signed positions
    idx = [sfft.fftfreq(n, d=1.0 / n).astype(int) for n in u.shape]
    big[np.ix_(idx[0] % shape[0], idx[1] % shape[1])] = spec
    v = sfft.ifftn(big, norm="forward")
    return float(np.mean(np.abs(v) ** 4) * measure)


def diagnostics(state: NlsState, s: float = 1.0, focusing: bool = False) -> NlsDiagnostics:
    if s < 0:
        raise ValueError("Sobolev exponent must be nonnegative")
    m = state.measure
    spec2 = np.abs(_spectrum(state.u)) ** 2
    k2 = _k2(state.u.shape, state.lengths)
    mass = float(np.sum(spec2) * m)
    sigma = -1.0 if focusing else 1.0
    energy = float(0.5 * np.sum(k2 * spec2) * m + sigma * 0.25 * quartic_integral(state.u, m))
    hs = float(math.sqrt(np.sum((1 + k2) ** s * spec2) * m))
    return NlsDiagnostics(state.t, mass, energy, hs, s)


@dataclass
class RunReport:
    state: NlsState
    series: list[NlsDiagnostics] = field(default_factory=list)
    aborted: bool = False
    message: str = ""

    @property
    def mass_drift(self) -> float:
        m = np.array([d.mass for d in self.series])
        return float(np.max(np.abs(m - m[0])) / m[0]) if len(m) and m[0] > 0 else 0.0

    @property
    def energy_drift(self) -> float:
        e = np.array([d.energy for d in self.series])
        return float(np.max(np.abs(e - e[0])) / abs(e[0])) if len(e) and e[0] != 0 else 0.0


def step_count(T: float, dt: float) -> int:
    if dt == 0:
        raise ValueError("time step must be nonzero")
    n = T / dt
    if n < 0 or abs(n - round(n)) > 1e-9 * max(1.0, abs(n)):
        raise ValueError("T must be a nonnegative multiple of dt")
    return int(round(n))


def run(state: NlsState, T: float, opts: SolverOptions = SolverOptions(), on_step=None) -> RunReport:
    """Advance by ``T`` (negative with negative ``dt`` runs backward).

    ``on_step(j, state)`` is called after every completed step.
    """
    n = step_count(T, state.dt)
    report = RunReport(state, [diagnostics(state, opts.s, opts.focusing)])
    s = state
    for j in range(n):
        try:
            s = strang_step(s, opts)
        except BlowupError as exc:
            report.aborted, report.message = True, str(exc)
            break
        if on_step is not None:
            on_step(j + 1, s)
        if (j + 1) % opts.cadence == 0 or j == n - 1:
            report.series.append(diagnostics(s, opts.s, opts.focusing))
    report.state = s
    return report


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(path, state: NlsState) -> None:
    n0, n1 = state.u.shape
    head = HEADER.pack(MAGIC, ENDIAN_TAG, 2, float(state.alpha), n0, n1, float(state.t), float(state.dt))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(state.u, dtype="<c8").tobytes())


def load_checkpoint(path) -> NlsState:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise ValueError("truncated checkpoint header")
    magic, tag, d, alpha, n0, n1, t, dt = HEADER.unpack_from(raw)
    if magic != MAGIC or tag != ENDIAN_TAG:
        raise ValueError("not a little-endian solver checkpoint")
    if d != 2:
        raise ValueError("unsupported dimension in checkpoint")
    body = raw[HEADER.size:]
    if len(body) != 8 * n0 * n1:
        raise ValueError("checkpoint payload size does not match header")
    u = np.frombuffer(body, dtype="<c8").reshape(n0, n1).astype(complex)
    return NlsState(alpha, u, t, dt)


# ---------------------------------------------------------------- convergence checks

def plane_wave_phase_error(alpha: float, k_index, c: complex, dt: float, T: float = 1.0,
                           resolution=(16, 16)) -> float:
    """Max phase error against the exact rotation ``|2 pi k|^2 + |c|^2``."""
    s0 = plane_wave(alpha, k_index, c, resolution, dt)
    out = run(s0, T, SolverOptions(s=0.0)).state
    k = np.asarray(k_index, dtype=float) / np.array([1.0, alpha])
    omega = (2 * np.pi) ** 2 * float(k @ k) + abs(c) ** 2
    exact = s0.u * np.exp(-1j * omega * T)
    return float(np.max(np.abs(np.angle(out.u / exact))))


def smooth_initial(alpha: float, resolution=(32, 32), amplitude: float = 1.0, band: int = 3,
                   seed: int = 0, dt: float = 1e-2) -> NlsState:
    """Random band-limited data with decaying coefficients."""
    rng = np.random.default_rng(seed)
    m = np.array([(a, b) for a in range(-band, band + 1) for b in range(-band, band + 1)])
    amp = np.exp(-0.5 * np.sum(m * m, axis=1))
    coeffs = amplitude * amp * (rng.standard_normal(len(m)) + 1j * rng.standard_normal(len(m))) / 2
    data = SpectralData(make_torus(2, (alpha,), 1.0), m, coeffs)
    return state_from_data(data, resolution, dt)


def energy_drift_order(state: NlsState, T: float, dts, opts: SolverOptions = SolverOptions()):
    """Fitted slope of max relative energy drift against ``dt``."""
    drifts = [run(replace(state, dt=h), T, opts).energy_drift for h in dts]
    slope = np.polyfit(np.log(dts), np.log(drifts), 1)[0]
    return float(slope), drifts


def phase_error_order(alpha, k_index, c, dts, T: float = 1.0):
    errs = [plane_wave_phase_error(alpha, k_index, c, h, T) for h in dts]
    with np.errstate(divide="ignore"):
        slope = np.polyfit(np.log(dts), np.log(np.maximum(errs, 1e-300)), 1)[0]
    return float(slope), errs

"""Wavevector lattice, divergence-free spectral velocity fields, and samplers
for the equilibrium measure of the 2D averaged Euler equations.

A field stores one complex transverse amplitude c_k per canonical
half-lattice mode (k1 > 0, or k1 == 0 and k2 > 0); the velocity coefficient
is the view u_k = c_k * kperp/|k| with kperp = (k2, -k1).  Divergence-freedom
and Hermitian symmetry (u_{-k} = conj(u_k), i.e. c_{-k} = -conj(c_k)) are
therefore structural, and the zero mode carries no amplitude.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FlowParams:
    """Model parameters: smoothing length a (alpha scale), temperature T.

    The smoothing exponent s is fixed to 1; the domain is the 2pi-periodic
    square.
    """

    a: float = 1.0
    T: float = 1.0
    s: int = 1

    def __post_init__(self):
        if self.s != 1:
            raise ValueError("the smoothing exponent is fixed to s=1")
        if self.a < 0 or not math.isfinite(self.a):
            raise ValueError("a must be finite and >= 0")
        if self.T <= 0 or not math.isfinite(self.T):
            raise ValueError("T must be finite and > 0")


def a_operator(k, params):
    """Fourier symbol of the smoothing operator: (1 + a^2 |k|^2)^s with s=1."""
    k1, k2 = k
    return 1.0 + params.a ** 2 * (k1 * k1 + k2 * k2)


def leray_projection(k, v):
    """Project a complex 2-vector onto the divergence-free subspace at k:
    (Pv)_a = v_a - k_a (k.v)/|k|^2.  Idempotent; k must be nonzero."""
    k1, k2 = k
    k2norm = k1 * k1 + k2 * k2
    if k2norm == 0:
        raise ValueError("the Leray projection is undefined at k=0")
    v = np.asarray(v, dtype=complex)
    dot = (k1 * v[0] + k2 * v[1]) / k2norm
    return np.array([v[0] - k1 * dot, v[1] - k2 * dot])


@dataclass(frozen=True)
class ModePartition:
    """Resolved cutoff m (|k|_inf <= m) and sampled bound (m < |k|_inf <=
    sampled_bound); modes beyond the sampled bound are excluded and m = 0
    means there are no resolved modes."""

    m: int
    sampled_bound: int

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("resolved cutoff must be >= 0")
        if self.sampled_bound < max(1, 2 * self.m):
            raise ValueError("sampled_bound must be >= 2m (and >= 1)")

    def is_resolved(self, k):
        return k != (0, 0) and max(abs(k[0]), abs(k[1])) <= self.m

    def is_sampled(self, k):
        return self.m < max(abs(k[0]), abs(k[1])) <= self.sampled_bound

    def is_retained(self, k):
        return k != (0, 0) and max(abs(k[0]), abs(k[1])) <= self.sampled_bound

    def canonical_modes(self, region="all"):
        """Canonical half-lattice modes of a region ('resolved', 'sampled' or
        'all'), in lexicographic (k1, k2) order."""
        sel = {"resolved": self.is_resolved, "sampled": self.is_sampled,
               "all": self.is_retained}[region]
        b = self.sampled_bound
        out = []
        for k1 in range(0, b + 1):
            for k2 in range(-b, b + 1):
                if (k1 > 0 or k2 > 0) and sel((k1, k2)):
                    out.append((k1, k2))
        return out


def transverse_unit(k):
    """The unit vector kperp/|k| = (k2, -k1)/|k| spanning the divergence-free
    subspace at k."""
    k1, k2 = k
    norm = math.hypot(k1, k2)
    return np.array([k2 / norm, -k1 / norm])


class SpectralField:
    """Immutable divergence-free velocity field on a truncated lattice."""

    def __init__(self, partition, amps=None, modes=None):
        self.partition = partition
        self.modes = partition.canonical_modes("all") if modes is None else list(modes)
        self._index = {k: i for i, k in enumerate(self.modes)}
        if amps is None:
            self.amps = np.zeros(len(self.modes), dtype=complex)
        else:
            amps = np.asarray(amps, dtype=complex)
            if amps.shape != (len(self.modes),):
                raise ValueError("amplitude array does not match the mode list")
            self.amps = amps.copy()
        self.amps.flags.writeable = False

    @classmethod
    def zeros(cls, partition):
        return cls(partition)

    @classmethod
    def from_amplitudes(cls, partition, values):
        """Build from a {canonical k: transverse amplitude} mapping."""
        f = cls(partition)
        amps = f.amps.copy()
        amps.flags.writeable = True
        for k, c in values.items():
            if k not in f._index:
                raise ValueError(f"{k} is not a canonical retained mode")
            amps[f._index[k]] = c
        return cls(partition, amps)

    @classmethod
    def from_uvectors(cls, partition, values, tol=1e-12):
        """Build from a {canonical k: complex 2-vector u_k} mapping, rejecting
        entries that are not divergence-free at relative tolerance tol."""
        amps = {}
        for k, v in values.items():
            v = np.asarray(v, dtype=complex)
            e = transverse_unit(k)
            mag = np.sqrt(abs(v[0]) ** 2 + abs(v[1]) ** 2)
            resid = abs(k[0] * v[0] + k[1] * v[1])
            if mag > 0 and resid > tol * mag * math.hypot(*k):
                raise ValueError(f"u at {k} is not divergence-free "
                                 f"(relative residual {resid / (mag * math.hypot(*k)):.2e})")
            amps[k] = e[0] * v[0] + e[1] * v[1]
        return cls.from_amplitudes(partition, amps)

    def amplitude(self, k):
        """Transverse amplitude at any retained lattice point (c_{-k} = -conj c_k)."""
        if k in self._index:
            return self.amps[self._index[k]]
        neg = (-k[0], -k[1])
        if neg in self._index:
            return -np.conj(self.amps[self._index[neg]])
        raise KeyError(f"{k} is not a retained mode")

    def u_at(self, k):
        """Velocity coefficient u_k as a complex 2-vector, for +k or -k."""
        return self.amplitude(k) * transverse_unit(k)

    def with_amps(self, amps):
        return SpectralField(self.partition, amps, modes=self.modes)

    def region_mask(self, region):
        sel = {"resolved": self.partition.is_resolved,
               "sampled": self.partition.is_sampled}[region]
        return np.array([sel(k) for k in self.modes])

    def restricted(self, region):
        """Copy with amplitudes outside the region zeroed."""
        amps = np.where(self.region_mask(region), self.amps, 0.0)
        return self.with_amps(amps)

    def supported_on(self, region, tol=0.0):
        mask = self.region_mask(region)
        return bool(np.all(np.abs(self.amps[~mask]) <= tol))


def divergence_residual(field):
    """max_k |k . u_k| / (|k| |u_k|), with 0/0 counted as 0.

    Accepts a SpectralField (structurally zero residual) or a mapping
    {k: complex 2-vector} for validating raw data.
    """
    if isinstance(field, SpectralField):
        items = ((k, field.u_at(k)) for k in field.modes)
    else:
        items = field.items()
    worst = 0.0
    for k, v in items:
        v = np.asarray(v, dtype=complex)
        mag = math.hypot(*k) * np.sqrt(abs(v[0]) ** 2 + abs(v[1]) ** 2)
        if mag == 0.0:
            continue
        worst = max(worst, abs(k[0] * v[0] + k[1] * v[1]) / mag)
    return worst


def mode_variance(k, params):
    """Equilibrium variance E|u_k|^2 = T / (|k|^2 (1 + a^2 |k|^2)^2)."""
    k2 = k[0] ** 2 + k[1] ** 2
    return params.T / (k2 * a_operator(k, params) ** 2)


def sample_equilibrium(partition, params, region, rng):
    """Draw a field from the equilibrium measure on the given region; modes
    outside the region are zero.

    Each canonical mode's amplitude is c = x + i y with x, y independent
    N(0, T / (2 |k|^2 A(k)^2)), which realizes the per-mode covariance
    E[u*_{a,k} u_{b,k'}] = T delta_{kk'} P_ab(k) / (|k|^2 A(k)^2).
    """
    field = SpectralField.zeros(partition)
    mask = field.region_mask(region) if region != "all" else np.ones(len(field.modes), bool)
    draws = rng.standard_normal((len(field.modes), 2))
    amps = np.zeros(len(field.modes), dtype=complex)
    for i, k in enumerate(field.modes):
        if not mask[i]:
            continue
        scale = math.sqrt(0.5 * mode_variance(k, params))
        amps[i] = scale * (draws[i, 0] + 1j * draws[i, 1])
    return field.with_amps(amps)


def conditional_sample(resolved_values, partition, params, rng):
    """Fix the resolved modes and draw the sampled region from the measure.

    The measure is a product over modes, so conditioning on the resolved
    modes equals marginal sampling of the complement.  resolved_values must
    be supported on |k|_inf <= m.
    """
    if resolved_values.partition != partition:
        raise ValueError("resolved field is on a different partition")
    if not resolved_values.supported_on("resolved"):
        raise ValueError("resolved field has amplitude outside |k|_inf <= m")
    sampled = sample_equilibrium(partition, params, "sampled", rng)
    amps = np.where(resolved_values.region_mask("resolved"),
                    resolved_values.amps, sampled.amps)
    return resolved_values.with_amps(amps)


SNAPSHOT_HEADER = "k1,k2,re_u1,im_u1,re_u2,im_u2"


def write_snapshot(field, path):
    """Write one row per canonical mode, lexicographic in (k1, k2), full
    round-trip precision."""
    with open(path, "w", newline="\n") as fh:
        fh.write(SNAPSHOT_HEADER + "\n")
        for k in field.modes:
            u = field.u_at(k)
            fh.write("%d,%d,%.17g,%.17g,%.17g,%.17g\n"
                     % (k[0], k[1], u[0].real, u[0].imag, u[1].real, u[1].imag))


def read_snapshot(path, partition, tol=1e-9):
    """Read a snapshot written by write_snapshot back into a SpectralField."""
    values = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != SNAPSHOT_HEADER:
            raise ValueError(f"unexpected snapshot header: {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            k = (int(parts[0]), int(parts[1]))
            vals = [float(x) for x in parts[2:6]]
            values[k] = np.array([vals[0] + 1j * vals[1], vals[2] + 1j * vals[3]])
    return SpectralField.from_uvectors(partition, values, tol=tol)

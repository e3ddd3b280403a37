"""Right-hand side of the truncated Fourier averaged Euler equations.

The equations are assembled directly from the PDE
    d(Au)/dt + (u.grad)Au + (grad u)^T . Au = -grad p,   div u = 0,
term-by-term in Fourier space with the Leray projection applied, rather than
from any printed index form; conservation of the energy (u, Au) and of the
A-enstrophy is the correctness filter (see the tests for an independent
vorticity-form oracle).

Working in the transverse amplitude c_k (u_k = c_k kperp/|k|) reduces every
quadratic term to
    dc_k/dt = -i sum_{k' + k'' = k} W(k, k') c_{k'} c_{k''}
with the real geometric weight
    W = A(k'') [ (k''.e') (e''.e) + (k'.e) (e'.e'') ] / A(k),
where e, e', e'' are the transverse unit vectors of k, k', k''.  The weight
tables are precomputed once per (partition, a) and the accumulation runs in
the compiled kernel (or its numpy fallback).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .spectral import SpectralField, a_operator, transverse_unit

_RR, _MIXED, _SS = 0, 1, 2


class ConvolutionPlan:
    """Precomputed index/weight tables for one (partition, a) pair."""

    def __init__(self, partition, params):
        self.partition = partition
        self.a = params.a
        b = partition.sampled_bound

        self.modes_full = [(k1, k2)
                           for k1 in range(-b, b + 1)
                           for k2 in range(-b, b + 1)
                           if (k1, k2) != (0, 0)
                           and partition.is_retained((k1, k2))]
        index = {k: i for i, k in enumerate(self.modes_full)}
        self.n_full = len(self.modes_full)

        self.canon_modes = partition.canonical_modes("all")
        self.n_canon = len(self.canon_modes)
        self.canon_pos = np.array([index[k] for k in self.canon_modes], dtype=np.int32)
        self.canon_neg = np.array([index[(-k[0], -k[1])] for k in self.canon_modes],
                                  dtype=np.int32)

        self.res_sel = np.array([i for i, k in enumerate(self.canon_modes)
                                 if partition.is_resolved(k)], dtype=np.int32)
        self.samp_sel = np.array([i for i, k in enumerate(self.canon_modes)
                                  if partition.is_sampled(k)], dtype=np.int32)
        self.res_modes = [self.canon_modes[i] for i in self.res_sel]
        self.samp_modes = [self.canon_modes[i] for i in self.samp_sel]

        kf = np.array(self.modes_full, dtype=float)
        ksq = (kf ** 2).sum(axis=1)
        av = 1.0 + self.a ** 2 * ksq
        ev = np.stack([kf[:, 1], -kf[:, 0]], axis=1) / np.sqrt(ksq)[:, None]

        res_rank = {k: r for r, k in enumerate(self.res_modes)}
        full_tab, g_tabs = [], {(_RR,): [], ("rs",): [], ("sr",): [], (_SS,): []}
        gamma_tab = []
        sqrt_pi = math.sqrt(math.pi)

        for ci, k in enumerate(self.canon_modes):
            i_out = index[k]
            resolved_out = partition.is_resolved(k)
            for i_a, ka in enumerate(self.modes_full):
                kb = (k[0] - ka[0], k[1] - ka[1])
                i_b = index.get(kb)
                if i_b is None:
                    continue
                w = (av[i_b] * ((kb[0] * ev[i_a, 0] + kb[1] * ev[i_a, 1])
                                * (ev[i_b, 0] * ev[i_out, 0] + ev[i_b, 1] * ev[i_out, 1])
                                + (ka[0] * ev[i_out, 0] + ka[1] * ev[i_out, 1])
                                * (ev[i_a, 0] * ev[i_b, 0] + ev[i_a, 1] * ev[i_b, 1]))
                     / av[i_out])
                if w == 0.0:
                    continue
                full_tab.append((ci, i_a, i_b, w))
                if resolved_out:
                    a_res = partition.is_resolved(ka)
                    b_res = partition.is_resolved(kb)
                    r = res_rank[k]
                    if a_res and b_res:
                        g_tabs[(_RR,)].append((r, i_a, i_b, w))
                    elif a_res != b_res:
                        key = ("rs",) if a_res else ("sr",)
                        g_tabs[key].append((r, i_a, i_b, w))
                    else:
                        g_tabs[(_SS,)].append((r, i_a, i_b, w))

            if resolved_out:
                r = res_rank[k]
                k2 = k[0] ** 2 + k[1] ** 2
                ak = 1.0 + self.a ** 2 * k2
                for i_p, p in enumerate(self.modes_full):
                    if not partition.is_resolved(p):
                        continue
                    q = (k[0] - p[0], k[1] - p[1])
                    if not partition.is_sampled(q):
                        continue
                    p2 = p[0] ** 2 + p[1] ** 2
                    q2 = q[0] ** 2 + q[1] ** 2
                    ap = 1.0 + self.a ** 2 * p2
                    aq = 1.0 + self.a ** 2 * q2
                    qperp_dot_p = q[1] * p[0] - q[0] * p[1]
                    coef = (sqrt_pi * qperp_dot_p * (ap * p2 - aq * q2) ** 2
                            / (q2 ** 2 * aq ** 2 * p2 * k2 * ak ** 2))
                    if coef != 0.0:
                        gamma_tab.append((r, i_p, coef, math.sqrt(q2)))

        self.full = _pack_table(full_tab)
        self.g1 = _pack_table(g_tabs[(_RR,)])
        self.g2_rs = _pack_table(g_tabs[("rs",)])
        self.g2_sr = _pack_table(g_tabs[("sr",)])
        self.g3 = _pack_table(g_tabs[(_SS,)])
        self.gamma_oi = np.array([e[0] for e in gamma_tab], dtype=np.int32)
        self.gamma_ai = np.array([e[1] for e in gamma_tab], dtype=np.int32)
        self.gamma_coef = np.array([e[2] for e in gamma_tab])
        self.gamma_absq = np.array([e[3] for e in gamma_tab])
        self.res_absk = np.array([math.hypot(*k) for k in self.res_modes])

    def expand(self, c_canon):
        """Canonical amplitudes -> full-lattice array (c_{-k} = -conj c_k)."""
        cf = np.empty(self.n_full, dtype=complex)
        cf[self.canon_pos] = c_canon
        cf[self.canon_neg] = -np.conj(c_canon)
        return cf

    def expand_subset(self, c_sub, sel):
        """Amplitudes of a canonical subset -> full-lattice array, zeros elsewhere."""
        cf = np.zeros(self.n_full, dtype=complex)
        cf[self.canon_pos[sel]] = c_sub
        cf[self.canon_neg[sel]] = -np.conj(c_sub)
        return cf


def _pack_table(entries):
    return (np.array([e[0] for e in entries], dtype=np.int32),
            np.array([e[1] for e in entries], dtype=np.int32),
            np.array([e[2] for e in entries], dtype=np.int32),
            np.array([e[3] for e in entries]))


_plan_cache = {}


def get_plan(partition, params):
    key = (partition.m, partition.sampled_bound, params.a)
    plan = _plan_cache.get(key)
    if plan is None:
        plan = ConvolutionPlan(partition, params)
        _plan_cache[key] = plan
    return plan


def _convolve(plan, table, a_full, b_full, n_out, kernels=None):
    ker = kernels if kernels is not None else _kernels
    oi, ai, bi, w = table
    acc = np.zeros(n_out, dtype=complex)
    ker.pair_accumulate(acc, a_full, b_full, oi, ai, bi, w)
    return -1j * acc


def full_rhs(f, partition, params, kernels=None):
    """Time derivative of every retained mode of the truncated system."""
    plan = get_plan(partition, params)
    cf = plan.expand(f.amps)
    dc = _convolve(plan, plan.full, cf, cf, plan.n_canon, kernels)
    return f.with_amps(dc)


@dataclass
class RhsDecomposition:
    """Resolved-mode derivative split by interaction class; each part is a
    field supported on the resolved region and g1+g2+g3 matches full_rhs
    there."""

    g1: SpectralField
    g2: SpectralField
    g3: SpectralField


def rhs_decomposition(f, partition, params, kernels=None):
    """Split the resolved-mode derivative into resolved-resolved (g1), mixed
    (g2) and sampled-sampled (g3) interaction sums."""
    plan = get_plan(partition, params)
    cf = plan.expand(f.amps)
    n = len(plan.res_sel)
    d1 = _convolve(plan, plan.g1, cf, cf, n, kernels)
    d2 = (_convolve(plan, plan.g2_rs, cf, cf, n, kernels)
          + _convolve(plan, plan.g2_sr, cf, cf, n, kernels))
    d3 = _convolve(plan, plan.g3, cf, cf, n, kernels)
    out = []
    for d in (d1, d2, d3):
        amps = np.zeros(plan.n_canon, dtype=complex)
        amps[plan.res_sel] = d
        out.append(f.with_amps(amps))
    return RhsDecomposition(*out)


def apply_L(resolved, delta_v, partition, params, kernels=None):
    """Mixed interaction sum with the sampled factor taken from delta_v;
    linear in delta_v.  Both arguments are fields on the shared partition,
    supported on the resolved and sampled regions respectively."""
    plan = get_plan(partition, params)
    cu = plan.expand_subset(resolved.amps[plan.res_sel], plan.res_sel)
    cv = plan.expand_subset(delta_v.amps[plan.samp_sel], plan.samp_sel)
    n = len(plan.res_sel)
    d = (_convolve(plan, plan.g2_rs, cu, cv, n, kernels)
         + _convolve(plan, plan.g2_sr, cv, cu, n, kernels))
    amps = np.zeros(plan.n_canon, dtype=complex)
    amps[plan.res_sel] = d
    return resolved.with_amps(amps)


def make_full_rhs(partition, params, kernels=None):
    """Low-level rhs(t, y) over packed real state vectors (re/im pairs of the
    canonical amplitudes) for the integrators."""
    plan = get_plan(partition, params)
    ker = kernels if kernels is not None else _kernels
    oi, ai, bi, w = plan.full
    n = plan.n_canon

    def rhs(t, y):
        c = np.ascontiguousarray(y).view(complex)
        cf = plan.expand(c)
        acc = np.zeros(n, dtype=complex)
        ker.pair_accumulate(acc, cf, cf, oi, ai, bi, w)
        return (-1j * acc).view(float)

    return rhs


def energy(f, params):
    """sum over canonical mode pairs of A(k) |u_k|^2."""
    total = 0.0
    for k, c in zip(f.modes, f.amps):
        total += a_operator(k, params) * (c.real ** 2 + c.imag ** 2)
    return total


def a_enstrophy(f, params):
    """sum over canonical mode pairs of |k|^2 A(k)^2 |u_k|^2; the equilibrium
    expectation is T per pair."""
    total = 0.0
    for k, c in zip(f.modes, f.amps):
        k2 = k[0] ** 2 + k[1] ** 2
        total += k2 * a_operator(k, params) ** 2 * (c.real ** 2 + c.imag ** 2)
    return total


def vorticity(f):
    """Fourier vorticity xi_k = i (k1 u_{2,k} - k2 u_{1,k}) = -i |k| c_k per
    canonical mode."""
    return {k: -1j * math.hypot(*k) * c for k, c in zip(f.modes, f.amps)}


class GammaEvaluator:
    """Diagonal fluctuation/dissipation damping for the resolved modes.

    gamma_kk = T sqrt(pi) sum_{k=p+q} sigma * (qperp.p) (A(p)p^2 - A(q)q^2)^2
               |u_p|^2 / (q^4 A(q)^2 p^2 k^2 A(k)^2),
    q over sampled and p over resolved lattice points.  sigma is a callable
    of the wavevector magnitude; sigma_at selects whether it is evaluated at
    the resolved mode k (as printed) or at the sampled mode q.
    """

    def __init__(self, partition, params, sigma, sigma_at="resolved"):
        self.plan = get_plan(partition, params)
        self.n_res = len(self.plan.res_sel)
        if sigma_at == "resolved":
            self.weights = self.plan.gamma_coef
            self.outer = params.T * np.array(
                [sigma(absk) for absk in self.plan.res_absk])
        elif sigma_at == "sampled":
            sig_q = np.array([sigma(absq) for absq in self.plan.gamma_absq])
            self.weights = self.plan.gamma_coef * sig_q
            self.outer = params.T * np.ones(self.n_res)
        else:
            raise ValueError("sigma_at must be 'resolved' or 'sampled'")

    def from_full(self, c_full, kernels=None):
        ker = kernels if kernels is not None else _kernels
        acc = np.zeros(self.n_res)
        ker.abs2_accumulate(acc, c_full, self.plan.gamma_oi,
                            self.plan.gamma_ai, self.weights)
        return self.outer * acc

    def __call__(self, resolved_field, kernels=None):
        plan = self.plan
        cf = plan.expand_subset(resolved_field.amps[plan.res_sel], plan.res_sel)
        return self.from_full(cf, kernels)


def gamma_diagonal(resolved, sigma, partition, params, sigma_at="resolved"):
    """Evaluate the damping diagonal at the current resolved field; returns
    {resolved canonical k: gamma} (gamma at -k equals gamma at k).  sigma
    maps a wavevector magnitude to the correlation width."""
    ev = GammaEvaluator(partition, params, sigma, sigma_at)
    vals = ev(resolved)
    return dict(zip(ev.plan.res_modes, vals))

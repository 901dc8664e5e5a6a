"""Compiled inner loops.

Everything here is serial and allocation-free on the hot path, so results
are bit-for-bit reproducible regardless of how many worker processes or
threads sit above.  The schedule arithmetic lives in `gamma_scalar` and is
the single source of truth shared by the Python-level API.

Field-profile kind codes: 0 = ramp, 1 = quench, 2 = homogeneous.
"""

import math

import numpy as np
from numba import njit

GAMMA_ZERO_CLAMP = 1e-15
_MAX_TAYLOR_TERMS = 60


@njit(cache=True)
def gamma_scalar(kind, n, j, x):
    """Gamma_j at tau=x (ramp/quench) or s=x (homogeneous)."""
    if kind == 2:
        g = 1.0 - x
    elif kind == 1:
        g = 1.0 if x < (n - j) / n else 0.0
    else:
        lo = (n - j) / n
        if x < lo:
            g = 1.0
        else:
            g = 1.0 - n * (x - lo)
    if g < GAMMA_ZERO_CLAMP:
        g = 0.0
    return g


@njit(cache=True)
def fill_gammas(out, kind, n, s, tau):
    x = s if kind == 2 else tau
    for j in range(1, n + 1):
        out[j - 1] = gamma_scalar(kind, n, j, x)


@njit(cache=True)
def meanfield_run(a, b, kind, n, s0, tau0, s1, tau1, total_t, dt, p,
                  n_steps, sample_steps, out_m):
    """Recursive mean-field evolution of N spin-1/2 amplitude pairs.

    Per step: m from the current state, h = p*s*m^(p-1), then each spin
    is advanced by the exact propagator of its frozen 2x2 Hamiltonian
    -h*sz - Gamma_j*sx over the step.  Spins with Gamma_j = 0 only pick
    up an unobservable sigma^z phase and are left untouched, which keeps
    their magnetization conserved exactly.  Returns the largest
    single-spin norm deviation seen at any step.
    """
    si = 0
    max_drift = 0.0
    for k in range(n_steps + 1):
        t = total_t if k == n_steps else k * dt
        u = t / total_t
        s = s0 * (1.0 - u) + s1 * u
        tau = tau0 * (1.0 - u) + tau1 * u
        msum = 0.0
        for i in range(n):
            na = a[i].real * a[i].real + a[i].imag * a[i].imag
            nb = b[i].real * b[i].real + b[i].imag * b[i].imag
            msum += na - nb
            d = abs(na + nb - 1.0)
            if d > max_drift:
                max_drift = d
        m = msum / n
        if si < sample_steps.shape[0] and k == sample_steps[si]:
            out_m[si] = m
            si += 1
        if k == n_steps:
            break
        h = p * s * m ** (p - 1)
        dt_k = dt if k < n_steps - 1 else total_t - (n_steps - 1) * dt
        x = s if kind == 2 else tau
        prev_g = -1.0
        cs = 0.0
        sn = 0.0
        for i in range(n):
            g = gamma_scalar(kind, n, i + 1, x)
            if g == 0.0:
                continue
            if g != prev_g:
                w = math.sqrt(h * h + g * g)
                th = w * dt_k
                cs = math.cos(th)
                sn = math.sin(th) / w if w > 0.0 else dt_k
                prev_g = g
            ai = a[i]
            bi = b[i]
            a[i] = (cs + 1j * h * sn) * ai + (1j * g * sn) * bi
            b[i] = (1j * g * sn) * ai + (cs - 1j * h * sn) * bi
    return max_drift


@njit(cache=True)
def h_matvec(out, vec, diag_e, s, gam, n_spins):
    """out = (s*H0 - sum_j Gamma_j sigma_j^x) vec, matrix-free."""
    dim = vec.shape[0]
    for c in range(dim):
        out[c] = s * diag_e[c] * vec[c]
    for b in range(n_spins):
        g = gam[b]
        if g == 0.0:
            continue
        bit = 1 << b
        for c in range(dim):
            out[c] -= g * vec[c ^ bit]


@njit(cache=True)
def h_matvec_real(out, vec, diag_e, s, gam, n_spins):
    dim = vec.shape[0]
    for c in range(dim):
        out[c] = s * diag_e[c] * vec[c]
    for b in range(n_spins):
        g = gam[b]
        if g == 0.0:
            continue
        bit = 1 << b
        for c in range(dim):
            out[c] -= g * vec[c ^ bit]


@njit(cache=True)
def magnetization_bit(psi, b):
    """<sigma^z> of the spin living on bit b."""
    bit = 1 << b
    tot = 0.0
    for c in range(psi.shape[0]):
        w = psi[c].real * psi[c].real + psi[c].imag * psi[c].imag
        if c & bit:
            tot -= w
        else:
            tot += w
    return tot


@njit(cache=True)
def diag_expect(psi, diag_e):
    tot = 0.0
    for c in range(psi.shape[0]):
        tot += diag_e[c] * (psi[c].real * psi[c].real
                            + psi[c].imag * psi[c].imag)
    return tot


@njit(cache=True)
def expm_step(psi, acc, term, tmp, diag_e, s, gam, n_spins, dt, tol, hbound):
    """psi <- exp(-i H dt) psi for the frozen Hamiltonian, via truncated
    Taylor series with substeps keeping ||H||*dt_sub <= 0.5, followed by
    renormalization.  Returns |norm - 1| before the renormalization, or
    -1.0 if the series failed to converge (cannot happen when hbound
    really bounds the spectral radius).
    """
    dim = psi.shape[0]
    nsub = 1
    theta = hbound * dt
    if theta > 0.5:
        nsub = int(math.ceil(theta / 0.5))
    dt_sub = dt / nsub
    for _ in range(nsub):
        for c in range(dim):
            acc[c] = psi[c]
            term[c] = psi[c]
        ok = False
        for q in range(1, _MAX_TAYLOR_TERMS + 1):
            h_matvec(tmp, term, diag_e, s, gam, n_spins)
            coef = -1j * (dt_sub / q)
            tn2 = 0.0
            an2 = 0.0
            for c in range(dim):
                v = coef * tmp[c]
                term[c] = v
                av = acc[c] + v
                acc[c] = av
                tn2 += v.real * v.real + v.imag * v.imag
                an2 += av.real * av.real + av.imag * av.imag
            if tn2 <= tol * tol * an2:
                ok = True
                break
        if not ok:
            return -1.0
        for c in range(dim):
            psi[c] = acc[c]
    nrm2 = 0.0
    for c in range(dim):
        nrm2 += psi[c].real * psi[c].real + psi[c].imag * psi[c].imag
    nrm = math.sqrt(nrm2)
    inv = 1.0 / nrm
    for c in range(dim):
        psi[c] = psi[c] * inv
    return abs(nrm - 1.0)


@njit(cache=True)
def exact_run(psi, diag_e, e_abs_max, n_spins, kind, s0, tau0, s1, tau1,
              total_t, dt, n_steps, tol, sample_steps, freeze_steps,
              out_m, out_e, out_frozen, gam, acc, term, tmp):
    """Full left-endpoint-frozen trajectory; fills per-sample per-spin
    magnetizations, <H0>, and the freeze-time magnetizations.  Returns
    the largest norm drift of any step, or -1.0 on non-convergence.
    """
    si = 0
    max_drift = 0.0
    for k in range(n_steps + 1):
        t = total_t if k == n_steps else k * dt
        u = t / total_t
        s = s0 * (1.0 - u) + s1 * u
        tau = tau0 * (1.0 - u) + tau1 * u
        if si < sample_steps.shape[0] and k == sample_steps[si]:
            for j in range(n_spins):
                out_m[si, j] = magnetization_bit(psi, j)
            out_e[si] = diag_expect(psi, diag_e)
            si += 1
        for j in range(n_spins):
            if freeze_steps[j] == k:
                out_frozen[j] = magnetization_bit(psi, j)
        if k == n_steps:
            break
        x = s if kind == 2 else tau
        gsum = 0.0
        for j in range(n_spins):
            g = gamma_scalar(kind, n_spins, j + 1, x)
            gam[j] = g
            gsum += g
        dt_k = dt if k < n_steps - 1 else total_t - (n_steps - 1) * dt
        drift = expm_step(psi, acc, term, tmp, diag_e, s, gam, n_spins,
                          dt_k, tol, s * e_abs_max + gsum)
        if drift < 0.0:
            return -1.0
        if drift > max_drift:
            max_drift = drift
    return max_drift


def make_linear_operator_matvec(diag_e, s, gam, n_spins):
    """Closure suitable for scipy LinearOperator on real vectors."""
    diag_e = np.ascontiguousarray(diag_e, dtype=np.float64)
    gam = np.ascontiguousarray(gam, dtype=np.float64)

    def matvec(vec):
        vec = np.ascontiguousarray(vec, dtype=np.float64)
        out = np.empty_like(vec)
        h_matvec_real(out, vec, diag_e, s, gam, n_spins)
        return out

    return matvec

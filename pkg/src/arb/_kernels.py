"""Compiled inner loops for batched time evolution."""

import numba as nb
import numpy as np

SUBSTEP_NORM = 0.5
BLOCK = 64


def taylor_order(tol, norm=SUBSTEP_NORM):
    """Smallest order whose Taylor remainder for ||A|| <= norm is below tol."""
    n, term = 0, 1.0
    while term * np.exp(norm) >= tol:
        n += 1
        term *= norm / (n + 1)
    return max(n, 1)


@nb.njit(fastmath=True, cache=True)
def expv_batch(indptr, cols, term_ptr, term_pos, term_val, coeffs, psi, order):
    """out[m] = exp(A_m) psi[m] with A_m = sum_t coeffs[m, t] * T_t.

    The term operators share one CSR sparsity pattern (indptr, cols); term t
    owns entries term_pos[term_ptr[t]:term_ptr[t+1]] with values term_val.
    Trajectories are processed in blocks of BLOCK lanes stored as separate
    real and imaginary planes. Each lane gets its own substep count from an
    infinity-norm bound and a fixed Taylor order, so a lane's result does not
    depend on which other trajectories share its block.
    """
    n_traj, dim = psi.shape
    nnz = cols.shape[0]
    n_terms = coeffs.shape[1]
    bs = BLOCK
    out = np.empty_like(psi)
    vr = np.empty((nnz, bs))
    vi = np.empty((nnz, bs))
    tr = np.empty((dim, bs))
    ti = np.empty((dim, bs))
    nr = np.empty((dim, bs))
    ni = np.empty((dim, bs))
    ar = np.empty((dim, bs))
    ai = np.empty((dim, bs))
    sr = np.empty(bs)
    si = np.empty(bs)
    cr = np.empty((n_terms, bs))
    ci = np.empty((n_terms, bs))
    lane_norm = np.empty(bs)
    n_sub = np.empty(bs, dtype=np.int64)
    scale = np.empty(bs)
    for b0 in range(0, n_traj, bs):
        nb_ = min(bs, n_traj - b0)
        cr[:] = 0.0
        ci[:] = 0.0
        ar[:] = 0.0
        ai[:] = 0.0
        for j in range(nb_):
            for t in range(n_terms):
                cr[t, j] = coeffs[b0 + j, t].real
                ci[t, j] = coeffs[b0 + j, t].imag
            for i in range(dim):
                ar[i, j] = psi[b0 + j, i].real
                ai[i, j] = psi[b0 + j, i].imag
        vr[:] = 0.0
        vi[:] = 0.0
        for t in range(n_terms):
            for q in range(term_ptr[t], term_ptr[t + 1]):
                p = term_pos[q]
                wr = term_val[q].real
                wi = term_val[q].imag
                for j in range(bs):
                    vr[p, j] += cr[t, j] * wr - ci[t, j] * wi
                    vi[p, j] += cr[t, j] * wi + ci[t, j] * wr
        lane_norm[:] = 0.0
        for row in range(dim):
            for j in range(bs):
                s = 0.0
                for q in range(indptr[row], indptr[row + 1]):
                    s += abs(vr[q, j]) + abs(vi[q, j])
                if s > lane_norm[j]:
                    lane_norm[j] = s
        most = 1
        for j in range(bs):
            n_sub[j] = max(1, int(np.ceil(lane_norm[j] / SUBSTEP_NORM)))
            scale[j] = 1.0 / n_sub[j]
            if n_sub[j] > most:
                most = n_sub[j]
        for q in range(nnz):
            for j in range(bs):
                vr[q, j] *= scale[j]
                vi[q, j] *= scale[j]
        for sub in range(most):
            # lanes that already finished their substeps see a zero generator
            for j in range(bs):
                if sub == n_sub[j]:
                    for q in range(nnz):
                        vr[q, j] = 0.0
                        vi[q, j] = 0.0
            for i in range(dim):
                for j in range(bs):
                    tr[i, j] = ar[i, j]
                    ti[i, j] = ai[i, j]
            for k in range(1, order + 1):
                f = 1.0 / k
                for row in range(dim):
                    for j in range(bs):
                        sr[j] = 0.0
                        si[j] = 0.0
                    for q in range(indptr[row], indptr[row + 1]):
                        c = cols[q]
                        for j in range(bs):
                            sr[j] += vr[q, j] * tr[c, j] - vi[q, j] * ti[c, j]
                            si[j] += vr[q, j] * ti[c, j] + vi[q, j] * tr[c, j]
                    for j in range(bs):
                        nr[row, j] = sr[j] * f
                        ni[row, j] = si[j] * f
                for i in range(dim):
                    for j in range(bs):
                        tr[i, j] = nr[i, j]
                        ti[i, j] = ni[i, j]
                        ar[i, j] += nr[i, j]
                        ai[i, j] += ni[i, j]
        for j in range(nb_):
            for i in range(dim):
                out[b0 + j, i] = complex(ar[i, j], ai[i, j])
    return out


@nb.njit(cache=True)
def apply_dense_batch(mats, index, psi):
    """out[m] = mats[index[m]] @ psi[m]."""
    n_traj, dim = psi.shape
    out = np.empty_like(psi)
    for m in range(n_traj):
        u = mats[index[m]]
        for i in range(dim):
            s = 0j
            for j in range(dim):
                s += u[i, j] * psi[m, j]
            out[m, i] = s
    return out


@nb.njit(cache=True)
def apply_dense_adjoint_batch(mats, index, psi):
    """out[m] = mats[index[m]]^dagger @ psi[m]."""
    n_traj, dim = psi.shape
    out = np.empty_like(psi)
    for m in range(n_traj):
        u = mats[index[m]]
        for i in range(dim):
            s = 0j
            for j in range(dim):
                s += np.conj(u[j, i]) * psi[m, j]
            out[m, i] = s
    return out

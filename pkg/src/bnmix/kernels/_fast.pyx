# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scoring kernels: single-pass contingency counting and reductions.

Mirrors ``reference.py``. The bank layout (one int32 row per registered
variable/bin-count pair) lets the counting loop touch each sample exactly
once with no temporaries.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log
from libc.string cimport memset

cnp.import_array()


def encode_configs(const int[:, ::1] bank, parent_rows, strides, Py_ssize_t n):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(n, dtype=np.int64)
    cdef long long[::1] cfg = out
    cdef long long[::1] rows = np.asarray(parent_rows, dtype=np.int64)
    cdef long long[::1] strd = np.asarray(strides, dtype=np.int64)
    cdef Py_ssize_t t, m
    for t in range(n):
        for m in range(rows.shape[0]):
            cfg[t] += bank[rows[m], t] * strd[m]
    return out


def node_ll(const int[:, ::1] bank, parent_rows, strides, Py_ssize_t node_row,
            long long q, int b, const double[::1] log_width, int smoothing):
    cdef Py_ssize_t n = bank.shape[1]
    cdef long long[::1] rows = np.asarray(parent_rows, dtype=np.int64)
    cdef long long[::1] strd = np.asarray(strides, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts_arr = np.zeros(q * b, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t t, m
    cdef long long cfg
    for t in range(n):
        cfg = 0
        for m in range(rows.shape[0]):
            cfg += bank[rows[m], t] * strd[m]
        counts[cfg * b + bank[node_row, t]] += 1

    cdef double ll = 0.0, denom
    cdef long long ci, rowsum, cell
    cdef int v
    for ci in range(q):
        rowsum = 0
        for v in range(b):
            rowsum += counts[ci * b + v]
        if rowsum == 0:
            continue
        denom = log(<double>(rowsum + smoothing * b))
        for v in range(b):
            cell = counts[ci * b + v]
            if cell > 0:
                ll += cell * (log(<double>(cell + smoothing)) - denom - log_width[v])
    return ll


def cross_mean_logp(const int[:, ::1] bank, const int[:, ::1] aux_bank,
                    parent_rows, strides, Py_ssize_t node_row,
                    long long q, int b, const double[::1] log_width, int smoothing):
    cdef Py_ssize_t n = bank.shape[1]
    cdef Py_ssize_t n_aux = aux_bank.shape[1]
    cdef long long[::1] rows = np.asarray(parent_rows, dtype=np.int64)
    cdef long long[::1] strd = np.asarray(strides, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts_arr = np.zeros(q * b, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rowsum_arr = np.zeros(q, dtype=np.int64)
    cdef long long[::1] rowsums = rowsum_arr
    cdef Py_ssize_t t, m
    cdef long long cfg
    for t in range(n):
        cfg = 0
        for m in range(rows.shape[0]):
            cfg += bank[rows[m], t] * strd[m]
        counts[cfg * b + bank[node_row, t]] += 1
        rowsums[cfg] += 1

    cdef double acc = 0.0
    cdef long long cell
    cdef int code
    for t in range(n_aux):
        cfg = 0
        for m in range(rows.shape[0]):
            cfg += aux_bank[rows[m], t] * strd[m]
        code = aux_bank[node_row, t]
        cell = counts[cfg * b + code]
        acc += log((<double>(cell + smoothing)) / (<double>(rowsums[cfg] + smoothing * b))) \
            - log_width[code]
    return acc / n_aux


def mi_matrix(const int[:, ::1] pop, const int[::1] alphabet):
    cdef Py_ssize_t n_pop = pop.shape[0]
    cdef Py_ssize_t n_genes = pop.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n_genes, n_genes))
    cdef double[:, ::1] mi = out
    cdef int max_a = 0
    cdef Py_ssize_t a, c, t
    for a in range(n_genes):
        if alphabet[a] > max_a:
            max_a = alphabet[a]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] joint_arr = np.zeros(max_a * max_a, dtype=np.int64)
    cdef long long[::1] joint = joint_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] marg_arr = np.zeros(2 * max_a, dtype=np.int64)
    cdef long long[::1] marg = marg_arr
    cdef int aa, ac, x, y
    cdef double total, pxy, val
    for a in range(n_genes):
        aa = alphabet[a]
        for c in range(a + 1, n_genes):
            ac = alphabet[c]
            memset(&joint[0], 0, aa * ac * sizeof(long long))
            memset(&marg[0], 0, 2 * max_a * sizeof(long long))
            for t in range(n_pop):
                x = pop[t, a]
                y = pop[t, c]
                joint[x * ac + y] += 1
                marg[x] += 1
                marg[max_a + y] += 1
            total = <double>n_pop
            val = 0.0
            for x in range(aa):
                for y in range(ac):
                    if joint[x * ac + y] > 0:
                        pxy = joint[x * ac + y] / total
                        val += pxy * log(pxy * total * total
                                         / (<double>marg[x] * <double>marg[max_a + y]))
            mi[a, c] = val
            mi[c, a] = val
    return out

"""Numpy reference implementation of the hot scoring kernels.

Semantically identical to the compiled extension in ``_fast.pyx``; used when
the extension is unavailable or explicitly disabled. Column values live in a
shared int32 "bank" matrix (one row per registered variable/bin-count pair)
so both backends index the same storage without copying.
"""

from __future__ import annotations

import numpy as np


def encode_configs(bank: np.ndarray, parent_rows, strides, n: int) -> np.ndarray:
    cfg = np.zeros(n, dtype=np.int64)
    for row, stride in zip(parent_rows, strides):
        cfg += bank[row].astype(np.int64) * int(stride)
    return cfg


def node_ll(bank, parent_rows, strides, node_row, q, b, log_width, smoothing) -> float:
    """Sum over samples of log p-hat(bin | parent config) minus log bin width.

    p-hat is (count + s) / (config count + s*b) with s the smoothing flag.
    """
    n = bank.shape[1]
    cfg = encode_configs(bank, parent_rows, strides, n)
    key = cfg * b + bank[node_row]
    counts = np.bincount(key, minlength=q * b).reshape(q, b)
    rows = counts.sum(axis=1)
    nz_c, nz_v = np.nonzero(counts)
    cell = counts[nz_c, nz_v].astype(np.float64)
    denom = rows[nz_c].astype(np.float64) + smoothing * b
    term = np.log(cell + smoothing) - np.log(denom) - log_width[nz_v]
    return float(np.sum(cell * term))


def cross_mean_logp(bank, aux_bank, parent_rows, strides, node_row, q, b, log_width, smoothing) -> float:
    """Mean log density of the aux samples under tables counted from the bank samples."""
    n = bank.shape[1]
    cfg = encode_configs(bank, parent_rows, strides, n)
    counts = np.bincount(cfg * b + bank[node_row], minlength=q * b)
    rows = counts.reshape(q, b).sum(axis=1)
    n_aux = aux_bank.shape[1]
    aux_cfg = encode_configs(aux_bank, parent_rows, strides, n_aux)
    aux_code = aux_bank[node_row]
    cell = counts[aux_cfg * b + aux_code].astype(np.float64)
    denom = rows[aux_cfg].astype(np.float64) + smoothing * b
    with np.errstate(divide="ignore"):
        logp = np.log(cell + smoothing) - np.log(denom) - log_width[aux_code]
    return float(np.mean(logp))


def mi_matrix(pop: np.ndarray, alphabet: np.ndarray) -> np.ndarray:
    """Pairwise mutual information between gene positions, from population frequencies."""
    n_pop, n_genes = pop.shape
    out = np.zeros((n_genes, n_genes))
    for a in range(n_genes):
        col_a = pop[:, a].astype(np.int64)
        for c in range(a + 1, n_genes):
            ac = int(alphabet[c])
            joint = np.bincount(col_a * ac + pop[:, c], minlength=int(alphabet[a]) * ac)
            joint = joint.reshape(int(alphabet[a]), ac) / n_pop
            px = joint.sum(axis=1)
            py = joint.sum(axis=0)
            nz = joint > 0
            mi = float(np.sum(joint[nz] * np.log(joint[nz] / np.outer(px, py)[nz])))
            out[a, c] = out[c, a] = mi
    return out

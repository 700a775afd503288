# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the banded and sparse sweeps on the solve path.

Same contracts as pykernels; the Gauss-Seidel and Thomas recurrences are
inherently sequential, which is where compiled loops pay off.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def thomas(double[::1] dl, double[::1] d, double[::1] du, double[::1] b):
    """Tridiagonal solve by the Thomas recurrence (no pivoting).

    Safe for the diagonally dominant systems assembled here; a vanishing
    pivot raises instead of returning garbage.
    """
    cdef Py_ssize_t n = d.shape[0]
    cdef cnp.ndarray[double, ndim=1] x_arr = np.empty(n)
    cdef double[::1] x = x_arr
    cdef cnp.ndarray[double, ndim=1] c_arr = np.empty(n)
    cdef double[::1] cp = c_arr
    cdef Py_ssize_t k
    cdef double piv = d[0]
    if piv == 0.0:
        raise ZeroDivisionError("singular tridiagonal system")
    cp[0] = du[0] / piv if n > 1 else 0.0
    x[0] = b[0] / piv
    for k in range(1, n):
        piv = d[k] - dl[k] * cp[k - 1]
        if piv == 0.0:
            raise ZeroDivisionError("zero pivot in Thomas recurrence")
        if k < n - 1:
            cp[k] = du[k] / piv
        x[k] = (b[k] - dl[k] * x[k - 1]) / piv
    for k in range(n - 2, -1, -1):
        x[k] -= cp[k] * x[k + 1]
    return x_arr


def gs_sweep(A, double[::1] b, double[::1] x):
    """One forward lexicographic Gauss-Seidel sweep over a CSR matrix."""
    cdef int[::1] indptr = A.indptr
    cdef int[::1] indices = A.indices
    cdef double[::1] data = A.data
    cdef Py_ssize_t n = b.shape[0]
    cdef cnp.ndarray[double, ndim=1] out_arr = np.array(x, copy=True)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, p
    cdef double s, diag
    for i in range(n):
        s = b[i]
        diag = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                diag = data[p]
            else:
                s -= data[p] * out[indices[p]]
        out[i] = s / diag
    return out_arr


def rb_sweep(A, double[::1] b, double[::1] x, cnp.uint8_t[::1] red):
    """Two-colour sweep, red before black.

    Red rows update simultaneously from the incoming iterate; black rows
    update in index order, seeing the new red values and any earlier black
    updates.  On five-point operators no two same-colour rows couple, so
    this is exactly classical red-black Gauss-Seidel.
    """
    cdef int[::1] indptr = A.indptr
    cdef int[::1] indices = A.indices
    cdef double[::1] data = A.data
    cdef Py_ssize_t n = b.shape[0]
    cdef cnp.ndarray[double, ndim=1] out_arr = np.array(x, copy=True)
    cdef double[::1] out = out_arr
    cdef cnp.ndarray[double, ndim=1] upd_arr = np.zeros(n)
    cdef double[::1] upd = upd_arr
    cdef Py_ssize_t i, p
    cdef double s, diag
    # red pass from the unmodified state
    for i in range(n):
        if not red[i]:
            continue
        s = b[i]
        diag = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            diag = data[p] if indices[p] == i else diag
            s -= data[p] * out[indices[p]]
        upd[i] = s / diag
    for i in range(n):
        if red[i]:
            out[i] += upd[i]
    # black pass sees updated red values and, on matrices with black-black
    # coupling, earlier black updates (rows processed in index order)
    for i in range(n):
        if red[i]:
            continue
        s = b[i]
        diag = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            diag = data[p] if indices[p] == i else diag
            s -= data[p] * out[indices[p]]
        out[i] += s / diag
    return out_arr

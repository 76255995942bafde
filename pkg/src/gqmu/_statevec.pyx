# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled statevector gate kernels (hot path of the quantum prior).

All kernels mutate the complex128 state in place, using explicit
real/imaginary arithmetic.  Pair indices are enumerated with a single
branchless loop (insert a zero at the target bit), so the cost is
uniform across qubit positions.  Qubit q maps to bit q of the
basis-state index; the pure-numpy fallback in ``gqmu.statevec``
implements the same contract.
"""

from libc.math cimport cos, sin


def rx(double complex[::1] psi, int q, double theta):
    cdef Py_ssize_t size = psi.shape[0]
    cdef Py_ssize_t mask = (<Py_ssize_t>1) << q
    cdef Py_ssize_t low = mask - 1
    cdef Py_ssize_t half = size >> 1
    cdef double c = cos(theta / 2.0)
    cdef double s = sin(theta / 2.0)
    cdef Py_ssize_t k, i, j
    cdef double ar, ai, br, bi
    for k in range(half):
        i = ((k & ~low) << 1) | (k & low)
        j = i | mask
        ar = psi[i].real; ai = psi[i].imag
        br = psi[j].real; bi = psi[j].imag
        # c*a - i*s*b  and  c*b - i*s*a
        psi[i].real = c * ar + s * bi
        psi[i].imag = c * ai - s * br
        psi[j].real = c * br + s * ai
        psi[j].imag = c * bi - s * ar


def rz(double complex[::1] psi, int q, double theta):
    cdef Py_ssize_t size = psi.shape[0]
    cdef Py_ssize_t mask = (<Py_ssize_t>1) << q
    cdef Py_ssize_t low = mask - 1
    cdef Py_ssize_t half = size >> 1
    cdef double c = cos(theta / 2.0)
    cdef double s = sin(theta / 2.0)
    cdef Py_ssize_t k, i, j
    cdef double ar, ai
    for k in range(half):
        i = ((k & ~low) << 1) | (k & low)
        j = i | mask
        # bit 0: multiply by c - i*s ; bit 1: by c + i*s
        ar = psi[i].real; ai = psi[i].imag
        psi[i].real = c * ar + s * ai
        psi[i].imag = c * ai - s * ar
        ar = psi[j].real; ai = psi[j].imag
        psi[j].real = c * ar - s * ai
        psi[j].imag = c * ai + s * ar


def xx(double complex[::1] psi, int q1, int q2, double theta):
    cdef Py_ssize_t size = psi.shape[0]
    cdef Py_ssize_t m1 = (<Py_ssize_t>1) << q1
    cdef Py_ssize_t m12 = m1 | ((<Py_ssize_t>1) << q2)
    cdef Py_ssize_t low = m1 - 1
    cdef Py_ssize_t half = size >> 1
    cdef double c = cos(theta / 2.0)
    cdef double s = sin(theta / 2.0)
    cdef Py_ssize_t k, i, j
    cdef double ar, ai, br, bi
    # enumerate indices with bit q1 = 0; partner flips both coupled bits
    for k in range(half):
        i = ((k & ~low) << 1) | (k & low)
        j = i ^ m12
        ar = psi[i].real; ai = psi[i].imag
        br = psi[j].real; bi = psi[j].imag
        psi[i].real = c * ar + s * bi
        psi[i].imag = c * ai - s * br
        psi[j].real = c * br + s * ai
        psi[j].imag = c * bi - s * ar


def toffoli(double complex[::1] psi, int c1, int c2, int target):
    cdef Py_ssize_t size = psi.shape[0]
    cdef Py_ssize_t mc = ((<Py_ssize_t>1) << c1) | ((<Py_ssize_t>1) << c2)
    cdef Py_ssize_t mt = (<Py_ssize_t>1) << target
    cdef Py_ssize_t i, j
    cdef double tr, ti
    for i in range(size):
        if (i & mc) == mc and not (i & mt):
            j = i | mt
            tr = psi[i].real; ti = psi[i].imag
            psi[i].real = psi[j].real; psi[i].imag = psi[j].imag
            psi[j].real = tr; psi[j].imag = ti


def expect_z(double complex[::1] psi, int q):
    cdef Py_ssize_t size = psi.shape[0]
    cdef Py_ssize_t mask = (<Py_ssize_t>1) << q
    cdef double acc = 0.0
    cdef double p
    cdef Py_ssize_t i
    for i in range(size):
        p = psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
        if i & mask:
            acc -= p
        else:
            acc += p
    return acc

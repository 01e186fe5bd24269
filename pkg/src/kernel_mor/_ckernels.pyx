# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. See ``_pykernels.py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, pow, isfinite

cnp.import_array()

DEF LINEAR = 0
DEF POLYNOMIAL = 1
DEF GAUSSIAN = 2


cdef inline double ipow(double base, int e) nogil:
    cdef double r = 1.0
    while e > 0:
        if e & 1:
            r *= base
        base *= base
        e >>= 1
    return r


cdef void poly_rhs(const double[::1] x, const double[::1] u,
                   const double[::1] coef, const Py_ssize_t[::1] target,
                   const int[:, ::1] sexp, const int[:, ::1] uexp,
                   double[::1] out) noexcept nogil:
    cdef Py_ssize_t t, j
    cdef Py_ssize_t nt = coef.shape[0]
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = u.shape[0]
    cdef double v
    for j in range(n):
        out[j] = 0.0
    for t in range(nt):
        v = coef[t]
        for j in range(n):
            if sexp[t, j]:
                v *= ipow(x[j], sexp[t, j])
        for j in range(m):
            if uexp[t, j]:
                v *= ipow(u[j], uexp[t, j])
        out[target[t]] += v


def rk4_polynomial(coef, target, sexp, uexp, x0, U, double h, Py_ssize_t record_every):
    cdef const double[::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t[::1] tg = np.ascontiguousarray(target, dtype=np.intp)
    cdef int[:, ::1] se = np.ascontiguousarray(sexp, dtype=np.intc)
    cdef int[:, ::1] ue = np.ascontiguousarray(uexp, dtype=np.intc)
    cdef const double[:, ::1] Uv = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t n = len(x0)
    cdef Py_ssize_t nsteps = Uv.shape[0]
    cdef Py_ssize_t m = Uv.shape[1]
    out_arr = np.empty((nsteps // record_every, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef double[::1] tmp = np.empty(n)
    cdef double[::1] k1 = np.empty(n)
    cdef double[::1] k2 = np.empty(n)
    cdef double[::1] k3 = np.empty(n)
    cdef double[::1] k4 = np.empty(n)
    cdef double[::1] u = np.empty(m)
    cdef double half = 0.5 * h
    cdef double sixth = h / 6.0
    cdef Py_ssize_t k, j
    cdef bint ok
    with nogil:
        for k in range(nsteps):
            for j in range(m):
                u[j] = Uv[k, j]
            poly_rhs(x, u, c, tg, se, ue, k1)
            for j in range(n):
                tmp[j] = x[j] + half * k1[j]
            poly_rhs(tmp, u, c, tg, se, ue, k2)
            for j in range(n):
                tmp[j] = x[j] + half * k2[j]
            poly_rhs(tmp, u, c, tg, se, ue, k3)
            for j in range(n):
                tmp[j] = x[j] + h * k3[j]
            poly_rhs(tmp, u, c, tg, se, ue, k4)
            ok = True
            for j in range(n):
                x[j] = x[j] + sixth * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                if not isfinite(x[j]):
                    ok = False
            if not ok:
                with gil:
                    return out_arr[: (k + 1) // record_every], k
            if (k + 1) % record_every == 0:
                for j in range(n):
                    out[(k + 1) // record_every - 1, j] = x[j]
    return out_arr, -1


def pi_and_jacobian(x, samples, weights, int family, double degree, double offset, double gamma):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] Y = np.ascontiguousarray(samples, dtype=np.float64)
    cdef const double[:, ::1] W = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t L = Y.shape[0]
    cdef Py_ssize_t n = Y.shape[1]
    cdef Py_ssize_t q = W.shape[1]
    pi_arr = np.zeros(q)
    J_arr = np.zeros((q, n))
    cdef double[::1] pi = pi_arr
    cdef double[:, ::1] J = J_arr
    cdef Py_ssize_t l, i, j
    cdef double s, kv, g, d, b
    cdef int ideg = <int>degree
    cdef bint integral = ideg >= 1 and ideg == degree
    with nogil:
        for l in range(L):
            if family == GAUSSIAN:
                s = 0.0
                for j in range(n):
                    d = xv[j] - Y[l, j]
                    s += d * d
                kv = exp(-gamma * s)
                g = -2.0 * gamma * kv
                for i in range(q):
                    pi[i] += W[l, i] * kv
                    for j in range(n):
                        J[i, j] += W[l, i] * g * (xv[j] - Y[l, j])
            else:
                s = 0.0
                for j in range(n):
                    s += xv[j] * Y[l, j]
                if family == LINEAR:
                    kv = s
                    g = 1.0
                elif integral:
                    b = offset + s
                    g = degree * ipow(b, ideg - 1)
                    kv = ipow(b, ideg)
                else:
                    kv = pow(offset + s, degree)
                    g = degree * pow(offset + s, degree - 1.0)
                for i in range(q):
                    pi[i] += W[l, i] * kv
                    for j in range(n):
                        J[i, j] += W[l, i] * g * Y[l, j]
    return pi_arr, J_arr

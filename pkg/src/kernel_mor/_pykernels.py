"""NumPy implementations of the hot kernels.

Mirrors ``_ckernels.pyx`` signature-for-signature; used when the compiled
extension is unavailable or ``KERNEL_MOR_BACKEND=python`` is set.
"""
import numpy as np

LINEAR, POLYNOMIAL, GAUSSIAN = 0, 1, 2


def _poly_rhs(x, u, coef, target, sexp, uexp, n):
    terms = coef * np.prod(x ** sexp, axis=1) * np.prod(u ** uexp, axis=1)
    return np.bincount(target, weights=terms, minlength=n)


def rk4_polynomial(coef, target, sexp, uexp, x0, U, h, record_every):
    """Fixed-step RK4 for a polynomial vector field.

    ``U[k]`` is the input held constant over substep ``k``. Returns
    ``(records, fail_step)`` where ``records[i]`` is the state after
    ``(i + 1) * record_every`` substeps and ``fail_step`` is the first
    substep producing a non-finite state (``-1`` if none).
    """
    coef = np.asarray(coef, dtype=float)
    target = np.asarray(target, dtype=np.intp)
    sexp = np.asarray(sexp, dtype=float)
    uexp = np.asarray(uexp, dtype=float)
    x = np.array(x0, dtype=float)
    n = x.shape[0]
    nsteps = U.shape[0]
    out = np.empty((nsteps // record_every, n))
    half = 0.5 * h
    for k in range(nsteps):
        u = U[k]
        k1 = _poly_rhs(x, u, coef, target, sexp, uexp, n)
        k2 = _poly_rhs(x + half * k1, u, coef, target, sexp, uexp, n)
        k3 = _poly_rhs(x + half * k2, u, coef, target, sexp, uexp, n)
        k4 = _poly_rhs(x + h * k3, u, coef, target, sexp, uexp, n)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            return out[: (k + 1) // record_every], k
        if (k + 1) % record_every == 0:
            out[(k + 1) // record_every - 1] = x
    return out, -1


def pi_and_jacobian(x, samples, weights, family, degree, offset, gamma):
    """Weighted empirical feature map and its Jacobian.

    Returns ``(weights.T @ k(x), weights.T @ J_k(x))`` where ``k(x)[l]`` is
    the kernel between ``x`` and ``samples[l]``.
    """
    x = np.asarray(x, dtype=float)
    if family == GAUSSIAN:
        diff = x - samples
        k = np.exp(-gamma * np.einsum("ij,ij->i", diff, diff))
        J = (weights * (-2.0 * gamma * k)[:, None]).T @ diff
        return weights.T @ k, J
    s = samples @ x
    if family == LINEAR:
        return weights.T @ s, weights.T @ samples
    base = offset + s
    k = base ** degree
    g = degree * base ** (degree - 1)
    return weights.T @ k, (weights * g[:, None]).T @ samples

"""Hot inner loops over stacks of small complex matrices.

Every kernel exists twice: a numba ``@njit`` version and a vectorised numpy
version computing the same algorithm. The numba path is used when numba
imports cleanly and ``KSYMLOOP_DISABLE_NUMBA`` is unset (or ``0``); both are
always reachable through :data:`numba_impl` and :data:`numpy_impl` so tests
and the benchmark can compare them.

Stacks are ``(K, n, m)`` complex128 arrays, one matrix per sample point of a
loop on the unit circle.
"""

import os
from types import SimpleNamespace

import numpy as np

_TAYLOR_DEGREE = 18
_SCALE_TARGET = 0.5


def _disabled_by_env():
    return os.environ.get("KSYMLOOP_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


# ---------------------------------------------------------------------------
# numpy path


def _np_matmul(a, b):
    return np.matmul(a, b)


def _np_expm(a):
    a = np.ascontiguousarray(a, dtype=np.complex128)
    K, n, _ = a.shape
    if K == 0:
        return a.copy()
    norms = np.abs(a).sum(axis=1).max(axis=1)
    s = np.zeros(K, dtype=np.int64)
    big = norms > _SCALE_TARGET
    s[big] = np.ceil(np.log2(norms[big] / _SCALE_TARGET)).astype(np.int64)
    x = a / (2.0 ** s)[:, None, None]
    eye = np.broadcast_to(np.eye(n, dtype=np.complex128), a.shape)
    # Horner form of the truncated Taylor series
    out = eye.copy()
    for j in range(_TAYLOR_DEGREE, 0, -1):
        out = eye + np.matmul(x, out) / j
    for step in range(int(s.max())):
        todo = s > step
        out[todo] = np.matmul(out[todo], out[todo])
    return out


def _np_rk4(xi, z, nsteps):
    # xi: (D, K, n, n) coefficients of xi(w) = sum_d w**d xi[d]
    D, K, n, _ = xi.shape
    g = np.broadcast_to(np.eye(n, dtype=np.complex128), (K, n, n)).copy()
    dt = 1.0 / nsteps

    def rhs(g, t):
        w = t * z
        f = np.zeros((K, n, n), dtype=np.complex128)
        for d in range(D - 1, -1, -1):
            f = f * w + xi[d]
        return np.matmul(g, f) * z

    for i in range(nsteps):
        t = i * dt
        k1 = rhs(g, t)
        k2 = rhs(g + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = rhs(g + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = rhs(g + dt * k3, t + dt)
        g = g + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return g


numpy_impl = SimpleNamespace(name="numpy", matmul=_np_matmul, expm=_np_expm, rk4=_np_rk4)


# ---------------------------------------------------------------------------
# numba path

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


if HAVE_NUMBA:

    @njit(cache=True)
    def _mm(a, b, out):
        n, m = a.shape
        p = b.shape[1]
        for i in range(n):
            for j in range(p):
                acc = 0j
                for q in range(m):
                    acc += a[i, q] * b[q, j]
                out[i, j] = acc

    @njit(cache=True)
    def _nb_matmul(a, b):
        K, n, _ = a.shape
        p = b.shape[2]
        out = np.empty((K, n, p), dtype=np.complex128)
        for k in range(K):
            _mm(a[k], b[k], out[k])
        return out

    @njit(cache=True)
    def _expm_one(a, out):
        n = a.shape[0]
        norm = 0.0
        for j in range(n):
            col = 0.0
            for i in range(n):
                col += abs(a[i, j])
            if col > norm:
                norm = col
        s = 0
        if norm > _SCALE_TARGET:
            s = int(np.ceil(np.log2(norm / _SCALE_TARGET)))
        x = a / (2.0 ** s)
        acc = np.eye(n, dtype=np.complex128)
        tmp = np.empty((n, n), dtype=np.complex128)
        for j in range(_TAYLOR_DEGREE, 0, -1):
            _mm(x, acc, tmp)
            for r in range(n):
                for c in range(n):
                    acc[r, c] = tmp[r, c] / j
                acc[r, r] += 1.0
        for _ in range(s):
            _mm(acc, acc, tmp)
            acc[:, :] = tmp
        out[:, :] = acc

    @njit(cache=True)
    def _nb_expm(a):
        K, n, _ = a.shape
        out = np.empty((K, n, n), dtype=np.complex128)
        for k in range(K):
            _expm_one(np.ascontiguousarray(a[k]), out[k])
        return out

    @njit(cache=True)
    def _rhs_one(g, xi, k, w, z, f, out):
        D = xi.shape[0]
        n = g.shape[0]
        f[:, :] = 0.0
        for d in range(D - 1, -1, -1):
            for r in range(n):
                for c in range(n):
                    f[r, c] = f[r, c] * w + xi[d, k, r, c]
        _mm(g, f, out)
        for r in range(n):
            for c in range(n):
                out[r, c] *= z

    @njit(cache=True)
    def _nb_rk4(xi, z, nsteps):
        D, K, n, _ = xi.shape
        res = np.empty((K, n, n), dtype=np.complex128)
        dt = 1.0 / nsteps
        f = np.empty((n, n), dtype=np.complex128)
        k1 = np.empty((n, n), dtype=np.complex128)
        k2 = np.empty((n, n), dtype=np.complex128)
        k3 = np.empty((n, n), dtype=np.complex128)
        k4 = np.empty((n, n), dtype=np.complex128)
        for k in range(K):
            g = np.eye(n, dtype=np.complex128)
            for i in range(nsteps):
                t = i * dt
                _rhs_one(g, xi, k, t * z, z, f, k1)
                _rhs_one(g + 0.5 * dt * k1, xi, k, (t + 0.5 * dt) * z, z, f, k2)
                _rhs_one(g + 0.5 * dt * k2, xi, k, (t + 0.5 * dt) * z, z, f, k3)
                _rhs_one(g + dt * k3, xi, k, (t + dt) * z, z, f, k4)
                g = g + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            res[k] = g
        return res

    numba_impl = SimpleNamespace(
        name="numba",
        matmul=lambda a, b: _nb_matmul(
            np.ascontiguousarray(a, dtype=np.complex128), np.ascontiguousarray(b, dtype=np.complex128)
        ),
        expm=lambda a: _nb_expm(np.ascontiguousarray(a, dtype=np.complex128)),
        rk4=lambda xi, z, nsteps: _nb_rk4(np.ascontiguousarray(xi, dtype=np.complex128), complex(z), int(nsteps)),
    )
else:  # pragma: no cover
    numba_impl = None


def active():
    """Return the kernel namespace selected by the environment."""
    if numba_impl is not None and not _disabled_by_env():
        return numba_impl
    return numpy_impl


def matmul(a, b):
    return active().matmul(a, b)


def expm(a):
    return active().expm(a)


def rk4(xi, z, nsteps):
    return active().rk4(xi, z, nsteps)

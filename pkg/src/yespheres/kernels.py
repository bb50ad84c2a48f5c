"""Hot kernels: geodesics with first and second variations.

For a batch of initial velocities ``V[p]`` at a common base point ``x0``, the
kernels integrate on ``lambda in [0, 1]``

* the geodesic ``x(lambda)`` with ``x(0) = x0``, ``x'(0) = V[p]``;
* first variations ``J_a = dx/dv_a`` with ``J_a(0) = 0``, ``J_a'(0) = E[:, a]``;
* optionally second variations ``H_ab = d2x/dv_a dv_b`` with zero initial data.

so ``J(1)`` and ``H(1)`` are the first and second derivatives of
``v -> exp_x0(E v)``. Integration is classical RK4 with a fixed number of
steps, so results are smooth functions of the inputs (no step-size control
jitter), which matters for the finite differences taken downstream.

Two interchangeable implementations exist: ``numba`` (compiled, parallel over
nodes) and ``numpy`` (vectorized over nodes). Choose with the environment
variable ``YESPHERES_BACKEND``.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from ._config import backend

try:  # numba is a declared dependency, but keep the numpy path importable alone
    import os

    import numba
    from numba import njit, prange

    if "NUMBA_THREADING_LAYER" not in os.environ:
        # Avoid probing an outdated system TBB; workqueue is always available.
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover
    numba = None


# ---------------------------------------------------------------------------
# numpy implementation
# ---------------------------------------------------------------------------

def _G(w, a, b):
    """Conformal Christoffel map ``a (w.b) + b (w.a) - (a.b) w`` over leading axes."""
    wb = np.sum(w * b, axis=-1)[..., None]
    wa = np.sum(w * a, axis=-1)[..., None]
    ab = np.sum(a * b, axis=-1)[..., None]
    return a * wb + b * wa - ab * w


def _rhs_numpy(state, uder, second):
    x, xd, J, Jd, H, Hd = state
    gu, Hu, Tu = uder(x)
    n = x.shape[0]
    d = x.shape[1]
    xdd = -_G(gu, xd, xd)
    # Move variation index to the front of the batch for broadcasting.
    Jt = np.swapaxes(J, 1, 2)        # (N, a, d)
    Jdt = np.swapaxes(Jd, 1, 2)
    wJ = np.einsum("nij,naj->nai", Hu, Jt)
    xdb = xd[:, None, :]
    gub = gu[:, None, :]
    Jdd = -_G(wJ, xdb, xdb) - 2.0 * _G(gub, xdb, Jdt)
    out = [xd, xdd, Jd, np.swapaxes(Jdd, 1, 2), None, None]
    if second:
        Ht = H.reshape(n, d, d * d).transpose(0, 2, 1)      # (N, ab, d)
        Hdt = Hd.reshape(n, d, d * d).transpose(0, 2, 1)
        wH = np.einsum("nij,npj->npi", Hu, Ht)
        wT = np.einsum("nkij,nai,nbj->nabk", Tu, Jt, Jt).reshape(n, d * d, d)
        wJa = np.repeat(wJ, d, axis=1)                       # index a of pair ab
        wJb = np.tile(wJ, (1, d, 1))                         # index b of pair ab
        Jda = np.repeat(Jdt, d, axis=1)
        Jdb = np.tile(Jdt, (1, d, 1))
        xdp = xd[:, None, :]
        gup = gu[:, None, :]
        Hdd = (-_G(wH, xdp, xdp) - 2.0 * _G(gup, xdp, Hdt) - _G(wT, xdp, xdp)
               - 2.0 * _G(wJa, xdp, Jdb) - 2.0 * _G(wJb, xdp, Jda) - 2.0 * _G(gup, Jda, Jdb))
        out[4] = Hd
        out[5] = Hdd.transpose(0, 2, 1).reshape(n, d, d, d)
    return out


def variations_numpy(
    x0: np.ndarray,
    V: np.ndarray,
    E: np.ndarray,
    uder: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]],
    steps: int,
    second: bool = True,
):
    """Vectorized RK4; ``uder(x)`` returns ``(du, d2u, d3u)`` for points ``x``."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n, d = V.shape
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n, d)).copy()
    J = np.zeros((n, d, d))
    Jd = np.broadcast_to(np.asarray(E, dtype=float), (n, d, d)).copy()
    H = np.zeros((n, d, d, d)) if second else None
    Hd = np.zeros((n, d, d, d)) if second else None
    state = [x, V.copy(), J, Jd, H, Hd]
    h = 1.0 / steps

    def axpy(s, k, c):
        return [None if a is None else a + c * b for a, b in zip(s, k)]

    for _ in range(steps):
        k1 = _rhs_numpy(state, uder, second)
        k2 = _rhs_numpy(axpy(state, k1, 0.5 * h), uder, second)
        k3 = _rhs_numpy(axpy(state, k2, 0.5 * h), uder, second)
        k4 = _rhs_numpy(axpy(state, k3, h), uder, second)
        state = [None if s is None else s + (h / 6.0) * (a + 2 * b + 2 * c + e)
                 for s, a, b, c, e in zip(state, k1, k2, k3, k4)]
    return state[0], state[2], state[4]


def mode_uder(kappa: float, amps: np.ndarray, waves: np.ndarray, phases: np.ndarray):
    """Numpy derivative callback for the log-plus-modes conformal exponent."""

    def uder(x):
        d = x.shape[-1]
        q = 1.0 + kappa * np.sum(x * x, axis=-1) / 4.0
        dq = 0.5 * kappa * x
        f1, f2, f3 = -1.0 / q, 1.0 / q**2, -2.0 / q**3
        eye = np.eye(d)
        gu = f1[:, None] * dq
        Hu = f2[:, None, None] * dq[:, :, None] * dq[:, None, :] + (0.5 * kappa) * f1[:, None, None] * eye
        Tu = (f3[:, None, None, None] * np.einsum("ni,nj,nk->nijk", dq, dq, dq)
              + (0.5 * kappa) * f2[:, None, None, None]
              * (np.einsum("ij,nk->nijk", eye, dq) + np.einsum("ik,nj->nijk", eye, dq)
                 + np.einsum("jk,ni->nijk", eye, dq)))
        if len(amps):
            ph = x @ waves.T + phases
            c, s = np.cos(ph), np.sin(ph)
            gu = gu + (-s * amps) @ waves
            Hu = Hu + np.einsum("nm,mi,mj->nij", -c * amps, waves, waves)
            Tu = Tu + np.einsum("nm,mi,mj,mk->nijk", s * amps, waves, waves, waves)
        return gu, Hu, Tu

    return uder


# ---------------------------------------------------------------------------
# numba implementation
# ---------------------------------------------------------------------------

if numba is not None:

    @njit(cache=True, fastmath=False)
    def _uder_nb(x, kappa, amps, waves, phases, gu, Hu, Tu):
        d = x.shape[0]
        r2 = 0.0
        for i in range(d):
            r2 += x[i] * x[i]
        q = 1.0 + kappa * r2 / 4.0
        f1 = -1.0 / q
        f2 = 1.0 / (q * q)
        f3 = -2.0 / (q * q * q)
        hk = 0.5 * kappa
        for i in range(d):
            dqi = hk * x[i]
            gu[i] = f1 * dqi
            for j in range(d):
                dqj = hk * x[j]
                Hu[i, j] = f2 * dqi * dqj + (hk * f1 if i == j else 0.0)
                for k in range(d):
                    dqk = hk * x[k]
                    mix = 0.0
                    if i == j:
                        mix += dqk
                    if i == k:
                        mix += dqj
                    if j == k:
                        mix += dqi
                    Tu[i, j, k] = f3 * dqi * dqj * dqk + hk * f2 * mix
        for m in range(amps.shape[0]):
            ph = phases[m]
            for i in range(d):
                ph += waves[m, i] * x[i]
            c = np.cos(ph) * amps[m]
            s = np.sin(ph) * amps[m]
            for i in range(d):
                gu[i] -= s * waves[m, i]
                for j in range(d):
                    Hu[i, j] -= c * waves[m, i] * waves[m, j]
                    for k in range(d):
                        Tu[i, j, k] += s * waves[m, i] * waves[m, j] * waves[m, k]

    @njit(cache=True, inline="always")
    def _g_into(out, o, sign, w, a, b, d):
        wb = 0.0
        wa = 0.0
        ab = 0.0
        for i in range(d):
            wb += w[i] * b[i]
            wa += w[i] * a[i]
            ab += a[i] * b[i]
        for i in range(d):
            out[o + i] += sign * (a[i] * wb + b[i] * wa - ab * w[i])

    @njit(cache=True)
    def _rhs_nb(s, ds, d, second, kappa, amps, waves, phases, gu, Hu, Tu, tmp, tmp2, wJ):
        # layout: x, xd, J[:, a] blocks, Jd[:, a] blocks, H[:, a, b] blocks, Hd[:, a, b]
        oJ = 2 * d
        oJd = oJ + d * d
        oH = oJd + d * d
        oHd = oH + d * d * d
        x = s[0:d]
        xd = s[d:2 * d]
        _uder_nb(x, kappa, amps, waves, phases, gu, Hu, Tu)
        for i in range(ds.shape[0]):
            ds[i] = 0.0
        for i in range(d):
            ds[i] = xd[i]
        _g_into(ds, d, -1.0, gu, xd, xd, d)
        for a in range(d):
            Ja = s[oJ + a * d: oJ + (a + 1) * d]
            Jda = s[oJd + a * d: oJd + (a + 1) * d]
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += Hu[i, j] * Ja[j]
                wJ[a, i] = acc
                ds[oJ + a * d + i] = Jda[i]
            _g_into(ds, oJd + a * d, -1.0, wJ[a], xd, xd, d)
            _g_into(ds, oJd + a * d, -2.0, gu, xd, Jda, d)
        if second:
            for a in range(d):
                Ja = s[oJ + a * d: oJ + (a + 1) * d]
                Jda = s[oJd + a * d: oJd + (a + 1) * d]
                for b in range(d):
                    Jb = s[oJ + b * d: oJ + (b + 1) * d]
                    Jdb = s[oJd + b * d: oJd + (b + 1) * d]
                    p = a * d + b
                    Hab = s[oH + p * d: oH + (p + 1) * d]
                    Hdab = s[oHd + p * d: oHd + (p + 1) * d]
                    for k in range(d):
                        acc = 0.0
                        acc2 = 0.0
                        for i in range(d):
                            acc += Hu[k, i] * Hab[i]
                            for j in range(d):
                                acc2 += Tu[k, i, j] * Ja[i] * Jb[j]
                        tmp[k] = acc
                        tmp2[k] = acc2
                        ds[oH + p * d + k] = Hdab[k]
                    o = oHd + p * d
                    _g_into(ds, o, -1.0, tmp, xd, xd, d)
                    _g_into(ds, o, -2.0, gu, xd, Hdab, d)
                    _g_into(ds, o, -1.0, tmp2, xd, xd, d)
                    _g_into(ds, o, -2.0, wJ[a], xd, Jdb, d)
                    _g_into(ds, o, -2.0, wJ[b], xd, Jda, d)
                    _g_into(ds, o, -2.0, gu, Jda, Jdb, d)

    @njit(cache=True, parallel=True)
    def _variations_nb(x0, V, E, kappa, amps, waves, phases, steps, second, out):
        n, d = V.shape
        size = out.shape[1]
        h = 1.0 / steps
        for p in prange(n):
            s = np.zeros(size)
            for i in range(d):
                s[i] = x0[i]
                s[d + i] = V[p, i]
            oJd = 2 * d + d * d
            for a in range(d):
                for i in range(d):
                    s[oJd + a * d + i] = E[i, a]
            k1 = np.empty(size)
            k2 = np.empty(size)
            k3 = np.empty(size)
            k4 = np.empty(size)
            tmp_s = np.empty(size)
            gu = np.empty(d)
            Hu = np.empty((d, d))
            Tu = np.empty((d, d, d))
            tmp = np.empty(d)
            tmp2 = np.empty(d)
            wJ = np.empty((d, d))
            for _ in range(steps):
                _rhs_nb(s, k1, d, second, kappa, amps, waves, phases, gu, Hu, Tu, tmp, tmp2, wJ)
                for i in range(size):
                    tmp_s[i] = s[i] + 0.5 * h * k1[i]
                _rhs_nb(tmp_s, k2, d, second, kappa, amps, waves, phases, gu, Hu, Tu, tmp, tmp2, wJ)
                for i in range(size):
                    tmp_s[i] = s[i] + 0.5 * h * k2[i]
                _rhs_nb(tmp_s, k3, d, second, kappa, amps, waves, phases, gu, Hu, Tu, tmp, tmp2, wJ)
                for i in range(size):
                    tmp_s[i] = s[i] + h * k3[i]
                _rhs_nb(tmp_s, k4, d, second, kappa, amps, waves, phases, gu, Hu, Tu, tmp, tmp2, wJ)
                for i in range(size):
                    s[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(size):
                out[p, i] = s[i]


def variations_numba(x0, V, E, kappa, amps, waves, phases, steps, second=True):
    V = np.ascontiguousarray(np.atleast_2d(V), dtype=float)
    n, d = V.shape
    size = 2 * d + 2 * d * d + (2 * d**3 if second else 0)
    out = np.empty((n, size))
    _variations_nb(np.ascontiguousarray(x0, dtype=float), V, np.ascontiguousarray(E, dtype=float),
                   float(kappa), np.ascontiguousarray(amps, dtype=float),
                   np.ascontiguousarray(waves, dtype=float).reshape(len(amps), d),
                   np.ascontiguousarray(phases, dtype=float), int(steps), bool(second), out)
    X = out[:, :d]
    oJ = 2 * d
    J = out[:, oJ:oJ + d * d].reshape(n, d, d).transpose(0, 2, 1)       # J[p, i, a]
    H = None
    if second:
        oH = 2 * d + 2 * d * d
        H = out[:, oH:oH + d**3].reshape(n, d, d, d).transpose(0, 3, 1, 2)  # H[p, i, a, b]
    return X, np.ascontiguousarray(J), None if H is None else np.ascontiguousarray(H)


def variations(family, x0, V, E, steps: int = 48, second: bool = True, force_backend: str | None = None):
    """Dispatch to the configured backend.

    Returns ``(X, J, H)`` with ``X[p]`` the endpoint, ``J[p, i, a]`` and
    ``H[p, i, a, b]`` the first and second derivatives of the endpoint with
    respect to the frame components of the initial velocity.
    """
    name = force_backend or backend()
    kappa, amps, waves, phases = family.mode_arrays()
    if name == "numba" and family.kernel_compatible and numba is not None:
        return variations_numba(x0, V, E, kappa, amps, waves, phases, steps, second)
    if family.kernel_compatible:
        uder = mode_uder(kappa, amps, waves, phases)
    else:
        def uder(x):
            du = family.u_derivatives(x, 3)
            return du[1], du[2], du[3]
    X, J, H = variations_numpy(x0, V, E, uder, steps, second)
    return X, J, H

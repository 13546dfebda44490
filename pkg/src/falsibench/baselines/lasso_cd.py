"""Cyclic coordinate descent for the Lasso on precomputed second moments.

Solves ``min_b 0.5 * (yy - 2 c'b + b'Gb) + lam * |b|_1`` where ``G = X'X/n``,
``c = X'y/n`` and ``yy = y'y/n``, i.e. ``||y - Xb||^2 / (2n) + lam |b|_1``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import ConvergenceError

MAX_SWEEPS = 10_000
GAP_TOL = 1e-6
KKT_TOL = 1e-6


@njit(cache=True)
def _soft(x, t):
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@njit(cache=True)
def _gap_and_kkt(G, c, yy, b, gb, lam):
    p = b.shape[0]
    l1 = 0.0
    cb = 0.0
    bgb = 0.0
    rho_inf = 0.0
    kkt = 0.0
    for j in range(p):
        l1 += abs(b[j])
        cb += c[j] * b[j]
        bgb += b[j] * gb[j]
        rho = c[j] - gb[j]
        if abs(rho) > rho_inf:
            rho_inf = abs(rho)
        if b[j] > 0:
            v = abs(rho - lam)
        elif b[j] < 0:
            v = abs(rho + lam)
        else:
            v = max(abs(rho) - lam, 0.0)
        if v > kkt:
            kkt = v
    rr = yy - 2.0 * cb + bgb  # ||r||^2 / n
    ry = yy - cb  # r'y / n
    if lam <= 0.0:
        # no usable dual at lam = 0; a zero gradient certifies the least-squares optimum
        return 0.0, kkt
    primal = 0.5 * rr + lam * l1
    s = 1.0
    if rho_inf > lam and rho_inf > 0:
        s = lam / rho_inf
    dual = s * ry - 0.5 * s * s * rr
    return primal - dual, kkt


@njit(cache=True)
def lasso_path_gram(G, c, yy, lambdas, gap_tol, kkt_tol, max_sweeps):
    """Warm-started path over ``lambdas`` (any order, descending is fastest).

    Returns ``(coefs, gaps, kkts, sweeps, ok)``; ``ok[k]`` is False when
    point ``k`` exhausted ``max_sweeps``.
    """
    p = c.shape[0]
    n_lam = lambdas.shape[0]
    coefs = np.zeros((n_lam, p))
    gaps = np.zeros(n_lam)
    kkts = np.zeros(n_lam)
    sweeps = np.zeros(n_lam, dtype=np.int64)
    ok = np.zeros(n_lam, dtype=np.bool_)
    b = np.zeros(p)
    gb = np.zeros(p)
    scale = max(yy, 1e-300)
    for k in range(n_lam):
        lam = lambdas[k]
        gap = np.inf
        kkt = np.inf
        for sweep in range(max_sweeps):
            for j in range(p):
                gjj = G[j, j]
                if gjj <= 0.0:
                    continue
                old = b[j]
                new = _soft(c[j] - gb[j] + gjj * old, lam) / gjj
                if new != old:
                    delta = new - old
                    for i in range(p):
                        gb[i] += G[i, j] * delta
                    b[j] = new
            if sweep % 5 == 4 or sweep == max_sweeps - 1:
                gap, kkt = _gap_and_kkt(G, c, yy, b, gb, lam)
                if gap <= gap_tol * scale and kkt <= kkt_tol:
                    ok[k] = True
                    sweeps[k] = sweep + 1
                    break
        if not ok[k]:
            sweeps[k] = max_sweeps
        coefs[k] = b
        gaps[k] = gap
        kkts[k] = kkt
    return coefs, gaps, kkts, sweeps, ok


def lasso_path(G, c, yy, lambdas, gap_tol=GAP_TOL, kkt_tol=KKT_TOL, max_sweeps=MAX_SWEEPS,
               strict=True):
    """Python entry point; raises :class:`ConvergenceError` on any unconverged point if ``strict``."""
    out = lasso_path_gram(np.ascontiguousarray(G, dtype=np.float64),
                          np.ascontiguousarray(c, dtype=np.float64), float(yy),
                          np.ascontiguousarray(lambdas, dtype=np.float64),
                          gap_tol, kkt_tol, max_sweeps)
    coefs, gaps, kkts, sweeps, ok = out
    if strict and not ok.all():
        bad = int(np.argmin(ok))
        raise ConvergenceError(float(gaps[bad]), int(sweeps[bad]))
    return coefs, gaps, kkts, sweeps, ok


def kkt_violation(G, c, b, lam) -> np.ndarray:
    """Per-coordinate violation of the Lasso optimality conditions."""
    rho = c - G @ b
    return np.where(b > 0, np.abs(rho - lam),
                    np.where(b < 0, np.abs(rho + lam), np.maximum(np.abs(rho) - lam, 0.0)))

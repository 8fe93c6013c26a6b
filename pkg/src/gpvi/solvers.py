"""BiCGSTAB and a dense LU solve."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

MAX_DENSE_DIM = 512
_PIVOT_TOL = 1e-12
_BREAKDOWN = 1e-300


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    reason: str = ""


def bicgstab(apply_A: Callable[[np.ndarray], np.ndarray], b: np.ndarray,
             x0: np.ndarray | None = None, tol: float = 1e-10,
             max_iters: int = 200) -> SolveReport:
    """Unpreconditioned BiCGSTAB (van der Vorst), warm-startable from ``x0``.

    Converged means ``|b - A x| <= tol * |b|``. A breakdown (rho or omega
    numerically zero) stops the iteration and returns the last finite
    iterate with ``converged=False``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x)
    bnorm = np.linalg.norm(b)
    target = tol * bnorm
    res = np.linalg.norm(r)
    if res <= target:
        return SolveReport(x, 0, float(res), True)
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    for it in range(1, max_iters + 1):
        rho_new = r_hat @ r
        if abs(rho_new) < _BREAKDOWN:
            return SolveReport(x, it - 1, float(res), False, "rho breakdown")
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        v = apply_A(p)
        denom = r_hat @ v
        if abs(denom) < _BREAKDOWN:
            return SolveReport(x, it - 1, float(res), False, "r_hat.v breakdown")
        alpha = rho / denom
        s = r - alpha * v
        s_norm = np.linalg.norm(s)
        if s_norm <= target:
            x = x + alpha * p
            return SolveReport(x, it, float(np.linalg.norm(b - apply_A(x))), True)
        t = apply_A(s)
        tt = t @ t
        if tt < _BREAKDOWN:
            x = x + alpha * p
            return SolveReport(x, it, float(np.linalg.norm(b - apply_A(x))), False,
                               "omega breakdown")
        omega = (t @ s) / tt
        x_next = x + alpha * p + omega * s
        r_next = s - omega * t
        if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(r_next))):
            return SolveReport(x, it - 1, float(res), False, "non-finite iterate")
        x, r = x_next, r_next
        res = np.linalg.norm(r)
        if res <= target:
            return SolveReport(x, it, float(res), True)
        if abs(omega) < _BREAKDOWN:
            return SolveReport(x, it, float(res), False, "omega breakdown")
    return SolveReport(x, max_iters, float(res), False, "max_iters reached")


def dense_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """LU with partial pivoting; ``b`` may hold several right-hand sides as columns."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got {A.shape}")
    if A.shape[0] > MAX_DENSE_DIM:
        raise ValueError(f"dense_solve limited to d <= {MAX_DENSE_DIM}")
    lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    if np.min(np.abs(np.diag(lu))) < _PIVOT_TOL:
        raise SingularMatrixError("pivot below 1e-12: matrix is numerically singular")
    return scipy.linalg.lu_solve((lu, piv), np.asarray(b, dtype=float))


def bicgstab_batched(apply_A: Callable[[np.ndarray], np.ndarray], b: np.ndarray,
                     x0: np.ndarray | None = None, max_iters: int = 1,
                     tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Runs BiCGSTAB independently on every row of ``b`` ``(m, d)``.

    ``apply_A`` maps a batch of row vectors to the batch of products (row i
    uses system i). Rows that converge (``|r| <= tol |b|``) or break down
    keep their last finite iterate. Returns ``(x, residual_norms)``.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x)
    r_hat = r.copy()
    m = b.shape[0]
    rho = np.ones(m)
    alpha = np.ones(m)
    omega = np.ones(m)
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    target = tol * np.linalg.norm(b, axis=1)
    active = np.linalg.norm(r, axis=1) > target
    for _ in range(max_iters):
        if not active.any():
            break
        rho_new = np.einsum("ij,ij->i", r_hat, r)
        active &= np.abs(rho_new) >= _BREAKDOWN
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = np.where(active, (rho_new / rho) * (alpha / omega), 0.0)
        rho = np.where(active, rho_new, rho)
        p = np.where(active[:, None], r + beta[:, None] * (p - omega[:, None] * v), p)
        v_new = apply_A(p)
        denom = np.einsum("ij,ij->i", r_hat, v_new)
        active &= np.abs(denom) >= _BREAKDOWN
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = np.where(active, rho / denom, alpha)
        v = np.where(active[:, None], v_new, v)
        s = r - alpha[:, None] * v
        t = apply_A(s)
        tt = np.einsum("ij,ij->i", t, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            om = np.where(tt >= _BREAKDOWN, np.einsum("ij,ij->i", t, s) / tt, 0.0)
        x_new = x + alpha[:, None] * p + om[:, None] * s
        r_new = s - om[:, None] * t
        ok = active & np.all(np.isfinite(x_new), axis=1) & np.all(np.isfinite(r_new), axis=1)
        x = np.where(ok[:, None], x_new, x)
        r = np.where(ok[:, None], r_new, r)
        omega = np.where(ok, om, omega)
        active = ok & (np.abs(om) >= _BREAKDOWN) & (np.linalg.norm(r, axis=1) > target)
    return x, np.linalg.norm(b - apply_A(x), axis=1)

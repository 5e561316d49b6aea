"""Dense kernels: symmetric eigenvalues, spectral norms, PSD factors, Perron values."""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .policy import DEFAULT


class ConvergenceError(ArithmeticError):
    """An iterative kernel hit its iteration cap without meeting its tolerance."""


class NotPSDError(ValueError):
    pass


class NotMetzlerError(ValueError):
    pass


def as_symmetric(M, tol: float = DEFAULT.sym_tol) -> np.ndarray:
    """Return (M + M^T)/2 after checking that M is symmetric up to ``tol``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > tol * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    return 0.5 * (M + M.T)


def sym_eig_max(M) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    S = as_symmetric(M)
    n = S.shape[0]
    if n == 0:
        raise ValueError("empty matrix")
    if n == 1:
        return float(S[0, 0])
    try:
        w = scipy.linalg.eigh(S, eigvals_only=True, subset_by_index=[n - 1, n - 1],
                              check_finite=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(f"symmetric eigensolver failed: {exc}") from exc
    return float(w[-1])


def sym_eig_min(M) -> float:
    S = as_symmetric(M)
    n = S.shape[0]
    if n == 1:
        return float(S[0, 0])
    try:
        w = scipy.linalg.eigh(S, eigvals_only=True, subset_by_index=[0, 0],
                              check_finite=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise ConvergenceError(f"symmetric eigensolver failed: {exc}") from exc
    return float(w[0])


def spectral_norm(M) -> float:
    """Largest singular value, i.e. sqrt(lambda_max(M^T M))."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if M.ndim == 1:
        return float(np.linalg.norm(M))
    if min(M.shape) == 1:
        return float(np.linalg.norm(M.ravel()))
    try:
        s = np.linalg.svd(M, compute_uv=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise ConvergenceError(f"SVD failed: {exc}") from exc
    return float(s[0])


def psd_sqrt(M, psd_tol: float = DEFAULT.psd_tol, rank_tol: float = DEFAULT.rank_tol) -> np.ndarray:
    """Return F with M = F F^T and at most rank(M) columns.

    Eigenvalues in [-psd_tol*||M||, 0) are treated as zero; anything more
    negative is rejected.
    """
    S = as_symmetric(M)
    w, V = np.linalg.eigh(S)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if w.size and w[0] < -psd_tol * max(scale, 1e-300) and w[0] < 0:
        raise NotPSDError(f"matrix is indefinite: eigenvalue {w[0]:.6e}")
    keep = w > rank_tol * max(scale, 0.0)
    if scale == 0.0:
        keep[:] = False
    return V[:, keep] * np.sqrt(w[keep])


def check_metzler(M, tol: float = DEFAULT.metzler_tol) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    off = M - np.diag(np.diag(M))
    if off.size and off.min() < -tol:
        i, j = np.unravel_index(np.argmin(off), off.shape)
        raise NotMetzlerError(f"negative off-diagonal entry {off[i, j]:.3e} at ({i}, {j})")
    return M


def _shifted(M: np.ndarray) -> tuple[np.ndarray, float]:
    # shift so the diagonal is strictly positive: keeps iterates positive and
    # rules out the equal-modulus peripheral spectra of periodic matrices
    s = float(np.max(np.abs(np.diag(M)))) + 1.0
    B = M + s * np.eye(M.shape[0])
    np.maximum(B, 0.0, out=B)
    return B, s


def collatz_wielandt(B: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Bounds min_i (Bv)_i/v_i <= r(B) <= max_i (Bv)_i/v_i for B >= 0, v > 0."""
    q = (B @ v) / v
    return float(q.min()), float(q.max())


def _power_bracket(M, target=None, v0=None, tol=None, max_iter=DEFAULT.perron_max_iter):
    """Shifted power iteration with Collatz-Wielandt bracketing.

    Stops when the bracket is narrower than ``tol`` or, when ``target`` (a
    number or an array of numbers) is given, as soon as the bracket excludes
    every target.  Returns (lo, hi, v, converged).
    """
    M = check_metzler(M)
    n = M.shape[0]
    B, s = _shifted(M)
    v = np.ones(n) if v0 is None else np.array(v0, dtype=float)
    if v.shape != (n,) or np.any(~np.isfinite(v)) or np.any(v <= 0):
        v = np.ones(n)
    v = v / v.max()
    lo = hi = np.nan
    if target is not None:
        target = np.atleast_1d(np.asarray(target, dtype=float))
    for _ in range(max_iter):
        w = B @ v
        q = w / v
        lo, hi = float(q.min()) - s, float(q.max()) - s
        if target is not None and np.all((hi < target) | (lo >= target)):
            return lo, hi, v, True
        if tol is not None and hi - lo <= tol:
            return lo, hi, v, True
        m = w.max()
        if not np.isfinite(m) or m <= 0:
            break
        v = w / m
        # floor keeps the ratios defined on reducible matrices
        np.maximum(v, 1e-250, out=v)
    return lo, hi, v, False


def perron_value(M, tol: float | None = None, max_iter: int = DEFAULT.perron_max_iter) -> float:
    """Spectral abscissa (max real part of the spectrum) of a Metzler matrix.

    For Metzler M this is a real eigenvalue with a nonnegative eigenvector.
    Power iteration on M + sI is tried first; when it stalls (reducible or
    badly separated spectra) the dense nonsymmetric eigensolver decides.
    """
    M = check_metzler(M)
    n = M.shape[0]
    if n == 0:
        raise ValueError("empty matrix")
    if n == 1:
        return float(M[0, 0])
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.array_equal(M, M.T):
        return sym_eig_max(M)
    if tol is None:
        tol = 0.2 * DEFAULT.eig_tol * scale
    lo, hi, _, ok = _power_bracket(M, tol=tol, max_iter=max_iter)
    if ok:
        return 0.5 * (lo + hi)
    return _perron_bisect(M, tol)


def _mmatrix_below(M: np.ndarray, t: float) -> bool:
    """perron_value(M) < t, via positive pivots of tI - M (no pivoting).

    tI - M is then a nonsingular M-matrix; elimination keeps off-diagonal
    entries nonpositive, so there is no cancellation among them.
    """
    A = t * np.eye(M.shape[0]) - M
    n = A.shape[0]
    for k in range(n):
        piv = A[k, k]
        if not piv > 0:
            return False
        if k + 1 < n:
            A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k] / piv, A[k, k + 1:])
    return True


def _perron_bisect(M: np.ndarray, tol: float) -> float:
    """Bisection on the M-matrix test; robust for reducible or defective M."""
    lo = float(np.max(np.diag(M)))  # r(M) >= max diagonal entry
    hi = float(np.max(M.sum(axis=1)))  # and <= max row sum
    hi = max(hi, lo)
    if _mmatrix_below(M, lo):  # pragma: no cover - excluded by the bound
        return lo
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _mmatrix_below(M, mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def perron_below(M, threshold: float, v0=None, max_iter: int = 400) -> tuple[bool, np.ndarray]:
    """Decide perron_value(M) < threshold, returning the final iterate too.

    The Collatz-Wielandt bracket usually settles the question after a few
    matrix-vector products when a good positive starting vector is known.
    """
    lo, hi, v, ok = _power_bracket(M, target=threshold, v0=v0, max_iter=max_iter)
    if ok:
        return hi < threshold, v
    return perron_value(M) < threshold, v


def perron_classify(M, thresholds, v0=None, max_iter: int = 400) -> tuple[np.ndarray, np.ndarray]:
    """For each threshold t decide perron_value(M) < t; returns (flags, iterate)."""
    t = np.atleast_1d(np.asarray(thresholds, dtype=float))
    lo, hi, v, ok = _power_bracket(M, target=t, v0=v0, max_iter=max_iter)
    if ok:
        return hi < t, v
    return perron_value(M) < t, v


def perron_vector(M, max_iter: int = DEFAULT.perron_max_iter) -> np.ndarray:
    """Nonnegative eigenvector for the Perron value, normalized to max 1."""
    M = check_metzler(M)
    n = M.shape[0]
    if n == 1:
        return np.ones(1)
    if np.array_equal(M, M.T):
        w, V = np.linalg.eigh(M)
        v = np.abs(V[:, -1])
        return v / v.max()
    scale = max(1.0, float(np.max(np.abs(M))))
    _, _, v, ok = _power_bracket(M, tol=1e-12 * scale, max_iter=max_iter)
    if ok:
        return v / v.max()
    ev, V = scipy.linalg.eig(M)
    k = int(np.argmax(ev.real))
    v = np.abs(V[:, k].real)
    return v / v.max()

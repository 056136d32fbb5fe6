"""Dense linear-algebra and special-function kernels.

Everything here is a pure function of its inputs. Matrices are plain
``numpy.ndarray`` objects; :func:`as_matrix` enforces the shape and
finiteness rules used throughout the package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NumericsError",
    "ConvergenceError",
    "StateSpace",
    "as_matrix",
    "hessenberg",
    "qr_eigenvalues",
    "eigenvalues",
    "spectral_radius",
    "hermitian_min_eig",
    "freq_response",
    "betainc_reg",
    "f_cdf",
    "f_inv_cdf",
    "observability_matrix",
    "observability_rank",
]

HERMITIAN_TOL = 1e-10


class NumericsError(ValueError):
    """Raised on invalid input to a numerical kernel."""


class ConvergenceError(ArithmeticError):
    """Raised when an iterative kernel exhausts its iteration budget."""


def as_matrix(value, *, dtype=float, name="matrix"):
    """Return ``value`` as a finite 2-D array.

    Scalars become 1x1 and 1-D arrays become column vectors.
    """
    arr = np.asarray(value, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise NumericsError(f"{name} must be at most 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{name} has non-finite entries")
    return arr


def _square(M, name="matrix"):
    M = as_matrix(M, dtype=np.result_type(np.asarray(M), float), name=name)
    if M.shape[0] != M.shape[1]:
        raise NumericsError(f"{name} must be square, got shape {M.shape}")
    return M


@dataclass(frozen=True)
class StateSpace:
    """Discrete-time realization ``x+ = A x + B u``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray = field(default=None)

    def __post_init__(self):
        A = _square(self.A, "A")
        n = A.shape[0]
        B = as_matrix(self.B, name="B")
        C = as_matrix(self.C, name="C")
        if B.shape[0] != n:
            raise NumericsError(f"B has {B.shape[0]} rows, A is {n}x{n}")
        if C.shape[1] != n:
            raise NumericsError(f"C has {C.shape[1]} columns, A is {n}x{n}")
        D = np.zeros((C.shape[0], B.shape[1])) if self.D is None else as_matrix(self.D, name="D")
        if D.shape != (C.shape[0], B.shape[1]):
            raise NumericsError(f"D must be {C.shape[0]}x{B.shape[1]}, got {D.shape}")
        for key, val in zip("ABCD", (A, B, C, D)):
            val.setflags(write=False)
            object.__setattr__(self, key, val)

    @property
    def nstates(self):
        return self.A.shape[0]

    @property
    def ninputs(self):
        return self.B.shape[1]

    @property
    def noutputs(self):
        return self.C.shape[0]


# --------------------------------------------------------------------------
# eigenvalues
# --------------------------------------------------------------------------

def hessenberg(M):
    """Reduce ``M`` to upper Hessenberg form by Householder similarity."""
    H = _square(M).astype(float, copy=True)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        H[k + 1:, k:] -= 2.0 * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def qr_eigenvalues(M, max_sweeps_per_eig=30):
    """Eigenvalues by Hessenberg reduction and Francis double-shift QR.

    Deflates one or two eigenvalues at a time from the bottom of the active
    window. Raises :class:`ConvergenceError` when any eigenvalue needs more
    than ``max_sweeps_per_eig`` sweeps.
    """
    H = hessenberg(M)
    n = H.shape[0]
    eigs = np.zeros(n, dtype=complex)
    if n == 0:
        return eigs
    anorm = np.sum(np.abs(H))
    eps = np.finfo(float).eps
    nn = n - 1
    t = 0.0
    its = 0
    while nn >= 0:
        # find a negligible subdiagonal element
        l = nn
        while l >= 1:
            s = abs(H[l - 1, l - 1]) + abs(H[l, l])
            if s == 0.0:
                s = anorm
            if abs(H[l, l - 1]) <= eps * s:
                H[l, l - 1] = 0.0
                break
            l -= 1
        x = H[nn, nn]
        if l == nn:
            eigs[nn] = x + t
            nn -= 1
            its = 0
            continue
        y = H[nn - 1, nn - 1]
        w = H[nn, nn - 1] * H[nn - 1, nn]
        if l == nn - 1:
            p = 0.5 * (y - x)
            q = p * p + w
            z = math.sqrt(abs(q))
            x += t
            if q >= 0.0:
                z = p + math.copysign(z, p)
                eigs[nn - 1] = eigs[nn] = x + z
                if z != 0.0:
                    eigs[nn] = x - w / z
            else:
                eigs[nn - 1] = complex(x + p, z)
                eigs[nn] = complex(x + p, -z)
            nn -= 2
            its = 0
            continue
        if its == max_sweeps_per_eig:
            raise ConvergenceError(
                f"QR iteration did not converge within {max_sweeps_per_eig} sweeps")
        if its in (10, 20):
            # exceptional shift
            t += x
            for i in range(nn + 1):
                H[i, i] -= x
            s = abs(H[nn, nn - 1]) + abs(H[nn - 1, nn - 2])
            y = x = 0.75 * s
            w = -0.4375 * s * s
        its += 1
        m = nn - 2
        while m >= l:
            z = H[m, m]
            r = x - z
            s = y - z
            p = (r * s - w) / H[m + 1, m] + H[m, m + 1]
            q = H[m + 1, m + 1] - z - r - s
            r = H[m + 2, m + 1]
            s = abs(p) + abs(q) + abs(r)
            p, q, r = p / s, q / s, r / s
            if m == l:
                break
            u = abs(H[m, m - 1]) * (abs(q) + abs(r))
            v = abs(p) * (abs(H[m - 1, m - 1]) + abs(z) + abs(H[m + 1, m + 1]))
            if u <= eps * v:
                break
            m -= 1
        for i in range(m + 2, nn + 1):
            H[i, i - 2] = 0.0
            if i != m + 2:
                H[i, i - 3] = 0.0
        k = m
        while k <= nn - 1:
            if k != m:
                p = H[k, k - 1]
                q = H[k + 1, k - 1]
                r = H[k + 2, k - 1] if k != nn - 1 else 0.0
                x = abs(p) + abs(q) + abs(r)
                if x != 0.0:
                    p, q, r = p / x, q / x, r / x
            s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
            if s != 0.0:
                if k == m:
                    if l != m:
                        H[k, k - 1] = -H[k, k - 1]
                else:
                    H[k, k - 1] = -s * x
                p += s
                x = p / s
                y = q / s
                z = r / s
                q /= p
                r /= p
                for j in range(k, nn + 1):
                    p = H[k, j] + q * H[k + 1, j]
                    if k != nn - 1:
                        p += r * H[k + 2, j]
                        H[k + 2, j] -= p * z
                    H[k + 1, j] -= p * y
                    H[k, j] -= p * x
                mmin = nn if nn < k + 3 else k + 3
                for i in range(l, mmin + 1):
                    p = x * H[i, k] + y * H[i, k + 1]
                    if k != nn - 1:
                        p += z * H[i, k + 2]
                        H[i, k + 2] -= p * r
                    H[i, k + 1] -= p * q
                    H[i, k] -= p
            k += 1
    return eigs


def eigenvalues(M, method="qr"):
    """All eigenvalues of a real square matrix, with multiplicity.

    ``method="qr"`` uses :func:`qr_eigenvalues`; ``method="lapack"`` calls
    the LAPACK Hessenberg/QR driver through numpy, which is faster on large
    matrices.
    """
    M = _square(M)
    if M.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    if method == "qr":
        return qr_eigenvalues(M)
    if method != "lapack":
        raise NumericsError(f"unknown eigenvalue method {method!r}")
    try:
        return np.linalg.eigvals(M).astype(complex)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(str(exc)) from exc


def spectral_radius(M, method="qr"):
    """Largest eigenvalue magnitude of ``M`` (0 for an empty matrix)."""
    eigs = eigenvalues(M, method=method)
    return float(np.max(np.abs(eigs))) if eigs.size else 0.0


def hermitian_min_eig(H, tol=HERMITIAN_TOL):
    """Smallest eigenvalue of a Hermitian matrix.

    The input is symmetrized as ``(H + H^H)/2`` after checking that its
    asymmetry does not exceed ``tol``. A stack of shape ``(N, n, n)`` returns
    one value per matrix.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim < 2:
        H = np.atleast_2d(H)
    if H.shape[-1] != H.shape[-2]:
        raise NumericsError(f"matrix must be square, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise NumericsError("matrix has non-finite entries")
    Hh = np.conj(np.swapaxes(H, -1, -2))
    asym = float(np.max(np.abs(H - Hh))) if H.size else 0.0
    if asym > tol:
        raise NumericsError(f"matrix is not Hermitian: max asymmetry {asym:.3e}")
    lam = np.linalg.eigvalsh(0.5 * (H + Hh))[..., 0]
    return float(lam) if lam.ndim == 0 else lam


def freq_response(ss, psi):
    """Evaluate ``C (e^{j psi} I - A)^{-1} B + D``.

    ``psi`` may be a scalar (returns a ``p x m`` complex array) or a 1-D array
    of angles (returns shape ``(len(psi), p, m)``). Raises
    :class:`NumericsError` when the resolvent is singular at some angle.
    """
    psi_arr = np.asarray(psi, dtype=float)
    scalar = psi_arr.ndim == 0
    psi_arr = np.atleast_1d(psi_arr)
    n = ss.nstates
    out = np.empty((psi_arr.size, ss.noutputs, ss.ninputs), dtype=complex)
    out[:] = ss.D
    if n == 0:
        return out[0] if scalar else out
    z = np.exp(1j * psi_arr)
    M = z[:, None, None] * np.eye(n) - ss.A[None, :, :]
    # a pole (numerically) on the unit circle at that angle makes the resolvent singular
    lam = np.linalg.eigvals(ss.A)
    dist = np.min(np.abs(z[:, None] - lam[None, :]), axis=1)
    bad = dist <= 1e-12 * max(1.0, float(np.linalg.norm(ss.A, 1)))
    if np.any(bad):
        raise NumericsError(
            f"resolvent singular at psi={psi_arr[np.argmax(bad)]:.6g} (pole on unit circle)")
    try:
        X = np.linalg.solve(M, np.broadcast_to(ss.B.astype(complex),
                                               (psi_arr.size, n, ss.ninputs)))
    except np.linalg.LinAlgError as exc:
        raise NumericsError("resolvent singular on the frequency grid") from exc
    out += ss.C @ X
    return out[0] if scalar else out


# --------------------------------------------------------------------------
# F distribution
# --------------------------------------------------------------------------

def _betacf(a, b, x, max_iter=10000, eps=1e-16):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ConvergenceError(f"incomplete beta continued fraction failed for a={a}, b={b}, x={x}")


def betainc_reg(a, b, x):
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise NumericsError("betainc_reg requires a > 0 and b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(x) + b * math.log1p(-x))
    bt = math.exp(lbt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def f_cdf(x, d1, d2):
    """CDF of the F(d1, d2) distribution."""
    if x <= 0.0:
        return 0.0
    return betainc_reg(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2))


def _f_logpdf(x, d1, d2):
    a, b = 0.5 * d1, 0.5 * d2
    return (a * math.log(d1 / d2) + (a - 1.0) * math.log(x)
            - (a + b) * math.log1p(d1 * x / d2)
            - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)))


def f_inv_cdf(d1, d2, prob, tol=1e-10):
    """Quantile of the F(d1, d2) distribution.

    Safeguarded Newton iteration inside a shrinking bracket; the result is
    accurate to ``tol`` in absolute terms, and to ``tol`` relative when it
    lies below 1.
    """
    if not (d1 > 0 and d2 > 0):
        raise NumericsError(f"degrees of freedom must be positive, got ({d1}, {d2})")
    if not (0.0 < prob < 1.0):
        raise NumericsError(f"prob must lie in (0, 1), got {prob}")
    lo, hi = 0.0, 1.0
    while f_cdf(hi, d1, d2) < prob:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise ConvergenceError("could not bracket the F quantile")
    x = 0.5 * (lo + hi)
    for _ in range(500):
        fx = f_cdf(x, d1, d2) - prob
        if fx > 0:
            hi = x
        else:
            lo = x
        # absolute tolerance, tightened to relative for quantiles below 1
        if fx == 0.0 or hi - lo <= tol * min(1.0, x):
            break
        try:
            step = fx / math.exp(_f_logpdf(x, d1, d2))
        except (OverflowError, ValueError, ZeroDivisionError):
            step = math.inf
        xn = x - step
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 0.1 * tol * min(1.0, x):
            x = xn
            break
        x = xn
    return x


# --------------------------------------------------------------------------
# observability
# --------------------------------------------------------------------------

def observability_matrix(A, C):
    """Stacked ``[C; CA; ...; CA^{n-1}]``."""
    A = _square(A, "A")
    C = as_matrix(C, name="C")
    n = A.shape[0]
    if C.shape[1] != n:
        raise NumericsError(f"C has {C.shape[1]} columns, A is {n}x{n}")
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def observability_rank(A, C):
    """Numerical rank of the observability matrix (SVD, standard tolerance)."""
    O = observability_matrix(A, C)
    if O.size == 0:
        return 0
    s = np.linalg.svd(O, compute_uv=False)
    if s[0] == 0.0:
        return 0
    tol = max(O.shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > tol))

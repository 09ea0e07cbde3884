"""Linear and nonlinear solves for implicit steps and their adjoints."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 2048


class SingularMatrixError(np.linalg.LinAlgError):
    """Factorization broke down; ``pivot`` names the offending pivot if known."""

    def __init__(self, message: str, pivot: Optional[int] = None):
        super().__init__(message)
        self.pivot = pivot


class NonlinearSolveError(RuntimeError):
    """Newton did not converge.  ``iterate`` holds the last iterate."""

    def __init__(self, message: str, iterate: np.ndarray, stats: "NewtonStats"):
        super().__init__(message)
        self.iterate = iterate
        self.stats = stats


@dataclass(frozen=True)
class NewtonOptions:
    atol: float = 1e-10
    rtol: float = 1e-8
    max_iter: int = 50
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30


@dataclass
class NewtonStats:
    iterations: int = 0
    linear_solves: int = 0
    residual_norms: list[float] = field(default_factory=list)


class Factorization:
    """LU factors of a square matrix supporting forward and transposed solves."""

    def __init__(self, matrix):
        n = matrix.shape[0]
        self.shape = matrix.shape
        if sp.issparse(matrix) or n > DENSE_LIMIT:
            self.sparse = True
            try:
                self._lu = spla.splu(sp.csc_matrix(matrix))
            except RuntimeError as exc:
                raise SingularMatrixError(f"sparse LU failed: {exc}") from exc
        else:
            self.sparse = False
            dense = np.asarray(matrix, dtype=float)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(dense, check_finite=True)
            diag = np.abs(np.diag(lu))
            scale = max(np.max(np.abs(dense), initial=0.0), 1e-300)
            bad = np.flatnonzero(diag <= n * np.finfo(float).eps * scale)
            if bad.size:
                raise SingularMatrixError(f"zero pivot at position {bad[0]} in dense LU", pivot=int(bad[0]))
            self._lu = (lu, piv)

    def solve(self, b: np.ndarray, transpose: bool = False) -> np.ndarray:
        if self.sparse:
            x = self._lu.solve(np.asarray(b, dtype=float), trans="T" if transpose else "N")
        else:
            x = sla.lu_solve(self._lu, b, trans=1 if transpose else 0, check_finite=False)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("non-finite solution from LU solve")
        return x


@dataclass
class ShiftedJacobian:
    """The matrix a*M - b*J.

    With a = 1 and b = h*theta this is the theta-method step matrix; dividing
    through by h*theta gives the conventional shifted form with shift
    1/(h*theta).  ``M`` may be None for the identity.  The factorization is
    computed lazily and shared by forward and transposed solves.
    """

    a: float
    M: object
    J: object
    b: float = 1.0
    _factor: Optional[Factorization] = field(default=None, repr=False)

    def assemble(self):
        n = self.J.shape[0]
        sparse = sp.issparse(self.J) or sp.issparse(self.M)
        if self.M is None:
            mass = sp.identity(n, format="csr") if sparse else np.eye(n)
        else:
            mass = self.M
        if sparse:
            return sp.csr_matrix(self.a * sp.csr_matrix(mass) - self.b * sp.csr_matrix(self.J))
        return self.a * np.asarray(mass) - self.b * np.asarray(self.J)

    def factorize(self) -> Factorization:
        if self._factor is None:
            self._factor = Factorization(self.assemble())
        return self._factor

    def matvec(self, x: np.ndarray, transpose: bool = False) -> np.ndarray:
        J = self.J.T if transpose else self.J
        if self.M is None:
            mx = x
        else:
            mx = (self.M.T if transpose else self.M) @ x
        return self.a * mx - self.b * (J @ x)


def linear_solve(A, b: np.ndarray, transpose: bool = False) -> np.ndarray:
    """Solve A x = b (or A^T x = b).  ``A`` is a ShiftedJacobian, a
    Factorization or a plain matrix."""
    if isinstance(A, ShiftedJacobian):
        fac = A.factorize()
    elif isinstance(A, Factorization):
        fac = A
    else:
        fac = Factorization(A)
    return fac.solve(b, transpose=transpose)


def newton_solve(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], object],
    guess: np.ndarray,
    opts: NewtonOptions = NewtonOptions(),
) -> tuple[np.ndarray, NewtonStats]:
    """Newton's method with backtracking Armijo line search on 0.5*||F||^2.

    ``jacobian(x)`` may return a matrix or a ShiftedJacobian.  Converged when
    ||F(x)|| <= atol + rtol*||F(guess)||.
    """
    x = np.array(guess, dtype=float)
    stats = NewtonStats()
    F = np.asarray(residual(x), dtype=float)
    fnorm = np.linalg.norm(F)
    stats.residual_norms.append(fnorm)
    target = opts.atol + opts.rtol * fnorm
    while fnorm > target:
        if stats.iterations >= opts.max_iter:
            raise NonlinearSolveError(
                f"Newton did not converge in {opts.max_iter} iterations (|F| = {fnorm:.3e})", x, stats)
        try:
            dx = linear_solve(jacobian(x), -F)
        except SingularMatrixError as exc:
            raise NonlinearSolveError(f"singular Newton Jacobian: {exc}", x, stats) from exc
        stats.linear_solves += 1
        stats.iterations += 1
        alpha = 1.0
        phi0 = fnorm * fnorm
        for _ in range(opts.max_backtracks):
            x_new = x + alpha * dx
            F_new = np.asarray(residual(x_new), dtype=float)
            fnew = np.linalg.norm(F_new)
            # phi'(0) = -2 phi0 along the Newton direction
            if np.isfinite(fnew) and fnew * fnew <= (1.0 - 2.0 * opts.c1 * alpha) * phi0:
                break
            alpha *= opts.backtrack
        else:
            raise NonlinearSolveError("line search failed to reduce the residual", x, stats)
        x, F, fnorm = x_new, F_new, fnew
        stats.residual_norms.append(fnorm)
    return x, stats

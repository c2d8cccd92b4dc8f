"""Small Krylov helpers shared by the fluid solvers."""
from __future__ import annotations

import numpy as np


class ConvergenceError(RuntimeError):
    """An iterative solve stopped before reaching its tolerance."""

    def __init__(self, msg, iterations, residual):
        super().__init__(f"{msg} (iterations={iterations}, relative residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


def conjugate_gradient(apply, b, tol=1e-10, maxiter=10_000, x0=None, project=None):
    """Solve ``apply(x) = b`` for a symmetric positive (semi)definite operator.

    ``project`` maps iterates back onto the range of the operator when it has a
    null space (e.g. removes the mean of a Neumann pressure).  Returns
    ``(x, iterations)``; raises :class:`ConvergenceError` otherwise.
    """
    proj = project or (lambda z: z)
    b = proj(np.asarray(b, float))
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else proj(np.array(x0, float))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    r = b - apply(x) if x0 is not None else b.copy()
    r = proj(r)
    d = r.copy()
    rr = r @ r
    for k in range(1, maxiter + 1):
        ad = apply(d)
        alpha = rr / (d @ ad)
        x += alpha * d
        r -= alpha * ad
        r = proj(r)
        rr_new = r @ r
        if np.sqrt(rr_new) <= tol * bnorm:
            return proj(x), k
        d = r + (rr_new / rr) * d
        rr = rr_new
    raise ConvergenceError("conjugate gradient did not converge", maxiter, np.sqrt(rr) / bnorm)

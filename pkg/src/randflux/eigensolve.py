"""Eigenvalues and eigenvalue counts of lattice operators.

``dense_spectrum`` is the reference solver.  ``lowest_eigenpairs`` is a
Lanczos iteration with full reorthogonalization, locking and a final
deflated restart that catches missed multiplicities.  ``count_below``
counts eigenvalues ``<= E`` either from the dense spectrum or, for large
grids, from the inertia of the block-tridiagonal ``H - E`` (Sylvester's
law applied to successive Schur complements).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SpectralResult",
    "ConvergenceError",
    "DENSE_LIMIT",
    "dense_spectrum",
    "lowest_eigenpairs",
    "count_below",
    "count_below_many",
    "tie_tolerance",
]

DENSE_LIMIT = 6000


class ConvergenceError(RuntimeError):
    """Iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, best_residual=np.inf, result=None):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual
        self.result = result


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    residual_norms: np.ndarray
    boundary: str | None = None
    meta: dict = field(default_factory=dict)
    count_threshold: float | None = None
    count: int | None = None
    eigenvectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def E1(self) -> float:
        return float(self.eigenvalues[0])

    def to_dict(self) -> dict:
        meta = dict(self.meta)
        if self.boundary is not None:
            meta["boundary"] = self.boundary
        if self.count is not None:
            meta["count_threshold"] = self.count_threshold
            meta["count"] = int(self.count)
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "residuals": [float(x) for x in self.residual_norms],
            "meta": meta,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        meta = dict(d.get("meta", {}))
        boundary = meta.pop("boundary", None)
        thr = meta.pop("count_threshold", None)
        cnt = meta.pop("count", None)
        return cls(np.array(d["eigenvalues"], float), np.array(d["residuals"], float), boundary, meta, thr, cnt)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _meta(op):
    grid = getattr(op, "grid", None)
    meta = {"dimension": int(op.shape[0])}
    if grid is not None:
        meta.update(grid.to_dict())
    return meta


def _as_dense(op) -> np.ndarray:
    if hasattr(op, "to_dense"):
        return op.to_dense()
    if sp.issparse(op):
        return op.toarray()
    return np.asarray(op)


def _matvec(op):
    if hasattr(op, "apply"):
        return op.apply
    return lambda x: op @ x


def _opnorm(op) -> float:
    if hasattr(op, "norm_bound"):
        return op.norm_bound()
    if sp.issparse(op):
        return float(abs(op).sum(axis=1).max()) if op.shape[0] else 0.0
    return float(np.abs(np.asarray(op)).sum(axis=1).max()) if np.size(op) else 0.0


def tie_tolerance(op) -> float:
    """Eigenvalues within this distance above ``E`` count as ties."""
    return 64 * np.finfo(float).eps * max(_opnorm(op), 1.0)


def dense_spectrum(op, vectors: bool = False) -> SpectralResult:
    """Full spectrum by dense Hermitian reduction (dimension <= 6000)."""
    n = op.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(f"dimension {n} exceeds the dense limit {DENSE_LIMIT}")
    A = _as_dense(op)
    w, V = sla.eigh(A, driver="evr")
    res = np.linalg.norm(A @ V - V * w, axis=0)
    return SpectralResult(
        w, res, getattr(op, "boundary", None), _meta(op) | {"solver": "dense"}, eigenvectors=V if vectors else None
    )


def _orthonormalize(x, bases):
    """Classical Gram-Schmidt against ``bases`` applied twice."""
    for _ in range(2):
        for B in bases:
            if B is not None and B.shape[1]:
                x = x - B @ (B.conj().T @ x)
    return x


def _lanczos(matvec, v0, kmax, locked):
    """Lanczos with full reorthogonalization against the basis and ``locked``.

    Returns the basis ``V`` (n x j) and the tridiagonal ``(alpha, beta)``.
    On breakdown the run stops early (the Krylov space is invariant).
    """
    n = v0.shape[0]
    V = np.zeros((n, kmax), dtype=v0.dtype)
    alpha = np.zeros(kmax)
    beta = np.zeros(kmax)
    v = _orthonormalize(v0, [locked])
    nv = np.linalg.norm(v)
    if nv == 0:
        return V[:, :0], alpha[:0], beta[:0]
    V[:, 0] = v / nv
    j = 0
    for j in range(kmax):
        w = matvec(V[:, j])
        alpha[j] = np.real(np.vdot(V[:, j], w))
        w = _orthonormalize(w, [V[:, : j + 1], locked])
        b = np.linalg.norm(w)
        beta[j] = b
        if j + 1 == kmax:
            break
        if b < 1e-12 * max(abs(alpha[j]), 1.0):
            break
        V[:, j + 1] = w / b
    m = j + 1
    return V[:, :m], alpha[:m], beta[:m]


def _shift_invert(op, sigma):
    A = op.to_sparse("csc") if hasattr(op, "to_sparse") else sp.csc_matrix(op)
    n = A.shape[0]
    lu = spla.splu((A - sigma * sp.identity(n, dtype=A.dtype, format="csc")).tocsc())
    # eigenvalues near sigma dominate; negate so the wanted ones are smallest
    return lambda x: -lu.solve(x)


def lowest_eigenpairs(op, m: int = 1, tol: float = 1e-8, maxiter: int = 50, krylov_dim: int | None = None,
                      shift_invert: bool | str = "auto", sigma: float | None = None, seed: int = 0,
                      verify: bool = True) -> SpectralResult:
    """The ``m`` smallest eigenpairs by restarted Lanczos.

    Parameters
    ----------
    op : LatticeOperator, sparse matrix or ndarray
        Hermitian operator.
    m : int
        Number of eigenpairs.
    tol : float
        Target for the residuals ``||H x - lambda x||`` (``||x|| = 1``).
    maxiter : int
        Cap on Lanczos runs (restarts).
    shift_invert : bool or ``"auto"``
        Run Lanczos on ``-(H - sigma)^-1``; ``"auto"`` enables it above 2000
        unknowns.  ``sigma`` defaults to ``-1 - 1e-3 ||H||`` below the
        spectrum of the non-negative operators used here (and to the
        Gershgorin lower bound otherwise).
    verify : bool
        After convergence, run one deflated Lanczos pass from a fresh vector
        to catch eigenvalues that the previous passes missed (multiplicities).

    Raises
    ------
    ConvergenceError
        When the residual target is not met within ``maxiter`` runs.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = op.shape[0]
    if m > n:
        raise ValueError("m exceeds the dimension")
    Hx = _matvec(op)
    dtype = complex if (not getattr(op, "is_real", False) and np.iscomplexobj(_probe(op))) else float
    if shift_invert == "auto":
        shift_invert = n > 2000
    norm = _opnorm(op)
    if shift_invert:
        if sigma is None:
            lower = _gershgorin_lower(op)
            sigma = min(-1.0, lower) - 1e-3 * max(norm, 1.0)
        matvec = _shift_invert(op, sigma)
    else:
        matvec = Hx
    if krylov_dim is None:
        krylov_dim = min(n, max(2 * m + 30, 60) if shift_invert else max(4 * m + 80, 160))
    krylov_dim = min(krylov_dim, n)
    rng = np.random.default_rng(seed)

    def randvec():
        x = rng.standard_normal(n)
        if dtype is complex:
            x = x + 1j * rng.standard_normal(n)
        return x

    locked = np.zeros((n, 0), dtype=dtype)
    locked_vals: list[float] = []
    locked_res: list[float] = []
    v0 = randvec()
    best = np.inf
    runs = 0
    verifying = False
    while True:
        runs += 1
        if runs > maxiter:
            raise ConvergenceError(f"Lanczos did not converge in {maxiter} runs", best)
        kmax = min(krylov_dim, n - locked.shape[1])
        V, a, b = _lanczos(matvec, v0, kmax, locked)
        if V.shape[1] == 0:
            break
        breakdown = V.shape[1] < kmax
        theta, S = sla.eigh_tridiagonal(a, b[:-1]) if len(a) > 1 else (a.copy(), np.ones((1, 1)))
        X = V @ S
        HX = np.column_stack([Hx(X[:, i]) for i in range(min(X.shape[1], max(m - len(locked_vals), 1) + 2))])
        X = X[:, : HX.shape[1]]
        lam = np.real(np.einsum("ij,ij->j", X.conj(), HX))
        res = np.linalg.norm(HX - X * lam, axis=0)
        order = np.argsort(lam)
        need = m - len(locked_vals)
        best = min(best, float(np.min(res))) if res.size else best
        if verifying:
            # converged values below the largest locked one were missed
            accepted = [i for i in order if res[i] <= tol and lam[i] < max(locked_vals) - tol]
            if not accepted:
                break
        else:
            accepted = []
            for i in order:
                if res[i] > tol or len(accepted) == need:
                    break
                accepted.append(i)
        if accepted:
            locked = np.column_stack([locked, X[:, accepted]])
            locked_vals.extend(lam[accepted].tolist())
            locked_res.extend(res[accepted].tolist())
        if len(locked_vals) >= m:
            if not verify or locked.shape[1] >= n:
                break
            verifying = True
            v0 = randvec()
            continue
        # explicit restart from the unconverged wanted Ritz vectors
        rest = [i for i in order if i not in accepted][: max(need - len(accepted), 1)]
        v0 = X[:, rest].sum(axis=1) if (rest and not breakdown) else randvec()
        if np.linalg.norm(_orthonormalize(v0, [locked])) < 1e-8 * np.linalg.norm(v0):
            v0 = randvec()
    if len(locked_vals) < m:
        raise ConvergenceError("Lanczos exhausted the space before finding all pairs", best)
    vals = np.array(locked_vals)
    idx = np.argsort(vals)[:m]
    vecs = locked[:, idx]
    meta = _meta(op) | {"solver": "lanczos", "runs": runs, "shift_invert": bool(shift_invert), "tol": tol}
    if shift_invert:
        meta["sigma"] = float(sigma)
    return SpectralResult(vals[idx], np.array(locked_res)[idx], getattr(op, "boundary", None), meta,
                          eigenvectors=vecs)


def _probe(op):
    if hasattr(op, "tx"):
        return np.concatenate([np.ravel(op.tx), np.ravel(op.ty)])
    if sp.issparse(op):
        return op.data
    return np.asarray(op)


def _gershgorin_lower(op) -> float:
    if hasattr(op, "diag"):
        d = np.asarray(op.diag, float)
        r = np.zeros_like(d)
        r[:-1] += np.abs(op.tx)
        r[1:] += np.abs(op.tx)
        r[:, :-1] += np.abs(op.ty)
        r[:, 1:] += np.abs(op.ty)
        return float(np.min(d - r))
    A = sp.csr_matrix(op)
    d = A.diagonal().real
    r = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(d - r))


def _sturm_count(op, E: float, floor: float) -> int:
    """Number of eigenvalues ``< E`` from the inertia of ``H - E``.

    Raises ``LinAlgError`` when a Schur complement has an eigenvalue of
    modulus below ``floor`` (sign not trustworthy).
    """
    A, B = op.blocks()
    n = A[0].shape[0]
    eye = np.eye(n)
    count = 0
    S = A[0] - E * eye
    for i in range(len(A)):
        w, Q = np.linalg.eigh(S)
        if np.min(np.abs(w)) < floor:
            raise np.linalg.LinAlgError("near-singular Schur complement")
        count += int(np.sum(w < 0))
        if i + 1 < len(A):
            b = B[i]
            Sinv = (Q / w) @ Q.conj().T
            S = A[i + 1] - E * eye - np.conj(b)[:, None] * Sinv * b[None, :]
            S = 0.5 * (S + S.conj().T)
    return count


def _sturm_count_le(op, E: float) -> int:
    tie = tie_tolerance(op)
    shift = tie
    for _ in range(8):
        try:
            return _sturm_count(op, E + shift, 0.25 * tie)
        except np.linalg.LinAlgError:
            shift *= 2.0
    raise np.linalg.LinAlgError("inertia count failed near E")


def count_below(op, E: float, method: str = "auto") -> int:
    """Number of eigenvalues ``<= E`` (ties within :func:`tie_tolerance` count)."""
    return int(count_below_many(op, [E], method)[0])


def count_below_many(op, energies, method: str = "auto", spectrum=None) -> np.ndarray:
    """Vectorized :func:`count_below` over an array of thresholds.

    ``method`` is ``"dense"``, ``"sturm"`` or ``"auto"``.  The automatic
    choice uses inertia counting for lattice operators unless there are so
    many thresholds that one dense solve is cheaper (and the dimension is
    at most :data:`DENSE_LIMIT`).  A precomputed ascending ``spectrum`` may
    be passed to skip the dense solve.
    """
    E = np.asarray(energies, dtype=float)
    if not np.all(np.isfinite(E)):
        raise ValueError("thresholds must be finite")
    n = op.shape[0]
    if method == "auto":
        if spectrum is not None or not hasattr(op, "blocks"):
            method = "dense"
        else:
            # inertia costs ~side^4 per threshold, a dense solve ~side^6
            side = int(round(np.sqrt(n)))
            method = "dense" if (E.size > side * side // 8 and n <= DENSE_LIMIT) else "sturm"
    tie = tie_tolerance(op)
    if method == "dense":
        if spectrum is None:
            if n > DENSE_LIMIT:
                raise ValueError(f"dimension {n} exceeds the dense limit {DENSE_LIMIT}")
            spectrum = sla.eigvalsh(_as_dense(op), driver="evr")
        w = np.asarray(spectrum)
        return np.searchsorted(w, E + tie, side="right").astype(np.int64)
    if method == "sturm":
        if not hasattr(op, "blocks"):
            raise TypeError("inertia counting needs a block-tridiagonal lattice operator")
        top = _opnorm(op)
        out = np.empty(E.shape, dtype=np.int64)
        for i, e in np.ndenumerate(E):
            out[i] = 0 if e + tie < _gershgorin_lower(op) else (n if e >= top else _sturm_count_le(op, e))
        return out
    raise ValueError(f"unknown counting method {method!r}")

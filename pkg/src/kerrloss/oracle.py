"""Brute-force reference implementations.

Everything here consumes only the operator-level definition of the
generator (dense matrices for a, N and the dissipators); none of the
closed-form eigenvalue, eigenvector or propagator expressions from
:mod:`kerrloss.spectral` / :mod:`kerrloss.evolution` may appear.  These
routines arbitrate every derived value used in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .fockbasis import FockState, Truncation
from .superops import (
    BlockMatrix,
    GeneratorAction,
    InternalConsistencyError,
    ModelParams,
    annihilation,
    full_generator,
)

__all__ = [
    "IntegratorConfig",
    "triangular_eigendecomp",
    "ode_propagate",
    "matrix_exponential",
    "expm_propagate",
    "multi_time_correlator",
    "right_residual",
    "left_residual",
]

DEGENERATE_PIVOT_TOL = 1e-10
MAX_EXPM_DIM = 2500


class StiffnessError(RuntimeError):
    """The fixed-step integrator would need more steps than allowed."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and method tag for the reference integrator."""

    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = np.inf
    method: str = "adaptive"  # "adaptive" (embedded 4/5 pair) or "rk4"

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("integrator tolerances must be positive")
        if self.method not in ("adaptive", "rk4"):
            raise ValueError("method must be 'adaptive' or 'rk4'")


def triangular_eigendecomp(Lb: BlockMatrix):
    """Eigensystem of an upper-triangular block by back-substitution.

    Returns (eigenvalues, R, L): eigenvalues are the diagonal read off
    directly, column k of R solves (Lb - lambda_k) v = 0 with v_k = 1, row k
    of L solves u (Lb - lambda_k) = 0 with u_k = 1.  A vanishing pivot with a
    vanishing numerator (the only degeneracy the model admits) picks the
    zero component, which lands on the two-dimensional null-space basis.
    """
    mat = Lb.entries
    if np.any(np.tril(mat, -1) != 0):
        raise ValueError("block matrix must be upper triangular")
    n = mat.shape[0]
    lams = np.diag(mat).copy()
    scale = max(1.0, float(np.max(np.abs(mat))))
    R = np.zeros((n, n), dtype=complex)
    L = np.zeros((n, n), dtype=complex)
    for k in range(n):
        # right vector: back-substitute upward from v_k = 1
        v = np.zeros(n, dtype=complex)
        v[k] = 1.0
        for p in range(k - 1, -1, -1):
            num = mat[p, p + 1 : k + 1] @ v[p + 1 : k + 1]
            pivot = lams[k] - mat[p, p]
            if abs(pivot) < DEGENERATE_PIVOT_TOL * scale:
                if abs(num) > DEGENERATE_PIVOT_TOL * scale:
                    raise InternalConsistencyError(
                        f"non-trivial Jordan structure at rows {p},{k}"
                    )
                v[p] = 0.0
            else:
                v[p] = num / pivot
        R[:, k] = v
        # left vector: forward-substitute downward from u_k = 1
        u = np.zeros(n, dtype=complex)
        u[k] = 1.0
        for p in range(k + 1, n):
            num = u[k:p] @ mat[k:p, p]
            pivot = lams[k] - mat[p, p]
            if abs(pivot) < DEGENERATE_PIVOT_TOL * scale:
                if abs(num) > DEGENERATE_PIVOT_TOL * scale:
                    raise InternalConsistencyError(
                        f"non-trivial Jordan structure at rows {k},{p}"
                    )
                u[p] = 0.0
            else:
                u[p] = num / pivot
        L[k, :] = u
    return lams, R, L


def right_residual(Lb: BlockMatrix, lam: complex, v: np.ndarray) -> float:
    """|| Lb v - lam v || / (scale ||v||)."""
    scale = max(1.0, float(np.max(np.abs(Lb.entries))))
    return float(np.linalg.norm(Lb.entries @ v - lam * v) / (scale * np.linalg.norm(v)))


def left_residual(Lb: BlockMatrix, lam: complex, u: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(Lb.entries))))
    return float(np.linalg.norm(u @ Lb.entries - lam * u) / (scale * np.linalg.norm(u)))


def ode_propagate(
    action: GeneratorAction,
    initial: FockState,
    t: float,
    config: IntegratorConfig | None = None,
    t_eval=None,
):
    """Reference integration of dX/dt = action(X) from X(0) = initial.

    With ``t_eval`` (increasing times in [0, t]) a list of states is
    returned, otherwise the single state at time t.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    config = config or IntegratorConfig()
    d = initial.entries.shape[0]
    if t == 0 and t_eval is None:
        return initial.copy()
    if config.method == "rk4":
        if t_eval is not None:
            raise ValueError("t_eval is only supported by the adaptive method")
        return _rk4_propagate(action, initial, t, config)

    def rhs(_, y):
        return action.apply(y.reshape(d, d)).ravel()

    sol = solve_ivp(
        rhs,
        (0.0, t),
        initial.entries.ravel().astype(complex),
        method="RK45",
        rtol=config.rtol,
        atol=config.atol,
        max_step=config.max_step,
        t_eval=t_eval,
        dense_output=False,
    )
    if not sol.success:
        raise StiffnessError(f"adaptive integrator failed: {sol.message}")
    if t_eval is None:
        return FockState(sol.y[:, -1].reshape(d, d))
    return [FockState(sol.y[:, j].reshape(d, d)) for j in range(sol.y.shape[1])]


def _rk4_propagate(
    action: GeneratorAction, initial: FockState, t: float, config: IntegratorConfig
) -> FockState:
    """Fixed-step classical 4th-order run for reproducibility checks."""
    # step chosen against the diagonal stiffness scale of the generator
    p, n = action.params, action.trunc.n_max
    rate = p.kappa1 * n + p.kappa2 * n * n + abs(p.omega) + abs(p.U) * n * n + abs(action.drive) * n
    steps = max(16, int(np.ceil(8 * rate * t)))
    if steps > 2_000_000:
        raise StiffnessError(f"fixed-step integration would need {steps} steps")
    h = t / steps
    X = initial.entries.astype(complex)
    for _ in range(steps):
        k1 = action.apply(X)
        k2 = action.apply(X + 0.5 * h * k1)
        k3 = action.apply(X + 0.5 * h * k2)
        k4 = action.apply(X + h * k3)
        X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return FockState(X)


def matrix_exponential(M: np.ndarray, t: float = 1.0) -> np.ndarray:
    """e^{M t} by scaling and squaring with a truncated Taylor series."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > MAX_EXPM_DIM:
        raise ValueError(f"dimension {n} exceeds the {MAX_EXPM_DIM} guard")
    A = M * t
    norm = np.linalg.norm(A, 1)
    s = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0)
    B = A / (2**s)
    out = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for j in range(1, 40):
        term = term @ B / j
        out += term
        if np.max(np.abs(term)) < 1e-18 * max(1.0, np.max(np.abs(out))):
            break
    for _ in range(s):
        out = out @ out
    return out


_SPARSE_CACHE: dict[tuple, sp.csr_matrix] = {}


def _cached_sparse(params: ModelParams, trunc: Truncation, drive: complex) -> sp.csr_matrix:
    key = (params.omega, params.U, params.kappa1, params.kappa2, trunc.n_max, drive)
    if key not in _SPARSE_CACHE:
        if len(_SPARSE_CACHE) > 64:
            _SPARSE_CACHE.clear()
        _SPARSE_CACHE[key] = full_generator(params, trunc, drive).sparse_matrix()
    return _SPARSE_CACHE[key]


def expm_propagate(
    params: ModelParams, initial: FockState, t: float, drive: complex = 0.0
) -> FockState:
    """e^{Lt} initial through the vectorized sparse generator.

    Handles the stiff two-body-loss regime (kappa2 n_max^2 t large) where
    explicit stepping is impractical.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return initial.copy()
    d = initial.entries.shape[0]
    mat = _cached_sparse(params, initial.truncation, complex(drive))
    vec = spla.expm_multiply(mat * t, initial.entries.ravel().astype(complex))
    return FockState(vec.reshape(d, d))


def _apply_super_v(tag: str, V: np.ndarray, X: np.ndarray) -> np.ndarray:
    if tag == "+":
        return V @ X
    if tag == "-":
        return X @ V
    if tag == "o":
        return V @ X + X @ V
    raise ValueError(f"unknown superoperator tag {tag!r} (use '+', '-', 'o')")


_TRACE_SHORTCUT_VERIFIED: set[tuple] = set()


def _assert_trace_invariance(params: ModelParams) -> None:
    """Check tr[e^{-Lt} X] = tr[X] once per parameter set at small size.

    The telescoped correlator drops the leading inverse propagator; that is
    only legitimate because the identity is a left null vector of L.
    """
    key = (params.omega, params.U, params.kappa1, params.kappa2)
    if key in _TRACE_SHORTCUT_VERIFIED:
        return
    trunc = Truncation(4)
    action = full_generator(params, trunc)
    rng = np.random.default_rng(11)
    X = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    LX = action.apply(X)
    dev = abs(np.trace(LX)) / max(1.0, float(np.max(np.abs(LX))))
    if dev > 1e-12:
        raise InternalConsistencyError(
            f"identity is not a left null vector of the generator (dev {dev:.3e})"
        )
    # and the inverse propagator preserves traces at a scale where the
    # exponential amplification stays benign
    gen = action.sparse_matrix().toarray()
    prop = matrix_exponential(gen, -0.02 / max(1.0, params.kappa2))
    dev = abs(np.trace((prop @ X.ravel()).reshape(5, 5)) - np.trace(X))
    if dev > 1e-9 * max(1.0, float(np.max(np.abs(prop)))):
        raise InternalConsistencyError(
            f"trace not invariant under the inverse propagator (dev {dev:.3e})"
        )
    _TRACE_SHORTCUT_VERIFIED.add(key)


def multi_time_correlator(params: ModelParams, sequence, initial: FockState) -> complex:
    """tr[ V~^{p1}(t1) ... V~^{pn}(tn) rho ] for V = a + a†.

    ``sequence`` is [(tag, time), ...] with times non-increasing and tags in
    {'+', '-', 'o'}.  Evaluated in the telescoped form: evolve by t_n, apply
    V^{p_n}, evolve by the next gap, and so on; the leading inverse
    propagator is dropped by trace invariance (asserted once per run).
    """
    if not sequence:
        raise ValueError("empty superoperator sequence")
    times = [s[1] for s in sequence]
    if any(t2 > t1 for t1, t2 in zip(times, times[1:])) or times[-1] < 0:
        raise ValueError("times must satisfy t1 >= t2 >= ... >= tn >= 0")
    _assert_trace_invariance(params)
    V = annihilation(initial.truncation)
    V = V + V.conj().T
    state = initial.copy()
    prev = None
    for tag, t in reversed(list(sequence)):
        gap = t if prev is None else t - prev
        # reversed order: evolve up to this insertion time, then insert
        if gap > 0:
            state = expm_propagate(params, state, gap)
        state = FockState(_apply_super_v(tag, V, state.entries))
        prev = t
    return complex(np.trace(state.entries))

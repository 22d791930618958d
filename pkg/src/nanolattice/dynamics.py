"""Lindblad integration, a dense closed-system oracle, and state metrics.

Density matrices are dense complex arrays. Superoperators use row-major
vectorization, vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .models import MasterEquationModel
from .operators import CompositeSpace, SparseOperator, embed, annihilation, number

TRACE_TOL = 1e-9
TOP_FOCK_TOL = 1e-3
EXPM_MAX_DIM = 64
STEPPERS = ("rk4", "adaptive", "expm")


class DynamicsError(ValueError):
    pass


class IntegrationError(RuntimeError):
    pass


# states ------------------------------------------------------------------------------

def validate_density_matrix(rho: np.ndarray, trace_tol: float = TRACE_TOL,
                            herm_tol: float = 1e-10, eig_tol: float = 1e-8) -> None:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DynamicsError(f"density matrix must be square, got shape {rho.shape}")
    if abs(np.trace(rho) - 1) > trace_tol:
        raise DynamicsError(f"trace {np.trace(rho).real:.12g} differs from 1")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise DynamicsError("density matrix is not Hermitian")
    if np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0] < -eig_tol:
        raise DynamicsError("density matrix has a negative eigenvalue")


def pure_state(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, complex)
    return np.outer(psi, psi.conj())


def fock_state(space: CompositeSpace, occupations: Mapping[str, int]) -> np.ndarray:
    psi = np.zeros(space.total_dim, complex)
    psi[space.basis_index(dict(occupations))] = 1.0
    return psi


def superposition(space: CompositeSpace, parts: Sequence[tuple[Mapping[str, int], complex]]
                  ) -> np.ndarray:
    psi = sum(c * fock_state(space, occ) for occ, c in parts)
    return psi / np.linalg.norm(psi)


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    rho1, rho2 = np.asarray(rho1), np.asarray(rho2)
    if rho1.shape != rho2.shape:
        raise DynamicsError(f"dimension mismatch: {rho1.shape} vs {rho2.shape}")
    diff = rho1 - rho2
    ev = np.linalg.eigvalsh((diff + diff.conj().T) / 2)
    return float(min(1.0, 0.5 * np.sum(np.abs(ev))))


def fidelity(rho1: np.ndarray, rho2: np.ndarray) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(ρ1) ρ2 sqrt(ρ1)))²."""
    rho1, rho2 = np.asarray(rho1), np.asarray(rho2)
    if rho1.shape != rho2.shape:
        raise DynamicsError(f"dimension mismatch: {rho1.shape} vs {rho2.shape}")
    w, v = np.linalg.eigh((rho1 + rho1.conj().T) / 2)
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    m = sq @ rho2 @ sq
    ev = np.linalg.eigvalsh((m + m.conj().T) / 2)
    return float(min(1.0, np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2))


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduced state on slots ``keep`` (returned in ascending slot order)."""
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if any(not 0 <= k < n for k in keep):
        raise DynamicsError(f"invalid slots {keep} for {n} modes")
    rho = np.asarray(rho)
    if rho.shape != (int(np.prod(dims)),) * 2:
        raise DynamicsError("state dimension does not match dims")
    t = rho.reshape(dims + dims)
    drop = [i for i in range(n) if i not in keep]
    # contract dropped slots pairwise, highest first so indices stay valid
    for i in sorted(drop, reverse=True):
        t = np.trace(t, axis1=i, axis2=i + t.ndim // 2)
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(dk, dk)


def reduce_to(rho: np.ndarray, space: CompositeSpace, labels: Sequence[str]) -> np.ndarray:
    slots = [space.slot(lbl) for lbl in labels]
    if slots != sorted(slots):
        raise DynamicsError("labels must follow the space's slot order")
    return partial_trace(rho, space.dims, slots)


# Lindblad right-hand side -----------------------------------------------------------------

class _DenseGenerator:
    """Dense pieces of the master equation, cached once per integration."""

    def __init__(self, model: MasterEquationModel):
        self.model = model
        self.dim = model.space.total_dim
        self.jumps = [(d.rate, d.op.to_dense()) for d in model.dissipators if d.rate > 0]
        acc = np.zeros((self.dim, self.dim), complex)
        for k, a in self.jumps:
            acc += k * (a.conj().T @ a)
        self.decay = 0.5 * acc
        self.static = model.hamiltonian.is_static
        self._h0 = model.hamiltonian.dense_at(0.0) if self.static else None

    def hamiltonian(self, t: float) -> np.ndarray:
        return self._h0 if self.static else self.model.hamiltonian.dense_at(t)

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        heff = self.hamiltonian(t) - 1j * self.decay
        out = -1j * (heff @ rho - rho @ heff.conj().T)
        for k, a in self.jumps:
            out += k * (a @ rho @ a.conj().T)
        return out

    def liouvillian(self) -> np.ndarray:
        if not self.static:
            raise DynamicsError("the dense Liouvillian needs a static Hamiltonian")
        n = self.dim
        eye = np.eye(n)
        heff = self._h0 - 1j * self.decay
        L = -1j * (np.kron(heff, eye) - np.kron(eye, heff.conj()))
        for k, a in self.jumps:
            L += k * np.kron(a, a.conj())
        return L


def lindblad_rhs(model: MasterEquationModel, rho: np.ndarray, t: float = 0.0) -> np.ndarray:
    """−i[H(t), ρ] + Σ_k r_k (A ρ A† − ½{A†A, ρ})."""
    rho = np.asarray(rho, complex)
    n = model.space.total_dim
    if rho.shape != (n, n):
        raise DynamicsError(f"state shape {rho.shape} does not match model dimension {n}")
    return _DenseGenerator(model)(t, rho)


# observables ------------------------------------------------------------------------------------

def default_observables(space: CompositeSpace) -> dict[str, np.ndarray]:
    """``n@<mode>`` and ``a@<mode>`` for every mode."""
    out = {}
    for m in space.modes:
        out[f"n@{m.label}"] = embed(number(m.truncation_dim), space, m.label).to_dense()
    for m in space.modes:
        out[f"a@{m.label}"] = embed(annihilation(m.truncation_dim), space, m.label).to_dense()
    return out


def _top_level_masks(space: CompositeSpace) -> dict[str, np.ndarray]:
    occ = np.indices(space.dims).reshape(len(space.dims), -1)
    return {m.label: occ[i] == m.truncation_dim - 1 for i, m in enumerate(space.modes)}


# results -----------------------------------------------------------------------------------------

@dataclass
class SimulationResult:
    times: np.ndarray
    observables: dict[str, np.ndarray]
    hermitian_observables: tuple[str, ...] = ()
    states: list[np.ndarray] | None = None
    diagnostics: dict = field(default_factory=dict)

    def columns(self) -> list[str]:
        cols = ["t"]
        for name in self.observables:
            if name in self.hermitian_observables:
                cols.append(name)
            else:
                cols += [f"re_{name}", f"im_{name}"]
        return cols

    def rows(self) -> list[list[float]]:
        out = []
        for i, t in enumerate(self.times):
            row = [float(t)]
            for name, vals in self.observables.items():
                v = complex(vals[i])
                if name in self.hermitian_observables:
                    row.append(v.real)
                else:
                    row += [v.real, v.imag]
            out.append(row)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for row in self.rows():
            w.writerow([repr(x) for x in row])
        return buf.getvalue()

    def to_json(self) -> str:
        obs = {}
        for name, vals in self.observables.items():
            if name in self.hermitian_observables:
                obs[name] = [float(np.real(v)) for v in vals]
            else:
                obs[name] = {"re": [float(np.real(v)) for v in vals],
                             "im": [float(np.imag(v)) for v in vals]}
        return json.dumps({"times": [float(t) for t in self.times], "observables": obs,
                           "diagnostics": _jsonable(self.diagnostics)}, indent=2)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# integration ------------------------------------------------------------------------------------

def _rk4_step(f, t: float, rho: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, rho)
    k2 = f(t + h / 2, rho + (h / 2) * k1)
    k3 = f(t + h / 2, rho + (h / 2) * k2)
    k4 = f(t + h, rho + h * k3)
    return rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _rk4_segments(gen: _DenseGenerator, rho0: np.ndarray, grid: np.ndarray, max_step: float):
    rho = rho0
    yield rho
    for t0, t1 in zip(grid[:-1], grid[1:]):
        n = max(1, int(math.ceil((t1 - t0) / max_step - 1e-9)))
        h = (t1 - t0) / n
        for i in range(n):
            rho = _rk4_step(gen, t0 + i * h, rho, h)
        yield rho


def _adaptive_segments(gen: _DenseGenerator, rho0: np.ndarray, grid: np.ndarray,
                       rtol: float, atol: float, max_step: float):
    n = gen.dim

    def f(t, y):
        return gen(t, y.reshape(n, n)).ravel()

    sol = solve_ivp(f, (grid[0], grid[-1]), rho0.ravel(), method="DOP853", t_eval=grid,
                    rtol=rtol, atol=atol, max_step=max_step)
    if not sol.success:
        raise IntegrationError(f"adaptive integration failed: {sol.message}")
    for k in range(len(grid)):
        yield sol.y[:, k].reshape(n, n)


def _expm_segments(gen: _DenseGenerator, rho0: np.ndarray, grid: np.ndarray):
    if gen.dim > EXPM_MAX_DIM:
        raise DynamicsError(f"expm stepper limited to dimension {EXPM_MAX_DIM}, model has {gen.dim}")
    L = gen.liouvillian()
    cache: dict[float, np.ndarray] = {}
    v = rho0.ravel()
    yield rho0
    for t0, t1 in zip(grid[:-1], grid[1:]):
        h = float(t1 - t0)
        # uniform grids differ by a few ulps between steps; one propagator serves all
        key = float(f"{h:.10g}")
        if key not in cache:
            cache[key] = sla.expm(L * key)
        v = cache[key] @ v
        yield v.reshape(gen.dim, gen.dim)


def integrate(model: MasterEquationModel, rho0: np.ndarray, t_grid: Sequence[float],
              stepper: str = "rk4", max_step: float | None = None,
              observables: Mapping[str, np.ndarray | SparseOperator] | None = None,
              store_states: bool = False, rtol: float = 1e-10, atol: float = 1e-12,
              trace_tol: float = TRACE_TOL, max_refinements: int = 3) -> SimulationResult:
    """Evolve ``rho0`` over ``t_grid`` and record expectation values.

    Steppers: ``rk4`` (fixed step, at most ``max_step``), ``adaptive``
    (DOP853, tolerances tightened until trace drift is below ``trace_tol``),
    ``expm`` (exact dense Liouvillian exponential; static models only).
    """
    if stepper not in STEPPERS:
        raise DynamicsError(f"unknown stepper {stepper!r}; choose from {STEPPERS}")
    grid = np.asarray(t_grid, float)
    if grid.ndim != 1 or len(grid) == 0:
        raise DynamicsError("time grid must be a non-empty 1-d sequence")
    if len(grid) > 1 and np.any(np.diff(grid) <= 0):
        raise DynamicsError("time grid must be strictly increasing")
    rho0 = np.asarray(rho0, complex)
    n = model.space.total_dim
    if rho0.shape != (n, n):
        raise DynamicsError(f"initial state shape {rho0.shape} does not match dimension {n}")
    validate_density_matrix(rho0)
    gen = _DenseGenerator(model)

    if observables is None:
        observables = default_observables(model.space)
    obs = {k: (v.to_dense() if isinstance(v, SparseOperator) else np.asarray(v, complex))
           for k, v in observables.items()}
    herm = tuple(k for k, v in obs.items() if np.allclose(v, v.conj().T, atol=1e-14))

    if max_step is None:
        scale = max(np.max(np.abs(gen.hamiltonian(grid[0]))), np.max(np.abs(gen.decay)), 1e-12)
        max_step = 0.05 / scale
    span = float(grid[-1] - grid[0])

    def run(tol_factor: float):
        if stepper == "rk4":
            return list(_rk4_segments(gen, rho0, grid, max_step * tol_factor))
        if stepper == "adaptive":
            if len(grid) == 1:
                return [rho0]
            return list(_adaptive_segments(gen, rho0, grid, rtol * tol_factor,
                                           atol * tol_factor, span or np.inf))
        return list(_expm_segments(gen, rho0, grid))

    factor = 1.0
    for attempt in range(max_refinements + 1):
        states = run(factor)
        drift = max(abs(np.trace(r) - 1) for r in states)
        if drift <= trace_tol or stepper == "expm":
            break
        factor *= 0.1 if stepper == "adaptive" else 0.5
    else:
        raise IntegrationError(f"trace drift {drift:.3g} above {trace_tol:g} after "
                               f"{max_refinements} refinements")

    values = {k: np.array([np.trace(r @ o) for r in states]) for k, o in obs.items()}
    masks = _top_level_masks(model.space)
    top = {lbl: float(max(np.real(np.diag(r))[m].sum() for r in states)) for lbl, m in masks.items()}
    min_eig = min(float(np.linalg.eigvalsh((r + r.conj().T) / 2)[0]) for r in states)
    herm_err = max(float(np.max(np.abs(r - r.conj().T))) for r in states)
    diagnostics = {
        "stepper": stepper, "trace_drift": float(drift), "trace_ok": bool(drift <= trace_tol),
        "min_eigenvalue": min_eig, "hermiticity_error": herm_err,
        "top_fock_population": top,
        "truncation_flags": sorted(lbl for lbl, p in top.items() if p > TOP_FOCK_TOL),
        "refinements": attempt,
    }
    return SimulationResult(grid, values, herm, states if store_states else None, diagnostics)


def propagate_closed_oracle(H: SparseOperator | np.ndarray, psi0: np.ndarray,
                            t: float | Sequence[float]) -> np.ndarray:
    """exp(−iHt)ψ0 by dense eigendecomposition; a vector, or rows for a time list."""
    h = H.to_dense() if isinstance(H, SparseOperator) else np.asarray(H, complex)
    if h.shape[0] > 4096:
        raise DynamicsError("oracle limited to dimension 4096")
    scale = max(1.0, float(np.max(np.abs(h))))
    if np.max(np.abs(h - h.conj().T)) > 1e-12 * scale:
        raise DynamicsError("oracle needs a Hermitian Hamiltonian")
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    c = v.conj().T @ np.asarray(psi0, complex)
    ts = np.atleast_1d(np.asarray(t, float))
    out = np.array([v @ (np.exp(-1j * w * tt) * c) for tt in ts])
    return out[0] if np.ndim(t) == 0 else out

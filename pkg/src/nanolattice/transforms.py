"""Model transformations: interaction picture, RWA, supermodes, elimination."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .models import Dissipator, MasterEquationModel
from .operators import (CompositeSpace, ModeKind, ModeSpec, SparseOperator, annihilation, embed,
                        mode_operators, number)
from .terms import Term, TermSum, monomial, monomial_operator, monomial_rotation, substitute

EPS_WARN = 0.3
AMBIGUITY_MARGIN = 3.0


class TransformError(ValueError):
    pass


# interaction picture and RWA ------------------------------------------------------

def free_frequencies(ts: TermSum) -> dict[str, float]:
    freqs: dict[str, float] = {}
    for t in ts.terms:
        if t.kind != "free":
            continue
        lad = t.ladder
        if lad is None or len(lad) != 1 or lad[0][1:] != (1, 1) or t.rotation_frequency:
            raise TransformError(f"free term {t.label!r} is not a static number operator; "
                                 "only diagonal free Hamiltonians are supported")
        if abs(t.coeff.imag) > 1e-15:
            raise TransformError(f"free term {t.label!r} has a complex frequency")
        freqs[lad[0][0]] = freqs.get(lad[0][0], 0.0) + t.coeff.real
    return freqs


def to_interaction_picture(model: MasterEquationModel | TermSum) -> TermSum:
    """Drop the free part and give every monomial its frame rotation frequency."""
    ts = model.hamiltonian if isinstance(model, MasterEquationModel) else model
    freqs = free_frequencies(ts)
    out = []
    for t in ts.terms:
        if t.kind == "free":
            continue
        if t.ladder is None:
            # only diagonal loose operators commute with a number-operator frame
            m = t.op.matrix
            if (m - sp.diags(m.diagonal())).nnz and freqs:
                raise TransformError(f"term {t.label!r} has no ladder structure to rotate")
            out.append(t)
            continue
        w = t.rotation_frequency + monomial_rotation(t.ladder, freqs)
        out.append(replace(t, rotation_frequency=w))
    return TermSum(ts.space, tuple(out))


@dataclass(frozen=True)
class ResonanceReport:
    kept_terms: tuple[Term, ...]
    dropped_terms: tuple[Term, ...]
    min_dropped_detuning: float
    max_kept_detuning: float
    cutoff: float
    ambiguous: bool = False
    warnings: tuple[str, ...] = field(default=())

    def summary(self) -> dict:
        return {"kept": [t.label for t in self.kept_terms],
                "dropped": [t.label for t in self.dropped_terms],
                "min_dropped_detuning": self.min_dropped_detuning,
                "max_kept_detuning": self.max_kept_detuning,
                "ambiguous": self.ambiguous}


def rwa_filter(ts: TermSum, cutoff: float) -> tuple[TermSum, ResonanceReport]:
    """Keep terms rotating no faster than ``cutoff``.

    Terms whose frequency lies within a factor of 3 of the cutoff make the
    split ambiguous; they are still sorted, but the report says so.
    """
    if not cutoff >= 0:
        raise TransformError("cutoff must be >= 0")
    ts = ts.simplified()
    kept, dropped = [], []
    for t in ts.terms:
        w = abs(t.rotation_frequency)
        (kept if w <= cutoff + 1e-12 * max(1.0, w) else dropped).append(t)
    max_kept = max((abs(t.rotation_frequency) for t in kept), default=0.0)
    min_dropped = min((abs(t.rotation_frequency) for t in dropped), default=math.inf)
    notes = []
    if cutoff > 0:
        near = [t.label for t in ts.terms
                if cutoff / AMBIGUITY_MARGIN < abs(t.rotation_frequency) < cutoff * AMBIGUITY_MARGIN]
        if near:
            notes.append(f"terms near the cutoff {cutoff:g}: {near}")
    if kept and dropped and max_kept >= min_dropped:
        notes.append("cutoff does not separate kept and dropped terms")
    for n in notes:
        warnings.warn(n, stacklevel=2)
    report = ResonanceReport(tuple(kept), tuple(dropped), min_dropped, max_kept, cutoff,
                             bool(notes), tuple(notes))
    return TermSum(ts.space, tuple(kept)), report


# operator reduction helpers -----------------------------------------------------------

def reduce_operator(op: SparseOperator, space: CompositeSpace, drop: str) -> SparseOperator:
    """Return O' with O = O' ⊗ I_drop; raises if O acts on the dropped mode."""
    slot = space.slot(drop)
    dims = space.dims
    left = int(np.prod(dims[:slot]))
    d = dims[slot]
    right = int(np.prod(dims[slot + 1:]))
    dense = op.to_dense().reshape(left, d, right, left, d, right)
    red = dense[:, 0, :, :, 0, :].reshape(left * right, left * right)
    rebuilt = np.einsum("ijkl,ab->iajkbl",
                        red.reshape(left, right, left, right), np.eye(d)).reshape(op.dim, op.dim)
    if not np.allclose(rebuilt, op.to_dense(), rtol=0, atol=1e-12 * max(1.0, op.max_abs())):
        raise TransformError(f"operator acts on mode {drop!r}")
    return SparseOperator.from_dense(red)


def _reduced_terms(ts: TermSum, new_space: CompositeSpace, drop: str) -> tuple[TermSum, list[Term]]:
    """Terms not touching ``drop`` re-expressed on ``new_space``; the rest returned."""
    out = TermSum(new_space)
    touched = []
    for t in ts.terms:
        if t.ladder is not None:
            if any(lbl == drop for lbl, _, _ in t.ladder):
                touched.append(t)
                continue
            out = out.add_monomial(t.coeff, t.ladder, t.rotation_frequency, t.kind, t.label)
        else:
            try:
                red = reduce_operator(t.op, ts.space, drop)
            except TransformError:
                touched.append(t)
                continue
            out = out.add_operator(t.coeff, red, t.label, t.rotation_frequency, t.kind)
    return out, touched


# supermodes -----------------------------------------------------------------------------

def supermode_transform(model: MasterEquationModel, pair: tuple[str, str] | None = None,
                        new_labels: tuple[str, str] = ("c", "d")) -> MasterEquationModel:
    """Rotate a mixed pair into c = (c̃ + d̃)/√2, d = (c̃ − d̃)/√2.

    The map is its own inverse, so applying it to the result (with the
    original labels as ``new_labels``) recovers the input model.
    """
    pair = pair or model.info.get("pair")
    if not pair or len(pair) != 2:
        raise TransformError("no mode pair given and the model does not name one")
    ct, dt = pair
    space = model.space
    try:
        mc, md = space.mode(ct), space.mode(dt)
    except Exception as exc:
        raise TransformError(str(exc)) from None
    if mc.truncation_dim != md.truncation_dim:
        raise TransformError("pair members need equal truncation")
    if mc.kind is ModeKind.MECHANICAL or md.kind is ModeKind.MECHANICAL:
        raise TransformError("supermode transform targets an auxiliary pair")
    c, d = new_labels
    s = _mixing_strength(model.hamiltonian, ct, dt)
    base = mc.frequency
    fc = base + s if base + s > 0 else base
    fd = base - s if base - s > 0 else base
    modes = []
    for m in space.modes:
        if m.label == ct:
            modes.append(ModeSpec(c, ModeKind.AUXILIARY_PAIR_MEMBER, fc, m.damping_rate,
                                  m.truncation_dim))
        elif m.label == dt:
            modes.append(ModeSpec(d, ModeKind.AUXILIARY_PAIR_MEMBER, fd, md.damping_rate,
                                  m.truncation_dim))
        else:
            modes.append(m)
    new_space = CompositeSpace(tuple(modes))
    r = 1 / math.sqrt(2)
    mapping = {ct: [(c, r), (d, r)], dt: [(c, r), (d, -r)]}
    h = TermSum(new_space)
    for t in model.hamiltonian.terms:
        if t.ladder is None:
            raise TransformError(f"term {t.label!r} has no ladder structure")
        for m, coeff in substitute(t.ladder, mapping).items():
            h = h.add_monomial(t.coeff * coeff, m, t.rotation_frequency, t.kind)
    h = h.simplified(atol=1e-13)

    diss = []
    damp = {x.label.split(":", 1)[1]: x for x in model.dissipators
            if x.label.startswith("damping:")}
    rc, rd = damp.get(ct), damp.get(dt)
    if (rc is None) != (rd is None) or (rc and rd and not math.isclose(rc.rate, rd.rate)):
        raise TransformError("pair members must share one damping rate")
    ops = mode_operators(new_space)
    for x in model.dissipators:
        if x is rc:
            diss.append(Dissipator(x.rate, ops[c], f"damping:{c}"))
        elif x is rd:
            diss.append(Dissipator(x.rate, ops[d], f"damping:{d}"))
        else:
            for lbl in pair:
                reduce_operator(x.op, space, lbl)
            diss.append(x)  # same slots, same matrix
    info = {**model.info, "pair": (c, d), "kind": model.info.get("kind", "") + "+supermodes"}
    return MasterEquationModel(new_space, h, tuple(diss), info)


def _mixing_strength(ts: TermSum, ct: str, dt: str) -> float:
    for t in ts.simplified().terms:
        if t.ladder == monomial(f"{dt}+", ct) and t.rotation_frequency == 0:
            return float(t.coeff.real)
    return 0.0


def pair_sector_indices(space: CompositeSpace, pair: Sequence[str]) -> np.ndarray:
    """Basis indices whose pair occupation lies in a fully represented sector."""
    slots = [space.slot(x) for x in pair]
    nmax = min(space.dims[s] for s in slots) - 1
    occ = np.indices(space.dims).reshape(len(space.dims), -1)
    return np.flatnonzero(sum(occ[s] for s in slots) <= nmax)


@dataclass(frozen=True)
class SchwingerOps:
    sigma_z: SparseOperator
    sigma_plus: SparseOperator
    sigma_minus: SparseOperator
    basis: tuple[int, int]  # flat indices of |1_c 0_d> and |0_c 1_d> in the pair space


def schwinger_qubit_ops(space: CompositeSpace, pair: tuple[str, str] = ("c", "d")) -> SchwingerOps:
    """σz = c†c − d†d and σ+ = d c† restricted to one excitation in the pair.

    Basis order is (|1_c 0_d>, |0_c 1_d>), so σz = diag(1, −1).
    """
    c, d = pair
    sub = space.subspace(pair)
    if min(sub.dims) < 2:
        raise TransformError("single-excitation subspace is empty under this truncation")
    idx = (sub.basis_index({c: 1}), sub.basis_index({d: 1}))
    iso = sp.csr_matrix((np.ones(2), (list(idx), [0, 1])), shape=(sub.total_dim, 2))
    nc = embed(number(sub.dims[0]), sub, c)
    nd = embed(number(sub.dims[1]), sub, d)
    ops = mode_operators(sub)
    sp_full = ops[d] @ ops[c].adjoint()

    def project(op: SparseOperator) -> SparseOperator:
        return SparseOperator(iso.T @ op.matrix @ iso)

    up = project(sp_full)
    return SchwingerOps(project(nc - nd), up, up.adjoint(), idx)


# perturbative diagonalization ---------------------------------------------------------------

def _qubit_info(model: MasterEquationModel) -> dict:
    if model.info.get("kind") != "intermediate_qubit":
        raise TransformError("perturbative_diagonalize expects the intermediate qubit model")
    return model.info


def schrieffer_wolff_generator(model: MasterEquationModel) -> SparseOperator:
    """S = (ε/2)(a d c† − a† d† c); e^S H' e^{−S} removes the coupling at first order."""
    info = _qubit_info(model)
    eps = info["f"] / info["delta"] if info["delta"] else 0.0
    x = monomial_operator(model.space, monomial(f"{info['c']}+", info["mech"], info["d"]))
    return (eps / 2) * (x - x.adjoint())


def perturbative_diagonalize(model: MasterEquationModel,
                             warn_threshold: float = EPS_WARN) -> MasterEquationModel:
    """Second-order effective model on (mechanics, c) with d left in vacuum.

    H'' = (Ω + Δ + εf/2) c†c + (εf/2) c†c a†a, and d-decay becomes a
    dissipator on c a† with amplitude rate ε²κ/4.
    """
    info = _qubit_info(model)
    f, delta, omega, kappa = info["f"], info["delta"], info["omega"], info["kappa"]
    if delta == 0:
        raise TransformError("Delta = 0: no perturbative expansion")
    eps = f / delta
    if abs(eps) > warn_threshold:
        warnings.warn(f"epsilon = {eps:.3g} exceeds {warn_threshold}; perturbative regime "
                      "not satisfied", stacklevel=2)
    a, c = info["mech"], info["c"]
    space = model.space.subspace((a, c))
    h = TermSum(space)
    wc = omega + delta + eps * f / 2
    if wc:
        h = h.add_monomial(wc, monomial(f"{c}+", c))
    if eps:
        h = h.add_monomial(eps * f / 2, monomial(f"{a}+", f"{c}+", a, c))
    diss = []
    if kappa > 0:
        diss.append(Dissipator(2 * kappa, monomial_operator(space, monomial(c)), f"damping:{c}"))
        if eps:
            diss.append(Dissipator(eps ** 2 * kappa / 2,
                                   monomial_operator(space, monomial(f"{a}+", c)),
                                   f"induced:{c}{a}†"))
    return MasterEquationModel(space, h, tuple(diss),
                               {"kind": "dispersive", "epsilon": eps, "mech": a, "c": c,
                                "cross": eps * f / 2, "omega_c": wc})


def perturbative_residuals(model: MasterEquationModel) -> dict[str, float]:
    """Compare e^S H' e^{−S} against the second-order model, in units of f.

    Only d-vacuum states far enough from the truncation edge that the
    generator never reaches the top Fock levels are used. ``off_block`` is the
    norm of the coupling out of the d-vacuum block; ``block`` is the largest
    entry mismatch inside it.
    """
    info = _qubit_info(model)
    a, c, d = info["mech"], info["c"], info["d"]
    space = model.space
    S = schrieffer_wolff_generator(model).to_dense()
    H = model.hamiltonian.dense_at(0.0)
    U = sla.expm(S)
    Ht = U @ H @ U.conj().T
    da, dc, dd = (space.mode(x).truncation_dim for x in (a, c, d))
    occ = np.indices(space.dims).reshape(len(space.dims), -1)
    na, nc, nd = (occ[space.slot(x)] for x in (a, c, d))
    valid = np.flatnonzero((nd == 0) & (na + nc <= da - 1) & (nc <= dd - 1))
    outside = np.flatnonzero(nd > 0)
    off = np.linalg.norm(Ht[np.ix_(outside, valid)], 2) if len(valid) and len(outside) else 0.0
    eps = info["f"] / info["delta"]
    f = info["f"]
    target = (info["omega"] + info["delta"] + eps * f / 2) * nc + (eps * f / 2) * nc * na
    block = Ht[np.ix_(valid, valid)] - np.diag(target[valid])
    scale = abs(f) or 1.0
    return {"off_block": float(off) / scale, "block": float(np.max(np.abs(block))) / scale,
            "epsilon": eps}


# adiabatic elimination --------------------------------------------------------------------------

def adiabatic_eliminate(model: MasterEquationModel, fast_mode: str, K: SparseOperator,
                        omega: float, kappa: float, prefactor: float = 1.0,
                        shape: str = "hermitian", drop_diagonal: bool = False
                        ) -> MasterEquationModel:
    """Remove a fast damped mode b whose frame frequency is −omega.

    Recognized couplings, with ``K`` on the remaining modes:

    * ``shape="hermitian"``: p (b + b†) K with K Hermitian; yields
      [p²Ω/(Ω²+κ²)] K² and a dissipator on K.
    * ``shape="linear"``: p (b† K + K† b); yields [p²Ω/(Ω²+κ²)] K†K and a
      dissipator on K.

    Normalization: the induced amplitude rate is p²κ/(Ω²+κ²), stored as twice
    that in the Lindblad term, which is what the hop and Kerr reductions need
    to match a direct simulation. ``drop_diagonal`` removes the diagonal part
    of the induced Hamiltonian (the on-site shift of the linear case, a frame
    rotation when total excitation number is conserved).
    """
    if shape not in ("hermitian", "linear"):
        raise TransformError(f"unknown coupling shape {shape!r}")
    space = model.space
    if space.mode(fast_mode) is None:
        raise TransformError(f"unknown fast mode {fast_mode!r}")
    labels = tuple(x for x in space.labels if x != fast_mode)
    if not labels:
        raise TransformError("nothing left after eliminating the only mode")
    reduced = space.subspace(labels)
    if K.dim != reduced.total_dim:
        raise TransformError("K must act on the remaining modes")
    if shape == "hermitian" and not K.is_hermitian(1e-10):
        raise TransformError("hermitian shape needs a Hermitian K")

    h_slow, touched = _reduced_terms(model.hamiltonian, reduced, fast_mode)
    if any(t.rotation_frequency for t in touched):
        raise TransformError("fast-mode terms must be static in the elimination frame")
    actual = sum((t.coeff * t.op.to_dense() for t in touched),
                 np.zeros((space.total_dim,) * 2, complex))
    b = embed(annihilation(space.mode(fast_mode).truncation_dim), space, fast_mode).to_dense()
    k_full = _lift(K, reduced, space, fast_mode)
    if shape == "hermitian":
        coupling = (b + b.conj().T) @ k_full
    else:
        coupling = b.conj().T @ k_full + k_full.conj().T @ b
    expected = -omega * b.conj().T @ b + prefactor * coupling
    scale = max(1.0, np.max(np.abs(expected)))
    if not np.allclose(actual, expected, rtol=0, atol=1e-10 * scale):
        raise TransformError("coupling shape not recognized: fast-mode terms differ from "
                             f"-Ω b†b + p·({shape} coupling to K)")
    if abs(prefactor) * K.norm() > 0.3 * math.hypot(omega, kappa):
        warnings.warn("fast mode is not much faster than the coupling; elimination is "
                      "outside its validity range", stacklevel=2)

    den = omega ** 2 + kappa ** 2
    if den == 0:
        raise TransformError("omega and kappa are both zero")
    coh = prefactor ** 2 * omega / den
    rate = prefactor ** 2 * kappa / den
    kk = K @ K if shape == "hermitian" else K.adjoint() @ K
    if drop_diagonal:
        kk = SparseOperator(kk.matrix - sp.diags(kk.matrix.diagonal()))
    h = h_slow
    if coh and kk.max_abs():
        h = h.add_operator(coh, kk, "K^2" if shape == "hermitian" else "K†K")
    diss = []
    for x in model.dissipators:
        try:
            diss.append(replace(x, op=reduce_operator(x.op, space, fast_mode)))
        except TransformError:
            continue  # the fast mode's own damping
    if rate > 0:
        diss.append(Dissipator(2 * rate, K, "induced:K"))
    return MasterEquationModel(reduced, h, tuple(diss),
                               {"kind": "eliminated", "coefficient": coh, "rate": rate,
                                "fast_mode": fast_mode})


def _lift(op: SparseOperator, reduced: CompositeSpace, space: CompositeSpace,
          fast: str) -> np.ndarray:
    slot = space.slot(fast)
    left = int(np.prod(space.dims[:slot]))
    right = int(np.prod(space.dims[slot + 1:]))
    d = space.dims[slot]
    r = op.to_dense().reshape(left, right, left, right)
    return np.einsum("ijkl,ab->iajkbl", r, np.eye(d)).reshape(space.total_dim, space.total_dim)


def hop_coupling_operator(space: CompositeSpace, modes: tuple[str, str],
                          hop_phase: float) -> SparseOperator:
    ops = mode_operators(space)
    return ops[modes[0]] + np.exp(1j * hop_phase) * ops[modes[1]]


def kerr_coupling_operator(space: CompositeSpace, mode: str) -> SparseOperator:
    return embed(number(space.mode(mode).truncation_dim), space, mode)


__all__ = [
    "TransformError", "ResonanceReport", "SchwingerOps", "to_interaction_picture", "rwa_filter",
    "supermode_transform", "schwinger_qubit_ops", "perturbative_diagonalize",
    "perturbative_residuals", "schrieffer_wolff_generator", "adiabatic_eliminate",
    "reduce_operator", "pair_sector_indices", "free_frequencies", "hop_coupling_operator",
    "kerr_coupling_operator",
]

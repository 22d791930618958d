"""Hamiltonian and dissipator builders, full and effective.

Rate convention: every damping rate quoted as a physical parameter here
(auxiliary ``kappa``, induced ``gamma_prime``, Kerr ``Gamma``) is an
amplitude decay rate, the one appearing in ``b = g beta A / (kappa - i dw)``.
A mode whose amplitude decays at ``kappa`` enters the master equation as
``2 kappa D(b)``, so every :class:`Dissipator` stores twice the quoted rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .operators import (CompositeSpace, ModeKind, ModeSpec, OperatorError, SparseOperator,
                        embed, mode_operators, number)
from .terms import TermSum, monomial, monomial_operator

DEFAULT_HOP_PHASE = -math.pi / 2


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Dissipator:
    rate: float
    op: SparseOperator
    label: str = ""

    def __post_init__(self):
        if not self.rate >= 0:
            raise ModelError(f"dissipator {self.label!r}: rate must be >= 0, got {self.rate}")


@dataclass(frozen=True)
class MasterEquationModel:
    space: CompositeSpace
    hamiltonian: TermSum
    dissipators: tuple[Dissipator, ...] = ()
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "dissipators", tuple(self.dissipators))
        n = self.space.total_dim
        if self.hamiltonian.space != self.space:
            raise ModelError("Hamiltonian is defined on a different space")
        for d in self.dissipators:
            if d.op.dim != n:
                raise ModelError(f"dissipator {d.label!r} has dimension {d.op.dim}, expected {n}")

    @property
    def is_static(self) -> bool:
        return self.hamiltonian.is_static

    def hamiltonian_at(self, t: float = 0.0) -> SparseOperator:
        return self.hamiltonian.evaluate(t)

    def check_hermitian(self, rtol: float = 1e-10, n_times: int = 10, seed: int = 0) -> bool:
        times = [0.0]
        if not self.is_static:
            times += list(np.random.default_rng(seed).uniform(0, 100, n_times))
        for t in times:
            h = self.hamiltonian.dense_at(t)
            scale = np.max(np.abs(h)) or 1.0
            if np.max(np.abs(h - h.conj().T)) > rtol * scale:
                return False
        return True


@dataclass(frozen=True)
class LatticeGraph:
    """Target lattice: on-site Kerr ``xi`` per node, hopping ``zeta`` per edge."""

    nodes: tuple[tuple[str, float], ...]
    edges: tuple[tuple[tuple[str, str], float], ...] = ()

    def __post_init__(self):
        nodes = tuple((str(lbl), float(xi)) for lbl, xi in self.nodes)
        edges = tuple(((str(a), str(b)), float(z)) for (a, b), z in self.edges)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        labels = [lbl for lbl, _ in nodes]
        if len(set(labels)) != len(labels):
            raise ModelError(f"duplicate node labels in {labels}")
        seen = set()
        for (a, b), _ in edges:
            for x in (a, b):
                if x not in labels:
                    raise ModelError(f"edge ({a}, {b}) references unknown node {x!r}")
            if a == b:
                raise ModelError(f"self-edge on node {a!r}")
            key = frozenset((a, b))
            if key in seen:
                raise ModelError(f"duplicate edge ({a}, {b})")
            seen.add(key)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lbl for lbl, _ in self.nodes)

    def xi(self, label: str) -> float:
        return dict(self.nodes)[label]


@dataclass(frozen=True)
class EffectiveParams:
    g: float = 0.0
    beta: complex = 0.0
    delta_omega: float = 0.0
    kappa: float = 0.0
    f: float = 0.0
    s: float = 0.0
    delta: float = 0.0
    alpha: complex = 0.0
    omega_big: float = 0.0
    delta_mod: float | None = None

    def __post_init__(self):
        if self.kappa < 0:
            raise ModelError("kappa must be >= 0")

    @property
    def epsilon(self) -> float:
        if self.delta == 0:
            return 0.0 if self.f == 0 else math.inf
        return self.f / self.delta

    @property
    def g_beta(self) -> float:
        return abs(self.g * self.beta)

    @property
    def kerr_prefactor(self) -> float:
        """Coupling K in K (c + c†) a†a after displacing the driven supermode."""
        return self.epsilon * self.f * abs(self.alpha) / 2


@dataclass(frozen=True)
class DriveTone:
    target: str
    frequency: float
    amplitude: complex

    def __post_init__(self):
        if not self.frequency > 0:
            raise ModelError(f"tone on {self.target!r}: frequency must be > 0")


# rate formulas ---------------------------------------------------------------

def elimination_rates(prefactor: float, detuning: float, kappa: float) -> tuple[float, float]:
    """Coherent and dissipative strengths from eliminating one fast damped mode.

    Returns ``(p^2 w / (w^2 + k^2), p^2 k / (w^2 + k^2))``; the second value is
    an amplitude-convention rate.
    """
    den = detuning ** 2 + kappa ** 2
    if den == 0:
        raise ModelError("detuning and kappa are both zero")
    p2 = abs(prefactor) ** 2
    return p2 * detuning / den, p2 * kappa / den


def hop_rates(g_beta: float, delta_omega: float, kappa: float) -> tuple[float, float]:
    """(lambda, gamma') for a two-mode link through one auxiliary."""
    return elimination_rates(g_beta, delta_omega, kappa)


def kerr_rates(prefactor: float, omega: float, kappa: float) -> tuple[float, float]:
    """(chi, Gamma) for the Kerr route, with prefactor K = eps f alpha / 2."""
    return elimination_rates(prefactor, omega, kappa)


# builders ----------------------------------------------------------------------

def _mech(label: str, dim: int, frequency: float = 1.0) -> ModeSpec:
    return ModeSpec(label, ModeKind.MECHANICAL, frequency, 0.0, dim)


def _dims_for(labels: Sequence[str], dims) -> dict[str, int]:
    if isinstance(dims, Mapping):
        return {lbl: int(dims[lbl]) for lbl in labels}
    return {lbl: int(dims) for lbl in labels}


def build_bose_hubbard(graph: LatticeGraph, dims: int | Mapping[str, int] = 3,
                       frequencies: Mapping[str, float] | None = None) -> MasterEquationModel:
    """sum_n xi (a_n†a_n)^2 + sum_edges zeta (a_n a_m† + a_n† a_m), rotating frame."""
    d = _dims_for(graph.labels, dims)
    freqs = frequencies or {}
    space = CompositeSpace(tuple(_mech(lbl, d[lbl], freqs.get(lbl, 1.0)) for lbl in graph.labels))
    h = TermSum(space)
    for lbl, xi in graph.nodes:
        if xi != 0:
            n = embed(number(d[lbl]), space, lbl)
            h = h.add_operator(xi, n @ n, f"({lbl}†{lbl})^2")
    for (a, b), zeta in graph.edges:
        if zeta != 0:
            h = h.add_monomial(zeta, monomial(f"{b}+", a))
            h = h.add_monomial(zeta, monomial(f"{a}+", b))
    return MasterEquationModel(space, h, (), {"kind": "bose_hubbard"})


def _free_terms(space: CompositeSpace) -> TermSum:
    h = TermSum(space)
    for m in space.modes:
        h = h.add_monomial(m.frequency, monomial(f"{m.label}+", m.label), kind="free")
    return h


def _check_coupling_table(gs: Mapping[tuple[str, str], float], space: CompositeSpace,
                          aux_kinds=(ModeKind.AUXILIARY,)) -> None:
    for (n, j) in gs:
        if space.mode(n).kind is not ModeKind.MECHANICAL:
            raise ModelError(f"{n!r} is not a mechanical mode")
        if space.mode(j).kind not in aux_kinds:
            raise ModelError(f"{j!r} is not an auxiliary mode")


def _damping(space: CompositeSpace) -> tuple[Dissipator, ...]:
    ops = mode_operators(space)
    return tuple(Dissipator(2 * m.damping_rate, ops[m.label], f"damping:{m.label}")
                 for m in space.modes if m.damping_rate > 0)


def build_radiation_pressure(gs: Mapping[tuple[str, str], float],
                             space: CompositeSpace) -> MasterEquationModel:
    """Free terms plus sum_nj g_nj b_j†b_j (a_n + a_n†)."""
    try:
        _check_coupling_table(gs, space)
    except OperatorError as exc:
        raise ModelError(str(exc)) from None
    h = _free_terms(space)
    for (n, j), g in gs.items():
        if g == 0:
            continue
        h = h.add_monomial(g, monomial(f"{j}+", j, n))
        h = h.add_monomial(g, monomial(f"{j}+", j, f"{n}+"))
    return MasterEquationModel(space, h, _damping(space), {"kind": "radiation_pressure"})


def beta_at(tones: Sequence[DriveTone], target: str, t: float) -> complex:
    return sum(tn.amplitude * np.exp(-1j * tn.frequency * t)
               for tn in tones if tn.target == target)


def build_displaced_coupling(gs: Mapping[tuple[str, str], float], tones: Sequence[DriveTone],
                             space: CompositeSpace) -> MasterEquationModel:
    """sum_nj g_nj [b_j† + beta_j*(t)][b_j + beta_j(t)](a_n + a_n†) plus free terms.

    ``beta_j(t)`` collects the tones aimed at ``b_j``. Every expanded piece is
    a separate term whose rotation frequency carries the drive time dependence.
    """
    if not tones:
        return build_radiation_pressure(gs, space)
    for tn in tones:
        if space.mode(tn.target).kind is not ModeKind.AUXILIARY:
            raise ModelError(f"tone target {tn.target!r} is not an auxiliary mode")
    _check_coupling_table(gs, space)
    h = _free_terms(space)
    for (n, j), g in gs.items():
        if g == 0:
            continue
        mine = [(k, tn) for k, tn in enumerate(tones) if tn.target == j]
        # (aux monomial factors, coefficient, rotation frequency, tag)
        pieces: list[tuple[tuple[str, ...], complex, float, str]] = [((f"{j}+", j), 1.0, 0.0, f"{j}†{j}")]
        for k, tn in mine:
            pieces.append(((f"{j}+",), tn.amplitude, tn.frequency, f"β{k}·{j}†"))
            pieces.append(((j,), np.conj(tn.amplitude), -tn.frequency, f"β{k}*·{j}"))
        for k, tk in mine:
            for l, tl in mine:
                pieces.append(((), np.conj(tk.amplitude) * tl.amplitude,
                               tl.frequency - tk.frequency, f"β{k}*β{l}"))
        for factors, c, w, tag in pieces:
            for mech in (n, f"{n}+"):
                m = monomial(*factors, mech)
                side = "a†" if mech.endswith("+") else "a"
                h = h.add_monomial(g * c, m, w, label=f"{tag}|{side}:{n}")
    return MasterEquationModel(space, h, _damping(space), {"kind": "displaced_coupling"})


def build_effective_hop(p: EffectiveParams, modes: tuple[str, str] = ("a1", "a2"),
                        dims: int | Mapping[str, int] = 3,
                        hop_phase: float = DEFAULT_HOP_PHASE) -> MasterEquationModel:
    """Linear link from eliminating a shared auxiliary.

    H = lambda (e^{i phi} a1†a2 + h.c.), which for the default phase is
    i lambda (a1 a2† - a2 a1†). The induced jump operator carries the same
    relative phase: A = a1 + e^{i phi} a2.
    """
    m1, m2 = modes
    if m1 == m2:
        raise ModelError("hop needs two distinct modes")
    lam, gam = hop_rates(p.g_beta, p.delta_omega, p.kappa)
    d = _dims_for(modes, dims)
    space = CompositeSpace((_mech(m1, d[m1]), _mech(m2, d[m2])))
    ph = np.exp(1j * hop_phase)
    h = TermSum(space)
    h = h.add_monomial(lam * ph, monomial(f"{m1}+", m2))
    h = h.add_monomial(lam * np.conj(ph), monomial(f"{m2}+", m1))
    h = h.simplified()
    ops = mode_operators(space)
    diss = ()
    if gam > 0:
        diss = (Dissipator(2 * gam, ops[m1] + ph * ops[m2], f"hop:{m1}+{m2}"),)
    return MasterEquationModel(space, h, diss, {"kind": "effective_hop", "lambda": lam,
                                                "gamma_prime": gam, "hop_phase": hop_phase})


def build_hop_full(p: EffectiveParams, modes: tuple[str, str] = ("a1", "a2"), aux: str = "b",
                   dims: Mapping[str, int] | None = None,
                   hop_phase: float = DEFAULT_HOP_PHASE) -> MasterEquationModel:
    """Two mechanical modes sharing one damped auxiliary, after the RWA.

    Frame: mechanics at rest, auxiliary rotating so its drive-referenced
    frequency is -delta_omega. H = -dw b†b + G [b†(a1 + e^{i phi} a2) + h.c.].
    """
    m1, m2 = modes
    d = {m1: 3, m2: 3, aux: 2, **(dims or {})}
    space = CompositeSpace((_mech(m1, d[m1]), _mech(m2, d[m2]),
                            ModeSpec(aux, ModeKind.AUXILIARY, 1.0, p.kappa, d[aux])))
    G = p.g_beta
    ph = np.exp(1j * hop_phase)
    h = TermSum(space)
    if p.delta_omega != 0:
        h = h.add_monomial(-p.delta_omega, monomial(f"{aux}+", aux))
    if G != 0:
        h = h.add_monomial(G, monomial(f"{aux}+", m1))
        h = h.add_monomial(G, monomial(f"{m1}+", aux))
        h = h.add_monomial(G * ph, monomial(f"{aux}+", m2))
        h = h.add_monomial(G * np.conj(ph), monomial(f"{m2}+", aux))
    lam, gam = hop_rates(G, p.delta_omega, p.kappa) if (p.delta_omega or p.kappa) else (0.0, 0.0)
    return MasterEquationModel(space, h, _damping(space),
                               {"kind": "hop_full", "lambda": lam, "gamma_prime": gam,
                                "hop_phase": hop_phase, "aux": aux})


def build_pair_with_mixing(p: EffectiveParams, space: CompositeSpace, mech: str = "a",
                           pair: tuple[str, str] = ("ct", "dt")) -> MasterEquationModel:
    """Free terms + f (c̃†c̃ - d̃†d̃)(a + a†) + s (c̃ d̃† + d̃ c̃†).

    The relative sign in the coupling is what makes the supermode rotation
    produce the photon-flipping interaction f (d c† + c d†)(a + a†).
    """
    ct, dt = pair
    mc, md = space.mode(ct), space.mode(dt)
    if mc.frequency != md.frequency:
        raise ModelError(f"pair members {ct!r} and {dt!r} must share one frequency")
    if space.mode(mech).kind is not ModeKind.MECHANICAL:
        raise ModelError(f"{mech!r} is not a mechanical mode")
    h = _free_terms(space)
    if p.f:
        for x, sign in ((ct, 1.0), (dt, -1.0)):
            h = h.add_monomial(sign * p.f, monomial(f"{x}+", x, mech))
            h = h.add_monomial(sign * p.f, monomial(f"{x}+", x, f"{mech}+"))
    if p.s:
        h = h.add_monomial(p.s, monomial(f"{dt}+", ct))
        h = h.add_monomial(p.s, monomial(f"{ct}+", dt))
    return MasterEquationModel(space, h, _damping(space),
                               {"kind": "pair_with_mixing", "pair": pair, "mech": mech})


def build_kerr_effective(p: EffectiveParams, mode: str = "a", dim: int = 4) -> MasterEquationModel:
    """chi (a†a)^2 with dephasing Gamma through L = a†a."""
    chi, gam = kerr_rates(p.kerr_prefactor, p.omega_big, p.kappa)
    space = CompositeSpace((_mech(mode, dim),))
    n = number(dim)
    h = TermSum(space).add_operator(chi, n @ n, f"({mode}†{mode})^2") if chi else TermSum(space)
    diss = (Dissipator(2 * gam, n, f"dephasing:{mode}"),) if gam > 0 else ()
    return MasterEquationModel(space, h, diss, {"kind": "kerr_effective", "chi": chi, "Gamma": gam})


def build_cross_kerr(chi_x: float, modes: tuple[str, str] = ("a", "b"),
                     dims: int | Mapping[str, int] = 3) -> MasterEquationModel:
    a, b = modes
    if a == b:
        raise ModelError("cross-Kerr needs two distinct modes")
    d = _dims_for(modes, dims)
    space = CompositeSpace((_mech(a, d[a]), _mech(b, d[b])))
    h = TermSum(space).add_monomial(chi_x, monomial(f"{a}+", f"{b}+", a, b),
                                    label=f"{a}†{a}·{b}†{b}")
    return MasterEquationModel(space, h, (), {"kind": "cross_kerr", "chi_x": chi_x})


def _qubit_space(mech: str, c: str, d: str, dims: Mapping[str, int] | None, omega: float,
                 delta: float, kappa: float) -> CompositeSpace:
    dd = {mech: 4, c: 2, d: 2, **(dims or {})}
    fc = omega + delta if omega + delta > 0 else 1.0
    fd = omega - delta if omega - delta > 0 else 1.0
    return CompositeSpace((_mech(mech, dd[mech]),
                           ModeSpec(c, ModeKind.AUXILIARY_PAIR_MEMBER, fc, kappa, dd[c]),
                           ModeSpec(d, ModeKind.AUXILIARY_PAIR_MEMBER, fd, kappa, dd[d])))


def build_intermediate_qubit_model(p: EffectiveParams, mode: str = "a",
                                   dims: Mapping[str, int] | None = None,
                                   supermodes: tuple[str, str] = ("c", "d")
                                   ) -> MasterEquationModel:
    """H' = Omega (c†c + d†d) + Delta (c†c - d†d) + f (a d c† + a† d† c).

    Mechanics sit in their own interaction picture; supermodes are damped at
    ``p.kappa`` when it is positive.
    """
    c, d = supermodes
    space = _qubit_space(mode, c, d, dims, p.omega_big, p.delta, p.kappa)
    h = TermSum(space)
    for x, w in ((c, p.omega_big + p.delta), (d, p.omega_big - p.delta)):
        if w:
            h = h.add_monomial(w, monomial(f"{x}+", x))
    if p.f:
        h = h.add_monomial(p.f, monomial(f"{c}+", mode, d))
        h = h.add_monomial(p.f, monomial(f"{mode}+", f"{d}+", c))
    return MasterEquationModel(space, h, _damping(space),
                               {"kind": "intermediate_qubit", "mech": mode, "c": c, "d": d,
                                "omega": p.omega_big, "delta": p.delta, "f": p.f,
                                "kappa": p.kappa})


def build_driven_qubit_model(p: EffectiveParams, mode: str = "a",
                             dims: Mapping[str, int] | None = None,
                             supermodes: tuple[str, str] = ("c", "d")) -> MasterEquationModel:
    """The qubit model with supermode c driven and displaced by alpha.

    Frame of the drive, which sits ``p.omega_big`` above c: c has frequency
    -Omega and d has -Omega - 2 Delta. Displacing c -> c + alpha adds
    f (alpha* a d + alpha a† d†).
    """
    c, d = supermodes
    space = _qubit_space(mode, c, d, dims, 1.0, 0.0, p.kappa)
    alpha = complex(p.alpha)
    h = TermSum(space)
    h = h.add_monomial(-p.omega_big, monomial(f"{c}+", c))
    h = h.add_monomial(-p.omega_big - 2 * p.delta, monomial(f"{d}+", d))
    if p.f:
        h = h.add_monomial(p.f, monomial(f"{c}+", mode, d))
        h = h.add_monomial(p.f, monomial(f"{mode}+", f"{d}+", c))
        if alpha:
            h = h.add_monomial(p.f * np.conj(alpha), monomial(mode, d))
            h = h.add_monomial(p.f * alpha, monomial(f"{mode}+", f"{d}+"))
    chi, gam = kerr_rates(p.kerr_prefactor, p.omega_big, p.kappa) if (p.omega_big or p.kappa) \
        else (0.0, 0.0)
    return MasterEquationModel(space, h, _damping(space),
                               {"kind": "driven_qubit", "chi": chi, "Gamma": gam,
                                "epsilon": p.epsilon})


def build_displaced_kerr_coupling(p: EffectiveParams, mode: str = "a", fast: str = "c",
                                  dims: Mapping[str, int] | None = None) -> MasterEquationModel:
    """-Omega c†c + K (c + c†) a†a with K = eps f |alpha| / 2.

    This is the dispersive model after displacing the driven supermode, keeping
    only the piece linear in the fluctuations (the shape the elimination rule
    acts on).
    """
    dd = {mode: 4, fast: 3, **(dims or {})}
    space = CompositeSpace((_mech(mode, dd[mode]),
                            ModeSpec(fast, ModeKind.AUXILIARY, 1.0, p.kappa, dd[fast])))
    K = p.kerr_prefactor
    h = TermSum(space).add_monomial(-p.omega_big, monomial(f"{fast}+", fast))
    for x in (fast, f"{fast}+"):
        h = h.add_monomial(K, monomial(x, f"{mode}+", mode))
    return MasterEquationModel(space, h, _damping(space), {"kind": "displaced_kerr", "K": K})


def number_op(space: CompositeSpace, label: str) -> SparseOperator:
    return monomial_operator(space, monomial(f"{label}+", label))

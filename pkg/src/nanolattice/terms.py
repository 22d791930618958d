"""Labeled operator sums with per-term rotation frequencies.

A :class:`TermSum` evaluates to ``sum_k c_k exp(-i w_k t) O_k``. Terms built
from ladder monomials keep their normal-ordered structure, which is what the
interaction-picture and RWA bookkeeping in :mod:`nanolattice.transforms`
works on.
"""
from __future__ import annotations

import cmath
from collections import defaultdict
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np

from .operators import (CompositeSpace, OperatorError, SparseOperator, annihilation,
                        creation, embed, identity)

# A normal-ordered ladder monomial: sorted tuple of (label, n_creation, n_annihilation).
Monomial = tuple[tuple[str, int, int], ...]

FREQ_ATOL = 1e-12


def monomial(*factors: str) -> Monomial:
    """Build a monomial from factor strings such as ``"b+"``, ``"b"``, ``"a"``.

    Factors of different modes commute; factors of the same mode must already
    be normal ordered (all ``+`` before plain ones).
    """
    counts: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    for f in factors:
        dag = f.endswith("+")
        label = f[:-1] if dag else f
        pq = counts[label]
        if dag:
            if pq[1]:
                raise OperatorError(f"factor {f!r} breaks normal order for mode {label!r}")
            pq[0] += 1
        else:
            pq[1] += 1
    return tuple(sorted((k, p, q) for k, (p, q) in counts.items()))


def monomial_adjoint(m: Monomial) -> Monomial:
    return tuple((k, q, p) for k, p, q in m)


def monomial_label(m: Monomial) -> str:
    if not m:
        return "1"
    parts = []
    for k, p, _ in m:
        parts += [f"{k}†"] * p
    for k, _, q in m:
        parts += [k] * q
    return "·".join(parts)


def monomial_operator(space: CompositeSpace, m: Monomial) -> SparseOperator:
    out = identity(space.total_dim)
    for label, p, q in m:
        d = space.mode(label).truncation_dim
        local = identity(d)
        for _ in range(p):
            local = local @ creation(d)
        for _ in range(q):
            local = local @ annihilation(d)
        out = out @ embed(local, space, label)
    return out


def monomial_rotation(m: Monomial, frequencies: Mapping[str, float]) -> float:
    """Extra rotation picked up in the frame of ``sum_m w_m m†m``.

    With the ``exp(-i w t)`` convention, each annihilation adds ``+w_m`` and
    each creation adds ``-w_m``.
    """
    return float(sum((q - p) * frequencies[k] for k, p, q in m if k in frequencies))


@dataclass(frozen=True)
class Term:
    coeff: complex
    op: SparseOperator
    rotation_frequency: float = 0.0
    label: str = ""
    ladder: Monomial | None = None
    kind: str = "interaction"  # "free" marks sum_m w_m m†m pieces

    def value_coeff(self, t: float) -> complex:
        return self.coeff * cmath.exp(-1j * self.rotation_frequency * t)


@dataclass(frozen=True)
class TermSum:
    space: CompositeSpace
    terms: tuple[Term, ...] = ()
    _dense: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if t.op.dim != self.space.total_dim:
                raise OperatorError(
                    f"term {t.label!r} has dimension {t.op.dim}, space has {self.space.total_dim}")

    # construction helpers -------------------------------------------------
    def add_monomial(self, coeff: complex, m: Monomial, rotation_frequency: float = 0.0,
                     kind: str = "interaction", label: str | None = None) -> "TermSum":
        term = Term(complex(coeff), monomial_operator(self.space, m), float(rotation_frequency),
                    label or monomial_label(m), m, kind)
        return replace(self, terms=self.terms + (term,), _dense=None)

    def add_operator(self, coeff: complex, op: SparseOperator, label: str,
                     rotation_frequency: float = 0.0, kind: str = "interaction") -> "TermSum":
        term = Term(complex(coeff), op, float(rotation_frequency), label, None, kind)
        return replace(self, terms=self.terms + (term,), _dense=None)

    def __add__(self, other: "TermSum") -> "TermSum":
        if other.space != self.space:
            raise OperatorError("cannot add TermSums on different spaces")
        return TermSum(self.space, self.terms + other.terms)

    def with_terms(self, terms: Iterable[Term]) -> "TermSum":
        return TermSum(self.space, tuple(terms))

    def simplified(self, atol: float = 1e-14) -> "TermSum":
        """Merge terms sharing ladder structure, kind, and rotation frequency."""
        merged: dict = {}
        order = []
        loose = []
        for t in self.terms:
            if t.ladder is None:
                loose.append(t)
                continue
            key = (t.ladder, t.kind, round(t.rotation_frequency / FREQ_ATOL) * FREQ_ATOL)
            if key in merged:
                merged[key] = replace(merged[key], coeff=merged[key].coeff + t.coeff)
            else:
                merged[key] = t
                order.append(key)
        kept = [merged[k] for k in order if abs(merged[k].coeff) > atol]
        return TermSum(self.space, tuple(kept) + tuple(loose))

    # evaluation -----------------------------------------------------------
    @property
    def is_static(self) -> bool:
        return all(t.rotation_frequency == 0.0 for t in self.terms)

    def _dense_ops(self):
        if self._dense is None:
            ops = np.array([t.op.to_dense() for t in self.terms]) if self.terms else \
                np.zeros((0, self.space.total_dim, self.space.total_dim), complex)
            coeffs = np.array([t.coeff for t in self.terms], complex)
            freqs = np.array([t.rotation_frequency for t in self.terms], float)
            object.__setattr__(self, "_dense", (ops, coeffs, freqs))
        return self._dense

    def dense_at(self, t: float) -> np.ndarray:
        ops, coeffs, freqs = self._dense_ops()
        if not len(coeffs):
            return np.zeros((self.space.total_dim,) * 2, complex)
        w = coeffs * np.exp(-1j * freqs * t)
        return np.tensordot(w, ops, axes=1)

    def evaluate(self, t: float = 0.0) -> SparseOperator:
        return SparseOperator.from_dense(self.dense_at(t))

    def static_operator(self) -> SparseOperator:
        if not self.is_static:
            raise OperatorError("TermSum has time-dependent terms")
        return self.evaluate(0.0)

    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    def ladder_set(self, atol: float = 1e-12) -> set[tuple[Monomial, complex, float]]:
        """Discrete fingerprint: (monomial, rounded coeff, rounded frequency)."""
        out = set()
        for t in self.simplified().terms:
            if t.ladder is None:
                raise OperatorError(f"term {t.label!r} has no ladder structure")
            c = complex(round(t.coeff.real, 12), round(t.coeff.imag, 12))
            out.add((t.ladder, c, round(t.rotation_frequency, 9)))
        return out

    def hermiticity_pairing(self, atol: float = 1e-12) -> bool:
        """True if every term has a partner (c*, O†, -w); self-partnering allowed."""
        terms = self.simplified().terms
        used = [False] * len(terms)
        for i, t in enumerate(terms):
            if used[i]:
                continue
            found = False
            for j in range(i, len(terms)):
                u = terms[j]
                if used[j] and j != i:
                    continue
                if abs(u.rotation_frequency + t.rotation_frequency) > 1e-9:
                    continue
                if abs(u.coeff - t.coeff.conjugate()) > atol * max(1.0, abs(t.coeff)):
                    continue
                if t.ladder is not None and u.ladder is not None:
                    same = u.ladder == monomial_adjoint(t.ladder)
                else:
                    same = u.op.allclose(t.op.adjoint(), atol)
                if same:
                    used[i] = used[j] = True
                    found = True
                    break
            if not found:
                return False
        return True


def substitute(m: Monomial, mapping: Mapping[str, Sequence[tuple[str, complex]]]
               ) -> dict[Monomial, complex]:
    """Expand ``m`` after replacing each mapped mode ``x -> sum_k u_k y_k``.

    Creation operators map to the conjugate combination. Because creations
    commute among themselves (likewise annihilations), the expansion of a
    normal-ordered monomial is again a sum of normal-ordered monomials.
    """
    create: dict[tuple, complex] = {(): 1.0}
    annih: dict[tuple, complex] = {(): 1.0}

    def times(poly, label, power, conj):
        images = mapping.get(label, [(label, 1.0)])
        for _ in range(power):
            nxt: dict[tuple, complex] = defaultdict(complex)
            for key, c in poly.items():
                for new_label, u in images:
                    nxt[tuple(sorted(key + (new_label,)))] += c * (np.conj(u) if conj else u)
            poly = dict(nxt)
        return poly

    for label, p, q in m:
        create = times(create, label, p, True)
        annih = times(annih, label, q, False)
    out: dict[Monomial, complex] = defaultdict(complex)
    for (ck, cc), (ak, ac) in product(create.items(), annih.items()):
        counts: dict[str, list[int]] = defaultdict(lambda: [0, 0])
        for lbl in ck:
            counts[lbl][0] += 1
        for lbl in ak:
            counts[lbl][1] += 1
        key = tuple(sorted((k, p, q) for k, (p, q) in counts.items()))
        out[key] += cc * ac
    return {k: v for k, v in out.items() if abs(v) > 1e-15}


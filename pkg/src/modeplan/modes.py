"""Contact mode enumeration and per-mode linear constraint assembly.

A contact mode assigns each contact one of four labels describing relative
motion at that contact: separate (S), fixed (F), right-slide (R) or
left-slide (L). Manipulator contacts are always fixed; only environment
contact labels are enumerated.

Constraint systems are assembled over the stacked variable
x = [object twist (3), finger contact velocities (2 per finger),
contact forces (normal, tangent+, tangent- per contact)].
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from itertools import product
from typing import Sequence

import numpy as np

from .geom2d import Contact, Pose
from .solver import solve_lp_feasibility

# Brute-force enumeration visits 4^n label vectors; keep n small.
MAX_ENUMERATION_CONTACTS = 10


class ContactLabel(IntEnum):
    SEPARATE = 0
    FIXED = 1
    RIGHT_SLIDE = 2
    LEFT_SLIDE = 3

    @property
    def code(self) -> str:
        return "SFRL"[int(self)]


LABEL_FROM_CODE = {lab.code: lab for lab in ContactLabel}


@dataclass(frozen=True)
class ContactMode:
    """Per-contact label vector, ordered to match its contact list."""

    labels: tuple[ContactLabel, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "labels", tuple(ContactLabel(lab) for lab in self.labels)
        )

    @classmethod
    def from_codes(cls, codes: str) -> "ContactMode":
        return cls(tuple(LABEL_FROM_CODE[c] for c in codes))

    def codes(self) -> str:
        return "".join(lab.code for lab in self.labels)

    def with_fixed_prefix(self, n_fingers: int) -> "ContactMode":
        return ContactMode((ContactLabel.FIXED,) * n_fingers + self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)


@dataclass
class ModeConstraints:
    """Linear constraints carved out by one contact mode.

    Feasible set: A_eq x = b_eq, A_ineq x >= b_ineq, where rows listed in
    strict_rows additionally demand a positive margin during feasibility
    tests. Right-hand sides are all zero; kept explicit for uniformity.
    """

    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ineq: np.ndarray
    b_ineq: np.ndarray
    strict_rows: tuple[int, ...]
    n_fingers: int
    n_contacts: int

    @property
    def n_variables(self) -> int:
        return 3 + 2 * self.n_fingers + 3 * self.n_contacts

    def twist_slice(self) -> slice:
        return slice(0, 3)

    def finger_velocity_slice(self) -> slice:
        return slice(3, 3 + 2 * self.n_fingers)

    def force_slice(self, contact_index: int | None = None) -> slice:
        base = 3 + 2 * self.n_fingers
        if contact_index is None:
            return slice(base, self.n_variables)
        return slice(base + 3 * contact_index, base + 3 * contact_index + 3)


def velocity_clause_rows(label: ContactLabel, row_n: np.ndarray, row_t: np.ndarray):
    """Equality and strict-inequality velocity rows for one labeled contact."""
    if label == ContactLabel.SEPARATE:
        return [], [row_n]
    if label == ContactLabel.FIXED:
        return [row_n, row_t], []
    if label == ContactLabel.RIGHT_SLIDE:
        return [row_n], [row_t]
    if label == ContactLabel.LEFT_SLIDE:
        return [row_n], [-row_t]
    raise ValueError(f"unknown label {label!r}")


def force_clause_rows(label: ContactLabel, mu: float):
    """Force rows over (lambda_n, lambda_t+, lambda_t-) for one labeled contact.

    Returns (equality rows, strict inequality rows); both lists of 3-vectors
    with zero right-hand side.
    """
    if label == ContactLabel.SEPARATE:
        return [np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0])], []
    if label == ContactLabel.FIXED:
        return [], [np.array([mu, -1.0, 0.0]), np.array([mu, 0.0, -1.0])]
    if label == ContactLabel.RIGHT_SLIDE:
        return [np.array([mu, 0.0, -1.0]), np.array([0.0, 1.0, 0.0])], []
    if label == ContactLabel.LEFT_SLIDE:
        return [np.array([mu, -1.0, 0.0]), np.array([0.0, 0.0, 1.0])], []
    raise ValueError(f"unknown label {label!r}")


def enumerate_env_modes(
    contacts: Sequence[Contact],
    q: Pose | None = None,
    sigma: float = 1e-6,
) -> list[ContactMode]:
    """All kinematically feasible label vectors for the environment contacts.

    A mode is feasible when the velocity clauses admit a twist whose strict
    rows clear a margin sigma; the all-fixed mode always admits the zero
    twist. Brute force over all 4^n label vectors with an LP filter.
    """
    n = len(contacts)
    if n == 0:
        return [ContactMode(())]
    if n > MAX_ENUMERATION_CONTACTS:
        raise ValueError(f"refusing to enumerate 4^{n} contact modes")
    rows = [c.velocity_rows() for c in contacts]
    out: list[ContactMode] = []
    for labels in product(tuple(ContactLabel), repeat=n):
        if all(lab == ContactLabel.FIXED for lab in labels):
            out.append(ContactMode(labels))
            continue
        eq_rows: list[np.ndarray] = []
        strict_rows: list[np.ndarray] = []
        for lab, (row_n, row_t) in zip(labels, rows):
            eqs, stricts = velocity_clause_rows(lab, row_n, row_t)
            eq_rows.extend(eqs)
            strict_rows.extend(stricts)
        A_eq = np.vstack(eq_rows) if eq_rows else None
        A_in = np.vstack(strict_rows)
        if solve_lp_feasibility(
            A_eq,
            None,
            A_in,
            None,
            strict_rows=range(len(strict_rows)),
            sigma=sigma,
        ):
            out.append(ContactMode(labels))
    return out


def assemble_mode_constraints(
    mode: ContactMode,
    contacts: Sequence[Contact],
    grasp_matrix: np.ndarray,
    n_fingers: int,
) -> ModeConstraints:
    """Velocity and force clauses of a full mode as one stacked linear system.

    ``contacts`` lists manipulator contacts first, then environment contacts,
    and ``mode`` labels them in the same order. Contact velocities are
    G^T v - finger velocity for manipulator rows and G^T v for environment
    rows, already substituted so every row acts on the stacked variable.
    """
    n_c = len(contacts)
    if len(mode) != n_c:
        raise ValueError(f"mode length {len(mode)} != contact count {n_c}")
    if grasp_matrix.shape != (3, 2 * n_c):
        raise ValueError("grasp matrix shape mismatch")
    if not (0 <= n_fingers <= n_c):
        raise ValueError("invalid finger count")
    nx = 3 + 2 * n_fingers + 3 * n_c
    lam_base = 3 + 2 * n_fingers

    eq_rows: list[np.ndarray] = []
    ineq_rows: list[np.ndarray] = []
    strict: list[int] = []

    def velocity_row(i: int, direction_col: np.ndarray, finger_axis: int) -> np.ndarray:
        row = np.zeros(nx)
        row[:3] = direction_col
        if i < n_fingers:
            row[3 + 2 * i + finger_axis] = -1.0
        return row

    for i, (c, label) in enumerate(zip(contacts, mode)):
        row_n = velocity_row(i, grasp_matrix[:, 2 * i], 0)
        row_t = velocity_row(i, grasp_matrix[:, 2 * i + 1], 1)
        eqs, stricts = velocity_clause_rows(label, row_n, row_t)
        eq_rows.extend(eqs)
        for r in stricts:
            strict.append(len(ineq_rows))
            ineq_rows.append(r)
        f_eqs, f_stricts = force_clause_rows(label, c.mu)
        for r3 in f_eqs:
            row = np.zeros(nx)
            row[lam_base + 3 * i : lam_base + 3 * i + 3] = r3
            eq_rows.append(row)
        for r3 in f_stricts:
            row = np.zeros(nx)
            row[lam_base + 3 * i : lam_base + 3 * i + 3] = r3
            strict.append(len(ineq_rows))
            ineq_rows.append(row)

    for j in range(3 * n_c):
        row = np.zeros(nx)
        row[lam_base + j] = 1.0
        ineq_rows.append(row)

    A_eq = np.vstack(eq_rows) if eq_rows else np.zeros((0, nx))
    A_in = np.vstack(ineq_rows) if ineq_rows else np.zeros((0, nx))
    return ModeConstraints(
        A_eq=A_eq,
        b_eq=np.zeros(A_eq.shape[0]),
        A_ineq=A_in,
        b_ineq=np.zeros(A_in.shape[0]),
        strict_rows=tuple(strict),
        n_fingers=n_fingers,
        n_contacts=n_c,
    )

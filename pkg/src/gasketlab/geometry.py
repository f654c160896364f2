"""Symbolic geometry of the Sierpinski gasket.

Points and cells are addressed symbolically. An :class:`Address` with blowup
``M`` and digits ``d1 ... dk`` names the closed triangle
``2**M * phi_{d1} o ... o phi_{dk}(G0)`` of side ``2**(M - k)``, where
``phi_d(x) = (x + a_d) / 2`` and ``a_0 = (0, 0)``, ``a_1 = (1, 0)``,
``a_2 = (1/2, sqrt(3)/2)`` are the corners of the unit gasket ``G0``.

All exact computations run on integer lattice coordinates in the basis
``e1 = (1, 0)``, ``e2 = (1/2, sqrt(3)/2)``; planar floats are derived views.
"""

from dataclasses import dataclass
from fractions import Fraction
import itertools
import math

import numpy as np

from ._validation import DomainError, check_alpha, check_nonneg_int

SQRT3_2 = math.sqrt(3.0) / 2.0
LOG2 = math.log(2.0)

# lattice (e1, e2) coordinates of the corners a_0, a_1, a_2
CORNERS = np.array([[0, 0], [1, 0], [0, 1]], dtype=np.int64)
LABELS = ("u", "v", "w")


@dataclass(frozen=True)
class FractalConstants:
    alpha: float
    d_f: float
    d_w: float
    d_s: float
    d_alpha: float

    @property
    def gamma(self):
        """Time exponent ``d_f / d_alpha`` of the stretched exponential."""
        return self.d_f / self.d_alpha

    @property
    def nu_exponent(self):
        """Intensity exponent ``(alpha/2) d_w / d_alpha``."""
        return 0.5 * self.alpha * self.d_w / self.d_alpha

    @property
    def jump_exponent(self):
        """Space exponent ``alpha d_w / 2`` of exit-time and eigenvalue scaling."""
        return 0.5 * self.alpha * self.d_w


def constants(alpha):
    alpha = check_alpha(alpha)
    d_f = math.log(3.0) / LOG2
    d_w = math.log(5.0) / LOG2
    return FractalConstants(
        alpha=alpha,
        d_f=d_f,
        d_w=d_w,
        d_s=2.0 * d_f / d_w,
        d_alpha=d_f + alpha * d_w / 2.0,
    )


@dataclass(frozen=True, order=True)
class Address:
    """A cell (or vertex) of the blown-up gasket ``G^(M)``.

    For ``tag == "vertex"`` with digits ``d1 ... dk`` (k >= 1) the address
    names the point ``2**M phi_{d1} o ... o phi_{dk}(a_{dk})``, i.e. corner
    ``dk`` of the cell ``d1 ... d(k-1)``; the empty vertex address is the origin.
    """

    blowup: int
    digits: tuple = ()
    tag: str = "cell"

    def __post_init__(self):
        check_nonneg_int(self.blowup, "blowup")
        digits = tuple(int(d) for d in self.digits)
        if any(d not in (0, 1, 2) for d in digits):
            raise DomainError(f"digits must be in {{0,1,2}}, got {self.digits!r}")
        if self.tag not in ("cell", "vertex"):
            raise DomainError(f"tag must be 'cell' or 'vertex', got {self.tag!r}")
        object.__setattr__(self, "digits", digits)

    @property
    def depth(self):
        return len(self.digits)

    @property
    def side(self):
        return 2.0 ** (self.blowup - self.depth)

    def child(self, d):
        return Address(self.blowup, self.digits + (d,), self.tag)

    def to_text(self):
        text = f"{self.blowup}:{''.join(map(str, self.digits))}"
        return text + ":v" if self.tag == "vertex" else text

    @classmethod
    def from_text(cls, text):
        parts = text.strip().split(":")
        if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] != "v"):
            raise DomainError(f"malformed address text {text!r}")
        try:
            blowup = int(parts[0])
            digits = tuple(int(c) for c in parts[1])
        except ValueError as exc:
            raise DomainError(f"malformed address text {text!r}") from exc
        return cls(blowup, digits, "vertex" if len(parts) == 3 else "cell")

    def __str__(self):
        return self.to_text()


def _anchor_units(digits):
    """Anchor of the cell ``digits`` in lattice units of its own side."""
    i = j = 0
    for d in digits:
        i, j = 2 * i + CORNERS[d, 0], 2 * j + CORNERS[d, 1]
    return int(i), int(j)


def lattice_point(addr):
    """Exact lattice coordinates ``(i, j, s)`` with point ``2**s (i e1 + j e2)``."""
    if addr.tag == "cell" or addr.depth == 0:
        i, j = _anchor_units(addr.digits)
        return i, j, addr.blowup - addr.depth
    # corner d_k of the parent cell, expressed at the parent's scale
    parent, corner = addr.digits[:-1], addr.digits[-1]
    i, j = _anchor_units(parent)
    return i + int(CORNERS[corner, 0]), j + int(CORNERS[corner, 1]), addr.blowup - len(parent)


def lattice_to_plane(i, j, scale=1.0):
    i = np.asarray(i, dtype=float)
    j = np.asarray(j, dtype=float)
    return np.stack([scale * (i + 0.5 * j), scale * SQRT3_2 * j], axis=-1)


def address_to_point(addr):
    i, j, s = lattice_point(addr)
    return lattice_to_plane(i, j, 2.0 ** s)


def cell_corners(addr):
    """Exact corners of a cell as ``Fraction`` lattice coordinates."""
    i, j, s = lattice_point(Address(addr.blowup, addr.digits))
    scale = Fraction(2) ** s
    return [((i + int(c[0])) * scale, (j + int(c[1])) * scale) for c in CORNERS]


def cell_measure(depth, blowup):
    depth = check_nonneg_int(depth, "depth")
    blowup = check_nonneg_int(blowup, "blowup")
    return 3.0 ** (blowup - depth)


def enumerate_cells(depth, blowup=0):
    for digits in itertools.product(range(3), repeat=depth):
        yield Address(blowup, digits)


def cells_intersect(a, b):
    """Whether two cells share a point.

    Gasket cells are either nested (one address prefixes the other) or meet
    in at most one point, which is then a corner of both.
    """
    if a.blowup != b.blowup:
        raise DomainError("addresses must share the blowup level")
    short, long_ = (a, b) if a.depth <= b.depth else (b, a)
    if long_.digits[: short.depth] == short.digits:
        return True
    return bool(set(cell_corners(a)) & set(cell_corners(b)))


def vertex_label(n, m):
    """Label ``p1**n o p2**m (u)``; ``p2`` is the inverse of the 3-cycle ``p1``."""
    return LABELS[(int(n) - int(m)) % 3]


def label_index(n, m):
    return (int(n) - int(m)) % 3


def vertex_address(i, j, scale_exp, blowup):
    """Canonical vertex address of the lattice point ``2**scale_exp (i e1 + j e2)``.

    The digits name the coarsest cell (descending through the lowest digit
    at shared corners) having the point as a corner.
    """
    blowup = check_nonneg_int(blowup, "blowup")
    # work in units of the point's scale
    shift = blowup - scale_exp
    if shift < 0:
        if i % (1 << -shift) or j % (1 << -shift):
            raise DomainError("point is not a lattice point of the gasket")
        i, j, shift = i >> -shift, j >> -shift, 0
    size = 1 << shift
    ai = aj = 0
    digits = []
    while True:
        for c in range(3):
            if (ai + size * CORNERS[c, 0], aj + size * CORNERS[c, 1]) == (i, j):
                return Address(blowup, tuple(digits) + (c,), "vertex")
        if size == 1:
            raise DomainError("point does not lie on the gasket")
        half = size // 2
        for d in range(3):
            bi, bj = ai + half * CORNERS[d, 0], aj + half * CORNERS[d, 1]
            p, q = i - bi, j - bj
            if p >= 0 and q >= 0 and p + q <= half:
                ai, aj, size = bi, bj, half
                digits.append(d)
                break
        else:
            raise DomainError("point does not lie on the gasket")


def _unit_rotation(addr):
    """Label index of the anchor of the unit triangle containing ``addr``."""
    i, j = _anchor_units(addr.digits[: addr.blowup])
    return label_index(i, j)


def project0(addr):
    """Projection onto the unit gasket ``G^(0)``, matching vertex labels.

    The unit triangle containing the address is mapped affinely onto ``G0``
    so that corners with labels u, v, w land on (0,0), (1,0), (1/2, sqrt(3)/2);
    this permutes sub-cell digits cyclically.
    """
    M = addr.blowup
    if addr.tag == "cell":
        if addr.depth < M:
            raise DomainError(
                f"cell {addr} is coarser than a unit triangle; its projection is not a cell"
            )
        c = _unit_rotation(addr)
        return Address(0, tuple((d + c) % 3 for d in addr.digits[M:]))
    i, j, s = lattice_point(addr)
    if addr.depth - 1 < M:
        # a vertex of V^(0): send it to the corner of G0 carrying the same label
        shift = s
        li, lj = i << shift, j << shift
        return vertex_address(*CORNERS[label_index(li, lj)], 0, 0)
    c = _unit_rotation(addr)
    rotated = tuple((d + c) % 3 for d in addr.digits[M:])
    image = Address(0, rotated, "vertex")
    return vertex_address(*lattice_point(image), 0)


def anchors_units(depth):
    """Anchors of all ``3**depth`` cells of depth ``depth`` in lattice units of their side.

    Row order is lexicographic in the digit strings.
    """
    anchors = np.zeros((1, 2), dtype=np.int64)
    for _ in range(depth):
        anchors = (2 * anchors[:, None, :] + CORNERS[None, :, :]).reshape(-1, 2)
    return anchors

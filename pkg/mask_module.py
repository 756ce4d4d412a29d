"""Mask pattern module for the MUCHLAC toolkit.

Enumerates the canonical HLAC (single channel) and MUCHLAC (two channel
slots) mask patterns up to second order and groups them into orbits of
the dihedral group D4 (90 degree rotations and reflections).

A mask point is a (slot, dy, dx) tuple. Offsets are drawn from the lattice
{-m, 0, m} x {-m, 0, m} around a reference point, so the mask counts do not
depend on the displacement distance m.
"""

from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Any, Dict, List, Sequence, Tuple

Point = Tuple[int, int, int]
Points = Tuple[Point, ...]

HLAC = "hlac"
MUCHLAC = "muchlac"
MAX_ORDER = 2

# (a, b, c, d) maps (dy, dx) to (a*dy + b*dx, c*dy + d*dx)
D4_TRANSFORMS = (
    (1, 0, 0, 1),
    (0, -1, 1, 0),
    (-1, 0, 0, -1),
    (0, 1, -1, 0),
    (1, 0, 0, -1),
    (-1, 0, 0, 1),
    (0, 1, 1, 0),
    (0, -1, -1, 0),
)


class MaskError(ValueError):
    """Raised for unsupported enumeration requests or malformed masks."""


@dataclass(frozen=True)
class MaskPattern:
    """A canonical multiset of (slot, dy, dx) points.

    Attributes:
        points: Sorted points; (0, 0, 0) is always present.
        distance: Displacement distance m the offsets were drawn with.
        kind: "hlac" or "muchlac".
    """

    points: Points
    distance: int
    kind: str = HLAC

    @property
    def order(self) -> int:
        return len(self.points) - 1

    @property
    def slots(self) -> Tuple[int, ...]:
        return tuple(sorted({slot for slot, _, _ in self.points}))

    def as_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "order": self.order,
            "distance": self.distance,
            "points": [list(point) for point in self.points],
        }


@dataclass(frozen=True)
class MaskGroup:
    """One D4 orbit of canonical masks.

    Attributes:
        group_id: Position of the orbit in the orbit list.
        member_indices: Indices into the mask list, ascending.
        variants: Distinct translation classes (slots fixed, no slot swap)
            reached from the first member by the eight transforms. Summing
            a feature over the variants gives the rotation/reflection
            invariant component.
    """

    group_id: int
    member_indices: Tuple[int, ...]
    variants: Tuple[Points, ...]


def _swap_slots(points: Sequence[Point]) -> Points:
    return tuple((1 - slot, dy, dx) for slot, dy, dx in points)


def canonicalize(points: Sequence[Point], allow_swap: bool = False) -> Points:
    """Return the canonical representative of a mask's equivalence class.

    Candidates are produced by (optionally) swapping the two slot labels and
    translating one slot-0 point to the origin; the candidate with the
    smallest sorted (slot, dy, dx) tuple wins.

    Args:
        points: Any (slot, dy, dx) multiset.
        allow_swap: Also treat slot replacement as an equivalence.

    Raises:
        MaskError: If no point sits in slot 0 of any variant.
    """
    variants = [tuple(points)]
    if allow_swap:
        variants.append(_swap_slots(points))

    best = None
    for variant in variants:
        for slot, ref_y, ref_x in variant:
            if slot != 0:
                continue
            candidate = tuple(sorted((s, y - ref_y, x - ref_x) for s, y, x in variant))
            if best is None or candidate < best:
                best = candidate

    if best is None:
        raise MaskError(f"mask {tuple(points)} has no slot-0 point")
    return best


def transform_points(points: Sequence[Point], transform: Tuple[int, int, int, int]) -> Points:
    """Apply one D4 transform to the offsets of a mask, keeping slots."""
    a, b, c, d = transform
    return tuple((slot, a * dy + b * dx, c * dy + d * dx) for slot, dy, dx in points)


def _lattice(m: int) -> List[Tuple[int, int]]:
    return [(dy, dx) for dy in (-m, 0, m) for dx in (-m, 0, m)]


def _sorted_masks(classes: set, m: int, kind: str) -> List[MaskPattern]:
    ordered = sorted(classes, key=lambda pts: (len(pts) - 1, pts))
    return [MaskPattern(points=pts, distance=m, kind=kind) for pts in ordered]


def enumerate_hlac_masks(m: int, max_order: int = MAX_ORDER) -> List[MaskPattern]:
    """Enumerate single-channel masks up to max_order, deduped under shift.

    Args:
        m: Displacement distance (>= 1).
        max_order: Highest order N (0..2).

    Returns:
        List[MaskPattern]: Canonical masks sorted by (order, points);
            35 masks for max_order 2.

    Raises:
        MaskError: If m < 1 or max_order is outside 0..2.
    """
    if m < 1:
        raise MaskError("displacement distance m must be >= 1")
    if max_order < 0 or max_order > MAX_ORDER:
        raise MaskError(f"max_order {max_order} unsupported (0..{MAX_ORDER})")

    classes = set()
    for order in range(max_order + 1):
        for combo in combinations_with_replacement(_lattice(m), order):
            points = ((0, 0, 0),) + tuple((0, dy, dx) for dy, dx in combo)
            classes.add(canonicalize(points))

    return _sorted_masks(classes, m, HLAC)


def enumerate_muchlac_masks(m: int, max_order: int = MAX_ORDER, n_slots: int = 2) -> List[MaskPattern]:
    """Enumerate cross-channel masks, deduped under shift and slot swap.

    The reference point sits in slot 0 and at least one displacement point
    reads slot 1.

    Args:
        m: Displacement distance (>= 1).
        max_order: Highest order N (1..2).
        n_slots: Number of channel slots; only 2 is supported.

    Returns:
        List[MaskPattern]: 5 first-order and 77 second-order masks for
            max_order 2, sorted by (order, points).

    Raises:
        MaskError: On n_slots != 2, max_order outside 1..2 or m < 1.
    """
    if n_slots != 2:
        raise MaskError(f"n_slots={n_slots} unsupported (only 2 channel slots)")
    if m < 1:
        raise MaskError("displacement distance m must be >= 1")
    if max_order < 1 or max_order > MAX_ORDER:
        raise MaskError(f"max_order {max_order} unsupported for cross-channel masks (1..{MAX_ORDER})")

    labelled = [(slot, dy, dx) for slot in (0, 1) for dy, dx in _lattice(m)]

    classes = set()
    for order in range(1, max_order + 1):
        for combo in combinations_with_replacement(labelled, order):
            if all(slot == 0 for slot, _, _ in combo):
                continue
            classes.add(canonicalize(((0, 0, 0),) + combo, allow_swap=True))

    return _sorted_masks(classes, m, MUCHLAC)


def enumerate_masks(kind: str, m: int, max_order: int = MAX_ORDER) -> List[MaskPattern]:
    """Dispatch to the HLAC or MUCHLAC enumerator by name."""
    if kind == HLAC:
        return enumerate_hlac_masks(m, max_order)
    if kind == MUCHLAC:
        return enumerate_muchlac_masks(m, max_order)
    raise MaskError(f"unknown mask kind '{kind}'")


def d4_orbits(masks: List[MaskPattern]) -> List[MaskGroup]:
    """Partition masks into orbits under rotations and reflections.

    Each transform acts on offsets with slots fixed; the result is
    re-canonicalized with the same equivalence the enumeration used.

    Args:
        masks: Canonical masks from one enumeration call.

    Returns:
        List[MaskGroup]: Orbits ordered by their smallest member index.

    Raises:
        MaskError: If a transformed mask is not in the list.
    """
    if not masks:
        return []

    kinds = {mask.kind for mask in masks}
    if len(kinds) != 1:
        raise MaskError("masks must come from a single enumeration")
    allow_swap = masks[0].kind == MUCHLAC

    index_of = {mask.points: index for index, mask in enumerate(masks)}
    parent = list(range(len(masks)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for index, mask in enumerate(masks):
        for transform in D4_TRANSFORMS:
            image = canonicalize(transform_points(mask.points, transform), allow_swap)
            if image not in index_of:
                raise MaskError(f"mask {index} maps outside the mask list; not one enumeration?")
            root_a, root_b = find(index), find(index_of[image])
            if root_a != root_b:
                parent[max(root_a, root_b)] = min(root_a, root_b)

    members: Dict[int, List[int]] = {}
    for index in range(len(masks)):
        members.setdefault(find(index), []).append(index)

    groups = []
    for group_id, root in enumerate(sorted(members)):
        first = masks[members[root][0]].points
        variants = sorted(
            {canonicalize(transform_points(first, t)) for t in D4_TRANSFORMS}
        )
        groups.append(
            MaskGroup(
                group_id=group_id,
                member_indices=tuple(members[root]),
                variants=tuple(variants),
            )
        )

    return groups


def mask_total_degree(mask: MaskPattern) -> int:
    """Number of points counted with multiplicity (degree of the monomial)."""
    return len(mask.points)


def masks_to_json(masks: List[MaskPattern], groups: List[MaskGroup]) -> Dict[str, Any]:
    """Build the `masks dump` payload: every mask with its orbit id."""
    orbit_of = {}
    for group in groups:
        for index in group.member_indices:
            orbit_of[index] = group.group_id

    entries = []
    for index, mask in enumerate(masks):
        entry = mask.as_dict()
        entry["index"] = index
        entry["orbit"] = orbit_of.get(index)
        entries.append(entry)

    return {
        "count": len(masks),
        "orbit_count": len(groups),
        "masks": entries,
    }

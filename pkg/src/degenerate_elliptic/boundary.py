"""Rectangular domains, boundary segments and Fichera classification.

Nodes are numbered lexicographically with axis 0 varying fastest, so in 2-d
node ``(i, j)`` has index ``i + nx * j``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import GeometryError, InputError
from .operators import OperatorSpec, as_points

SIGMA_CLASSES = ("Sigma0", "Sigma1", "Sigma2", "Sigma3")
CONDITION_TAGS = ("dirichlet", "oblique_degenerate", "none", "neumann")
CONVENTIONS = ("fichera", "c2s")

_SIDE_NAMES = {1: (("left", "right"),), 2: (("left", "right"), ("bottom", "top"))}


@dataclass(frozen=True)
class BoundarySegment:
    """A flat face ``{x_axis = position}`` of an axis-aligned box."""

    axis: int
    side: int
    label: str
    position: float
    normal: np.ndarray
    bounds: Tuple[Tuple[float, float], ...]

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def tangent_axis(self) -> Optional[int]:
        if self.dim == 1:
            return None
        return 1 - self.axis

    def tangent_range(self) -> Tuple[float, float]:
        if self.dim == 1:
            return (0.0, 0.0)
        return self.bounds[self.tangent_axis]

    def contains(self, pts, tol=1e-12) -> bool:
        pts = np.atleast_2d(pts)
        lo, hi = self.bounds[self.axis]
        scale = max(1.0, abs(hi - lo))
        on_face = np.abs(pts[:, self.axis] - self.position) <= tol * scale
        return bool(np.all(on_face) and self.in_neighborhood(pts, tol))

    def in_neighborhood(self, pts, tol=1e-12) -> bool:
        pts = np.atleast_2d(pts)
        for k, (lo, hi) in enumerate(self.bounds):
            pad = tol * max(1.0, hi - lo)
            if np.any(pts[:, k] < lo - pad) or np.any(pts[:, k] > hi + pad):
                return False
        return True

    def point(self, t: float = 0.0) -> np.ndarray:
        """Point on the segment at tangential coordinate ``t`` (ignored in 1-d)."""
        x = np.empty(self.dim)
        x[self.axis] = self.position
        if self.dim == 2:
            x[self.tangent_axis] = t
        return x


class DomainGrid:
    """Tensor-product grid on an interval or axis-aligned rectangle."""

    def __init__(self, coords: Sequence[np.ndarray]):
        coords = tuple(np.asarray(c, dtype=float) for c in coords)
        if len(coords) not in (1, 2):
            raise InputError("only 1-d and 2-d domains are supported")
        for c in coords:
            if c.ndim != 1 or c.size < 3:
                raise InputError("each axis needs at least 3 nodes")
            if np.any(np.diff(c) <= 0):
                raise InputError("axis coordinates must be strictly increasing")
        self.coords = coords
        self.dim = len(coords)
        self.bounds = tuple((float(c[0]), float(c[-1])) for c in coords)
        self.segments = self._make_segments()

    @classmethod
    def uniform(cls, bounds, counts):
        bounds = [tuple(map(float, b)) for b in bounds]
        counts = [int(n) for n in np.atleast_1d(counts)]
        if len(bounds) != len(counts):
            raise InputError("bounds and counts disagree in dimension")
        for lo, hi in bounds:
            if not hi > lo:
                raise InputError(f"empty axis range ({lo}, {hi})")
        return cls([np.linspace(lo, hi, n) for (lo, hi), n in zip(bounds, counts)])

    @classmethod
    def graded(cls, bounds, counts, grading=None):
        """Axis ``k`` is stretched as ``lo + (hi-lo) * s**p`` with ``p = grading[k]``.

        ``p > 1`` clusters nodes toward the lower end of the axis.
        """
        grading = [1.0] * len(bounds) if grading is None else list(grading)
        coords = []
        for (lo, hi), n, p in zip(bounds, counts, grading):
            s = np.linspace(0.0, 1.0, int(n))
            coords.append(lo + (hi - lo) * s**p)
        return cls(coords)

    def _make_segments(self) -> List[BoundarySegment]:
        segs = []
        names = _SIDE_NAMES[self.dim]
        for axis in range(self.dim):
            for side in (0, 1):
                n = np.zeros(self.dim)
                n[axis] = 1.0 if side == 0 else -1.0
                segs.append(BoundarySegment(axis, side, names[axis][side], self.bounds[axis][side], n, self.bounds))
        return segs

    # ------------------------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(c.size for c in self.coords)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.diff(c) for c in self.coords)

    def is_uniform(self, rtol=1e-12) -> bool:
        return all(np.allclose(h, h[0], rtol=rtol, atol=0) for h in self.spacing)

    @property
    def points(self) -> np.ndarray:
        if self.dim == 1:
            return self.coords[0].reshape(-1, 1).copy()
        X, Y = np.meshgrid(self.coords[0], self.coords[1], indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    def multi_index(self) -> np.ndarray:
        """``(n_nodes, dim)`` integer index array matching :attr:`points`."""
        if self.dim == 1:
            return np.arange(self.shape[0]).reshape(-1, 1)
        J, I = np.meshgrid(np.arange(self.shape[1]), np.arange(self.shape[0]), indexing="ij")
        return np.column_stack([I.ravel(), J.ravel()])

    def flat_index(self, idx) -> np.ndarray:
        idx = np.atleast_2d(idx)
        if self.dim == 1:
            return idx[:, 0]
        return idx[:, 0] + self.shape[0] * idx[:, 1]

    def segment(self, label: str) -> BoundarySegment:
        for s in self.segments:
            if s.label == label:
                return s
        raise GeometryError(f"no boundary segment labelled {label!r}")

    def segment_nodes(self, seg: BoundarySegment) -> np.ndarray:
        """Flat indices of all nodes on ``seg`` (corners included)."""
        mi = self.multi_index()
        target = 0 if seg.side == 0 else self.shape[seg.axis] - 1
        return np.nonzero(mi[:, seg.axis] == target)[0]

    def boundary_mask(self) -> np.ndarray:
        mi = self.multi_index()
        mask = np.zeros(self.n_nodes, dtype=bool)
        for k, n in enumerate(self.shape):
            mask |= (mi[:, k] == 0) | (mi[:, k] == n - 1)
        return mask

    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask()

    def refined(self, factor: int = 2) -> "DomainGrid":
        """Grid with each cell split into ``factor`` equal pieces."""
        coords = []
        for c in self.coords:
            s = np.linspace(0.0, 1.0, factor + 1)[:-1]
            fine = (c[:-1, None] + np.diff(c)[:, None] * s[None, :]).ravel()
            coords.append(np.append(fine, c[-1]))
        return DomainGrid(coords)

    def describe(self) -> dict:
        return {"dim": self.dim, "bounds": [list(b) for b in self.bounds], "shape": list(self.shape)}

    def __repr__(self):
        return f"DomainGrid(bounds={self.bounds}, shape={self.shape})"


# ---------------------------------------------------------------------------
# degeneracy and Fichera classification


def _interior_samples(dom: DomainGrid, n: int = 9) -> np.ndarray:
    axes = []
    for lo, hi in dom.bounds:
        axes.append(lo + (hi - lo) * (np.arange(n) + 0.5) / n)
    if dom.dim == 1:
        return axes[0].reshape(-1, 1)
    X, Y = np.meshgrid(*axes, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def coefficient_scale(op: OperatorSpec, dom: DomainGrid) -> float:
    """Largest Frobenius norm of ``a`` over interior sample points."""
    a = op.eval_a(_interior_samples(dom))
    return float(np.max(np.linalg.norm(a, axis=(1, 2))))


def drift_scale(op: OperatorSpec, dom: DomainGrid) -> float:
    pts = _interior_samples(dom)
    b = np.abs(op.eval_b(pts)).max()
    da = np.abs(op.eval_da(pts)).max()
    return float(max(b, da, 1e-300))


def probe_points(seg: BoundarySegment, n_probe: int) -> np.ndarray:
    """Points strictly inside the segment (the whole point in 1-d)."""
    if seg.dim == 1:
        return seg.point().reshape(1, 1)
    lo, hi = seg.tangent_range()
    t = lo + (hi - lo) * (np.arange(n_probe) + 0.5) / n_probe
    pts = np.empty((n_probe, 2))
    pts[:, seg.axis] = seg.position
    pts[:, seg.tangent_axis] = t
    return pts


def _normal_limit(values: np.ndarray) -> float:
    """Aitken-accelerated limit of a sequence sampled at geometrically shrinking steps."""
    v2, v1, v0 = values[-3], values[-2], values[-1]
    denom = v0 - 2.0 * v1 + v2
    if abs(denom) <= 1e-14 * max(abs(v0), abs(v1), abs(v2), 1e-300):
        return float(v0)
    est = v0 - (v0 - v1) ** 2 / denom
    # Aitken can overshoot below zero for monotone sequences heading to 0
    return float(max(est, 0.0)) if est < v0 else float(v0)


def normal_limits(op: OperatorSpec, dom: DomainGrid, seg: BoundarySegment, n_probe: int = 9,
                  levels: int = 20) -> np.ndarray:
    """Estimated ``lim ||a(x')||`` along the inward normal at each probe point."""
    pts = probe_points(seg, n_probe)
    lo, hi = dom.bounds[seg.axis]
    scale = hi - lo
    ts = scale * 2.0 ** -np.arange(1, levels + 1)
    out = np.empty(pts.shape[0])
    for k, x in enumerate(pts):
        xs = x[None, :] + ts[:, None] * seg.normal[None, :]
        if not seg.in_neighborhood(xs):
            raise GeometryError(f"degeneracy probes leave the domain at segment {seg.label!r}")
        norms = np.linalg.norm(op.eval_a(xs), axis=(1, 2))
        out[k] = _normal_limit(norms)
    return out


def detect_degenerate_boundary(op: OperatorSpec, dom: DomainGrid, eps_deg: Optional[float] = None,
                               n_probe: int = 9) -> Dict[str, bool]:
    """Flag each segment as degenerate (``a -> 0`` at every probe) or not."""
    if op.dim != dom.dim:
        raise GeometryError("operator and domain dimensions differ")
    eps_deg = 1e-10 if eps_deg is None else float(eps_deg)
    if not eps_deg > 0:
        raise InputError("eps_deg must be > 0")
    thresh = eps_deg * max(coefficient_scale(op, dom), 1e-300)
    return {seg.label: bool(np.all(normal_limits(op, dom, seg, n_probe) < thresh)) for seg in dom.segments}


def fichera_function(op: OperatorSpec, dom: DomainGrid, segment, x) -> np.ndarray:
    """``sum_k (b^k - sum_j d_j a^{kj}) n_k`` with inward normal ``n``."""
    seg = dom.segment(segment) if isinstance(segment, str) else segment
    pts, single = as_points(x, op.dim)
    if not seg.contains(pts, tol=1e-9):
        raise GeometryError(f"points are not on segment {seg.label!r}")
    val = (op.eval_b(pts) - op.eval_da(pts)) @ seg.normal
    return val[0] if single else val


@dataclass
class SegmentClass:
    label: str
    axis: int
    side: int
    t_range: Tuple[float, float]
    degenerate: bool
    fichera_min: float
    fichera_max: float
    sigma_class: str
    needs_dirichlet: bool
    needs_dirichlet_c2s: bool


@dataclass
class BoundaryClassification:
    entries: List[SegmentClass]
    eps_deg: float
    eps_f: float
    n_probe: int
    metadata: dict = field(default_factory=dict)

    def for_label(self, label: str) -> List[SegmentClass]:
        return [e for e in self.entries if e.label == label]

    def sigma(self, label: str) -> str:
        """Class of a segment; raises if the segment was split."""
        found = {e.sigma_class for e in self.for_label(label)}
        if len(found) != 1:
            raise InputError(f"segment {label!r} carries classes {sorted(found)}")
        return found.pop()

    def degenerate_labels(self) -> List[str]:
        return sorted({e.label for e in self.entries if e.degenerate})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["segment", "t_lo", "t_hi", "degenerate", "sigma_class", "fichera_min", "fichera_max",
                    "plan_fichera", "plan_c2s"])
        for e in self.entries:
            w.writerow([e.label, repr(e.t_range[0]), repr(e.t_range[1]), int(e.degenerate), e.sigma_class,
                        repr(e.fichera_min), repr(e.fichera_max), _tag_for(e.sigma_class, "fichera"),
                        _tag_for(e.sigma_class, "c2s")])
        return buf.getvalue()


def _sigma_of(value: float, eps_f: float) -> str:
    if value > eps_f:
        return "Sigma1"
    if value < -eps_f:
        return "Sigma2"
    return "Sigma0"


def classify(op: OperatorSpec, dom: DomainGrid, eps_deg: Optional[float] = None, eps_f: Optional[float] = None,
             n_probe: int = 17) -> BoundaryClassification:
    """Fichera classification of every boundary segment.

    Degenerate segments whose Fichera function changes class along the
    segment are split into maximal single-class pieces; split points sit
    midway between neighbouring probes.
    """
    eps_deg = 1e-10 if eps_deg is None else float(eps_deg)
    if eps_f is None:
        eps_f = 1e-12 * drift_scale(op, dom)
    if not (eps_deg > 0 and eps_f > 0):
        raise InputError("tolerances must be > 0")
    degenerate = detect_degenerate_boundary(op, dom, eps_deg, n_probe=max(3, n_probe // 2))
    entries = []
    for seg in dom.segments:
        if not degenerate[seg.label]:
            entries.append(SegmentClass(seg.label, seg.axis, seg.side, seg.tangent_range(), False,
                                        float("nan"), float("nan"), "Sigma3", True, True))
            continue
        pts = probe_points(seg, n_probe)
        fv = np.atleast_1d(fichera_function(op, dom, seg, pts))
        classes = [_sigma_of(v, eps_f) for v in fv]
        if seg.dim == 1:
            entries.append(_degenerate_entry(seg, seg.tangent_range(), fv, classes[0]))
            continue
        t = pts[:, seg.tangent_axis]
        lo, hi = seg.tangent_range()
        start = 0
        for k in range(1, len(classes) + 1):
            if k == len(classes) or classes[k] != classes[start]:
                t0 = lo if start == 0 else 0.5 * (t[start - 1] + t[start])
                t1 = hi if k == len(classes) else 0.5 * (t[k - 1] + t[k])
                entries.append(_degenerate_entry(seg, (float(t0), float(t1)), fv[start:k], classes[start]))
                start = k
    return BoundaryClassification(entries, eps_deg, float(eps_f), n_probe)


def _degenerate_entry(seg, t_range, fv, sigma):
    return SegmentClass(seg.label, seg.axis, seg.side, t_range, True, float(np.min(fv)), float(np.max(fv)),
                        sigma, sigma == "Sigma2", False)


def _tag_for(sigma: str, convention: str) -> str:
    if convention == "fichera":
        return "dirichlet" if sigma in ("Sigma2", "Sigma3") else "none"
    if convention == "c2s":
        return "dirichlet" if sigma == "Sigma3" else "oblique_degenerate"
    raise InputError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")


class BoundaryPlan:
    """Per-segment boundary condition tags, optionally piecewise along a segment."""

    def __init__(self, entries):
        self.entries = []
        for label, t0, t1, tag in entries:
            if tag not in CONDITION_TAGS:
                raise InputError(f"unknown condition tag {tag!r}")
            self.entries.append((label, float(t0), float(t1), tag))

    @classmethod
    def from_mapping(cls, mapping: Dict[str, str]):
        return cls([(label, -np.inf, np.inf, tag) for label, tag in mapping.items()])

    @classmethod
    def coerce(cls, plan):
        return plan if isinstance(plan, cls) else cls.from_mapping(dict(plan))

    def labels(self):
        return {e[0] for e in self.entries}

    def tag_at(self, label: str, t: float = 0.0) -> str:
        best = None
        for lab, t0, t1, tag in self.entries:
            if lab == label and t0 - 1e-12 <= t <= t1 + 1e-12:
                best = tag
        if best is None:
            raise InputError(f"plan has no tag for segment {label!r} at t={t}")
        return best

    def tags(self, label: str):
        return {e[3] for e in self.entries if e[0] == label}

    def as_dict(self) -> Dict[str, str]:
        out = {}
        for label in sorted(self.labels()):
            tags = self.tags(label)
            out[label] = tags.pop() if len(tags) == 1 else "mixed"
        return out

    def __repr__(self):
        return f"BoundaryPlan({self.entries})"


def boundary_condition_plan(cls: BoundaryClassification, convention: str) -> BoundaryPlan:
    """Condition tags under the Fichera or the C^2_s convention."""
    if convention not in CONVENTIONS:
        raise InputError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")
    entries = []
    for e in cls.entries:
        t0, t1 = e.t_range
        if len(cls.for_label(e.label)) == 1:
            t0, t1 = -np.inf, np.inf
        entries.append((e.label, t0, t1, _tag_for(e.sigma_class, convention)))
    return BoundaryPlan(entries)


def dirichlet_everywhere(dom: DomainGrid) -> BoundaryPlan:
    return BoundaryPlan.from_mapping({s.label: "dirichlet" for s in dom.segments})

"""Phase-diagram rasters over a rectangle of complex parameters.

Every cell is classified at its center.  Cells whose center, edge midpoints
and corners disagree about membership in the interior are crossed by the
boundary; those cells take the tag of a boundary point located by bisection
inside the cell.  Corner points (alpha = 2 with vanishing derivative) are
isolated, so every crossed cell holding a boundary point is additionally
searched for a common root of g(2) = g'(2) = 0 inside it.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import optimize

from . import charfun
from .classifier import Region, classify_many
from .models import GaussianBinary, LatticePathological

BISECT_STEPS = 52

# gray level per tag in PGM output
PALETTE = {
    Region.OUTSIDE_DOMAIN: 0,
    Region.INTERIOR: 255,
    Region.BOUNDARY1: 32,
    Region.BOUNDARY12: 64,
    Region.BOUNDARY2: 96,
    Region.MOMENT_BLOWUP: 128,
    Region.EXTERIOR: 192,
    Region.INDETERMINATE: 160,
}

SVG_FILL = {
    Region.OUTSIDE_DOMAIN: "#2e7d32",
    Region.INTERIOR: "#fdd835",
    Region.BOUNDARY1: "#000000",
    Region.BOUNDARY12: "#1e88e5",
    Region.BOUNDARY2: "#e53935",
    Region.MOMENT_BLOWUP: "#8e24aa",
    Region.EXTERIOR: "#ffffff",
    Region.INDETERMINATE: "#9e9e9e",
}


@dataclass
class GridSpec:
    theta: tuple   # (lo, hi)
    eta: tuple
    n_theta: int
    n_eta: int

    def __post_init__(self):
        if self.n_theta < 2 or self.n_eta < 2:
            raise ValueError("resolution must be at least 2 x 2")
        if not (self.theta[1] > self.theta[0] and self.eta[1] > self.eta[0]):
            raise ValueError("ranges must be increasing")

    @property
    def h_theta(self):
        return (self.theta[1] - self.theta[0]) / self.n_theta

    @property
    def h_eta(self):
        return (self.eta[1] - self.eta[0]) / self.n_eta

    def centers(self):
        th = self.theta[0] + (np.arange(self.n_theta) + 0.5) * self.h_theta
        et = self.eta[0] + (np.arange(self.n_eta) + 0.5) * self.h_eta
        return th, et


@dataclass
class Overlay:
    kind: str          # arc | segment | point
    points: list       # [(theta, eta), ...]


@dataclass
class PhaseGrid:
    spec: GridSpec
    theta: np.ndarray
    eta: np.ndarray
    tags: np.ndarray          # (n_eta, n_theta) of Region
    alpha: np.ndarray         # nan where absent
    derivative: np.ndarray
    sign: np.ndarray          # "" | "Negative" | "Zero"
    refined: np.ndarray       # cell tagged from a boundary point inside it
    overlays: list = field(default_factory=list)

    @property
    def shape(self):
        return self.tags.shape

    def cell_index(self, theta, eta):
        i = int(np.clip(np.floor((eta - self.spec.eta[0]) / self.spec.h_eta), 0, self.spec.n_eta - 1))
        j = int(np.clip(np.floor((theta - self.spec.theta[0]) / self.spec.h_theta), 0, self.spec.n_theta - 1))
        return i, j

    def tag_at(self, theta, eta):
        return self.tags[self.cell_index(theta, eta)]


def is_interior(model, lams, tol=charfun.DEFAULT_TOL):
    res = charfun.analyze(model, lams, tol)
    with np.errstate(invalid="ignore"):
        return res.in_domain & ~res.zero & (res.g_min < -tol) & (res.p_min > 1.0)


_RANK = {Region.BOUNDARY1: 4, Region.BOUNDARY2: 2, Region.BOUNDARY12: 1}


def _rank(v):
    r = _RANK.get(v.tag, 0)
    if v.tag is Region.BOUNDARY2 and v.derivative_sign == "Zero":
        r = 3
    return r


def _classify_chunks(model, lams, tol, threads):
    if threads <= 1 or lams.size < 2048:
        return classify_many(model, lams, tol)
    chunks = np.array_split(lams, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: classify_many(model, c, tol), chunks))
    return [v for part in parts for v in part]


def _bisect_boundary(model, inside, outside, tol):
    for _ in range(BISECT_STEPS):
        mid = 0.5 * (inside + outside)
        ins = is_interior(model, mid, tol)
        inside = np.where(ins, mid, inside)
        outside = np.where(ins, outside, mid)
    return inside, outside


def _real_solve(model, lo, hi):
    """Real theta in [lo, hi] with g'(1) = 0, where the real interior ends (alpha = 1)."""
    lo, hi = max(lo, model.theta_domain[0]), hi
    if not (bool(model.theta_in_domain(lo)) and bool(model.theta_in_domain(hi))):
        return None

    def d1(t):
        return float(charfun.dlog_ratio(model, np.array([complex(t, 0.0)]), 1.0)[0])

    a, b = d1(lo), d1(hi)
    if not (np.isfinite(a) and np.isfinite(b)) or a * b > 0 or a == b:
        return None
    return complex(optimize.brentq(d1, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps), 0.0)


def _corner_solve(model, start, box):
    """Common root of g(2) and g'(2) near ``start``, if it lies in ``box``."""

    def eqs(v):
        lam = np.array([complex(v[0], v[1])])
        return [float(charfun.log_ratio(model, lam, 2.0)[0]), float(charfun.dlog_ratio(model, lam, 2.0)[0])]

    try:
        sol = optimize.root(eqs, [start.real, start.imag], method="hybr", options={"xtol": 1e-15})
    except (ValueError, FloatingPointError):
        return None
    # hybr reports failure when xtol is below attainable precision; judge by residual
    if not np.all(np.isfinite(sol.fun)) or np.max(np.abs(sol.fun)) > 1e-12:
        return None
    th, et = sol.x
    (t0, t1), (e0, e1) = box
    if t0 <= th <= t1 and e0 <= et <= e1:
        return complex(th, et)
    return None


def phase_raster(model, spec, tol=charfun.DEFAULT_TOL, seed=0, threads=1, refine=True):
    """Classify every cell of ``spec`` (a ``GridSpec``); ``seed`` is recorded for parity
    with the stochastic commands, the built-in classification being deterministic."""
    th, et = spec.centers()
    tt, ee = np.meshgrid(th, et)
    centers = (tt + 1j * ee).ravel()
    verdicts = _classify_chunks(model, centers, tol, threads)
    n = centers.size
    tags = np.array([v.tag for v in verdicts], dtype=object)
    alpha = np.array([np.nan if v.alpha is None else v.alpha for v in verdicts])
    deriv = np.array([np.nan if v.derivative is None else v.derivative for v in verdicts])
    sign = np.array([v.derivative_sign or "" for v in verdicts], dtype=object)
    refined = np.zeros(n, dtype=bool)

    if refine:
        ht, he = spec.h_theta / 2, spec.h_eta / 2
        offsets = np.array([complex(a * ht, b * he) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)])
        probes = centers[:, None] + offsets[None, :]
        inside_c = is_interior(model, centers, tol)
        inside_p = is_interior(model, probes.ravel(), tol).reshape(probes.shape)
        crossed = np.flatnonzero((inside_p != inside_c[:, None]).any(axis=1))
        # cells cut by the real axis also probe along it, where real-type
        # boundary points (alpha = 1) live
        real_cells = crossed[np.abs(centers[crossed].imag) <= he]
        pairs_in, pairs_out, owner = [], [], []
        for k in crossed:
            for j in np.flatnonzero(inside_p[k] != inside_c[k]):
                a, b = centers[k], probes[k, j]
                pairs_in.append(a if inside_c[k] else b)
                pairs_out.append(b if inside_c[k] else a)
                owner.append(k)
        real_roots = {}
        for k in real_cells:
            row = centers[k].real + np.array([-ht, 0.0, ht])
            ins = is_interior(model, row.astype(complex), tol)
            for a, b, ia, ib in ((row[0], row[1], ins[0], ins[1]), (row[1], row[2], ins[1], ins[2])):
                if ia != ib:
                    pairs_in.append(complex(a if ia else b))
                    pairs_out.append(complex(b if ia else a))
                    owner.append(k)
            root = _real_solve(model, row[0], row[2])
            if root is not None:
                real_roots[k] = root
        if owner:
            owner = np.array(owner)
            _, bnd = _bisect_boundary(model, np.array(pairs_in), np.array(pairs_out), tol)
            bverdicts = classify_many(model, bnd, tol)
            best = {}
            has_boundary = {}
            for k, v, b in zip(owner, bverdicts, bnd):
                if _rank(v) > _rank(best.get(k, verdicts[k])) and _rank(v) > 0:
                    best[k] = v
                if v.tag.is_boundary:
                    has_boundary[k] = True
            for k, root in real_roots.items():
                v = classify_many(model, np.array([root]), tol)[0]
                if _rank(v) > 0 and _rank(v) >= _rank(best.get(k, verdicts[k])):
                    best[k] = v
            for k in has_boundary:
                c = centers[k]
                box = ((c.real - ht, c.real + ht), (c.imag - he, c.imag + he))
                root = _corner_solve(model, c, box)
                if root is not None:
                    v = classify_many(model, np.array([root]), tol)[0]
                    if _rank(v) >= _rank(best.get(k, verdicts[k])):
                        best[k] = v
            for k, v in best.items():
                tags[k] = v.tag
                alpha[k] = np.nan if v.alpha is None else v.alpha
                deriv[k] = np.nan if v.derivative is None else v.derivative
                sign[k] = v.derivative_sign or ""
                refined[k] = True

    shape = (spec.n_eta, spec.n_theta)
    return PhaseGrid(spec, th, et, tags.reshape(shape), alpha.reshape(shape), deriv.reshape(shape),
                     sign.reshape(shape), refined.reshape(shape), overlays_for(model, spec))


# ---------------------------------------------------------------------------
# closed-form overlays


def overlays_for(model, spec, n=200):
    if isinstance(model, GaussianBinary):
        return gaussian_overlays(n)
    if isinstance(model, LatticePathological):
        return lattice_overlays(spec, n)
    return []


def gaussian_overlays(n=200):
    """Two arcs of theta^2 + eta^2 = log 2, four segments |eta| = sqrt(2 log 2) - |theta|,
    and the two real points +-sqrt(2 log 2)."""
    r = math.sqrt(math.log(2))
    c = math.sqrt(math.log(2) / 2)
    a = math.sqrt(2 * math.log(2))
    out = []
    th = np.linspace(-c, c, n)
    for s in (1, -1):
        out.append(Overlay("arc", [(float(t), float(s * math.sqrt(r * r - t * t))) for t in th]))
    for st in (1, -1):
        for se in (1, -1):
            out.append(Overlay("segment", [(st * c, se * (a - c)), (st * a, 0.0)]))
    out.append(Overlay("point", [(a, 0.0)]))
    out.append(Overlay("point", [(-a, 0.0)]))
    return out


def lattice_overlays(spec, n=200):
    """Curves eta = +-arccos(e^{-theta}) + 2 pi k and points 2 pi i k inside the window."""
    lo = max(spec.theta[0], 1e-9)
    th = np.linspace(lo, spec.theta[1], n)
    base = np.arccos(np.exp(-th))
    out = []
    kmin = math.floor((spec.eta[0] - math.pi / 2) / (2 * math.pi))
    kmax = math.ceil((spec.eta[1] + math.pi / 2) / (2 * math.pi))
    for k in range(kmin, kmax + 1):
        for s in (1, -1):
            eta = s * base + 2 * math.pi * k
            keep = (eta >= spec.eta[0]) & (eta <= spec.eta[1])
            if keep.sum() >= 2:
                out.append(Overlay("arc", [(float(a), float(b)) for a, b in zip(th[keep], eta[keep])]))
        e = 2 * math.pi * k
        if spec.eta[0] <= e <= spec.eta[1]:
            out.append(Overlay("point", [(0.0, e)]))
    return out


# ---------------------------------------------------------------------------
# rendering


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def to_csv(grid):
    lines = ["theta,eta,tag,alpha,derivative"]
    for i, e in enumerate(grid.eta):
        for j, t in enumerate(grid.theta):
            lines.append(f"{float(t)!r},{float(e)!r},{grid.tags[i, j].value},{_fmt(grid.alpha[i, j])},{_fmt(grid.derivative[i, j])}")
    return "\n".join(lines) + "\n"


def to_pgm(grid):
    """Binary PGM, one pixel per cell, largest eta on the top row."""
    h, w = grid.shape
    pix = np.array([[PALETTE[t] for t in row] for row in grid.tags[::-1]], dtype=np.uint8)
    return f"P5\n{w} {h}\n255\n".encode() + pix.tobytes()


def to_svg(grid, cell_px=4):
    spec = grid.spec
    h, w = grid.shape
    width, height = w * cell_px, h * cell_px

    def px(t, e):
        x = (t - spec.theta[0]) / (spec.theta[1] - spec.theta[0]) * width
        y = (spec.eta[1] - e) / (spec.eta[1] - spec.eta[0]) * height
        return f"{x:.3f},{y:.3f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">', '<g class="cells">']
    for i in range(h):
        for j in range(w):
            tag = grid.tags[i, j]
            y = (h - 1 - i) * cell_px
            out.append(f'<rect x="{j * cell_px}" y="{y}" width="{cell_px}" height="{cell_px}" '
                       f'fill="{SVG_FILL[tag]}" data-tag="{tag.value}"/>')
    out.append("</g>")
    out.append('<g class="overlays" fill="none" stroke-width="1.5">')
    for ov in grid.overlays:
        if ov.kind == "point":
            x, y = px(*ov.points[0]).split(",")
            out.append(f'<circle class="point" cx="{x}" cy="{y}" r="3" fill="black"/>')
        else:
            color = "red" if ov.kind == "arc" else "blue"
            pts = " ".join(px(t, e) for t, e in ov.points)
            out.append(f'<polyline class="{ov.kind}" stroke="{color}" points="{pts}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render(grid, fmt, path=None):
    """Render to ``csv``, ``pgm`` or ``svg``; writes ``path`` if given, returns the payload."""
    if fmt == "csv":
        data = to_csv(grid).encode()
    elif fmt == "pgm":
        data = to_pgm(grid)
    elif fmt == "svg":
        data = to_svg(grid).encode()
    else:
        raise ValueError(f"unsupported raster format {fmt!r}")
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data

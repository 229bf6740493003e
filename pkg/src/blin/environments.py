"""Lipschitz reward instances with Gaussian noise.

Every instance evaluates its mean vectorised over an (n, d) array of arms and
reports per-cube extrema of the mean, exactly when the geometry allows it and
on a regular grid otherwise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .geometry import CubeSet, sup_distance

# Grid points per axis per cube for the approximate extrema oracle.
GRID_RESOLUTION = 33

# Upper limit on cubes enumerated at one scale by the zooming oracle.
MAX_ORACLE_CUBES = 1 << 22

# Evaluation points processed per chunk by the grid oracle.
_CHUNK_POINTS = 1 << 21


class InfeasiblePeaksError(ValueError):
    pass


class UndefinedEstimateError(ValueError):
    pass


class ResolutionWarning(UserWarning):
    pass


class NoiseModel:
    """Seeded i.i.d. N(0, sigma^2) stream, consumed in pull order.

    ``sigma = 0`` is the noiseless test hook.
    """

    def __init__(self, seed: int, sigma: float = 1.0):
        self.seed = int(seed)
        self.sigma = float(sigma)
        self._rng = np.random.default_rng(self.seed)

    def draw(self, n: int) -> np.ndarray:
        eps = self._rng.standard_normal(n)
        if self.sigma == 0.0:
            return np.zeros(n)
        return self.sigma * eps


def _as_arms(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, d) if x.size == d else x.reshape(-1, 1)
    if x.shape[-1] != d:
        raise ValueError(f"expected arms of dimension {d}, got shape {x.shape}")
    return x


def _cube_bounds(depth: int, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(indices, dtype=float)
    return np.ldexp(idx, -depth), np.ldexp(idx + 1.0, -depth)


class RewardInstance:
    """Base class: mean function on [0,1]^d with a known optimum."""

    kind = "abstract"
    metric = "linf"
    exact_extrema = False

    def __init__(self, d: int, mu_star: float, x_star, lipschitz: float):
        self.d = int(d)
        self.mu_star = float(mu_star)
        self.x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
        # Lipschitz constant with respect to the sup norm
        self.lipschitz = float(lipschitz)

    def mean(self, x) -> np.ndarray:
        raise NotImplementedError

    def gap(self, x) -> np.ndarray:
        return self.mu_star - self.mean(x)

    def mean_at(self, x) -> float:
        return float(self.mean(np.asarray(x, dtype=float).reshape(1, self.d))[0])

    # -- extrema over standard cubes -------------------------------------------------

    def cube_min(self, depth: int, indices) -> np.ndarray:
        return self._grid_extrema(depth, indices, np.min)

    def cube_max(self, depth: int, indices) -> np.ndarray:
        return self._grid_extrema(depth, indices, np.max)

    def cube_extrema(self, depth: int, indices) -> tuple[np.ndarray, np.ndarray]:
        indices = np.atleast_2d(np.asarray(indices, dtype=np.int64))
        return self.cube_min(depth, indices), self.cube_max(depth, indices)

    def _grid_extrema(self, depth: int, indices, reduce, resolution: int = GRID_RESOLUTION):
        indices = np.atleast_2d(np.asarray(indices, dtype=np.int64))
        lo, _ = _cube_bounds(depth, indices)
        edge = math.ldexp(1.0, -depth)
        ticks = np.linspace(0.0, 1.0, resolution)
        offsets = np.stack(
            [a.ravel() for a in np.meshgrid(*([ticks] * self.d), indexing="ij")], axis=1
        ) * edge
        per = len(offsets)
        chunk = max(1, _CHUNK_POINTS // per)
        out = np.empty(len(indices))
        for s in range(0, len(indices), chunk):
            pts = lo[s:s + chunk, None, :] + offsets[None, :, :]
            vals = self.mean(pts.reshape(-1, self.d)).reshape(-1, per)
            out[s:s + chunk] = reduce(vals, axis=1)
        return out

    # -- serialisation ----------------------------------------------------------------

    def params(self) -> dict[str, Any]:
        return {}

    def descriptor(self, seed: int | None = None) -> dict[str, Any]:
        out = {"kind": self.kind, "d": self.d, "params": self.params()}
        if seed is not None:
            out["seed"] = int(seed)
        return out


class LinearInstance(RewardInstance):
    """mu(x) = x on [0, 1]."""

    kind = "linear"
    exact_extrema = True

    def __init__(self):
        super().__init__(1, 1.0, [1.0], 1.0)

    def mean(self, x):
        return _as_arms(x, 1)[:, 0].copy()

    def cube_min(self, depth, indices):
        return _cube_bounds(depth, np.atleast_2d(indices))[0][:, 0]

    def cube_max(self, depth, indices):
        return _cube_bounds(depth, np.atleast_2d(indices))[1][:, 0]


class ConstantInstance(RewardInstance):
    kind = "constant"
    exact_extrema = True

    def __init__(self, d: int = 2, value: float = 0.0):
        self.value = float(value)
        # every arm is optimal; the centre stands in for x_star
        super().__init__(d, self.value, [0.5] * d, 0.0)

    def mean(self, x):
        return np.full(len(_as_arms(x, self.d)), self.value)

    def cube_min(self, depth, indices):
        return np.full(len(np.atleast_2d(indices)), self.value)

    cube_max = cube_min

    def params(self):
        return {"value": self.value}


class TwoPeakInstance(RewardInstance):
    """mu(x) = 1 - 0.5 |x - x1|_2 - 0.3 |x - x2|_2 with x1 = (0.8, 0.7), x2 = (0.1, 0.1).

    Distances are Euclidean, so the constant w.r.t. the sup norm is 0.8 sqrt(2).
    The mean is concave, so its minimum over a box sits at a vertex.  The
    unconstrained maximiser is x1; for a box missing x1 the maximum lies on
    an edge, where a golden-section search on each edge finds it.
    """

    kind = "two-peak"
    metric = "l2"
    X1 = (0.8, 0.7)
    X2 = (0.1, 0.1)
    W1 = 0.5
    W2 = 0.3

    def __init__(self):
        self._x1 = np.array(self.X1)
        self._x2 = np.array(self.X2)
        mu_star = 1.0 - self.W2 * float(np.linalg.norm(self._x1 - self._x2))
        super().__init__(2, mu_star, [self.X1], (self.W1 + self.W2) * math.sqrt(2.0))

    def mean(self, x):
        x = _as_arms(x, 2)
        return (
            1.0
            - self.W1 * np.linalg.norm(x - self._x1, axis=1)
            - self.W2 * np.linalg.norm(x - self._x2, axis=1)
        )

    def cube_min(self, depth, indices):
        indices = np.atleast_2d(np.asarray(indices, dtype=np.int64))
        out = np.full(len(indices), np.inf)
        for dx in (0, 1):
            for dy in (0, 1):
                corner = np.ldexp((indices + np.array([dx, dy])).astype(float), -depth)
                out = np.minimum(out, self.mean(corner))
        return out

    def cube_max(self, depth, indices):
        lo, hi = _cube_bounds(depth, np.atleast_2d(indices))
        inside = np.all((lo <= self._x1) & (self._x1 <= hi), axis=1)
        best = np.full(len(lo), -np.inf)
        for axis in (0, 1):
            other = 1 - axis
            for fixed in (lo[:, other], hi[:, other]):
                a, b = lo[:, axis].copy(), hi[:, axis].copy()

                def f(s):
                    x = np.empty((len(s), 2))
                    x[:, axis], x[:, other] = s, fixed
                    return self.mean(x)

                best = np.maximum(best, _golden_max(f, a, b))
        best[inside] = self.mu_star
        return best


def _golden_max(f, a: np.ndarray, b: np.ndarray, iters: int = 90) -> np.ndarray:
    """Max of a concave 1-d function on [a, b], elementwise over arrays of intervals."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = b - g * (b - a)
        d_new = a + g * (b - a)
        c, d = c_new, d_new
        fc, fd = f(c), f(d)
    return np.maximum.reduce([fc, fd, f(a), f(b)])


class ConeInstance(RewardInstance):
    """mu(x) = max(floor, max_u (h_u - |x - u|_inf)) over a finite peak set.

    Peaks whose height does not exceed the floor contribute nothing and are
    dropped.  Cone supports (sup-balls of radius h_u - floor) must be pairwise
    disjoint; that makes the per-cube extrema exact.
    """

    kind = "cone"
    exact_extrema = True

    def __init__(self, peaks, heights, floor: float, label: str = "cone", meta=None):
        peaks = np.atleast_2d(np.asarray(peaks, dtype=float))
        heights = np.asarray(heights, dtype=float)
        if len(peaks) != len(heights):
            raise ValueError("one height per peak")
        keep = heights > floor
        self.peaks = peaks[keep]
        self.heights = heights[keep]
        self.floor = float(floor)
        self.label = label
        self.meta = dict(meta or {})
        d = peaks.shape[1]
        radii = self.heights - self.floor
        if len(self.peaks) > 1:
            dist = sup_distance(self.peaks[:, None, :], self.peaks[None, :, :])
            reach = radii[:, None] + radii[None, :]
            np.fill_diagonal(dist, np.inf)
            if np.any(dist <= reach):
                raise InfeasiblePeaksError("cone supports overlap")
        if len(self.heights):
            top = int(np.argmax(self.heights))
            mu_star, x_star = float(self.heights[top]), self.peaks[top]
        else:
            mu_star, x_star = self.floor, np.full(d, 0.5)
        super().__init__(d, mu_star, [x_star], 1.0)

    @property
    def radii(self) -> np.ndarray:
        return self.heights - self.floor

    def mean(self, x):
        x = _as_arms(x, self.d)
        out = np.full(len(x), self.floor)
        for u, h in zip(self.peaks, self.heights):
            np.maximum(out, h - sup_distance(x, u), out=out)
        return out

    def cube_max(self, depth, indices):
        lo, hi = _cube_bounds(depth, np.atleast_2d(indices))
        out = np.full(len(lo), self.floor)
        for u, h in zip(self.peaks, self.heights):
            # nearest-point sup distance from the peak to the box
            near = np.max(np.maximum(np.maximum(lo - u, u - hi), 0.0), axis=1)
            np.maximum(out, h - near, out=out)
        return out

    def cube_min(self, depth, indices):
        lo, hi = _cube_bounds(depth, np.atleast_2d(indices))
        out = np.full(len(lo), self.floor)
        for u, h in zip(self.peaks, self.heights):
            far = np.max(np.maximum(np.abs(lo - u), np.abs(hi - u)), axis=1)
            np.maximum(out, h - far, out=out)
        return out

    def params(self):
        return {
            "label": self.label,
            "floor": self.floor,
            "peaks": self.peaks.tolist(),
            "heights": self.heights.tolist(),
            **self.meta,
        }


def two_peak_instance() -> TwoPeakInstance:
    return TwoPeakInstance()


def linear_instance() -> LinearInstance:
    return LinearInstance()


def constant_instance(d: int = 2, value: float = 0.0) -> ConstantInstance:
    return ConstantInstance(d, value)


# -- lower-bound families -------------------------------------------------------------


def centered_lattice(r: float, d: int) -> np.ndarray:
    """floor(1/r)^d points of pitch r inside [0,1]^d, one of them the centre.

    Rows come in lexicographic order except that the centre is moved last.
    """
    if not 0 < r <= 1:
        raise InfeasiblePeaksError(f"peak separation must lie in (0, 1], got {r}")
    n = math.floor(1.0 / r + 1e-12)
    below = (n - 1) // 2
    ticks = 0.5 + r * np.arange(-below, n - below)
    ticks = np.clip(ticks, 0.0, 1.0)
    pts = np.stack([a.ravel() for a in np.meshgrid(*([ticks] * d), indexing="ij")], axis=1)
    mid = np.flatnonzero(np.all(pts == 0.5, axis=1))[0]
    order = [i for i in range(len(pts)) if i != mid] + [mid]
    return pts[order]


def reference_grid(T: int, B: int, d: int) -> np.ndarray:
    """T_j = T^{(1 - eps^j) / (1 - eps^B)}, eps = 1/(d+2), j = 0..B."""
    if B < 1:
        raise ValueError("need B >= 1")
    eps = 1.0 / (d + 2)
    j = np.arange(B + 1)
    grid = float(T) ** ((1.0 - eps ** j) / (1.0 - eps ** B))
    grid[-1] = float(T)
    return grid


@dataclass(frozen=True)
class PeakFamilyParams:
    index: int
    r: float
    peaks: np.ndarray = field(repr=False)
    flavor: str = "static"

    def __post_init__(self):
        peaks = np.atleast_2d(np.asarray(self.peaks, dtype=float))
        if self.flavor not in ("static", "adaptive"):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if np.any(peaks < 0) or np.any(peaks > 1):
            raise InfeasiblePeaksError("peaks must lie in [0,1]^d")
        M, d = peaks.shape
        if M * self.r ** d > 1 + 1e-9:
            raise InfeasiblePeaksError(f"{M} peaks at separation {self.r} do not fit in d={d}")
        if M > 1:
            dist = sup_distance(peaks[:, None, :], peaks[None, :, :])
            np.fill_diagonal(dist, np.inf)
            if dist.min() < self.r - 1e-12:
                raise InfeasiblePeaksError("peaks closer than the required separation")
        peaks.setflags(write=False)
        object.__setattr__(self, "peaks", peaks)

    @property
    def M(self) -> int:
        return len(self.peaks)

    @property
    def d(self) -> int:
        return self.peaks.shape[1]


def static_family_params(d: int, k: int, grid) -> PeakFamilyParams:
    """Peak family for batch k > 1 of a static grid: r_k = t_{k-1}^{-1/(d+2)}."""
    grid = np.asarray(grid, dtype=float)
    if not 2 <= k <= len(grid) - 1:
        raise ValueError(f"static construction needs 2 <= k <= B, got k={k}")
    r = float(grid[k - 1]) ** (-1.0 / (d + 2))
    return PeakFamilyParams(k, r, centered_lattice(r, d), "static")


def static_lower_bound_instance(params: PeakFamilyParams, i: int) -> ConeInstance:
    """Instance I_{k,i}: 3r/4 at u_1, 7r/8 at u_i (i >= 2), 5r/8 at the rest, floor r/2."""
    M, r = params.M, params.r
    if not 1 <= i <= M:
        raise IndexError(f"instance index must lie in 1..{M}, got {i}")
    heights = np.full(M, 0.625 * r)
    heights[0] = 0.75 * r
    if i >= 2:
        heights[i - 1] = 0.875 * r
    meta = {"family": "static", "k": params.index, "i": i, "r": r}
    return ConeInstance(params.peaks, heights, 0.5 * r, label=f"static-k{params.index}-i{i}", meta=meta)


def adaptive_world_params(d: int, T: int, B: int, j: int) -> PeakFamilyParams:
    """World j: r_j = 1 / (T_{j-1}^eps B), peaks on a centred lattice of pitch r_j."""
    if not 1 <= j <= B:
        raise ValueError(f"world index must lie in 1..{B}, got {j}")
    grid = reference_grid(T, B, d)
    r = 1.0 / (grid[j - 1] ** (1.0 / (d + 2)) * B)
    return PeakFamilyParams(j, r, centered_lattice(r, d), "adaptive")


def adaptive_lower_bound_world(j: int, k: int, d: int, T: int, B: int) -> ConeInstance:
    """Instance I_{j,k} (j < B) or I_B (j = B, k ignored).

    All worlds share the top peak at the centre of the cube (last lattice row).
    """
    r1 = adaptive_world_params(d, T, B, 1).r
    rB = adaptive_world_params(d, T, B, B).r
    params = adaptive_world_params(d, T, B, j)
    shared = params.peaks[-1]
    floor = 0.5 * r1
    meta = {"family": "adaptive", "j": j, "B": B, "T": T, "r_j": params.r, "r_1": r1, "r_B": rB}
    if j == B:
        return ConeInstance([shared], [floor + rB / 16], floor, label="adaptive-IB", meta=meta)
    if params.M < 2:
        raise InfeasiblePeaksError(f"world {j} has a single lattice point")
    if not 1 <= k <= params.M - 1:
        raise IndexError(f"instance index must lie in 1..{params.M - 1}, got {k}")
    meta["k"] = k
    peaks = [params.peaks[k - 1], shared]
    heights = [floor + params.r / 16 + rB / 16, floor + rB / 16]
    return ConeInstance(peaks, heights, floor, label=f"adaptive-j{j}-k{k}", meta=meta)


# -- zooming machinery --------------------------------------------------------------


def zooming_number(instance: RewardInstance, depth: int, slack: float = 16.0) -> int:
    """N_r for r = 2^-depth: standard cubes C of edge r with sup_C gap <= slack * r."""
    n_cubes = (1 << depth) ** instance.d
    if n_cubes > MAX_ORACLE_CUBES:
        raise ValueError(f"{n_cubes} cubes at depth {depth} exceeds the oracle limit")
    r = math.ldexp(1.0, -depth)
    threshold = instance.mu_star - slack * r
    count = 0
    cubes = CubeSet.full_grid(depth, instance.d).indices
    step = 1 << 18
    for s in range(0, len(cubes), step):
        mins = instance.cube_min(depth, cubes[s:s + step])
        count += int(np.count_nonzero(mins >= threshold - 1e-12))
    return count


def zooming_table(instance: RewardInstance, max_depth: int, min_depth: int = 1):
    """[(depth, r, N_r)] for depth = min_depth..max_depth, stopping at the oracle limit."""
    rows, truncated = [], False
    for depth in range(min_depth, max_depth + 1):
        if (1 << depth) ** instance.d > MAX_ORACLE_CUBES:
            warnings.warn(
                f"resolution floor reached at depth {depth}; table truncated",
                ResolutionWarning,
                stacklevel=2,
            )
            truncated = True
            break
        rows.append((depth, math.ldexp(1.0, -depth), zooming_number(instance, depth)))
    return rows, truncated


TAIL_SCALES = 3


def zooming_dimension_estimate(instance: RewardInstance, max_depth: int, tail: int = TAIL_SCALES):
    """(dz_hat, Cz_hat) from the zooming numbers at r = 1/2 .. 2^-max_depth.

    The slope of log N_r against log(1/r) is fitted on the ``tail`` finest
    scales (coarse scales sit in the saturated regime N_r = r^-d), clipped to
    [0, d].  Cz_hat is the least a with N_r <= a r^-dz_hat at every scale.
    """
    rows, _ = zooming_table(instance, max_depth)
    if len(rows) < 3:
        raise ValueError("need at least 3 dyadic scales")
    return estimate_from_table(rows, instance.d, tail)


def estimate_from_table(rows, d: int, tail: int = TAIL_SCALES) -> tuple[float, float]:
    depths = np.array([row[0] for row in rows], dtype=float)
    counts = np.array([row[2] for row in rows], dtype=float)
    if not np.any(counts > 0):
        raise UndefinedEstimateError("all zooming numbers are zero")
    fit = [(x, y) for x, y in zip(depths[-tail:], counts[-tail:]) if y > 0]
    if len(fit) < 2:
        raise UndefinedEstimateError("too few nonzero zooming numbers at the finest scales")
    xs = np.array([f[0] for f in fit])
    ys = np.log2([f[1] for f in fit])
    xc, yc = xs - xs.mean(), ys - ys.mean()
    slope = float(np.dot(xc, yc) / np.dot(xc, xc))
    dz = min(max(slope, 0.0), float(d))
    # N_r r^dz with r = 2^-depth
    cz = float(np.max(counts * np.exp2(-depths * dz)))
    return dz, cz


def sample_reward(instance: RewardInstance, noise: NoiseModel, x) -> np.ndarray:
    """y = mu(x) + eps for each row of x, consuming the noise stream in order."""
    x = _as_arms(x, instance.d)
    return instance.mean(x) + noise.draw(len(x))


# -- descriptors --------------------------------------------------------------------


def from_descriptor(desc: dict) -> RewardInstance:
    kind = desc["kind"]
    params = desc.get("params", {})
    if kind == "two-peak":
        return two_peak_instance()
    if kind == "linear":
        return linear_instance()
    if kind == "constant":
        return constant_instance(int(desc.get("d", 2)), float(params.get("value", 0.0)))
    if kind == "cone":
        meta = {k: v for k, v in params.items() if k not in ("label", "floor", "peaks", "heights")}
        return ConeInstance(
            params["peaks"], params["heights"], params["floor"], params.get("label", "cone"), meta
        )
    raise ValueError(f"unknown instance kind {kind!r}")

"""Simulated 2D laser scanner and occupancy-grid SLAM.

The grid stores 16-bit likelihoods: 0 is certainly occupied, 65535 certainly
free, 32768 unknown. Localization is a randomized hill-climb over candidate
poses scored by summing the grid under the scan endpoints (lower is better,
because occupied cells are low); mapping blends cells along each beam toward
free and a hole-width window around each endpoint toward occupied.

Cell (0, 0) sits at the grid origin corner; index ix runs along +x and iy
along +y. PGM export writes rows from the top of the map (+y) down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import Environment, RngStream, World, normalize_angle

UNKNOWN = 32768
FREE = 65535
OCCUPIED = 0


@dataclass(frozen=True)
class LaserSpec:
    max_range: float = 5.0
    fov_deg: float = 240.0
    beam_count: int = 684
    scan_rate_hz: float = 10.0

    def __post_init__(self):
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if not (0 < self.fov_deg <= 360):
            raise ValueError("fov must be in (0, 360] degrees")
        if self.beam_count < 2:
            raise ValueError("need at least 2 beams")

    def bearings(self) -> np.ndarray:
        """Beam bearings relative to the heading, radians; beam 0 at -fov/2."""
        half = math.radians(self.fov_deg) / 2.0
        return np.linspace(-half, half, self.beam_count)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def compose(self, dx: float, dy: float, dtheta: float) -> "Pose":
        """Apply a body-frame displacement (forward, left, turn)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose(self.x + c * dx - s * dy, self.y + s * dx + c * dy,
                    self.theta + dtheta)

    def delta_to(self, other: "Pose") -> tuple[float, float, float]:
        """Body-frame displacement that carries this pose onto ``other``."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        wx, wy = other.x - self.x, other.y - self.y
        return (c * wx + s * wy, -s * wx + c * wy,
                normalize_angle(other.theta - self.theta))


@dataclass
class LaserScan:
    ranges: np.ndarray
    spec: LaserSpec
    pose_hint: Pose | None = None
    error: bool = False

    def hit_mask(self) -> np.ndarray:
        return self.ranges < self.spec.max_range


@dataclass
class OccupancyGrid:
    side: int = 400
    resolution: float = 0.05
    origin: tuple[float, float] = (0.0, 0.0)
    cells: np.ndarray = field(default=None)
    _padded: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.cells is None:
            self.cells = np.full((self.side, self.side), UNKNOWN, dtype=np.uint16)

    def world_to_cell(self, x, y):
        ix = np.floor((np.asarray(x) - self.origin[0]) / self.resolution).astype(np.int64)
        iy = np.floor((np.asarray(y) - self.origin[1]) / self.resolution).astype(np.int64)
        return ix, iy

    def in_bounds(self, ix, iy):
        return (ix >= 0) & (ix < self.side) & (iy >= 0) & (iy < self.side)

    def contains_point(self, x: float, y: float) -> bool:
        ix, iy = self.world_to_cell(x, y)
        return bool(self.in_bounds(ix, iy))

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.side, self.resolution, self.origin, self.cells.copy())

    def invalidate(self) -> None:
        self._padded = None

    def padded(self) -> np.ndarray:
        """Scoring cache: the grid framed by one ring of UNKNOWN cells, so
        out-of-map lookups can be clipped onto the border."""
        if self._padded is None:
            p = np.full((self.side + 2, self.side + 2), UNKNOWN, dtype=np.uint16)
            p[1:-1, 1:-1] = self.cells
            self._padded = p
        return self._padded


def raycast(env: Environment, origin: tuple[float, float], angles: np.ndarray,
            max_range: float) -> np.ndarray:
    """Distances to the nearest obstacle along each angle, capped at max_range.

    Vectorized slab intersection of every beam against every rectangle; exact
    for axis-aligned geometry.
    """
    ox, oy = origin
    dx = np.cos(angles) * max_range
    dy = np.sin(angles) * max_range
    t_best = np.ones_like(angles)
    # zero direction components are nudged so slab division stays finite
    eps = 1e-300
    dx = np.where(dx == 0.0, eps, dx)
    dy = np.where(dy == 0.0, eps, dy)
    for rect in env.obstacles:
        tx1 = (rect.x0 - ox) / dx
        tx2 = (rect.x1 - ox) / dx
        ty1 = (rect.y0 - oy) / dy
        ty2 = (rect.y1 - oy) / dy
        tmin = np.maximum(np.minimum(tx1, tx2), np.minimum(ty1, ty2))
        tmax = np.minimum(np.maximum(tx1, tx2), np.maximum(ty1, ty2))
        hit = (tmax >= tmin) & (tmax >= 0.0) & (tmin <= 1.0)
        entry = np.maximum(tmin, 0.0)
        t_best = np.where(hit & (entry < t_best), entry, t_best)
    return t_best * max_range


def simulate_scan(env: Environment, pose: Pose, spec: LaserSpec) -> LaserScan:
    """Produce the scan a lidar at ``pose`` would measure.

    Beams sweep counterclockwise from -fov/2 to +fov/2 relative to the
    heading; a beam that hits nothing reports the max-range sentinel. A pose
    inside an obstacle yields an all-zero scan flagged as an error.
    """
    if env.inside_obstacle(pose.x, pose.y):
        return LaserScan(np.zeros(spec.beam_count), spec, pose_hint=pose, error=True)
    angles = pose.theta + spec.bearings()
    ranges = raycast(env, (pose.x, pose.y), angles, spec.max_range)
    return LaserScan(ranges, spec, pose_hint=pose)


def _hit_points_local(scan: LaserScan) -> np.ndarray:
    """Scan-frame coordinates of the hit-beam endpoints, shape (H, 2)."""
    mask = scan.hit_mask()
    bearings = scan.spec.bearings()[mask]
    r = scan.ranges[mask]
    return np.column_stack([r * np.cos(bearings), r * np.sin(bearings)])


def _score_local(grid: OccupancyGrid, local: np.ndarray, pose: Pose) -> int:
    if len(local) == 0:
        return 0
    pad = grid.padded()
    inv_res = 1.0 / grid.resolution
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    ix = np.floor((pose.x + c * local[:, 0] - s * local[:, 1] - grid.origin[0]) * inv_res)
    iy = np.floor((pose.y + s * local[:, 0] + c * local[:, 1] - grid.origin[1]) * inv_res)
    # out-of-map endpoints clip onto the UNKNOWN border ring
    ix = np.clip(ix, -1, grid.side).astype(np.int64) + 1
    iy = np.clip(iy, -1, grid.side).astype(np.int64) + 1
    return int(pad.ravel()[ix * (grid.side + 2) + iy].sum(dtype=np.int64))


def scan_score(grid: OccupancyGrid, scan: LaserScan, pose: Pose) -> int:
    """Sum of grid values under the scan's hit endpoints; lower fits better.

    Endpoints falling outside the grid contribute the unknown value.
    """
    return _score_local(grid, _hit_points_local(scan), pose)


def monte_carlo_search(grid: OccupancyGrid, scan: LaserScan, seed_pose: Pose,
                       rng: RngStream, iterations: int = 400,
                       sigma: tuple[float, float, float] = (0.1, 0.1, 0.02),
                       ) -> Pose:
    """Randomized hill climb around ``seed_pose``.

    Each iteration draws exactly three gaussians (so two runs on one stream
    agree over their common prefix), perturbs the best pose so far, and keeps
    the candidate only on a strict score improvement. The search radius
    halves after a stagnation streak.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    local = _hit_points_local(scan)
    lx = np.ascontiguousarray(local[:, 0])
    ly = np.ascontiguousarray(local[:, 1])
    pad_flat = grid.padded().ravel()
    inv_res = 1.0 / grid.resolution
    ox, oy = grid.origin
    side = grid.side

    def score_at(x: float, y: float, theta: float) -> int:
        if len(lx) == 0:
            return 0
        c, s = math.cos(theta), math.sin(theta)
        ix = np.floor((x + c * lx - s * ly - ox) * inv_res)
        iy = np.floor((y + s * lx + c * ly - oy) * inv_res)
        ix = np.clip(ix, -1, side).astype(np.int64) + 1
        iy = np.clip(iy, -1, side).astype(np.int64) + 1
        return int(pad_flat[ix * (side + 2) + iy].sum(dtype=np.int64))

    bx, by, bt = seed_pose.x, seed_pose.y, seed_pose.theta
    best_score = score_at(bx, by, bt)
    sx, sy, st = sigma
    stall = 0
    stall_limit = max(iterations // 10, 10)
    # one batched draw keeps the stream identical to per-iteration draws
    draws = np.asarray(rng.normal(0.0, 1.0, (iterations, 3)))
    for d in draws:
        cx = bx + d[0] * sx
        cy = by + d[1] * sy
        ct = bt + d[2] * st
        score = score_at(cx, cy, ct)
        if score < best_score:
            bx, by, bt = cx, cy, ct
            best_score = score
            stall = 0
        else:
            stall += 1
            if stall >= stall_limit:
                sx, sy, st = sx * 0.5, sy * 0.5, st * 0.5
                stall = 0
    return Pose(bx, by, bt)


def map_update(grid: OccupancyGrid, scan: LaserScan, pose: Pose,
               quality: int = 50, hole_width: float = 0.6) -> OccupancyGrid:
    """Blend one scan into the grid at the given pose.

    Cells along each beam short of the endpoint move toward free. Inside a
    hole_width window straddling the endpoint the blend target ramps
    linearly from free at the window edges down to occupied at the hit
    point, so a mapped wall reads as a V-shaped likelihood valley that the
    pose search can slide into. No-hit beams sweep free along their whole
    length. The blend step is (target - value) * quality / 256, applied once
    per cell per scan (the lowest target wins where beams overlap).
    """
    if not (0 <= quality <= 255):
        raise ValueError("quality must be in 0..255")
    if quality == 0 or scan.error:
        return grid
    spec = scan.spec
    angles = pose.theta + spec.bearings()
    cos_a, sin_a = np.cos(angles), np.sin(angles)
    hit = scan.hit_mask()
    half_hole = hole_width / 2.0

    # free sweep, one sample per cell of ray length
    step = grid.resolution
    free_len = np.where(hit, np.maximum(scan.ranges - half_hole, 0.0), scan.ranges)
    t = np.arange(0.0, spec.max_range + step, step)
    px = pose.x + np.outer(cos_a, t)
    py = pose.y + np.outer(sin_a, t)
    free_flat = _mask_to_flat(grid, px, py, t[None, :] <= free_len[:, None])

    # hole window, half-cell samples with the V-shaped ramp target
    occ_flat = np.empty(0, dtype=np.int64)
    occ_target = np.empty(0, dtype=np.int64)
    if hit.any() and half_hole > 0:
        h_step = grid.resolution / 2.0
        offs = np.arange(-half_hole, half_hole + h_step, h_step)
        r_hit = scan.ranges[hit]
        th = offs[None, :] + r_hit[:, None]          # distance along each hit beam
        hx = pose.x + cos_a[hit][:, None] * th
        hy = pose.y + sin_a[hit][:, None] * th
        ramp = FREE - (FREE - OCCUPIED) * (1.0 - np.abs(offs) / half_hole)
        targets = np.broadcast_to(ramp, th.shape)
        valid = th > 0.0
        ix, iy = grid.world_to_cell(hx[valid], hy[valid])
        ok = grid.in_bounds(ix, iy)
        flat_idx = ix[ok] * grid.side + iy[ok]
        tgt = targets[valid][ok].astype(np.int64)
        if len(flat_idx):
            # keep the most-occupied target per cell, deterministically
            order = np.lexsort((tgt, flat_idx))
            flat_idx = flat_idx[order]
            tgt = tgt[order]
            first = np.ones(len(flat_idx), dtype=bool)
            first[1:] = flat_idx[1:] != flat_idx[:-1]
            occ_flat = flat_idx[first]
            occ_target = tgt[first]

    flat = grid.cells.reshape(-1)
    if len(occ_flat):
        # endpoint evidence wins on the shared boundary cells
        occ_set = np.zeros(grid.side * grid.side, dtype=bool)
        occ_set[occ_flat] = True
        free_flat = free_flat[~occ_set[free_flat]]
    if len(free_flat):
        v = flat[free_flat].astype(np.int64)
        v += (FREE - v) * quality // 256
        flat[free_flat] = np.clip(v, 0, 65535).astype(np.uint16)
    if len(occ_flat):
        v = flat[occ_flat].astype(np.int64)
        v += (occ_target - v) * quality // 256
        flat[occ_flat] = np.clip(v, 0, 65535).astype(np.uint16)
    grid.invalidate()
    return grid


def _mask_to_flat(grid: OccupancyGrid, px, py, mask) -> np.ndarray:
    """Deduplicated flat cell indices of the masked sample points."""
    ix, iy = grid.world_to_cell(px[mask], py[mask])
    ok = grid.in_bounds(ix, iy)
    seen = np.zeros(grid.side * grid.side, dtype=bool)
    seen[ix[ok] * grid.side + iy[ok]] = True
    return np.flatnonzero(seen)


@dataclass
class SlamState:
    grid: OccupancyGrid
    pose: Pose


def slam_step(state: SlamState, scan: LaserScan, odometry: tuple[float, float, float],
              rng: RngStream, iterations: int = 400,
              sigma: tuple[float, float, float] = (0.1, 0.1, 0.02),
              quality: int = 50, hole_width: float = 0.6) -> SlamState:
    """One SLAM iteration: predict from odometry, correct by search, map.

    On a fresh (all-unknown) map the score field is constant, so the search
    returns the prediction unchanged and the first scan anchors the map.
    Error scans skip both correction and mapping.
    """
    predicted = state.pose.compose(*odometry)
    if scan.error:
        return SlamState(state.grid, predicted)
    corrected = monte_carlo_search(state.grid, scan, predicted, rng,
                                   iterations=iterations, sigma=sigma)
    map_update(state.grid, scan, corrected, quality=quality, hole_width=hole_width)
    return SlamState(state.grid, corrected)


def write_pgm(grid: OccupancyGrid, path) -> None:
    """Binary PGM (P5), maxval 255, one byte per cell (value / 256 truncated).

    Rows run from the top of the map (max y) down, columns along +x.
    """
    img = (grid.cells >> 8).astype(np.uint8)
    raster = img.T[::-1, :]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.side} {grid.side}\n255\n".encode())
        fh.write(raster.tobytes())


@dataclass
class PoseTraceRow:
    tick: int
    x: float
    y: float
    theta: float
    score: int
    true_x: float
    true_y: float
    true_theta: float


class SlamUnit:
    """Kernel radio-phase component: scans every scan period and runs SLAM.

    Odometry is the commanded true motion of the UAV disturbed by gaussian
    noise, which reproduces the visibly drifting raw path that the corrected
    estimate should beat.
    """

    def __init__(self, uav_id: int, spec: LaserSpec, grid: OccupancyGrid,
                 seed: int, dt: float, iterations: int = 400,
                 sigma: tuple[float, float, float] = (0.1, 0.1, 0.02),
                 quality: int = 50, hole_width: float = 0.6,
                 odom_sigma_xy: float = 0.004, odom_sigma_theta: float = 0.002):
        self.uav_id = uav_id
        self.spec = spec
        self.scan_period = max(int(round(1.0 / (spec.scan_rate_hz * dt))), 1)
        self.iterations = iterations
        self.sigma = sigma
        self.quality = quality
        self.hole_width = hole_width
        self.odom_sigma_xy = odom_sigma_xy
        self.odom_sigma_theta = odom_sigma_theta
        self.state: SlamState | None = None
        self.grid = grid
        self._search_rng = RngStream(seed, f"slam/search/{uav_id}")
        self._odom_rng = RngStream(seed, f"slam/odom/{uav_id}")
        self._last_true: Pose | None = None
        self.trace: list[PoseTraceRow] = []

    def step(self, world: World, now: int) -> None:
        if now % self.scan_period != 0:
            return
        uav = world.uavs[self.uav_id]
        true_pose = Pose(uav.x, uav.y, uav.heading)
        scan = simulate_scan(world.env, true_pose, self.spec)

        if self.state is None:
            # the first scan anchors the map at the known start pose, exactly
            self.state = SlamState(self.grid, true_pose)
            odometry = (0.0, 0.0, 0.0)
        else:
            odometry = self._last_true.delta_to(true_pose)
            noise = self._odom_rng.normal(0.0, 1.0, 3)
            odometry = (odometry[0] + noise[0] * self.odom_sigma_xy,
                        odometry[1] + noise[1] * self.odom_sigma_xy,
                        odometry[2] + noise[2] * self.odom_sigma_theta)

        self.state = slam_step(self.state, scan, odometry, self._search_rng,
                               iterations=self.iterations, sigma=self.sigma,
                               quality=self.quality, hole_width=self.hole_width)
        self._last_true = true_pose
        self.trace.append(PoseTraceRow(
            now, self.state.pose.x, self.state.pose.y, self.state.pose.theta,
            scan_score(self.grid, scan, self.state.pose),
            true_pose.x, true_pose.y, true_pose.theta))

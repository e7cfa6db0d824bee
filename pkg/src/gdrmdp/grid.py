"""Regular simplicial grid on the belief simplex with barycentric interpolation.

Grid points are beliefs whose coordinates are multiples of ``1/K``. The
simplex is cut into the cells of Freudenthal's triangulation; a belief is
interpolated from the ``Z`` vertices of the cell containing it (Lovejoy's
construction), so weights are non-negative and sum to one.
"""
from __future__ import annotations

import itertools
from functools import cached_property

import numpy as np
from scipy.optimize import linprog

from .ambiguity import AmbiguityBall
from .hlmdp import ParameterError

DEFAULT_RESOLUTION = {1: 1, 2: 50, 3: 20}


def default_resolution(Z: int) -> int:
    return DEFAULT_RESOLUTION.get(Z, 8)


def _compositions(K: int, Z: int):
    if Z == 1:
        yield (K,)
        return
    for first in range(K, -1, -1):
        for rest in _compositions(K - first, Z - 1):
            yield (first,) + rest


class BeliefGrid:
    def __init__(self, Z: int, K: int | None = None):
        if Z < 1:
            raise ParameterError("grid needs at least one group")
        K = default_resolution(Z) if K is None else K
        if K < 1:
            raise ParameterError("grid resolution must be >= 1")
        self.Z, self.K = Z, K
        self.counts = np.array(list(_compositions(K, Z)), dtype=np.int64)
        self.points = self.counts / K
        self.points.setflags(write=False)
        self._radix = (K + 1) ** np.arange(Z - 1, -1, -1, dtype=np.int64)
        keys = self.counts @ self._radix
        self._order = np.argsort(keys)
        self._sorted_keys = keys[self._order]

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"BeliefGrid(Z={self.Z}, K={self.K}, points={len(self)})"

    def index_of_counts(self, counts: np.ndarray) -> np.ndarray:
        keys = np.asarray(counts, dtype=np.int64) @ self._radix
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.clip(pos, 0, len(self._sorted_keys) - 1)
        if np.any(self._sorted_keys[pos] != keys):
            raise ParameterError("counts are not grid points")
        return self._order[pos]

    def nearest_index(self, b) -> int:
        return int(np.argmin(np.abs(self.points - np.asarray(b)).sum(axis=1)))

    def interpolate_many(self, B) -> tuple[np.ndarray, np.ndarray]:
        """Vertex indices and weights, each of shape ``(..., Z)``."""
        B = np.asarray(B, dtype=float)
        lead = B.shape[:-1]
        B = B.reshape(-1, self.Z)
        Z, K = self.Z, self.K
        if Z == 1:
            return np.zeros(lead + (1,), dtype=np.int64), np.ones(lead + (1,))
        B = np.clip(B, 0.0, None)
        B = B / B.sum(axis=1, keepdims=True)
        # x_i = K * sum_{j >= i} b_j, with x_0 = K exactly
        x = K * np.cumsum(B[:, ::-1], axis=1)[:, ::-1]
        x[:, 0] = K
        x = np.clip(x, 0.0, K)
        v = np.floor(x)
        frac = x - v
        frac[:, 0] = 0.0
        order = np.argsort(-frac[:, 1:], axis=1, kind="stable") + 1  # (n, Z-1)
        n = len(B)
        rows = np.arange(n)
        verts = np.empty((n, Z, Z))
        verts[:, 0] = v
        fs = np.take_along_axis(frac, order, axis=1)  # descending fractions
        for k in range(1, Z):
            verts[:, k] = verts[:, k - 1]
            verts[rows, k, order[:, k - 1]] += 1.0
        lam = np.empty((n, Z))
        lam[:, 0] = 1.0 - fs[:, 0]
        lam[:, 1:-1] = fs[:, :-1] - fs[:, 1:]
        lam[:, -1] = fs[:, -1]
        counts = verts - np.concatenate([verts[:, :, 1:], np.zeros((n, Z, 1))], axis=2)
        counts = np.rint(counts).astype(np.int64)
        bad = (counts < 0).any(axis=2)
        if bad.any():
            # Only zero-weight vertices can fall off the simplex; pin them to the base.
            counts[bad] = np.repeat(counts[:, :1], Z, axis=1)[bad]
            lam[bad] = 0.0
        idx = self.index_of_counts(counts.reshape(-1, Z)).reshape(n, Z)
        lam = np.clip(lam, 0.0, None)
        lam /= lam.sum(axis=1, keepdims=True)
        return idx.reshape(lead + (Z,)), lam.reshape(lead + (Z,))

    def interpolate(self, b) -> tuple[np.ndarray, np.ndarray]:
        idx, lam = self.interpolate_many(np.asarray(b, dtype=float)[None, :])
        return idx[0], lam[0]

    def evaluate(self, table: np.ndarray, B) -> np.ndarray:
        """Interpolate ``table`` (leading axis = grid points) at beliefs ``B``."""
        table = np.asarray(table)
        idx, lam = self.interpolate_many(B)
        w = lam.reshape(lam.shape + (1,) * (table.ndim - 1))
        return (w * table[idx]).sum(axis=lam.ndim - 1)

    @cached_property
    def cells(self) -> np.ndarray:
        """Vertex index array of shape (num_cells, Z) for every Freudenthal cell."""
        Z = self.Z
        if Z == 1:
            return np.zeros((1, 1), dtype=np.int64)
        xs = np.cumsum(self.counts[:, ::-1], axis=1)[:, ::-1]
        out = []
        for perm in itertools.permutations(range(1, Z)):
            verts = np.repeat(xs[:, None, :], Z, axis=1).copy()
            for k, axis in enumerate(perm, start=1):
                verts[:, k:, axis] += 1
            c = verts - np.concatenate([verts[:, :, 1:], np.zeros(verts.shape[:2] + (1,), dtype=np.int64)], axis=2)
            ok = (c >= 0).all(axis=(1, 2))
            if ok.any():
                out.append(self.index_of_counts(c[ok].reshape(-1, Z)).reshape(-1, Z))
        return np.concatenate(out)


def min_over_ball(grid: BeliefGrid, table: np.ndarray, ball: AmbiguityBall) -> tuple[np.ndarray, float]:
    """Exact ``min_p max_a f_a(p)`` over the ball, ``f_a`` interpolated from ``table``.

    ``table`` has shape (num_points,) or (num_points, num_actions). The
    interpolant is linear on every grid cell, so for two groups the minimum
    sits at a ball endpoint, a grid point or an action crossing inside a
    cell; for more groups one small LP per cell meeting the ball is solved.
    """
    T = np.asarray(table, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    Z = grid.Z
    if Z == 1 or ball.radius == 0.0:
        p = ball.nominal.copy()
        return p, float(grid.evaluate(T, p).max())
    if Z == 2:
        return _min_over_interval(grid, T, ball)
    return _min_over_cells(grid, T, ball)


def _min_over_interval(grid, T, ball):
    lo, hi = ball.bounds()
    a, b = float(lo[0]), float(min(hi[0], 1.0 - lo[1]))
    a = max(a, 1.0 - float(hi[1]))
    K = grid.K
    knots = np.arange(np.ceil(a * K), np.floor(b * K) + 1) / K
    cand = [np.array([a, b, ball.nominal[0]]), knots]
    edges = np.unique(np.concatenate([[a], knots, [b]]))
    if T.shape[1] > 1 and edges.size > 1:
        left, right = edges[:-1], edges[1:]
        fl = grid.evaluate(T, np.stack([left, 1 - left], axis=1))
        fr = grid.evaluate(T, np.stack([right, 1 - right], axis=1))
        for i, j in itertools.combinations(range(T.shape[1]), 2):
            dl, dr = fl[:, i] - fl[:, j], fr[:, i] - fr[:, j]
            cross = dl * dr < 0
            if cross.any():
                t = dl[cross] / (dl[cross] - dr[cross])
                cand.append(left[cross] + t * (right[cross] - left[cross]))
    p0 = np.clip(np.concatenate(cand), a, b)
    P = np.stack([p0, 1.0 - p0], axis=1)
    vals = grid.evaluate(T, P).max(axis=1)
    k = int(np.argmin(vals))
    return P[k], float(vals[k])


def _min_over_cells(grid, T, ball):
    lo, hi = ball.bounds()
    cells = grid.cells
    V = grid.points[cells]  # (C, Z, Z)
    near = np.all((V.min(axis=1) <= hi + 1e-12) & (V.max(axis=1) >= lo - 1e-12), axis=1)
    Z, nA = grid.Z, T.shape[1]
    best_p, best_v = ball.nominal.copy(), float(grid.evaluate(T, ball.nominal).max())
    tv = ball.metric == "tv_positive_part"
    for c in np.flatnonzero(near):
        verts = V[c]  # rows are vertex beliefs
        q = T[cells[c]]  # (Z vertices, nA)
        # variables: lambda (Z), t, [y (Z) for tv]
        ny = Z if tv else 0
        nv = Z + 1 + ny
        cost = np.zeros(nv)
        cost[Z] = 1.0
        A_ub = [np.concatenate([q[:, a], [-1.0], np.zeros(ny)]) for a in range(nA)]
        b_ub = [0.0] * nA
        if tv:
            for i in range(Z):  # p_i - n_i - y_i <= 0
                row = np.zeros(nv)
                row[:Z] = verts[:, i]
                row[Z + 1 + i] = -1.0
                A_ub.append(row)
                b_ub.append(ball.nominal[i])
            row = np.zeros(nv)
            row[Z + 1 :] = 1.0
            A_ub.append(row)
            b_ub.append(ball.radius)
        else:
            for i in range(Z):
                row = np.zeros(nv)
                row[:Z] = verts[:, i]
                A_ub.append(row)
                b_ub.append(hi[i])
                A_ub.append(-row)
                b_ub.append(-lo[i])
        A_eq = np.zeros((1, nv))
        A_eq[0, :Z] = 1.0
        bounds = [(0, None)] * Z + [(None, None)] + [(0, None)] * ny
        res = linprog(cost, A_ub=np.array(A_ub), b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
        if res.status == 0 and res.fun < best_v:
            lam = np.clip(res.x[:Z], 0.0, None)
            best_p = lam @ verts
            best_v = float(res.fun)
    return best_p, best_v


class IntervalMinimizer:
    """Batched exact ``min_p max_a f_a(p)`` over intervals for two groups.

    ``table`` has shape (num_points, S, A). Candidates that do not depend on
    the interval (grid knots and action crossings inside each cell) are
    computed once; each query then only adds its endpoints and nominal.
    """

    def __init__(self, grid: BeliefGrid, table: np.ndarray):
        if grid.Z != 2:
            raise ParameterError("interval minimiser needs a two-group grid")
        self.grid = grid
        T = np.asarray(table, dtype=float)
        self.table = T
        order = np.argsort(grid.points[:, 0])
        x = grid.points[order, 0]
        Tk = T[order]  # (K+1, S, A) sorted by first coordinate
        xs = [np.broadcast_to(x[:, None], (x.size, T.shape[1]))]
        vs = [Tk.max(axis=-1)]
        nA = T.shape[2]
        for i, j in itertools.combinations(range(nA), 2):
            d = Tk[:, :, i] - Tk[:, :, j]
            dl, dr = d[:-1], d[1:]
            cross = dl * dr < 0
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(cross, dl / (dl - dr), 0.0)
            pos = x[:-1, None] + t * (x[1:, None] - x[:-1, None])
            val = (1 - t)[..., None] * Tk[:-1] + t[..., None] * Tk[1:]
            xs.append(np.where(cross, pos, np.nan))
            vs.append(np.where(cross, val.max(axis=-1), np.inf))
        self.cand_x = np.concatenate(xs).T  # (S, C)
        self.cand_v = np.concatenate(vs).T

    def __call__(self, rows, lo, hi, nominal) -> np.ndarray:
        rows = np.asarray(rows)
        lo, hi, nominal = (np.asarray(v, dtype=float) for v in (lo, hi, nominal))
        cx, cv = self.cand_x[rows], self.cand_v[rows]
        inside = (cx >= lo[:, None]) & (cx <= hi[:, None])
        best = np.where(inside, cv, np.inf).min(axis=1)
        ends = np.stack([lo, hi, nominal], axis=1)  # (B, 3)
        P = np.stack([ends, 1.0 - ends], axis=-1)
        vals = self.grid.evaluate(self.table, P)  # (B, 3, S, A)
        vals = vals[np.arange(len(rows)), :, rows].max(axis=-1)
        return np.minimum(best, vals.min(axis=1))

"""Slow reference implementations the fast code is checked against."""
from __future__ import annotations

import itertools
import math

import numpy as np


def cond_expectation(tree, x, subset) -> float:
    """E[tree(x) | x_S] with absent features marginalised by node covers."""

    def walk(node):
        f = tree.feature[node]
        if f < 0:
            return float(tree.value[node])
        l, r = tree.left[node], tree.right[node]
        if f in subset:
            return walk(l if x[f] <= tree.threshold[node] else r)
        c = float(tree.cover[node])
        return (tree.cover[l] * walk(l) + tree.cover[r] * walk(r)) / c

    return walk(0)


def brute_force_shap(ensemble, x) -> tuple[float, np.ndarray]:
    """(base, phi) by enumerating all 2^M feature subsets."""
    M = ensemble.n_features
    x = np.asarray(x, dtype=np.float64)

    def v(subset):
        return ensemble.base_score + sum(
            ensemble.learning_rate * cond_expectation(t, x, subset) for t in ensemble.trees
        )

    values = {}
    for size in range(M + 1):
        for s in itertools.combinations(range(M), size):
            values[frozenset(s)] = v(frozenset(s))
    phi = np.zeros(M)
    for i in range(M):
        others = [j for j in range(M) if j != i]
        for size in range(M):
            w = math.factorial(size) * math.factorial(M - size - 1) / math.factorial(M)
            for s in itertools.combinations(others, size):
                s = frozenset(s)
                phi[i] += w * (values[s | {i}] - values[s])
    return values[frozenset()], phi


def ray_los_oracle(geo, site, x_ue, y_ue, oversample=10, runs=False):
    """LoS and indoor length (plus the indoor run count if ``runs``) by dense sampling of the straight BS-UE ray.

    Sample spacing is (cellsize / 2) / oversample, i.e. ``oversample`` times
    finer than the profile default; a sample is obstructed when the surface
    (ground + building) is more than 1e-6 m above the ray.
    """
    spacing = geo.cellsize / 2.0 / oversample
    d = math.hypot(x_ue - site.x, y_ue - site.y)
    n = max(1, int(math.ceil(d / spacing)))
    t = np.linspace(0.0, 1.0, n + 1)
    xs = site.x + t * (x_ue - site.x)
    ys = site.y + t * (y_ue - site.y)
    ground, building, _ = geo.lookup(xs, ys)
    z_bs = ground[0] + building[0] + site.h_bs
    z_ue = ground[-1] + building[-1]
    ray = z_bs + t * (z_ue - z_bs)
    blocked = (ground + building > ray + 1e-6) & (t > 0)
    indoor = blocked & (building > 0)
    step = d / n
    los, length = (not blocked.any()), float(indoor[1:].sum() * step)
    if runs:
        return los, length, int(np.count_nonzero(np.diff(indoor.astype(np.int8)) == 1))
    return los, length

"""Compiled inner loops for tree growth, prediction and TreeSHAP."""
import numpy as np
from numba import njit


@njit(cache=True)
def _build_hist(Xb, grad, weight, order, lo, hi, hist, n_bins):
    n_features = Xb.shape[1]
    for f in range(n_features):
        for b in range(n_bins[f]):
            hist[f, b, 0] = 0.0
            hist[f, b, 1] = 0.0
            hist[f, b, 2] = 0.0
    for i in range(lo, hi):
        r = order[i]
        w = weight[r]
        wg = w * grad[r]
        for f in range(n_features):
            b = Xb[r, f]
            hist[f, b, 0] += wg
            hist[f, b, 1] += w
            hist[f, b, 2] += 1.0


@njit(cache=True)
def _best_split(hist, n_bins, G, H, count, min_leaf, min_gain):
    parent = G * G / H if H > 0 else 0.0
    best_gain = min_gain
    best_f = -1
    best_b = -1
    best_gl = 0.0
    best_hl = 0.0
    for f in range(hist.shape[0]):
        gl = 0.0
        hl = 0.0
        cl = 0.0
        for b in range(n_bins[f] - 1):
            gl += hist[f, b, 0]
            hl += hist[f, b, 1]
            cl += hist[f, b, 2]
            if cl < min_leaf:
                continue
            if count - cl < min_leaf:
                break
            hr = H - hl
            if hl <= 0 or hr <= 0:
                continue
            gr = G - gl
            gain = gl * gl / hl + gr * gr / hr - parent
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_b = b
                best_gl = gl
                best_hl = hl
    return best_f, best_b, best_gl, best_hl


@njit(cache=True)
def grow_tree(Xb, grad, weight, rows, n_bins, max_bins, max_depth, min_leaf, min_gain):
    """Depth-limited histogram tree on the samples listed in ``rows``.

    Split gain is G_L^2/H_L + G_R^2/H_R - G^2/H with G = sum(w*g), H = sum(w);
    candidates are scanned by feature index, then bin index, and only a
    strictly larger gain replaces the incumbent. Every node above
    ``max_depth`` with a valid split is split (depth-wise growth); nodes are
    visited depth-first so only the smaller child's histogram is built and
    the sibling's is the parent's minus it. Returns node arrays: feature (-1
    for leaves), split bin, left, right, cover (sample count), value (G/H).
    """
    m = rows.size
    n_features = Xb.shape[1]
    cap = 2 * (m // max(min_leaf, 1)) + 1
    full = (1 << min(max_depth + 1, 40)) - 1
    if full < cap:
        cap = full
    feature = np.full(cap, -1, np.int32)
    split_bin = np.zeros(cap, np.int32)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    cover = np.zeros(cap, np.int64)
    value = np.zeros(cap, np.float64)
    start = np.zeros(cap, np.int64)
    stop = np.zeros(cap, np.int64)
    sum_g = np.zeros(cap, np.float64)
    sum_h = np.zeros(cap, np.float64)
    depth_of = np.zeros(cap, np.int64)
    slot_of = np.full(cap, -1, np.int64)

    order = rows.copy()
    buf = np.empty(m, np.int64)
    hists = np.empty((max_depth + 2, n_features, max_bins, 3), np.float64)

    g0 = 0.0
    h0 = 0.0
    for i in range(m):
        r = order[i]
        g0 += weight[r] * grad[r]
        h0 += weight[r]
    stop[0] = m
    cover[0] = m
    sum_g[0] = g0
    sum_h[0] = h0
    n_nodes = 1
    stack = np.zeros(2 * (max_depth + 2), np.int64)
    sp = 0
    if max_depth >= 1 and m >= 2 * min_leaf:
        _build_hist(Xb, grad, weight, order, 0, m, hists[0], n_bins)
        slot_of[0] = 0
        stack[0] = 0
        sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        slot = slot_of[node]
        count = stop[node] - start[node]
        G = sum_g[node]
        H = sum_h[node]
        best_f, best_b, best_gl, best_hl = _best_split(hists[slot], n_bins, G, H, count, min_leaf, min_gain)
        if best_f < 0 or n_nodes + 2 > cap:
            continue
        lo = start[node]
        n_left = 0
        n_right = 0
        for i in range(lo, stop[node]):
            r = order[i]
            if Xb[r, best_f] <= best_b:
                order[lo + n_left] = r
                n_left += 1
            else:
                buf[n_right] = r
                n_right += 1
        for i in range(n_right):
            order[lo + n_left + i] = buf[i]
        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        split_bin[node] = best_b
        left[node] = li
        right[node] = ri
        start[li] = lo
        stop[li] = lo + n_left
        start[ri] = lo + n_left
        stop[ri] = stop[node]
        cover[li] = n_left
        cover[ri] = n_right
        sum_g[li] = best_gl
        sum_h[li] = best_hl
        sum_g[ri] = G - best_gl
        sum_h[ri] = H - best_hl
        child_depth = depth_of[node] + 1
        depth_of[li] = child_depth
        depth_of[ri] = child_depth
        if child_depth >= max_depth:
            continue
        ok_l = n_left >= 2 * min_leaf
        ok_r = n_right >= 2 * min_leaf
        if ok_l or ok_r:
            small, large = (li, ri) if n_left <= n_right else (ri, li)
            hist = hists[slot]
            _build_hist(Xb, grad, weight, order, start[small], stop[small], hists[slot + 1], n_bins)
            for f in range(n_features):
                for b in range(n_bins[f]):
                    hist[f, b, 0] -= hists[slot + 1, f, b, 0]
                    hist[f, b, 1] -= hists[slot + 1, f, b, 1]
                    hist[f, b, 2] -= hists[slot + 1, f, b, 2]
            slot_of[large] = slot
            slot_of[small] = slot + 1
        if ok_l and ok_r:
            small, large = (li, ri) if n_left <= n_right else (ri, li)
            stack[sp] = large
            stack[sp + 1] = small
            sp += 2
        elif ok_l or ok_r:
            stack[sp] = li if ok_l else ri
            sp += 1

    for node in range(n_nodes):
        if feature[node] < 0:
            # leaf sums recomputed directly so they carry no subtraction error
            g = 0.0
            h = 0.0
            for i in range(start[node], stop[node]):
                r = order[i]
                g += weight[r] * grad[r]
                h += weight[r]
            value[node] = g / h if h > 0 else 0.0
    return (feature[:n_nodes].copy(), split_bin[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), cover[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True)
def apply_binned(Xb, feature, split_bin, left, right, value, out, scale):
    """out[i] += scale * leaf value for every row of the binned matrix."""
    for i in range(Xb.shape[0]):
        node = 0
        while feature[node] >= 0:
            if Xb[i, feature[node]] <= split_bin[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += scale * value[node]


@njit(cache=True)
def predict_forest(X, offsets, feature, threshold, left, right, value, base, scale, n_trees):
    """base + sum over the first ``n_trees`` trees of scale * leaf, on raw features."""
    n = X.shape[0]
    out = np.full(n, base)
    for i in range(n):
        acc = base
        for t in range(n_trees):
            o = offsets[t]
            node = 0
            while feature[o + node] >= 0:
                if X[i, feature[o + node]] <= threshold[o + node]:
                    node = left[o + node]
                else:
                    node = right[o + node]
            acc += scale * value[o + node]
        out[i] = acc
    return out


# --- TreeSHAP (path-dependent) ---------------------------------------------


@njit(cache=True)
def _extend(fi, zf, of, pw, depth, zero_fraction, one_fraction, feature_index):
    fi[depth] = feature_index
    zf[depth] = zero_fraction
    of[depth] = one_fraction
    pw[depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        pw[i + 1] += one_fraction * pw[i] * (i + 1) / (depth + 1)
        pw[i] = zero_fraction * pw[i] * (depth - i) / (depth + 1)


@njit(cache=True)
def _unwind(fi, zf, of, pw, depth, path_index):
    one_fraction = of[path_index]
    zero_fraction = zf[path_index]
    next_one = pw[depth]
    for i in range(depth - 1, -1, -1):
        if one_fraction != 0:
            tmp = pw[i]
            pw[i] = next_one * (depth + 1) / ((i + 1) * one_fraction)
            next_one = tmp - pw[i] * zero_fraction * (depth - i) / (depth + 1)
        else:
            pw[i] = pw[i] * (depth + 1) / (zero_fraction * (depth - i))
    for i in range(path_index, depth):
        fi[i] = fi[i + 1]
        zf[i] = zf[i + 1]
        of[i] = of[i + 1]


@njit(cache=True)
def _unwound_sum(fi, zf, of, pw, depth, path_index):
    one_fraction = of[path_index]
    zero_fraction = zf[path_index]
    next_one = pw[depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one_fraction != 0:
            tmp = next_one * (depth + 1) / ((i + 1) * one_fraction)
            total += tmp
            next_one = pw[i] - tmp * zero_fraction * ((depth - i) / (depth + 1))
        elif zero_fraction != 0:
            total += (pw[i] / zero_fraction) / ((depth - i) / (depth + 1))
    return total


@njit(cache=True)
def _tree_shap_row(x, feature, threshold, left, right, cover, value, scale, phi, max_depth):
    """Accumulate one tree's attributions for row ``x`` into ``phi``.

    Iterative form of the polynomial path-weight recursion: each tree level
    owns a slice of the path buffers, so a node's path stays intact while
    its first child's subtree is explored.
    """
    width = max_depth + 2
    fi = np.zeros((width + 1, width), np.int64)
    zf = np.zeros((width + 1, width))
    of = np.zeros((width + 1, width))
    pw = np.zeros((width + 1, width))
    # stack entries: node, level, unique_depth, parent zero/one fraction, parent feature
    st_node = np.zeros(2 * width + 2, np.int64)
    st_level = np.zeros(2 * width + 2, np.int64)
    st_depth = np.zeros(2 * width + 2, np.int64)
    st_zero = np.zeros(2 * width + 2)
    st_one = np.zeros(2 * width + 2)
    st_feat = np.zeros(2 * width + 2, np.int64)
    sp = 0
    st_node[0] = 0
    st_level[0] = 0
    st_depth[0] = 0
    st_zero[0] = 1.0
    st_one[0] = 1.0
    st_feat[0] = -1
    sp = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        level = st_level[sp]
        ud = st_depth[sp]
        pz = st_zero[sp]
        po = st_one[sp]
        pf = st_feat[sp]
        # copy the parent's path (level - 1) into this level's slice
        if level > 0:
            for i in range(ud):
                fi[level, i] = fi[level - 1, i]
                zf[level, i] = zf[level - 1, i]
                of[level, i] = of[level - 1, i]
                pw[level, i] = pw[level - 1, i]
        _extend(fi[level], zf[level], of[level], pw[level], ud, pz, po, pf)
        f = feature[node]
        if f < 0:
            for i in range(1, ud + 1):
                w = _unwound_sum(fi[level], zf[level], of[level], pw[level], ud, i)
                phi[fi[level, i]] += w * (of[level, i] - zf[level, i]) * value[node] * scale
            continue
        if x[f] <= threshold[node]:
            hot = left[node]
            cold = right[node]
        else:
            hot = right[node]
            cold = left[node]
        iz = 1.0
        io = 1.0
        k = 0
        while k <= ud:
            if fi[level, k] == f:
                break
            k += 1
        if k <= ud:
            iz = zf[level, k]
            io = of[level, k]
            _unwind(fi[level], zf[level], of[level], pw[level], ud, k)
            ud -= 1
        c = cover[node]
        # cold child pushed first so the hot subtree is finished before it runs
        st_node[sp] = cold
        st_level[sp] = level + 1
        st_depth[sp] = ud + 1
        st_zero[sp] = iz * cover[cold] / c
        st_one[sp] = 0.0
        st_feat[sp] = f
        sp += 1
        st_node[sp] = hot
        st_level[sp] = level + 1
        st_depth[sp] = ud + 1
        st_zero[sp] = iz * cover[hot] / c
        st_one[sp] = io
        st_feat[sp] = f
        sp += 1


@njit(cache=True)
def tree_shap_forest(X, offsets, depths, feature, threshold, left, right, cover, value, scale, n_features):
    n = X.shape[0]
    phi = np.zeros((n, n_features))
    for t in range(offsets.size - 1):
        o = offsets[t]
        e = offsets[t + 1]
        for i in range(n):
            _tree_shap_row(X[i], feature[o:e], threshold[o:e], left[o:e], right[o:e], cover[o:e],
                           value[o:e], scale, phi[i], depths[t])
    return phi


# --- exact ray summary ------------------------------------------------------


@njit(cache=True)
def ray_summary(x0, y0, x1, y1, z_bs, z_ue, xll, yll, cs, nrows, ncols, ground, building, clutter,
                n_classes, eps):
    """Exact obstruction bookkeeping of the BS->UE ray over a piecewise-constant raster.

    ``ground``/``building``/``clutter`` are flat row-major arrays (row 0 north)
    with nodata already replaced. Returns (first obstructed t, last obstructed
    t, n_pen_c, d_indoor_c, d_outdoor_c); the t values are -1 when the ray is
    clear.
    """
    d = np.hypot(x1 - x0, y1 - y0)
    dx = x1 - x0
    dy = y1 - y0
    nx = 0
    if dx != 0:
        kx0 = np.floor((min(x0, x1) - xll) / cs) + 1
        kx1 = np.ceil((max(x0, x1) - xll) / cs)
        nx = max(int(kx1 - kx0), 0)
    ny = 0
    if dy != 0:
        ky0 = np.floor((min(y0, y1) - yll) / cs) + 1
        ky1 = np.ceil((max(y0, y1) - yll) / cs)
        ny = max(int(ky1 - ky0), 0)
    t = np.empty(nx + ny + 2)
    t[0] = 0.0
    t[1] = d
    for i in range(nx):
        t[2 + i] = (xll + (kx0 + i) * cs - x0) / dx * d
    for i in range(ny):
        t[2 + nx + i] = (yll + (ky0 + i) * cs - y0) / dy * d
    for i in range(t.size):
        t[i] = min(max(t[i], 0.0), d)
    t = np.sort(t)

    n_pen_c = np.zeros(n_classes, np.int64)
    d_in_c = np.zeros(n_classes)
    d_out_c = np.zeros(n_classes)
    slope = (z_ue - z_bs) / d
    first = -1.0
    last = -1.0
    prev_indoor_to_end = False
    for i in range(t.size - 1):
        lo = t[i]
        hi = t[i + 1]
        length = hi - lo
        if length <= 0:
            continue
        m = (lo + hi) / (2.0 * d)
        col = int(np.floor((x0 + dx * m - xll) / cs))
        rfb = int(np.floor((y0 + dy * m - yll) / cs))
        col = min(max(col, 0), ncols - 1)
        rfb = min(max(rfb, 0), nrows - 1)
        flat = (nrows - 1 - rfb) * ncols + col
        b = building[flat]
        c = clutter[flat]
        surface = ground[flat] + b
        g0 = surface - (z_bs + slope * lo) - eps
        g1 = surface - (z_bs + slope * hi) - eps
        a_t = 0.0
        b_t = 0.0
        obstructed = False
        from_lo = False
        to_hi = False
        if g0 > 0 and g1 > 0:
            a_t, b_t = lo, hi
            obstructed, from_lo, to_hi = True, True, True
        elif g0 > 0:
            a_t, b_t = lo, lo + length * g0 / (g0 - g1)
            obstructed, from_lo = b_t > a_t, True
        elif g1 > 0:
            a_t, b_t = lo + length * g0 / (g0 - g1), hi
            obstructed, to_hi = b_t > a_t, True
        indoor_len = 0.0
        indoor = obstructed and b > 0
        if obstructed:
            if first < 0:
                first = a_t
            last = b_t
        if indoor:
            indoor_len = b_t - a_t
            if not (prev_indoor_to_end and from_lo):
                n_pen_c[c] += 1
        prev_indoor_to_end = indoor and to_hi
        d_in_c[c] += indoor_len
        d_out_c[c] += length - indoor_len
    return first, last, n_pen_c, d_in_c, d_out_c

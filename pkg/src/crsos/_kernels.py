# Compiled inner loop of the direct-method sampler.
#
# Per-site move rates live in an (n, 4) array ordered by step (-2, -1, +1, +2),
# the same order as lattice.list_moves. Site totals sit in the leaves of a
# binary sum tree so selection and updates cost O(log n).

import math

import numpy as np
from numba import njit

STEPS = np.array([-2, -1, 1, 2], dtype=np.int64)

REACHED = 0
NEED_UNIFORMS = 1
ABSORBED = 2
MAX_EVENTS = 3
BROKEN = -1


@njit(cache=True)
def dep_class(behind, h, ahead):
    if behind == h:
        if ahead == h:
            return 1
        if ahead == h - 1:
            return 3
    elif behind == h - 1:
        if ahead == h:
            return 2
        if ahead == h - 1:
            return 4
    return 0


@njit(cache=True)
def arr_class(before, a, beyond):
    if before == a:
        if beyond == a:
            return 1
        if beyond == a + 1:
            return 2
    elif before == a + 1:
        if beyond == a:
            return 3
        if beyond == a + 1:
            return 4
    return 0


@njit(cache=True)
def _after(h, n, k, source, target):
    k = k % n
    v = h[k]
    if k == source:
        v -= 1
    if k == target:
        v += 1
    return v


@njit(cache=True)
def legal_after(h, n, source, target):
    if h[source] < 1 or source == target:
        return False
    for site in (source, target):
        here = _after(h, n, site, source, target)
        if abs(_after(h, n, site - 1, source, target) - here) > 1:
            return False
        if abs(_after(h, n, site + 1, source, target) - here) > 1:
            return False
    return True


@njit(cache=True)
def site_rates(h, n, i, r2, l2, r1, l1, out):
    """Fill out[0..3] with the rates of hops from site i by -2, -1, +1, +2."""
    for j in range(4):
        out[j] = 0.0
    hi = h[i]
    if hi < 1:
        return
    for j in range(4):
        step = STEPS[j]
        s = 1 if step > 0 else -1
        target = (i + step) % n
        if target == i:
            continue
        if step == 1 or step == -1:
            if h[(i + s) % n] != hi - 1:
                continue
            rate = r1 if s > 0 else l1
        else:
            dep = dep_class(h[(i - s) % n], hi, h[(i + s) % n])
            if dep == 0:
                continue
            arr = arr_class(h[(target - s) % n], h[target], h[(target + s) % n])
            if arr == 0:
                continue
            rate = r2[dep - 1, arr - 1] if s > 0 else l2[dep - 1, arr - 1]
        if rate > 0.0 and legal_after(h, n, i, target):
            out[j] = rate


@njit(cache=True)
def tree_set(tree, size, i, value):
    k = size + i
    tree[k] = value
    k //= 2
    while k >= 1:
        tree[k] = tree[2 * k] + tree[2 * k + 1]
        k //= 2


@njit(cache=True)
def tree_find(tree, size, n, u):
    k = 1
    while k < size:
        left = tree[2 * k]
        if u < left:
            k = 2 * k
        else:
            u -= left
            k = 2 * k + 1
    leaf = k - size
    if leaf >= n or tree[k] <= 0.0:
        # roundoff pushed u past the last positive leaf
        leaf = n - 1
        while leaf > 0 and tree[size + leaf] <= 0.0:
            leaf -= 1
        u = tree[size + leaf]
    return leaf, u


@njit(cache=True)
def init_rates(h, n, r2, l2, r1, l1, rates, tree, size):
    tree[:] = 0.0
    for i in range(n):
        site_rates(h, n, i, r2, l2, r1, l1, rates[i])
        tree[size + i] = rates[i, 0] + rates[i, 1] + rates[i, 2] + rates[i, 3]
    for k in range(size - 1, 0, -1):
        tree[k] = tree[2 * k] + tree[2 * k + 1]


@njit(cache=True)
def _refresh(h, n, site, r2, l2, r1, l1, rates, tree, size):
    site_rates(h, n, site, r2, l2, r1, l1, rates[site])
    tree_set(tree, size, site, rates[site, 0] + rates[site, 1] + rates[site, 2] + rates[site, 3])


@njit(cache=True)
def advance(h, n, r2, l2, r1, l1, rates, tree, size, times, t_stop,
            uniforms, pos, max_events, check, last_move):
    """Run the direct method until the pending event falls after t_stop.

    times = [clock, pending event time, has_pending]. Returns (status, pos,
    events). The state is left consistent whenever the function returns, so
    the caller can refill uniforms and call again.
    """
    events = 0
    scratch = np.zeros(4)
    while True:
        if times[2] == 0.0:
            total = tree[1]
            if total <= 0.0:
                return ABSORBED, pos, events
            if pos >= uniforms.shape[0]:
                return NEED_UNIFORMS, pos, events
            u = uniforms[pos]
            pos += 1
            times[1] = times[0] - math.log1p(-u) / total
            times[2] = 1.0
        if times[1] > t_stop:
            return REACHED, pos, events
        if events >= max_events:
            return MAX_EVENTS, pos, events
        if pos >= uniforms.shape[0]:
            return NEED_UNIFORMS, pos, events
        target_mass = uniforms[pos] * tree[1]
        pos += 1
        site, u = tree_find(tree, size, n, target_mass)
        j = 3
        for jj in range(4):
            r = rates[site, jj]
            if r > 0.0:
                j = jj
                if u < r:
                    break
                u -= r
        target = (site + STEPS[j]) % n
        h[site] -= 1
        h[target] += 1
        last_move[0] = site
        last_move[1] = target
        last_move[2] = STEPS[j]
        times[0] = times[1]
        times[2] = 0.0
        events += 1
        if n <= 14:
            for k in range(n):
                _refresh(h, n, k, r2, l2, r1, l1, rates, tree, size)
        else:
            for off in range(-3, 4):
                _refresh(h, n, (site + off) % n, r2, l2, r1, l1, rates, tree, size)
                _refresh(h, n, (target + off) % n, r2, l2, r1, l1, rates, tree, size)
        if check:
            for k in range(n):
                if h[k] < 0 or abs(h[(k + 1) % n] - h[k]) > 1:
                    return BROKEN, pos, events
                site_rates(h, n, k, r2, l2, r1, l1, scratch)
                for jj in range(4):
                    if scratch[jj] != rates[k, jj]:
                        return BROKEN, pos, events

"""Slow, loop-based reference implementations used as test oracles.

Written independently of the package code: plain Python lists and loops,
no vectorisation, no shared helpers.
"""

import math
import statistics


def universe(values):
    n = len(values)
    sigma = statistics.pstdev(values)
    lower = min(values) - sigma
    upper = max(values) + sigma
    count = 1
    while 2**count < n:
        count += 1
    width = (upper - lower) / count
    return lower, upper, count, width


def grid(lower, upper, count, width):
    return [lower + m * width for m in range(count)] + [upper]


def interval_of(value, points):
    count = len(points) - 1
    phi = 0
    for m in range(count):
        if points[m] <= value:
            phi = m
    return phi


def tendency(values, times, j, spacing):
    size = len(values)
    total = 0.0
    for q in range(j):
        total += (values[j] - values[q]) * spacing / (times[j] - times[q])
    return total / (size - 1)


def expand(lower, upper, count, width, value, rho):
    points = grid(lower, upper, count, width)
    phi = interval_of(value, points)
    return points[: phi + 1], value + rho, points[phi + 1 :]


def pcp(elements, lower, upper, side_length=None):
    padded = []
    for left, center, right in elements:
        left, right = list(left), list(right)
        side = max(len(left), len(right))
        while len(left) < side:
            left.insert(0, lower)
        while len(right) < side:
            right.append(upper)
        padded.append((left, center, right))
    sl = min(len(p[0]) for p in padded) if side_length is None else side_length
    rows = []
    for left, center, right in padded:
        while len(left) < sl:
            left.insert(0, lower)
        while len(right) < sl:
            right.append(upper)
        rows.append(left[len(left) - sl :] + [center] + right[:sl])
    return rows, sl


def conv2d(x, w):
    """x[C][H][W], w[F][C][kh][kw] -> out[F][Ho][Wo]."""
    C, H, W = len(x), len(x[0]), len(x[0][0])
    F, kh, kw = len(w), len(w[0][0]), len(w[0][0][0])
    out = [[[0.0] * (W - kw + 1) for _ in range(H - kh + 1)] for _ in range(F)]
    for f in range(F):
        for i in range(H - kh + 1):
            for j in range(W - kw + 1):
                acc = 0.0
                for c in range(C):
                    for a in range(kh):
                        for b in range(kw):
                            acc += x[c][i + a][j + b] * w[f][c][a][b]
                out[f][i][j] = acc
    return out


def conv1d(x, f):
    K = len(f)
    return [sum(x[i + k] * f[k] for k in range(K)) for i in range(len(x) - K + 1)]


def zero_stuff(f, stride):
    out = [0.0] * ((len(f) - 1) * stride + 1)
    for k, v in enumerate(f):
        out[k * stride] = v
    return out


def avg_pool(x, kh, kw):
    H, W = len(x), len(x[0])
    return [
        [sum(x[i + a][j + b] for a in range(kh) for b in range(kw)) / (kh * kw) for j in range(W - kw + 1)]
        for i in range(H - kh + 1)
    ]


def two_pass_stats(values):
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, var


def isclose_rel(a, b, tol):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)

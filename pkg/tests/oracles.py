"""Naive reference implementations used as test oracles.

Written directly from the definitions with plain Python loops; they share
no code with the package under test.
"""

import itertools
import math


def signed_sqrt_l2(v):
    s = [math.copysign(math.sqrt(abs(x)), x) for x in v]
    n = math.sqrt(sum(x * x for x in s))
    return [x / n for x in s] if n > 0 else [0.0] * len(s)


def semantic_moments(f, p, floor=1e-8):
    """(mass, pi, mu, var) by direct summation; f is N lists of D, p is N lists of K."""
    n, d, k = len(f), len(f[0]), len(p[0])
    mass = [sum(p[i][c] for i in range(n)) for c in range(k)]
    pi = [m / n for m in mass]
    mu, var = [], []
    for c in range(k):
        m = [sum(p[i][c] * f[i][j] for i in range(n)) / mass[c] for j in range(d)]
        v = [max(sum(p[i][c] * (f[i][j] - m[j]) ** 2 for i in range(n)) / mass[c], floor)
             for j in range(d)]
        mu.append(m)
        var.append(v)
    return mass, pi, mu, var


def fisher_like(f, gamma, pi, mu, sigma):
    """Unnormalized [S_1, G_1, ..., S_K, G_K] with a double loop over patches and dims."""
    k, d = len(mu), len(mu[0])
    out = []
    for c in range(k):
        s = [0.0] * d
        g = [0.0] * d
        for t in range(len(f)):
            for j in range(d):
                z = (f[t][j] - mu[c][j]) / sigma[c][j]
                s[j] += gamma[t][c] * z
                g[j] += gamma[t][c] * (z * z - 1.0)
        scale = 1.0 / math.sqrt(pi[c])
        out += [x * scale for x in s] + [x * scale for x in g]
    return out


def hard_residual_sums(f, assign, mu, k):
    d = len(f[0])
    sums = [[0.0] * d for _ in range(k)]
    for t, c in enumerate(assign):
        for j in range(d):
            sums[c][j] += f[t][j] - mu[c][j]
    return sums


def best_partition_1d(points, k):
    """Exhaustive k-means optimum: (sorted centers, inertia)."""
    best = None
    for labels in itertools.product(range(k), repeat=len(points)):
        if len(set(labels)) != k:
            continue
        inertia, centers = 0.0, []
        for c in range(k):
            members = [x for x, lab in zip(points, labels) if lab == c]
            m = sum(members) / len(members)
            centers.append(m)
            inertia += sum((x - m) ** 2 for x in members)
        if best is None or inertia < best[1] - 1e-12:
            best = (sorted(centers), inertia)
    return best


def two_gaussian_posterior(f, means, stddev, temperature=1.0):
    logits = [-((f - m) ** 2) / (2 * stddev * stddev) / temperature for m in means]
    top = max(logits)
    w = [math.exp(x - top) for x in logits]
    z = sum(w)
    return [x / z for x in w]


def select_by_hand(p_data, p_category, K):
    """Replay of the top-2K / growing top-T intersection procedure."""
    order = lambda vals: sorted(range(len(vals)), key=lambda i: (-vals[i], i))  # noqa: E731
    o_data = set(order(p_data)[: 2 * K])
    rank = {c: r for r, c in enumerate(order(p_data))}
    for T in range(1, len(p_data) + 1):
        o_cat = set()
        for row in p_category:
            o_cat.update(order(row)[:T])
        both = o_cat & o_data
        if len(both) >= K:
            return sorted(sorted(both, key=rank.get)[:K])
    raise AssertionError("selection never reached K")

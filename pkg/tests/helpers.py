"""Random draw helpers shared by the property and acceptance tests."""

import numpy as np

from etc_wsan.trigger import TriggerConfig


def random_grouping(rng, n, keys=None):
    """Random partition of ``range(n)``; ``keys`` (2n uniforms) can be passed in to save rng calls."""
    keys = rng.random(2 * n) if keys is None else keys
    perm = np.argsort(keys[:n]).tolist()
    n_groups = 1 + int(keys[n] * n)
    cuts = sorted((np.argsort(keys[n + 1:2 * n])[:n_groups - 1] + 1).tolist())
    bounds = [0] + cuts + [n]
    return tuple(tuple(perm[a:b]) for a, b in zip(bounds, bounds[1:]))


def random_draw(rng, tight=False):
    """One (x, e, theta, cfg) draw with sum(theta) == 0.

    With ``tight`` the offsets equalise the node gaps, which puts every node exactly
    on a common value; this is where the implication is hardest to satisfy.
    """
    uni = rng.random(21)
    nor = rng.standard_normal(32)
    n = 1 + int(uni[0] * 8)
    scale = 10.0 ** (6 * uni[1] - 3)
    x = nor[:n] * scale
    e = nor[8:8 + n] * scale * 10.0 ** (4 * uni[2] - 3)
    center = tuple(nor[16:16 + n] * scale) if uni[3] < 0.5 else None
    cfg = TriggerConfig(sigma=10.0 ** (7 * uni[4] - 6), tau_min=1e-4,
                        grouping=random_grouping(rng, n, uni[5:5 + 2 * n]), center=center)
    d = x - cfg.center_array(n)
    c = np.array([e[list(g)] @ e[list(g)] - cfg.sigma * (d[list(g)] @ d[list(g)])
                  for g in cfg.grouping])
    if tight:
        theta = c - c.mean()
    else:
        theta = nor[24:24 + cfg.n_nodes] * scale ** 2
        theta -= theta.mean()
    return x, e, theta, cfg

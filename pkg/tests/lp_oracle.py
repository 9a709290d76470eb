"""Brute-force vertex enumeration oracle for small LPs.

A bounded feasible LP attains its optimum at a vertex, i.e. at a point
where n linearly independent constraints (rows or variable bounds) are
active.  Enumerating every choice of n active constraints is exponential
but fine at the sizes used in tests.
"""

import itertools

import numpy as np


def enumerate_lp_minimum(c, A_ub, b_ub, A_eq, b_eq, lo, up, tol=1e-7):
    """Return (min objective, argmin) over all feasible vertices.

    Raises ValueError when no feasible vertex exists (infeasible or a
    degenerate unbounded setup; callers generate bounded boxes).
    """
    c = np.asarray(c, float)
    n = c.size
    A_ub = np.asarray(A_ub, float).reshape(-1, n)
    b_ub = np.asarray(b_ub, float).ravel()
    A_eq = np.asarray(A_eq, float).reshape(-1, n)
    b_eq = np.asarray(b_eq, float).ravel()
    lo = np.asarray(lo, float)
    up = np.asarray(up, float)

    planes = [A_eq, A_ub, np.eye(n), np.eye(n)]
    rhs = [b_eq, b_ub, lo, up]
    A_all = np.vstack(planes)
    b_all = np.concatenate(rhs)
    n_eq = b_eq.size
    free_ids = list(range(n_eq, b_all.size))
    if n_eq > n:
        raise ValueError("more equality rows than variables")

    combos = [
        list(range(n_eq)) + list(extra)
        for extra in itertools.combinations(free_ids, n - n_eq)
    ]
    mats = A_all[np.array(combos)]
    vecs = b_all[np.array(combos)]
    dets = np.abs(np.linalg.det(mats))
    ok = dets > 1e-10 * np.maximum(1.0, np.abs(mats).max(axis=(1, 2)) ** n)
    if not ok.any():
        raise ValueError("no nonsingular active set")
    pts = np.linalg.solve(mats[ok], vecs[ok][..., None])[..., 0]

    feas = np.ones(pts.shape[0], dtype=bool)
    if n_eq:
        feas &= np.all(np.abs(pts @ A_eq.T - b_eq) <= tol, axis=1)
    if b_ub.size:
        feas &= np.all(pts @ A_ub.T <= b_ub + tol, axis=1)
    feas &= np.all(pts >= lo - tol, axis=1)
    feas &= np.all(pts <= up + tol, axis=1)
    if not feas.any():
        raise ValueError("no feasible vertex")
    objs = pts[feas] @ c
    k = int(np.argmin(objs))
    return float(objs[k]), pts[feas][k]


def random_bounded_instance(rng, n, m_ub, m_eq=0):
    """Random LP over a finite box, feasible by construction."""
    lo = rng.uniform(-5, 0, size=n)
    up = lo + rng.uniform(0.5, 8, size=n)
    x0 = lo + (up - lo) * rng.uniform(0.15, 0.85, size=n)
    A_ub = rng.uniform(-3, 3, size=(m_ub, n))
    b_ub = A_ub @ x0 + rng.uniform(0.05, 3, size=m_ub)
    A_eq = rng.uniform(-2, 2, size=(m_eq, n))
    b_eq = A_eq @ x0
    c = rng.uniform(-4, 4, size=n)
    return c, A_ub, b_ub, A_eq, b_eq, lo, up

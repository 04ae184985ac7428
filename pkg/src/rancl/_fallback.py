"""Pure-Python/numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` operation for operation so that both backends
round identically; the compiled module is preferred when it imports.
"""

import numpy as np

DIRECT, INDIRECT, IMPLICIT = 0, 1, 2


def adam_update(param, grad, m, v, beta1, beta2, eps, step_size, inv_sqrt_bc2):
    """One in-place Adam step on flat float64 arrays.

    ``step_size`` is ``lr / (1 - beta1**t)`` and ``inv_sqrt_bc2`` is
    ``1 / sqrt(1 - beta2**t)``.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    g2 = grad * grad
    g2 *= 1.0 - beta2
    v *= beta2
    v += g2
    den = np.sqrt(v)
    den *= inv_sqrt_bc2
    den += eps
    num = m * step_size
    num /= den
    param -= num


def sparsemax_rows(z, mask_diagonal=False):
    """Row-wise Euclidean projection onto the probability simplex.

    With ``mask_diagonal`` the (square) input's diagonal is left out of each
    row's projection and set to zero in the output.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] == 0:
        raise ValueError("sparsemax needs a non-empty 2-D array")
    n, d = z.shape
    if mask_diagonal:
        if n != d or d < 2:
            raise ValueError("diagonal masking needs a square matrix with n >= 2")
        off = ~np.eye(n, dtype=bool)
        out = np.zeros_like(z)
        out[off] = sparsemax_rows(z[off].reshape(n, n - 1)).ravel()
        return out
    u = -np.sort(-z, axis=1)
    css = np.cumsum(u, axis=1)
    k = np.arange(1, d + 1, dtype=np.float64)
    support = 1.0 + k * u > css
    rho = d - np.argmax(support[:, ::-1], axis=1)
    tau = (css[np.arange(n), rho - 1] - 1.0) / rho
    return np.maximum(z - tau[:, None], 0.0)


def _implicit_paths(adj, p1, k2, na, np_, max_len):
    """Simple paths p1 -> .. -> k2 over learned nodes with >= 1 same-entity edge."""
    lo, mid, hi = na, na + np_, adj.shape[0]

    def same_entity(a, b):
        return (a < mid) == (b < mid)

    paths = []
    stack = [(p1, (p1,), False)]
    while stack:
        node, path, has_same = stack.pop()
        if len(path) - 1 >= max_len:
            continue
        for nxt in range(lo, hi):
            if nxt in path or not adj[node, nxt]:
                continue
            flag = has_same or same_entity(node, nxt)
            if nxt == k2:
                if len(path) >= 2 and flag:
                    paths.append(path + (nxt,))
                continue
            stack.append((nxt, path + (nxt,), flag))
    return paths


def scan_conflicts(adj, na, np_, nk, max_len=2):
    """Enumerate raw conflict tuples ``(kind, a_lo, a_hi, witness)``.

    ``adj`` is the full (agents, params, KPIs) adjacency; witnesses hold global
    node indices.
    """
    adj = np.asarray(adj)
    params = range(na, na + np_)
    kpis = range(na + np_, na + np_ + nk)
    ctrl = [[p for p in params if adj[a, p]] for a in range(na)]
    sub = [[k for k in kpis if adj[a, k]] for a in range(na)]
    found = set()
    for a1 in range(na):
        for a2 in range(a1 + 1, na):
            for p in ctrl[a1]:
                if adj[a2, p]:
                    found.add((DIRECT, a1, a2, (p,)))
            for p1 in ctrl[a1]:
                for p2 in ctrl[a2]:
                    if p1 == p2:
                        continue
                    for k in kpis:
                        if adj[p1, k] and adj[p2, k]:
                            found.add((INDIRECT, a1, a2, (min(p1, p2), k, max(p1, p2))))
    for a1 in range(na):
        for a2 in range(na):
            if a1 == a2:
                continue
            lo, hi = min(a1, a2), max(a1, a2)
            for p1 in ctrl[a1]:
                if adj[a2, p1]:
                    continue
                for k2 in sub[a2]:
                    if adj[p1, k2] and any(adj[p2, k2] for p2 in ctrl[a2] if p2 != p1):
                        continue
                    for path in _implicit_paths(adj, p1, k2, na, np_, max_len):
                        found.add((IMPLICIT, lo, hi, path))
    return list(found)

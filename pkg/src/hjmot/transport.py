"""Two-marginal discrete transport: exact min-cost flow and entropic Sinkhorn.

The exact solver runs successive shortest paths with node potentials on the
bipartite transportation network.  When every weight is exactly a fraction
with denominator at most ``10**6`` the masses are scaled to integers and the
flow is exact; otherwise it runs in floating point with a ``1e-12`` pivot
threshold.  Forbidden pairs are ``+inf`` entries of the cost matrix.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

FLOAT_PIVOT = 1e-12
MARGINAL_TOL = 1e-9
MAX_DENOMINATOR = 10**6


class InfeasibleError(RuntimeError):
    """No coupling of the marginals has finite cost."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, violation, result=None):
        super().__init__(message)
        self.violation = violation
        self.result = result


@dataclass
class TransportPlan:
    entries: list  # (source, terminal, mass), mass > 0
    value: float
    shape: tuple
    u: np.ndarray | None = None
    v: np.ndarray | None = None

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for a, b, m in self.entries:
            out[a, b] += m
        return out

    def row_sums(self) -> np.ndarray:
        return self.dense().sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.dense().sum(axis=0)


def _check_marginals(mu, nu):
    mu = np.asarray(mu, dtype=float).ravel()
    nu = np.asarray(nu, dtype=float).ravel()
    for name, w in (("mu", mu), ("nu", nu)):
        if (w < 0).any() or not np.isfinite(w).all():
            raise ValueError(f"{name} has negative or non-finite weights")
        if abs(w.sum() - 1.0) > MARGINAL_TOL:
            raise ValueError(f"{name} is not normalized (sum {w.sum()!r})")
    return mu, nu


def _integer_scaling(weights):
    """Common denominator scaling if every weight is exactly a small fraction."""
    fracs = []
    for w in weights:
        f = Fraction(float(w)).limit_denominator(MAX_DENOMINATOR)
        if float(f) != float(w):
            return None
        fracs.append(f)
    L = 1
    for f in fracs:
        L = L * f.denominator // math.gcd(L, f.denominator)
    if L > 2**52:
        return None
    return L, [int(f * L) for f in fracs]


def _successive_shortest_paths(supply, demand, cost, zero):
    m, n = cost.shape
    finite = np.isfinite(cost)
    flow = np.zeros((m, n), dtype=supply.dtype)
    pr = np.zeros(m)  # row potentials
    pc = np.zeros(n)  # column potentials
    supply = supply.copy()
    demand = demand.copy()

    while (supply > zero).any() and (demand > zero).any():
        dr = np.where(supply > zero, 0.0, math.inf)
        dc = np.full(n, math.inf)
        prev_row = np.full(n, -1)  # row feeding column j
        prev_col = np.full(m, -1)  # column feeding row i through a backward arc
        done_r = np.zeros(m, dtype=bool)
        done_c = np.zeros(n, dtype=bool)
        target = -1
        while True:
            r_cand = np.where(done_r, math.inf, dr)
            c_cand = np.where(done_c, math.inf, dc)
            ir, jc = int(np.argmin(r_cand)), int(np.argmin(c_cand))
            if r_cand[ir] == math.inf and c_cand[jc] == math.inf:
                break
            if c_cand[jc] <= r_cand[ir]:
                done_c[jc] = True
                if demand[jc] > zero:
                    target = jc
                    break
                rows = np.flatnonzero((flow[:, jc] > zero) & ~done_r)
                if rows.size:
                    rc = np.maximum(-cost[rows, jc] + pc[jc] - pr[rows], 0.0)
                    nd = dc[jc] + rc
                    better = nd < dr[rows]
                    dr[rows[better]] = nd[better]
                    prev_col[rows[better]] = jc
            else:
                done_r[ir] = True
                cols = np.flatnonzero(finite[ir] & ~done_c)
                if cols.size:
                    rc = np.maximum(cost[ir, cols] + pr[ir] - pc[cols], 0.0)
                    nd = dr[ir] + rc
                    better = nd < dc[cols]
                    dc[cols[better]] = nd[better]
                    prev_row[cols[better]] = ir
        if target < 0:
            raise InfeasibleError("remaining supply cannot reach any remaining demand through finite costs")

        dt = dc[target]
        pr += np.minimum(dr, dt)
        pc += np.minimum(dc, dt)

        # walk back to the originating row, collecting the bottleneck
        arcs = []
        j = target
        while True:
            i = int(prev_row[j])
            arcs.append((i, j, +1))
            jb = int(prev_col[i])
            if jb < 0:
                break
            arcs.append((i, jb, -1))
            j = jb
        src = arcs[-1][0]
        delta = min(supply[src], demand[target])
        for i, j, sgn in arcs:
            if sgn < 0:
                delta = min(delta, flow[i, j])
        for i, j, sgn in arcs:
            flow[i, j] += sgn * delta
        supply[src] -= delta
        demand[target] -= delta
        if zero > 0:
            flow[np.abs(flow) <= zero] = 0
            supply[supply <= zero] = 0
            demand[demand <= zero] = 0
    return flow


def _cancel_cycles(flow, cost, zero):
    """Push flow around support cycles until the support is a forest (a vertex plan)."""
    m, n = flow.shape
    while True:
        cyc = _find_support_cycle(flow > zero, m, n)
        if cyc is None:
            return flow
        # alternate +, -, +, - along the cycle edges
        plus, minus = cyc[0::2], cyc[1::2]
        gain = sum(cost[e] for e in plus) - sum(cost[e] for e in minus)
        if gain > 0:
            plus, minus = minus, plus
        theta = min(flow[e] for e in minus)
        for e in plus:
            flow[e] += theta
        for e in minus:
            flow[e] -= theta
        if zero > 0:
            flow[np.abs(flow) <= zero] = 0


def _find_support_cycle(support, m, n):
    """An even-length cycle of (row, col) support edges in the bipartite graph, or None."""
    adj = {("r", i): [] for i in range(m)}
    adj.update({("c", j): [] for j in range(n)})
    for i, j in zip(*np.nonzero(support)):
        adj[("r", int(i))].append(("c", int(j)))
        adj[("c", int(j))].append(("r", int(i)))
    parent = {}
    for root in adj:
        if root in parent:
            continue
        parent[root] = None
        stack = [(root, None)]
        while stack:
            node, par = stack.pop()
            for nb in adj[node]:
                if nb == par:
                    continue
                if nb in parent:
                    # back edge: build the cycle node -> ... -> lca <- ... <- nb
                    a_chain, b_chain = [node], [nb]
                    seen = {node: 0}
                    x = node
                    while parent[x] is not None:
                        x = parent[x]
                        seen[x] = len(a_chain)
                        a_chain.append(x)
                    y = nb
                    while y not in seen:
                        y = parent[y]
                        b_chain.append(y)
                    nodes = a_chain[: seen[y] + 1] + list(reversed(b_chain[:-1]))
                    edges = []
                    for p, q in zip(nodes, nodes[1:] + nodes[:1]):
                        r, c = (p, q) if p[0] == "r" else (q, p)
                        edges.append((r[1], c[1]))
                    return edges
                parent[nb] = node
                stack.append((nb, node))
    return None


def _duals(flow, cost, zero):
    """Potentials with u_a + v_b <= cost and equality on the support, by Bellman-Ford."""
    m, n = cost.shape
    support = flow > zero
    dr = np.zeros(m)
    dc = np.zeros(n)
    for _ in range(m + n + 2):
        new_dc = np.minimum(dc, (dr[:, None] + cost).min(axis=0))
        back = np.where(support, new_dc[None, :] - np.where(support, cost, 0.0), math.inf)
        new_dr = np.minimum(dr, back.min(axis=1))
        if np.array_equal(new_dc, dc) and np.array_equal(new_dr, dr):
            break
        dr, dc = new_dr, new_dc
    return -dr, dc


def solve_exact_transport(mu, nu, cost) -> TransportPlan:
    """Exact optimal coupling of ``mu`` and ``nu`` for a nonnegative cost matrix.

    Returns a vertex plan (at most ``m + n - 1`` entries) together with dual
    potentials ``u``, ``v``: ``u[a] + v[b] <= cost[a, b]`` everywhere and
    equality on the support, gauged so that ``v`` vanishes on the first
    terminal in the support.
    """
    mu, nu = _check_marginals(mu, nu)
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (mu.size, nu.size):
        raise ValueError(f"cost shape {cost.shape} does not match marginals ({mu.size}, {nu.size})")
    if (cost < 0).any():
        raise ValueError("cost has negative entries")

    scaled = _integer_scaling(np.concatenate([mu, nu]))
    if scaled is not None and sum(scaled[1][: mu.size]) == sum(scaled[1][mu.size:]):
        L, ints = scaled
        supply = np.asarray(ints[: mu.size], dtype=np.int64)
        demand = np.asarray(ints[mu.size:], dtype=np.int64)
        flow = _successive_shortest_paths(supply, demand, cost, 0)
        flow = _cancel_cycles(flow, cost, 0)
        plan = flow.astype(float) / L
        zero = 0
        log.debug("exact transport in integer mode, denominator %d", L)
    else:
        flow = _successive_shortest_paths(mu.copy(), nu.copy(), cost, FLOAT_PIVOT)
        flow = _cancel_cycles(flow, cost, FLOAT_PIVOT)
        plan = flow
        zero = FLOAT_PIVOT
        if abs(plan.sum() - 1.0) > MARGINAL_TOL:
            raise InfeasibleError("flow did not route all mass")

    entries = [(int(a), int(b), float(plan[a, b])) for a, b in zip(*np.nonzero(flow > zero))]
    value = 0.0
    for a, b, w in entries:
        value += w * cost[a, b]
    u, v = _duals(flow, cost, zero)
    if entries:
        shift = v[min(b for _, b, _ in entries)]
        u, v = u + shift, v - shift
    return TransportPlan(entries, float(value), cost.shape, u, v)


def round_to_marginals(P, mu, nu, cost=None):
    """Project a nonnegative matrix onto the coupling polytope (row/col clipping + rank-one fix).

    When ``cost`` has infinite entries the leftover mass is routed by an exact
    transport of the deficits instead of the rank-one outer product, so the
    result never touches a forbidden cell.
    """
    P = np.array(P, dtype=float)
    r = P.sum(axis=1)
    x = np.where(r > 0, np.minimum(mu / np.where(r > 0, r, 1.0), 1.0), 0.0)
    P *= x[:, None]
    c = P.sum(axis=0)
    y = np.where(c > 0, np.minimum(nu / np.where(c > 0, c, 1.0), 1.0), 0.0)
    P *= y[None, :]
    er = mu - P.sum(axis=1)
    ec = nu - P.sum(axis=0)
    er, ec = np.maximum(er, 0.0), np.maximum(ec, 0.0)
    s = er.sum()
    if s <= 0:
        return P
    if cost is None or np.isfinite(cost).all():
        return P + np.outer(er, ec) / s
    # keep a fraction beta of the clipped plan and route the rest exactly; beta = 0
    # is feasible whenever the original problem is
    r, c = P.sum(axis=1), P.sum(axis=0)
    for beta in (1.0, 1.0 - 1e-6, 1.0 - 1e-3, 0.9, 0.5, 0.0):
        rest_r, rest_c = np.maximum(mu - beta * r, 0.0), np.maximum(nu - beta * c, 0.0)
        mass = rest_r.sum()
        try:
            fix = solve_exact_transport(rest_r / mass, rest_c / rest_c.sum(), cost)
        except InfeasibleError:
            continue
        R = beta * P
        for a, b, w in fix.entries:
            R[a, b] += w * mass
        return R
    raise InfeasibleError("no finite-cost coupling of the marginals")


def _semidual(logK, lmu, lnu, y):
    """Value, row log-normalizers and row softmax of the entropic semi-dual at ``y``."""
    with np.errstate(invalid="ignore"):
        Z = logsumexp(logK + y[None, :], axis=1)
    p = np.exp(logK + y[None, :] - Z[:, None])
    mu = np.exp(lmu)
    return float(mu @ Z - np.exp(lnu) @ y), Z, p


def _newton_refine(logK, lmu, lnu, y, stop_tol, max_steps):
    """Damped Newton on the semi-dual in ``y = g / epsilon``.

    Used when Sinkhorn stalls; its sublinear regime appears when the entropic
    plan is close to sparse, and Newton steps stay well scaled there.
    """
    mu, nu = np.exp(lmu), np.exp(lnu)
    F, Z, p = _semidual(logK, lmu, lnu, y)
    for _ in range(max_steps):
        grad = mu @ p - nu
        if np.abs(grad).max() < stop_tol:
            break
        H = np.diag(mu @ p) - (p * mu[:, None]).T @ p
        d = np.linalg.lstsq(H, -grad, rcond=1e-14)[0]
        step = 1.0
        while step > 1e-12:
            F_new, Z_new, p_new = _semidual(logK, lmu, lnu, y + step * d)
            if F_new <= F + 1e-4 * step * float(grad @ d):
                break
            step *= 0.5
        else:
            break
        y, F, Z, p = y + step * d, F_new, Z_new, p_new
    return y, lmu - Z


def _sinkhorn(logK, lmu, lnu, g, mu, stop_tol, max_iter, newton_steps):
    """Sinkhorn sweeps from ``g``; switch to Newton if they have not converged after 1000."""
    violation = math.inf
    f = np.zeros(lmu.size)
    sweeps = min(max_iter, 1000) if newton_steps > 0 else max_iter
    for it in range(sweeps):
        with np.errstate(invalid="ignore"):
            f = lmu - logsumexp(logK + g[None, :], axis=1)
            g = lnu - logsumexp(logK + f[:, None], axis=0)
        if it % 5 == 0:
            P = np.exp(logK + f[:, None] + g[None, :])
            violation = float(np.abs(P.sum(axis=1) - mu).max())
            if violation < stop_tol:
                return f, g
    if newton_steps > 0:
        g, f = _newton_refine(logK, lmu, lnu, g, stop_tol, newton_steps)
    return f, g


def solve_entropic(mu, nu, cost, epsilon: float, max_iter: int = 10_000, stop_tol: float = 1e-9,
                   newton_steps: int = 500):
    """Log-domain Sinkhorn on ``exp(-cost / epsilon)`` with a Newton fallback.

    Returns ``(plan, value, (f, g))``: ``plan`` is the rounded feasible coupling,
    ``value`` its primal cost, ``f`` and ``g`` the scaled log-potentials.
    The regularization is annealed geometrically from the cost spread down to
    ``epsilon`` with warm starts.  At each level, if the marginal violation is
    still ``>= stop_tol`` after the Sinkhorn sweeps (at most ``max_iter``, and
    at most 1000 before switching), damped Newton steps on the semi-dual finish
    the job.  Raises :class:`ConvergenceError` if both fail.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    mu, nu = _check_marginals(mu, nu)
    cost = np.asarray(cost, dtype=float)
    finite = np.isfinite(cost)
    logK = np.where(finite, -cost / epsilon, -np.inf)
    rows, cols = np.flatnonzero(mu > 0), np.flatnonzero(nu > 0)
    sub = logK[np.ix_(rows, cols)]
    lmu, lnu = np.log(mu[rows]), np.log(nu[cols])
    if not np.isfinite(sub).any(axis=1).all() or not np.isfinite(sub).any(axis=0).all():
        raise InfeasibleError("some marginal mass has no finite-cost partner")
    finite_sub = sub[np.isfinite(sub)]
    spread = float(finite_sub.max() - finite_sub.min()) * epsilon
    # anneal from the cost spread down to epsilon, warm-starting g
    schedule = [epsilon]
    while schedule[-1] * 4.0 < spread:
        schedule.append(schedule[-1] * 4.0)
    g_nat = np.zeros(cols.size)
    for eps in reversed(schedule):
        logK_e = sub * (epsilon / eps)
        f, g = _sinkhorn(logK_e, lmu, lnu, g_nat / eps, mu[rows], stop_tol, max_iter, newton_steps)
        g_nat = g * eps
    Psub = np.exp(sub + f[:, None] + g[None, :])
    P = np.zeros(cost.shape)
    P[np.ix_(rows, cols)] = Psub
    violation = float(max(np.abs(P.sum(axis=1) - mu).max(), np.abs(P.sum(axis=0) - nu).max()))
    R = round_to_marginals(P, mu, nu, cost)
    entries = [(int(a), int(b), float(R[a, b])) for a, b in zip(*np.nonzero(R > 0))]
    value = 0.0
    for a, b, w in entries:
        value += w * cost[a, b]
    plan = TransportPlan(entries, float(value), cost.shape)
    F = np.full(mu.size, -np.inf)
    G = np.full(nu.size, -np.inf)
    F[rows], G[cols] = f, g
    duals = (epsilon * F, epsilon * G)
    if violation >= stop_tol:
        raise ConvergenceError(f"Sinkhorn did not reach {stop_tol:g} (violation {violation:.3g})",
                               violation, (plan, float(value), duals))
    return plan, float(value), duals

"""Regularity indicators: Voronoi deviation, regularity reports, diagnostics.

The Voronoi deviation measures how far the particle volumes sit from the
Voronoi volumes, as the optimal value of a transport-style linear program
whose plans a[i][j] carry volume between cell i and particle j.  Small
instances are solved exactly with the in-package simplex; a greedy transport
provides a scalable upper bound, and the two are never silently conflated
(every result carries its kind).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .geometry import BucketGrid, ParticleSystem, VoronoiDiagram, neighbors
from .simplex import solve_lp
from .weights import RadialWeight, radial_moment

EXACT_LP_DEFAULT_CAP = 40


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse nonnegative volume-transport matrix between cells and particles.

    Row marginals must reproduce the Voronoi volumes and column marginals the
    particle volumes (the feasibility conditions of the deviation LP).
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        mass = np.ascontiguousarray(self.mass, dtype=float)
        if not (rows.shape == cols.shape == mass.shape):
            raise ValueError("rows/cols/mass must have equal length")
        if np.any(mass < 0):
            raise ValueError("transport entries must be nonnegative")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def from_dense(cls, a: np.ndarray, drop_tol: float = 0.0) -> "TransportPlan":
        a = np.asarray(a, dtype=float)
        rows, cols = np.nonzero(a > drop_tol)
        return cls(n=a.shape[0], rows=rows, cols=cols, mass=a[rows, cols])

    def row_sums(self) -> np.ndarray:
        out = np.zeros(self.n)
        np.add.at(out, self.rows, self.mass)
        return out

    def col_sums(self) -> np.ndarray:
        out = np.zeros(self.n)
        np.add.at(out, self.cols, self.mass)
        return out

    def check_marginals(self, row_target: np.ndarray, col_target: np.ndarray,
                        rtol: float = 1e-9) -> None:
        row_ok = np.abs(self.row_sums() - row_target) <= rtol * np.abs(row_target)
        col_ok = np.abs(self.col_sums() - col_target) <= rtol * np.abs(col_target)
        if not (row_ok.all() and col_ok.all()):
            raise ValueError("transport plan marginals do not match targets")


@dataclass(frozen=True)
class DeviationResult:
    """Voronoi deviation value; ``kind`` says exact LP optimum or upper bound."""

    value: float
    kind: str  # "exact" | "upper_bound"
    n_particles: int
    plan: TransportPlan | None = None


def local_deviation(plan: TransportPlan, ps: ParticleSystem,
                    diagram: VoronoiDiagram) -> float:
    """Deviation of one feasible plan: the largest per-cell transport distance

        max_i sum_j (a_ij + a_ji) |x_i - x_j| / |cell_i|.

    Diagonal entries contribute nothing (zero distance).
    """
    vols = diagram.volumes
    if np.any(vols <= 0):
        raise ValueError("zero-volume Voronoi cell")
    plan.check_marginals(vols, ps.volumes)
    dist = np.sqrt(np.sum(
        (ps.points[plan.rows] - ps.points[plan.cols]) ** 2, axis=1))
    t = np.zeros(ps.n)
    np.add.at(t, plan.rows, plan.mass * dist / vols[plan.rows])
    np.add.at(t, plan.cols, plan.mass * dist / vols[plan.cols])
    return float(np.max(t))


def voronoi_deviation_exact(ps: ParticleSystem, diagram: VoronoiDiagram,
                            cap: int = EXACT_LP_DEFAULT_CAP) -> DeviationResult:
    """Exact Voronoi deviation by linear programming (simplex).

    Variables z = (a_11..a_NN, s_1..s_N, q); constraints are the two marginal
    families plus q = s_i + sum_j (a_ij + a_ji) |x_i - x_j| / |cell_i| per i;
    the minimum of q is the deviation.  The LP has N^2 + N + 1 variables, so
    exact solves are refused above ``cap`` particles.
    """
    n = ps.n
    if n > cap:
        raise ValueError(
            f"exact LP has {n * n + n + 1} variables for N={n}; raise the cap "
            f"(currently {cap}) or use voronoi_deviation_bound")
    vols = diagram.volumes
    if np.any(vols <= 0):
        raise ValueError("zero-volume Voronoi cell")
    pts = ps.points
    dist = np.sqrt(np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2))

    nvar = n * n + n + 1
    a_eq = np.zeros((3 * n, nvar))
    b_eq = np.zeros(3 * n)
    for i in range(n):
        a_eq[i, i * n:(i + 1) * n] = 1.0
        b_eq[i] = vols[i]
    for j in range(n):
        a_eq[n + j, j:n * n:n] = 1.0
        b_eq[n + j] = ps.volumes[j]
    for i in range(n):
        row = 2 * n + i
        for j in range(n):
            a_eq[row, i * n + j] += dist[i, j] / vols[i]
            a_eq[row, j * n + i] += dist[i, j] / vols[i]
        a_eq[row, n * n + i] = 1.0
        a_eq[row, n * n + n] = -1.0
    cost = np.zeros(nvar)
    cost[n * n + n] = 1.0

    res = solve_lp(cost, a_eq, b_eq)
    if res.status != "optimal":
        raise RuntimeError(
            f"deviation LP unexpectedly {res.status}; volume totals may be "
            "inconsistent")
    plan = TransportPlan.from_dense(res.x[: n * n].reshape(n, n))
    resid = float(np.max(np.abs(a_eq[: 2 * n] @ res.x - b_eq[: 2 * n])))
    if resid > 1e-9 * max(1.0, float(np.max(vols))):
        raise RuntimeError(f"LP feasibility residual {resid:g} too large")
    return DeviationResult(value=float(res.value), kind="exact",
                           n_particles=n, plan=plan)


def _oneshot_rounds(ps, grid, send, room, rows, cols, mass, dust,
                    radius: float, max_radius: float) -> None:
    """One-hop greedy: ship residuals to the nearest open capacity, in rounds
    of doubling search radius (everyone settles locally before anyone may
    ship farther).  Ties go to the smaller particle index.  Stops once the
    radius exceeds ``max_radius``; leftover mass stays in ``send``.
    """
    pending = [int(i) for i in np.nonzero(send > dust)[0]]
    while pending and radius <= max_radius:
        still = []
        for i in pending:
            remaining = send[i]
            x = ps.points[i]
            while remaining > dust:
                cand = grid.query_candidates(x, radius)
                cand = cand[room[cand] > dust]
                j = -1
                if cand.size:
                    d2 = np.sum((ps.points[cand] - x) ** 2, axis=1)
                    within = d2 <= radius * radius
                    if np.any(within):
                        d2w = d2[within]
                        candw = cand[within]
                        j = int(candw[d2w <= d2w.min()].min())
                if j < 0:
                    break
                amount = min(remaining, room[j])
                rows.append(i)
                cols.append(j)
                mass.append(amount)
                room[j] -= amount
                remaining -= amount
            send[i] = remaining
            if remaining > dust:
                still.append(i)
        radius *= 2.0
        pending = still


def _neumann_poisson(excess: np.ndarray) -> np.ndarray:
    """Solve the discrete Poisson problem sum_n (phi_c - phi_n) = excess_c on
    a grid with no-flux boundaries (unit spacing, 2d-point stencil), so the
    edge flows phi_c - phi_n drain each cell's excess.  The mean of excess is
    projected out (zero total is the solvability condition).
    """
    from scipy import fft as sfft

    rho = excess - excess.mean()
    shape = rho.shape
    rb = sfft.dctn(rho, type=2, norm="ortho")
    lam = np.zeros(shape)
    for axis, npts in enumerate(shape):
        k = np.arange(npts)
        lam_axis = 2.0 - 2.0 * np.cos(np.pi * k / npts)
        lam = lam + lam_axis.reshape([-1 if a == axis else 1
                                      for a in range(len(shape))])
    lam.flat[0] = 1.0
    phi = rb / lam
    phi.flat[0] = 0.0
    return sfft.idctn(phi, type=2, norm="ortho")


def _potential_flow(ps, grid, send, room, diag, rows, cols, mass,
                    dust, passes: int = 5) -> None:
    """Drain net per-cell excess along a discrete potential flow.

    The per-cell imbalance (sends minus rooms) is treated as the divergence
    of a flow on the bucket grid; the Neumann Poisson solution spreads that
    flow smoothly, so no cell carries more than its local share and nothing
    is hauled across the domain in one hop.  Cells are processed downstream
    (descending potential): each first absorbs pending mass into its own
    capacity, then pushes the planned edge flows into a nearest particle of
    the target cell, displacing kept diagonal mass there (rows and columns
    stay balanced, so the plan remains feasible).  Clamping leaves a small
    residual, so the flow is repeated on the leftover imbalance; later
    passes touch only the few cells with pending mass or planned flow.
    """
    shape = tuple(int(v) for v in grid.ncells)
    ncells = int(np.prod(shape))
    cell_of = _particle_cell_ids(ps, grid)
    members_of: list[np.ndarray] = [
        grid.order[grid.cell_start[c]:grid.cell_start[c + 1]]
        for c in range(ncells)
    ]
    axis_steps = _axis_offsets(shape)

    total = float(np.sum(send))
    for _ in range(passes):
        active_send = send > dust
        if not active_send.any():
            return
        excess = np.zeros(ncells)
        np.add.at(excess, cell_of, send - room)
        phi = _neumann_poisson(excess.reshape(shape)).ravel()

        active = np.zeros(ncells, dtype=bool)
        active[cell_of[active_send]] = True
        for off in axis_steps:
            shifted = _shift_all(phi.reshape(shape), off)
            active |= (np.abs(phi.reshape(shape) - shifted) > dust).ravel()
        order = np.nonzero(active)[0]
        order = order[np.argsort(-phi[order], kind="stable")]

        before = float(np.sum(send[send > dust]))
        for cid in order:
            members = members_of[cid]
            if members.size == 0:
                continue
            # settle within the cell first: pending mass into local capacity
            for i in members:
                i = int(i)
                if send[i] > dust:
                    send[i], _ = _fill_rooms(ps, i, send[i], members, room,
                                             rows, cols, mass, dust)
            # push planned edge flows downstream
            for off in axis_steps:
                nid = _shift_cell(int(cid), off, shape)
                if nid < 0:
                    continue
                flow = phi[cid] - phi[nid]
                if flow <= dust or not members_of[nid].size:
                    continue
                _push_flow(ps, members, members_of[nid], flow, send, room,
                           diag, rows, cols, mass, dust)
        after = float(np.sum(send[send > dust]))
        if after <= 1e-10 * max(total, 1e-300) or after >= before:
            return


def _shift_all(phi: np.ndarray, off) -> np.ndarray:
    """phi shifted by a grid offset, edge-padded (no-flux boundaries)."""
    out = phi
    for axis, step in enumerate(off):
        if step == 0:
            continue
        out = np.roll(out, -step, axis=axis)
        sl = [slice(None)] * phi.ndim
        sl[axis] = slice(-step, None) if step > 0 else slice(None, -step)
        edge = [slice(None)] * phi.ndim
        edge[axis] = slice(-1, None) if step > 0 else slice(0, 1)
        out[tuple(sl)] = phi[tuple(edge)]
    return out


def _push_flow(ps, src_members, dst_members, flow, send, room, diag,
               rows, cols, mass, dust) -> None:
    """Move up to ``flow`` pending mass from source-cell particles into the
    target cell: capacity there first, then displacement of kept mass (which
    the target cell pushes on when its own turn comes).
    """
    budget = flow
    for i in src_members:
        i = int(i)
        if budget <= dust:
            return
        p = min(send[i], budget)
        if p <= dust:
            continue
        send[i] -= p
        budget -= p
        p, _ = _fill_rooms(ps, i, p, dst_members, room, rows, cols, mass, dust)
        if p <= dust:
            continue
        d2 = np.sum((ps.points[dst_members] - ps.points[i]) ** 2, axis=1)
        for n in dst_members[np.argsort(d2, kind="stable")]:
            n = int(n)
            disp = min(p, diag[n])
            if disp > dust:
                rows.append(i)
                cols.append(n)
                mass.append(disp)
                diag[n] -= disp
                send[n] += disp
                p -= disp
            if p <= dust:
                break
        if p > dust:  # target diagonals exhausted; keep the rest pending
            send[i] += p
            budget += p


def _fill_rooms(ps, src, p, members, room, rows, cols, mass, dust):
    """Consume members' remaining capacity with mass from ``src`` (nearest
    member first); returns (remaining, amount consumed)."""
    consumed = 0.0
    d2 = np.sum((ps.points[members] - ps.points[src]) ** 2, axis=1)
    for n in members[np.argsort(d2, kind="stable")]:
        n = int(n)
        if n == src:
            continue
        take = min(p, room[n])
        if take > dust:
            rows.append(int(src))
            cols.append(n)
            mass.append(take)
            room[n] -= take
            p -= take
            consumed += take
        if p <= dust:
            break
    return p, consumed


def _axis_offsets(shape):
    if len(shape) == 1:
        return [(-1,), (1,)]
    return [(-1, 0), (1, 0), (0, -1), (0, 1)]


def _pair_dust(send, room, rows, cols, mass) -> None:
    """Assign remaining residuals to remaining capacity in index order."""
    s_idx = np.nonzero(send > 0)[0]
    r_idx = np.nonzero(room > 0)[0]
    si = ri = 0
    while si < s_idx.size and ri < r_idx.size:
        i = int(s_idx[si])
        j = int(r_idx[ri])
        amount = min(send[i], room[j])
        if amount > 0:
            rows.append(i)
            cols.append(j)
            mass.append(amount)
            send[i] -= amount
            room[j] -= amount
        if send[i] <= 0:
            si += 1
        if room[j] <= 0:
            ri += 1


def _particle_cell_ids(ps, grid) -> np.ndarray:
    cidx = np.floor((ps.points - grid.lower) / grid.cell_sizes).astype(np.int64)
    np.clip(cidx, 0, grid.ncells - 1, out=cidx)
    if ps.dim == 2:
        return cidx[:, 0] * grid.ncells[1] + cidx[:, 1]
    return cidx[:, 0]


def _shift_cell(cid: int, off, shape) -> int:
    if len(shape) == 1:
        c = cid + off[0]
        return c if 0 <= c < shape[0] else -1
    cx, cy = divmod(cid, shape[1])
    cx += off[0]
    cy += off[1]
    if 0 <= cx < shape[0] and 0 <= cy < shape[1]:
        return cx * shape[1] + cy
    return -1


def voronoi_deviation_bound(ps: ParticleSystem,
                            diagram: VoronoiDiagram) -> DeviationResult:
    """Upper bound on the Voronoi deviation from a greedy transport.

    Every cell first keeps min(|cell_i|, V_i) in place.  Residual volume is
    shipped to the nearest particles with remaining capacity in rounds of
    growing radius; residuals that find no nearby capacity (typically the
    systematic surplus of interior cells against the smaller wall cells) are
    relayed toward capacity in short hops instead of hauled in one step,
    which keeps the bound at the same spacing scale as the optimum.  The
    resulting plan is feasible, so its value bounds the exact deviation from
    above.
    """
    vols = diagram.volumes
    if np.any(vols <= 0):
        raise ValueError("zero-volume Voronoi cell")
    target = ps.volumes
    keep = np.minimum(vols, target)
    send = vols - keep
    room = target - keep
    diag = keep.copy()
    total = float(np.sum(vols))
    dust = 1e-15 * total

    rows: list[int] = []
    cols: list[int] = []
    mass: list[float] = []

    box = ps.extended_box
    spacing = (box.volume / ps.n) ** (1.0 / ps.dim)
    grid = BucketGrid(ps.points, box.lower_array(), box.upper_array(), spacing)
    diameter = float(np.linalg.norm(box.upper_array() - box.lower_array()))

    # potential flow drains the net per-cell imbalance in short hops; the
    # one-hop rounds then settle the remaining local residue
    flow_grid = BucketGrid(ps.points, box.lower_array(), box.upper_array(),
                           1.6 * spacing)
    _potential_flow(ps, flow_grid, send, room, diag, rows, cols, mass, dust)
    if np.any(send > dust):
        _oneshot_rounds(ps, grid, send, room, rows, cols, mass, dust,
                        radius=2.0 * spacing, max_radius=2.0 * diameter)

    # distance-blind endgame: pair residual dust with whatever capacity is
    # left (the amounts are far below the marginal tolerances, so the extra
    # distance cannot matter); only the irreducible rounding gap between the
    # two volume totals may remain
    _pair_dust(send, room, rows, cols, mass)
    if float(np.sum(send)) > 1e-9 * total:
        raise RuntimeError("greedy transport ran out of capacity")

    nz = np.nonzero(diag > 0)[0]
    rows.extend(int(i) for i in nz)
    cols.extend(int(i) for i in nz)
    mass.extend(float(v) for v in diag[nz])

    plan = TransportPlan(n=ps.n, rows=np.asarray(rows, dtype=np.int64),
                         cols=np.asarray(cols, dtype=np.int64),
                         mass=np.asarray(mass))
    return DeviationResult(value=local_deviation(plan, ps, diagram),
                           kind="upper_bound", n_particles=ps.n, plan=plan)


# ---------------------------------------------------------------------------
# Regularity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegularityReport:
    """Achievable regularity constant h^m / (r_N + d_N) for one family member."""

    h: float
    order: float
    covering_radius: float
    deviation: float
    c0: float

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.c0)


def regularity_report(r_n: float, d_n_or_bound: float, h: float,
                      m: float) -> RegularityReport:
    """Constant making h^m >= c0 (r_N + d_N) tight for this member."""
    if h <= 0:
        raise ValueError(f"influence radius must be positive, got {h}")
    if m < 1:
        raise ValueError(f"regular order must be >= 1, got {m}")
    if r_n < 0 or d_n_or_bound < 0:
        raise ValueError("indicators must be nonnegative")
    s = r_n + d_n_or_bound
    c0 = math.inf if s == 0 else h**m / s
    return RegularityReport(h=h, order=m, covering_radius=r_n,
                            deviation=d_n_or_bound, c0=c0)


@dataclass(frozen=True)
class FamilyRegularity:
    """Regularity judgment for a refinement family.

    The family counts as regular with the given order when the per-level
    constants stay within a configurable multiplicative band (the constant
    must stay bounded away from zero under refinement; the band factor is a
    heuristic threshold, not part of the definition).
    """

    order: float
    reports: tuple[RegularityReport, ...]
    c0_min: float
    c0_max: float
    band_ratio: float
    judged_regular: bool


def family_regularity(reports, m: float,
                      band_factor: float = 4.0) -> FamilyRegularity:
    reports = tuple(reports)
    if not reports:
        raise ValueError("need at least one level")
    c0s = [r.c0 for r in reports]
    c0_min, c0_max = min(c0s), max(c0s)
    ratio = math.inf if c0_min == 0 else c0_max / c0_min
    return FamilyRegularity(
        order=m, reports=reports, c0_min=c0_min, c0_max=c0_max,
        band_ratio=ratio,
        judged_regular=math.isfinite(ratio) and ratio <= band_factor and c0_min > 0)


# ---------------------------------------------------------------------------
# Error functionals (numerical diagnostics)
# ---------------------------------------------------------------------------

def _multi_indices(d: int, total: int):
    for combo in itertools.product(range(total + 1), repeat=d):
        if sum(combo) <= total:
            yield combo


def monomial_angular_factor(alpha) -> float:
    """Integral of xi^alpha over the unit sphere; zero for odd components."""
    if any(a % 2 for a in alpha):
        return 0.0
    d = len(alpha)
    num = 2.0
    for a in alpha:
        num *= math.gamma((a + 1) / 2.0)
    return num / math.gamma((sum(alpha) + d) / 2.0)


def weighted_monomial_integral(w: RadialWeight, h: float, alpha,
                               ell: int = 0) -> float:
    """Continuum moment int y^alpha / |y|^ell  w_h(|y|) dy.

    Odd components force an exact zero by symmetry; even moments reduce to an
    angular factor times a radial integral of the reference profile.
    """
    ang = monomial_angular_factor(alpha)
    if ang == 0.0:
        return 0.0
    total = sum(alpha)
    return (h ** (total - ell) * ang
            * radial_moment(w, total - ell + len(alpha) - 1))


@dataclass(frozen=True)
class ErrorFunctionals:
    """Discrete-vs-continuum moment gaps at one evaluation point."""

    order: int
    moment_gaps: dict            # alpha -> J_alpha,      |alpha| <= n
    scaled_gaps: dict            # alpha -> gap with 1/|y|^2 weight, |alpha| in 1..n+2
    remainder_mass: float        # sum V_i |x_i - x|^(n+1) |w_h|


def error_functionals(ps: ParticleSystem, w: RadialWeight, x,
                      max_order: int) -> ErrorFunctionals:
    """Evaluate the truncation-error moment functionals at a point.

    The continuum integrals use the radial reduction (exact zeros for odd
    multi-indices); the |y|^-2-scaled family starts at |alpha| = 1, where the
    radial integrand is integrable for every profile in scope.
    """
    x = np.asarray(x, dtype=float)
    d = ps.dim
    h = ps.h
    idx = neighbors(ps, x, h)
    diffs = ps.points[idx] - x
    r = np.linalg.norm(diffs, axis=1)
    wh = w.evaluate_scaled(h, r)
    vols = ps.volumes[idx]

    moment_gaps = {}
    for alpha in _multi_indices(d, max_order):
        mono = np.prod(diffs ** np.asarray(alpha), axis=1)
        disc = float(np.sum(vols * mono * wh))
        moment_gaps[alpha] = disc - weighted_monomial_integral(w, h, alpha)

    mask = r > 0
    diffs_s, r_s = diffs[mask], r[mask]
    wh_s, vols_s = wh[mask], vols[mask]
    scaled_gaps = {}
    for alpha in _multi_indices(d, max_order + 2):
        if sum(alpha) < 1:
            continue
        mono = np.prod(diffs_s ** np.asarray(alpha), axis=1)
        disc = float(np.sum(vols_s * mono / r_s**2 * wh_s))
        scaled_gaps[alpha] = disc - weighted_monomial_integral(w, h, alpha, ell=2)

    remainder = float(np.sum(vols * r ** (max_order + 1) * np.abs(wh)))
    return ErrorFunctionals(order=max_order, moment_gaps=moment_gaps,
                            scaled_gaps=scaled_gaps, remainder_mass=remainder)

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import LinearOperator, cg, splu

from app.core.config import settings
from app.core.exceptions import (
    InfeasibleProblemException,
    InvalidParameterException,
    SolverException
)
from app.models.harmonic_problem import (
    REFLECT,
    STRICT,
    HarmonicProblem,
    HarmonicSolution,
    LaplacianSystem
)
from app.models.hit_distribution import HitDistribution
from app.models.site import Site, SiteSet
from app.schemas.oracle_schema import ReturnProbability
from app.schemas.wedge_schema import WedgeSpec
from app.services.geometry_service import (
    STEPS,
    ball_sector,
    check_site,
    closure,
    contains,
    contains_array
)

logger = logging.getLogger(__name__)

RETURN_SENSITIVITY = 0.01


# =========================================================
# System assembly
# =========================================================

def build_system(problem: HarmonicProblem) -> LaplacianSystem:
    spec = problem.spec
    xy = problem.domain.to_array()
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    index = np.full((hi[0] - lo[0] + 1, hi[1] - lo[1] + 1), -1, dtype=np.int64)
    index[xy[:, 0] - lo[0], xy[:, 1] - lo[1]] = np.arange(len(xy))

    labels = problem.labels
    label_of = np.full(len(xy), -1, dtype=np.int64)
    for code, label in enumerate(labels):
        sites = problem.absorbing[label].to_array()
        label_of[index[sites[:, 0] - lo[0], sites[:, 1] - lo[1]]] = code

    free = label_of < 0
    free_rank = np.cumsum(free) - 1
    absorb_rank = np.cumsum(~free) - 1
    free_xy = xy[free]
    absorb_xy = xy[~free]
    n_free = len(free_xy)

    degree = np.zeros(n_free, dtype=np.int64)
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    edge_rows: List[np.ndarray] = []
    edge_cols: List[np.ndarray] = []
    own = np.arange(n_free)
    for dx, dy in STEPS:
        nb = free_xy + np.array([dx, dy], dtype=np.int64)
        in_wedge = contains_array(spec, nb[:, 0], nb[:, 1])
        ix = nb[:, 0] - lo[0]
        iy = nb[:, 1] - lo[1]
        in_box = (ix >= 0) & (iy >= 0) & (ix < index.shape[0]) & (iy < index.shape[1])
        j = np.full(n_free, -1, dtype=np.int64)
        j[in_box] = index[ix[in_box], iy[in_box]]
        kept = in_wedge & (j >= 0)
        dangling = in_wedge & (j < 0)
        if problem.truncation == STRICT and dangling.any():
            bad = free_xy[np.argmax(dangling)]
            raise InfeasibleProblemException(
                f"free site ({bad[0]},{bad[1]}) has a wedge neighbour outside the domain (strict truncation)"
            )
        degree += kept
        to_free = kept & free[np.maximum(j, 0)]
        to_absorb = kept & ~free[np.maximum(j, 0)]
        rows.append(own[to_free])
        cols.append(free_rank[j[to_free]])
        edge_rows.append(own[to_absorb])
        edge_cols.append(absorb_rank[j[to_absorb]])

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    adjacency = sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(n_free, n_free))
    matrix = (sp.diags(degree.astype(np.float64)) - adjacency).tocsr()
    system = LaplacianSystem(
        free_xy=free_xy,
        absorb_xy=absorb_xy,
        absorb_label=label_of[~free],
        matrix=matrix,
        degree=degree,
        edge_rows=np.concatenate(edge_rows),
        edge_cols=np.concatenate(edge_cols),
        labels=labels,
    )
    _check_nonsingular(system, adjacency)
    logger.debug(f"Assembled system: {n_free} free sites, {len(absorb_xy)} absorbing sites")
    return system


def _check_nonsingular(system: LaplacianSystem, adjacency: sp.csr_matrix) -> None:
    """Every free component must have an edge into some absorbing set."""
    if system.n_free == 0:
        return
    n_comp, comp = csgraph.connected_components(adjacency, directed=False)
    anchored = np.zeros(n_comp, dtype=bool)
    anchored[comp[system.edge_rows]] = True
    if not anchored.all():
        lonely = int(np.argmax(~anchored[comp]))
        x, y = system.free_xy[lonely]
        raise SolverException(
            f"singular configuration: {int((~anchored).sum())} free component(s), e.g. the one "
            f"containing ({x},{y}), never reach an absorbing set"
        )


# =========================================================
# Linear solves
# =========================================================

class _Solver:
    """One factorisation or preconditioner per system, reused across right-hand sides."""

    def __init__(self, system: LaplacianSystem, method: Optional[str] = None):
        self.system = system
        self.method = method or settings.ORACLE_METHOD
        if self.method not in ("cg", "direct"):
            raise InvalidParameterException(f"unknown oracle method '{self.method}'")
        self._lu = None
        self._preconditioner = None
        self.iterations = 0

    def _jacobi(self) -> LinearOperator:
        if self._preconditioner is None:
            inv = 1.0 / np.maximum(self.system.degree, 1).astype(np.float64)
            n = self.system.n_free
            self._preconditioner = LinearOperator((n, n), matvec=lambda v: inv * v.ravel())
        return self._preconditioner

    def _solve_once(self, b: np.ndarray) -> np.ndarray:
        A = self.system.matrix
        if self.method == "direct":
            if self._lu is None:
                self._lu = splu(A.tocsc())
            return self._lu.solve(b)
        counter = {"n": 0}

        def count(_):
            counter["n"] += 1

        x, info = cg(A, b, rtol=settings.ORACLE_TOLERANCE, atol=0.0,
                     maxiter=settings.ORACLE_MAX_ITERATIONS, M=self._jacobi(), callback=count)
        self.iterations += counter["n"]
        if info > 0:
            raise SolverException(f"conjugate gradients did not converge in {info} iterations")
        if info < 0:
            raise SolverException("conjugate gradients broke down (illegal input)")
        return x

    def solve(self, b: np.ndarray) -> Tuple[np.ndarray, float]:
        if self.system.n_free == 0:
            return np.zeros(0), 0.0
        b = np.asarray(b, dtype=np.float64)
        x = self._solve_once(b)
        residual = float(np.abs(self.system.matrix @ x - b).max())
        refinements = 0
        while residual > settings.ORACLE_RESIDUAL_LIMIT and refinements < 3:
            x = x + self._solve_once(b - self.system.matrix @ x)
            residual = float(np.abs(self.system.matrix @ x - b).max())
            refinements += 1
        if residual > settings.ORACLE_RESIDUAL_LIMIT:
            logger.error(f"Residual {residual:.3e} above limit after {refinements} refinements")
            raise SolverException(f"residual {residual:.3e} exceeds {settings.ORACLE_RESIDUAL_LIMIT:.1e}")
        return x, residual


def solve_potential(problem: HarmonicProblem, target_label: str, method: Optional[str] = None) -> HarmonicSolution:
    """h = 1 on the target set, 0 on the other absorbing sets, harmonic on free sites."""
    if target_label not in problem.absorbing:
        raise InvalidParameterException(f"unknown absorbing label '{target_label}'")
    system = problem.system()
    solver = _Solver(system, method)
    values, residual = solver.solve(system.rhs(target_label))
    logger.debug(f"Solved potential for '{target_label}': {solver.iterations} iterations, residual {residual:.2e}")
    return HarmonicSolution(system, values, solver.iterations, residual)


def solve_hit_probability(problem: HarmonicProblem, target_label: str) -> Dict[Site, float]:
    """P^x(the walk is absorbed in `target_label`) for every free site x."""
    return solve_potential(problem, target_label).as_dict()


def solve_expected_steps(problem: HarmonicProblem, method: Optional[str] = None) -> HarmonicSolution:
    """Expected number of steps until absorption: L t = deg on the free sites."""
    system = problem.system()
    solver = _Solver(system, method)
    values, residual = solver.solve(system.degree.astype(np.float64))
    return HarmonicSolution(system, values, solver.iterations, residual)


# =========================================================
# Hit distributions
# =========================================================

def hit_distribution(problem: HarmonicProblem, source: Site) -> HitDistribution:
    return hit_distributions(problem, [source])[0]


def hit_distributions(problem: HarmonicProblem, sources: Sequence[Site],
                      method: Optional[str] = None) -> List[HitDistribution]:
    """
    Exact laws of the absorption site for several sources.

    Uses one adjoint solve per source or one solve per reachable absorbing
    site, whichever needs fewer solves.
    """
    system = problem.system()
    rows = []
    for source in sources:
        i = system.free_index(Site(*source))
        if i is None:
            raise InvalidParameterException(f"source {tuple(source)} is not a free site of the problem")
        rows.append(i)

    edges = system.absorbing_edge_matrix()
    reachable = np.flatnonzero(np.asarray(edges.sum(axis=0)).ravel() > 0)
    solver = _Solver(system, method)
    if len(rows) <= len(reachable):
        table = np.zeros((len(rows), len(system.absorb_xy)))
        for n, i in enumerate(rows):
            e = np.zeros(system.n_free)
            e[i] = 1.0
            green, _ = solver.solve(e)
            table[n] = edges.T @ green
    else:
        table = np.zeros((len(rows), len(system.absorb_xy)))
        by_column = edges.tocsc()
        for j in reachable:
            column = by_column[:, j].toarray().ravel()
            h, _ = solver.solve(column)
            table[:, j] = h[rows]
    table = np.maximum(table, 0.0)

    out = []
    for n, source in enumerate(sources):
        masses = {Site(int(system.absorb_xy[j, 0]), int(system.absorb_xy[j, 1])): float(table[n, j])
                  for j in reachable}
        out.append(HitDistribution(Site(*source), masses))
    return out


def hit_distribution_tv(p: HitDistribution, q: HitDistribution) -> float:
    return p.tv(q)


def one_step_average(problem: HarmonicProblem, solution: HarmonicSolution, site: Site,
                     boundary: Dict[str, float]) -> Tuple[float, int]:
    """
    Average of the potential over the kept neighbours of `site` (first-step analysis
    for return-time events). Returns (average, number of kept neighbours).
    """
    total = 0.0
    count = 0
    for dx, dy in STEPS:
        w = Site(site.x + dx, site.y + dy)
        if not contains(problem.spec, w) or w not in problem.domain:
            continue
        total += solution.value_at(w, boundary)
        count += 1
    if count == 0:
        raise InfeasibleProblemException(f"site {tuple(site)} has no neighbour in the domain")
    return total / count, count


# =========================================================
# Electrical quantities
# =========================================================

def effective_resistance(spec: WedgeSpec, v: Site, Z: SiteSet, truncation: float) -> float:
    """
    R_eff(v <-> Z) = 1 / (deg(v) * P^v(tau_Z < tau_v^+)) on W^truncation with reflecting cut.
    """
    v = check_site(v)
    if v in Z:
        raise InvalidParameterException(f"v={tuple(v)} must not belong to Z")
    if not Z:
        raise InvalidParameterException("Z must be non-empty")
    if not contains(spec, v):
        raise InvalidParameterException(f"v={tuple(v)} is not in the wedge")
    probability, degree_v = _escape_probability(spec, v, Z, truncation)
    if probability <= 0.0:
        raise InfeasibleProblemException(f"Z is unreachable from {tuple(v)} within truncation {truncation}")
    return 1.0 / (degree_v * probability)


def _escape_probability(spec: WedgeSpec, v: Site, target: SiteSet, truncation: float) -> Tuple[float, int]:
    """P^v(tau_target < tau_v^+) on the reflected truncation, and the kept degree of v."""
    domain = ball_sector(spec, truncation).union(target, [v])
    problem = HarmonicProblem(spec, domain, {"target": target, "home": SiteSet([v])}, REFLECT)
    solution = solve_potential(problem, "target")
    return one_step_average(problem, solution, v, {"target": 1.0, "home": 0.0})


def return_probability(spec: WedgeSpec, u: Site, A: SiteSet, truncation: Optional[float] = None) -> ReturnProbability:
    """
    P^u(tau^+ of the closure of A <= tau_u^+), with a doubling check on the truncation.
    """
    u = check_site(u)
    if not A:
        raise InvalidParameterException("A must be non-empty")
    a_bar = closure(spec, A)
    if u in a_bar:
        raise InvalidParameterException(f"u={tuple(u)} lies in the closure of A")
    if truncation is None:
        truncation = max(4.0 * max(u.norm(), A.radius()), u.norm() + 2.0)
    if truncation <= u.norm():
        raise InvalidParameterException(f"truncation {truncation} does not contain u={tuple(u)}")

    p, _ = _escape_probability(spec, u, a_bar, truncation)
    p2, _ = _escape_probability(spec, u, a_bar, 2.0 * truncation)
    change = abs(p2 - p) / p if p > 0 else math.inf
    sensitive = change > RETURN_SENSITIVITY
    if sensitive:
        logger.warning(
            f"Return probability from {tuple(u)} moved by {change:.2%} when doubling truncation {truncation}"
        )
    return ReturnProbability(probability=p, truncation=truncation, doubled_truncation_probability=p2,
                             relative_change=change, sensitive=sensitive)

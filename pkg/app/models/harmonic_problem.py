from typing import Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from app.core.exceptions import InfeasibleProblemException, InvalidSetException
from app.models.site import Site, SiteSet
from app.schemas.wedge_schema import WedgeSpec

REFLECT = "reflect"
STRICT = "strict"


class HarmonicProblem:
    """
    A truncated wedge with labelled absorbing sets.

    Free sites are domain minus every absorbing set. With truncation "reflect"
    edges leaving the domain are dropped (the walk never sees them); with
    "strict" such an edge is an error.
    """

    def __init__(self, spec: WedgeSpec, domain: SiteSet, absorbing: Dict[str, SiteSet],
                 truncation: str = REFLECT):
        if truncation not in (REFLECT, STRICT):
            raise InfeasibleProblemException(f"unknown truncation mode '{truncation}'")
        if not absorbing:
            raise InvalidSetException("a harmonic problem needs at least one absorbing set")
        seen = SiteSet()
        for label, sites in absorbing.items():
            if not sites:
                raise InvalidSetException(f"absorbing set '{label}' is empty")
            if not sites.isdisjoint(seen):
                raise InvalidSetException(f"absorbing set '{label}' overlaps another absorbing set")
            seen = seen.union(sites)
        self.spec = spec
        self.absorbing = dict(absorbing)
        self.domain = domain.union(seen)
        self.truncation = truncation
        self._system: Optional["LaplacianSystem"] = None

    @property
    def labels(self) -> List[str]:
        return list(self.absorbing)

    def system(self) -> "LaplacianSystem":
        if self._system is None:
            # local import: the builder lives with the solver
            from app.services.oracle_service import build_system
            self._system = build_system(self)
        return self._system


class LaplacianSystem:
    """
    The graph Laplacian restricted to free sites plus the free-to-absorbing edges.

    matrix[i, i] = number of kept edges at free site i, matrix[i, j] = -1 per free edge.
    absorb_edges holds (free row, absorbing column) pairs with multiplicity.
    """

    def __init__(self, free_xy: np.ndarray, absorb_xy: np.ndarray, absorb_label: np.ndarray,
                 matrix: sp.csr_matrix, degree: np.ndarray,
                 edge_rows: np.ndarray, edge_cols: np.ndarray, labels: List[str]):
        self.free_xy = free_xy
        self.absorb_xy = absorb_xy
        self.absorb_label = absorb_label
        self.matrix = matrix
        self.degree = degree
        self.edge_rows = edge_rows
        self.edge_cols = edge_cols
        self.labels = labels
        self._free_index = {Site(int(x), int(y)): i for i, (x, y) in enumerate(free_xy.tolist())}
        self._absorb_index = {Site(int(x), int(y)): i for i, (x, y) in enumerate(absorb_xy.tolist())}

    @property
    def n_free(self) -> int:
        return len(self.free_xy)

    def free_index(self, site: Site) -> Optional[int]:
        return self._free_index.get(Site(*site))

    def absorb_index(self, site: Site) -> Optional[int]:
        return self._absorb_index.get(Site(*site))

    def rhs(self, label: str) -> np.ndarray:
        """Number of edges from each free site into absorbing set `label`."""
        code = self.labels.index(label)
        hits = self.absorb_label[self.edge_cols] == code
        return np.bincount(self.edge_rows[hits], minlength=self.n_free).astype(np.float64)

    def absorbing_edge_matrix(self) -> sp.csr_matrix:
        data = np.ones(len(self.edge_rows), dtype=np.float64)
        return sp.csr_matrix((data, (self.edge_rows, self.edge_cols)),
                             shape=(self.n_free, len(self.absorb_xy)))


class HarmonicSolution:
    """Values of a solved potential on the free sites."""

    def __init__(self, system: LaplacianSystem, values: np.ndarray, iterations: int, residual: float):
        self.system = system
        self.values = values
        self.iterations = iterations
        self.residual = residual

    def value_at(self, site: Site, boundary: Optional[Dict[str, float]] = None) -> float:
        """Potential at any domain site; absorbing sites take their label's boundary value."""
        i = self.system.free_index(site)
        if i is not None:
            return float(self.values[i])
        j = self.system.absorb_index(site)
        if j is not None and boundary is not None:
            return float(boundary.get(self.system.labels[self.system.absorb_label[j]], 0.0))
        raise InvalidSetException(f"site {tuple(site)} is not a free site of the problem")

    def as_dict(self) -> Dict[Site, float]:
        return {Site(int(x), int(y)): float(v) for (x, y), v in zip(self.system.free_xy.tolist(), self.values)}

from .site import Site, SiteSet
from .site_grid import SiteGrid
from .hit_distribution import HitDistribution
from .jump_table import JumpLadder, JumpTable
from .aggregate import Aggregate
from .harmonic_problem import HarmonicProblem, HarmonicSolution, LaplacianSystem

import math
from typing import Optional

from supinf.core.SMesh import SMesh, BuildMesh
from supinf.core.SFunctionals import SQuadraticDensityF, SGradientFreeDensityG, BuildDensityF, BuildDensityG
from supinf.core.SConstraints import SConstraint, BuildConstraint


class SProblem():
    """Minimise F_p over fields with zero trace subject to G_p ≤ G (when g and G are set) and Q = 0."""

    def __init__(self, mesh: SMesh, densityF: SQuadraticDensityF, densityG: Optional[SGradientFreeDensityG] = None,
                 G: Optional[float] = None, constraint: Optional[SConstraint] = None, components: int = 1):
        self.mesh = mesh
        self.densityF = densityF
        self.densityG = densityG
        self.G = None if G is None else float(G)
        self.components = components
        self.constraint = SConstraint(components) if constraint is None else constraint
        return

    @property
    def hasSublevel(self) -> bool:
        return (self.densityG is not None) and (self.G is not None) and math.isfinite(self.G)

    @property
    def constrained(self) -> bool:
        return self.hasSublevel or (self.constraint.entries > 0)

    def ModuleInfo(self):
        return {"mesh": self.mesh.ModuleInfo(), "f": self.densityF.name,
                "g": None if self.densityG is None else self.densityG.name, "G": self.G,
                "constraint": self.constraint.ModuleInfo(), "components": self.components}


def BuildProblem(runConfig) -> SProblem:
    """SProblem from the mesh and problem blocks of a validated run config."""
    meshCfg, problemCfg = runConfig.mesh, runConfig.problem
    mesh = BuildMesh(meshCfg.dim, meshCfg.extent, meshCfg.cells)
    N = problemCfg.components
    coefficients = None if problemCfg.fCoefficients is None else problemCfg.fCoefficients.model_dump()
    densityF = BuildDensityF(problemCfg.f, N, mesh.dim, coefficients=coefficients, tensor=problemCfg.fTensor)
    densityG = BuildDensityG(problemCfg.g, problemCfg.gConstant)
    c = problemCfg.constraint
    constraint = BuildConstraint(c.kind, N, pi=c.pi, radius=c.radius, center=c.center, bounds=c.bounds, h=c.h, H=c.H, equality=c.equality)
    return SProblem(mesh, densityF, densityG, problemCfg.G, constraint, N)

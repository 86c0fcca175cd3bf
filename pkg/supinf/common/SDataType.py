import math
import numpy as np
from typing import Optional
from pydantic import BaseModel


def PsiNorm(psi) -> float:
    """Dual norm of a multiplier for Q: largest absolute entry."""
    psi = np.asarray(psi, dtype=float)
    return float(np.max(np.abs(psi))) if psi.size else 0.0


class SRawMultipliers():
    """Multipliers of the Lagrangian L = lam·(1/p)⨍(f/s)^p + mu·[(1/p)⨍(g/t)^p − (G/t)^p/p] + ⟨psi, c⟩,
    with s = objectiveScale and t = sublevelScale. s = t = 1 recovers the unscaled forms."""

    def __init__(self, lam: float = 1.0, mu: float = 0.0, psi=None, objectiveScale: float = 1.0, sublevelScale: float = 1.0):
        if lam < 0.0 or mu < 0.0:
            raise ValueError(f"objective and sublevel multipliers must be nonnegative, got lam={lam}, mu={mu}.")
        if objectiveScale <= 0.0 or sublevelScale <= 0.0:
            raise ValueError("multiplier scales must be positive.")
        self.lam = float(lam)
        self.mu = float(mu)
        self.psi = np.zeros(0) if psi is None else np.asarray(psi, dtype=float)
        self.objectiveScale = float(objectiveScale)
        self.sublevelScale = float(sublevelScale)
        return

    def PsiNorm(self) -> float:
        return PsiNorm(self.psi)

    def ToJson(self):
        return {"lam": self.lam, "mu": self.mu, "psi": self.psi, "objectiveScale": self.objectiveScale, "sublevelScale": self.sublevelScale}

    @classmethod
    def FromJson(cls, data):
        return cls(lam=data["lam"], mu=data["mu"], psi=np.asarray(data["psi"], dtype=float),
                   objectiveScale=data["objectiveScale"], sublevelScale=data["sublevelScale"])


class SRescaledMultipliers():
    def __init__(self, Lambda: float, M: float, Psi: np.ndarray, R: float, logR: float):
        self.Lambda = Lambda
        self.M = M
        self.Psi = Psi
        self.R = R
        self.logR = logR
        return

    def PsiNorm(self) -> float:
        return PsiNorm(self.Psi)

    def Total(self) -> float:
        return self.Lambda + self.M + self.PsiNorm()


class SDiscreteMeasure():
    """Nonnegative atoms at the quadrature points."""

    def __init__(self, weights: np.ndarray):
        weights = np.asarray(weights, dtype=float)
        if np.any(weights < 0.0) or not np.all(np.isfinite(weights)):
            raise ValueError("measure weights must be finite and nonnegative.")
        self.weights = weights
        return

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def Pair(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * np.asarray(values, dtype=float)))

    @classmethod
    def Zero(cls, size: int):
        return cls(np.zeros(size))


class SCheckReport(BaseModel):
    passed: bool = True
    checks: dict[str, bool] = {}
    values: dict[str, Optional[float]] = {}
    failures: list[str] = []

    def Record(self, name: str, ok: bool, value: Optional[float] = None, detail: str = ""):
        self.checks[name] = bool(ok)
        if value is not None:
            self.values[name] = float(value) if math.isfinite(value) else None
        if not ok:
            self.passed = False
            self.failures.append(f"{name}: {detail}" if detail else name)
        return

    def Merge(self, other: "SCheckReport", prefix: str = ""):
        for name, ok in other.checks.items():
            self.checks[prefix + name] = ok
        for name, value in other.values.items():
            self.values[prefix + name] = value
        self.failures += [prefix + f for f in other.failures]
        self.passed = self.passed and other.passed
        return

import typing
from typing import Optional, Union, Literal, Annotated, Any
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError, field_validator, model_validator
import simplejson as json

from supinf.common.SExceptions import SExceptionConfig
from supinf.core.SFunctionals import F_DENSITIES, G_DENSITIES
from supinf.core.SConstraints import CONSTRAINT_KINDS, HOLONOMIC_PI, UNILATERAL_PI, ISOPERIMETRIC_H
from supinf.core.SSolver import SSolveConfig
from supinf.core.SContinuation import SSchedule, DefaultP0


class SMeshBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dim: Literal[1, 2] = 1
    extent: list[list[float]] = [[0.0, 1.0]]
    cells: Union[PositiveInt, list[PositiveInt]] = 256

    @field_validator("extent", mode="before")
    @classmethod
    def bare_interval(cls, v):
        if isinstance(v, list) and len(v) == 2 and all(isinstance(e, (int, float)) for e in v):
            return [v]
        return v

    @model_validator(mode="after")
    def check_shape(self):
        if len(self.extent) != self.dim:
            raise ValueError(f"extent needs {self.dim} intervals, got {len(self.extent)}")
        for interval in self.extent:
            if len(interval) != 2 or not interval[1] > interval[0]:
                raise ValueError(f"extent interval {interval} must be [lo, hi] with lo < hi")
        cells = [self.cells] * self.dim if isinstance(self.cells, int) else self.cells
        if len(cells) != self.dim:
            raise ValueError(f"cells needs {self.dim} entries, got {len(cells)}")
        if min(cells) < 2:
            raise ValueError("cells must be at least 2 per axis")
        return self


class SCoefficientTable(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x: list[float]
    a: list[float]

    @model_validator(mode="after")
    def check_table(self):
        if len(self.x) != len(self.a) or len(self.x) < 2:
            raise ValueError("coefficient table needs matching x and a lists of length >= 2")
        if any(b <= a for a, b in zip(self.x, self.x[1:])):
            raise ValueError("coefficient table x must be strictly increasing")
        if min(self.a) <= 0.0:
            raise ValueError("coefficient table a must be positive")
        return self


class SConstraintBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal[CONSTRAINT_KINDS] = "none"
    pi: Optional[str] = None
    radius: Optional[float] = None
    center: Optional[list[float]] = None
    bounds: Optional[Annotated[list[float], Field(min_length=2, max_length=2)]] = None
    h: Optional[str] = None
    H: Optional[float] = None
    equality: bool = False

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind == "holonomic" and self.pi is not None and self.pi not in HOLONOMIC_PI:
            raise ValueError(f"holonomic pi must be one of {sorted(HOLONOMIC_PI)}, got '{self.pi}'")
        if self.kind == "unilateral" and self.pi is not None and self.pi not in UNILATERAL_PI:
            raise ValueError(f"unilateral pi must be one of {sorted(UNILATERAL_PI)}, got '{self.pi}'")
        if self.kind == "isoperimetric":
            if self.H is None:
                raise ValueError("isoperimetric constraint needs H")
            if self.h is not None and self.h not in ISOPERIMETRIC_H:
                raise ValueError(f"isoperimetric h must be one of {sorted(ISOPERIMETRIC_H)}, got '{self.h}'")
        if self.kind == "inclusion_box" and self.bounds is None:
            raise ValueError("inclusion_box needs bounds")
        if self.kind == "inclusion_ball" and self.radius is not None and self.radius <= 0.0:
            raise ValueError("inclusion_ball radius must be positive")
        return self


class SProblemBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    components: PositiveInt = 1
    f: Literal[F_DENSITIES] = "dirichlet"
    fCoefficients: Optional[SCoefficientTable] = None
    fTensor: Optional[list[list[float]]] = None
    g: Optional[Literal[G_DENSITIES]] = None
    gConstant: float = 1.0
    G: Optional[Annotated[float, Field(ge=0.0)]] = None
    constraint: SConstraintBlock = Field(default_factory=SConstraintBlock)

    @model_validator(mode="after")
    def check_density(self):
        if self.f == "weighted_dirichlet" and self.fCoefficients is None and self.fTensor is None:
            raise ValueError("weighted_dirichlet needs fCoefficients or fTensor")
        return self


class SOutputBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: Optional[str] = None
    formats: list[Literal["csv", "field"]] = ["csv", "field"]
    timing: bool = True


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mesh: SMeshBlock = Field(default_factory=SMeshBlock)
    problem: SProblemBlock = Field(default_factory=SProblemBlock)
    solver: SSolveConfig = Field(default_factory=SSolveConfig)
    schedule: SSchedule = Field(default_factory=SSchedule)
    output: SOutputBlock = Field(default_factory=SOutputBlock)

    @model_validator(mode="after")
    def fill_schedule(self):
        if self.schedule.p0 is None:
            self.schedule.p0 = DefaultP0(self.mesh.dim)
        elif not self.schedule.p0 > self.mesh.dim:
            raise ValueError(f"schedule.p0 must exceed the dimension {self.mesh.dim}, got {self.schedule.p0}")
        return self


def ExpandDottedKeys(data: Any) -> Any:
    """{"solver.innerTol": 1e-8} -> {"solver": {"innerTol": 1e-8}}, recursively."""
    if not isinstance(data, dict):
        return data
    out = {}
    for key, value in data.items():
        value = ExpandDottedKeys(value)
        parts = str(key).split(".")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise SExceptionConfig([f"key '{key}' conflicts with a scalar value"])
        if isinstance(value, dict) and isinstance(node.get(parts[-1]), dict):
            node[parts[-1]].update(value)
        else:
            node[parts[-1]] = value
    return out


def NestedModel(annotation):
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return annotation
    for arg in typing.get_args(annotation):
        model = NestedModel(arg)
        if model is not None:
            return model
    return None

def LeafPaths(value, prefix: str) -> list:
    if isinstance(value, dict) and value:
        return [path for k, v in value.items() for path in LeafPaths(v, f"{prefix}.{k}")]
    return [prefix]

def UnknownKeys(data: dict, model, prefix: str = "") -> list:
    """Dotted paths of every key the schema does not define."""
    out = []
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in model.model_fields:
            out += LeafPaths(value, path)
            continue
        nested = NestedModel(model.model_fields[key].annotation)
        if nested is not None and isinstance(value, dict):
            out += UnknownKeys(value, nested, path + ".")
    return out


def ParseConfig(source: Union[str, dict]) -> RunConfig:
    """Validated RunConfig from a JSON file or a dict; every problem found is reported at once."""
    if isinstance(source, dict):
        data = source
    else:
        try:
            with open(source, "r") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise SExceptionConfig([f"{source}: {str(e)}"])
    if not isinstance(data, dict):
        raise SExceptionConfig(["run config must be a JSON object"])

    data = ExpandDottedKeys(data)
    errors = [f"unknown key '{path}'" for path in UnknownKeys(data, RunConfig)]
    try:
        runConfig = RunConfig.model_validate(data)
    except ValidationError as e:
        for err in e.errors():
            if err["type"] == "extra_forbidden":
                continue
            location = ".".join(str(l) for l in err["loc"])
            errors.append(f"{location}: {err['msg']}" if location else err["msg"])
        runConfig = None
    if errors:
        raise SExceptionConfig(errors)
    return runConfig


def OutputDirectory(runConfig: RunConfig, override: Optional[str], default: str) -> str:
    return override or runConfig.output.directory or default

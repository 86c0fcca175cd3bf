import numpy as np
import pandas as pd
import pydantic
import simplejson as json

from supinf.common.SExceptions import SExceptionShapeMismatch
from supinf.core.SMesh import SMesh, SField

FLOAT_FORMAT = "%.17g"


class SJSONEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, np.ndarray):
            return {"_type": "ndarray", "shape": list(obj.shape), "value": [float(v) for v in obj.ravel()]}
        elif isinstance(obj, np.floating):
            return float(obj)
        elif isinstance(obj, np.integer):
            return int(obj)
        elif isinstance(obj, np.bool_):
            return bool(obj)
        elif isinstance(obj, pydantic.BaseModel):
            return obj.model_dump()
        else:
            return super(SJSONEncoder, self).default(obj)

class SJSONDecoder(json.JSONDecoder):
    def __init__(self, *args, **kwargs):
        super().__init__(object_hook=self.object_hook, *args, **kwargs)

    def object_hook(self, obj):
        if obj.get("_type") == "ndarray":
            return np.asarray(obj["value"], dtype=float).reshape(obj["shape"])
        return obj


def DumpJson(obj, path: str):
    with open(path, "w") as f:
        json.dump(obj, f, cls=SJSONEncoder, indent=2, ignore_nan=True)
    return

def LoadJson(path: str):
    with open(path, "r") as f:
        return json.load(f, cls=SJSONDecoder)


def FieldHeader(mesh: SMesh, components: int) -> str:
    cells = "x".join(str(c) for c in mesh.cells)
    return f"# supinf-field dim={mesh.dim} cells={cells} components={components}"

def DumpField(field: SField, path: str):
    with open(path, "w") as f:
        f.write(FieldHeader(field.mesh, field.components) + "\n")
        np.savetxt(f, field.values, fmt=FLOAT_FORMAT)
    return

def ParseFieldHeader(line: str) -> dict:
    if not line.startswith("# supinf-field"):
        raise SExceptionShapeMismatch(f"not a supinf field dump: '{line.strip()}'.")
    items = dict(token.split("=", 1) for token in line.split()[2:])
    return {"dim": int(items["dim"]), "cells": [int(c) for c in items["cells"].split("x")], "components": int(items["components"])}

def LoadField(path: str, mesh: SMesh) -> SField:
    with open(path, "r") as f:
        header = ParseFieldHeader(f.readline())
    if header["dim"] != mesh.dim or tuple(header["cells"]) != mesh.cells:
        raise SExceptionShapeMismatch(f"field dump {header} does not match mesh dim={mesh.dim} cells={mesh.cells}.")
    values = np.loadtxt(path, comments="#", ndmin=2)
    return SField(mesh, values.reshape(mesh.nNodes, header["components"]))


def WriteCSV(rows: list, columns: list, path: str):
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return

def ReadCSV(path: str) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")

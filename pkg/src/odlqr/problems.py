"""Built-in example instances and the JSON problem-file format.

Problem file (``odlqr-problem-v1``)::

    {
      "version": "odlqr-problem-v1",
      "A": [[...], ...], "B": [[...]], "C": [[...]],
      "Q": [[...]], "R": [[...]],
      "Y": [[...]],            # 2n x 2n correlation of (x_0, x_0 - xi_0)
      "E0": [[...]]            # optional, overrides Y22
    }
"""

import json
import re

import numpy as np

from .errors import DimensionError, ProblemFileError
from .problem import ProblemInstance

FORMAT_VERSION = "odlqr-problem-v1"
REQUIRED_KEYS = ("A", "B", "C", "Q", "R", "Y")

DOYLE_A = [[1.1, 0.1], [0.0, 1.1]]
DOYLE_B = [[0.0], [0.1]]
DOYLE_C = [[1.0, 1.0]]
DOYLE_Q = [[0.25, 0.0], [0.0, 0.25]]
DOYLE_R = [[0.2]]

DOYLE2_B = [[0.0, 0.1], [0.1, 0.0]]
DOYLE2_C = [[1.0, 1.0], [0.0, 1.0]]
# Weights for the two-input plant are not published with it; these are the
# one-input weights carried over, which reproduce the published cost table.
DOYLE2_Q = [[0.25, 0.0], [0.0, 0.25]]
DOYLE2_R = [[0.2, 0.0], [0.0, 0.2]]
DOYLE2_WEIGHT_ASSUMPTION = "Q = 0.25*I2, R = 0.2*I2 (not published for this plant; assumed)"

Y_GENERAL = [
    [2.0, 0.0, 0.1, 0.0],
    [0.0, 2.0, 0.0, 0.1],
    [0.1, 0.0, 1.0, 0.0],
    [0.0, 0.1, 0.0, 1.0],
]
Y_SPECIAL = [
    [2.0, 0.0, 1.0, 0.0],
    [0.0, 2.0, 0.0, 1.0],
    [1.0, 0.0, 1.0, 0.0],
    [0.0, 1.0, 0.0, 1.0],
]


def doyle_1d(Y=Y_GENERAL):
    return ProblemInstance.from_arrays(DOYLE_A, DOYLE_B, DOYLE_C, DOYLE_Q, DOYLE_R, Y)


def doyle_2d(Y=Y_GENERAL, Q=DOYLE2_Q, R=DOYLE2_R):
    return ProblemInstance.from_arrays(DOYLE_A, DOYLE2_B, DOYLE2_C, Q, R, Y)


BUILTINS = {
    "doyle-1d": lambda: doyle_1d(Y_GENERAL),
    "doyle-1d-yg": lambda: doyle_1d(Y_GENERAL),
    "doyle-1d-ys": lambda: doyle_1d(Y_SPECIAL),
    "doyle-2d": lambda: doyle_2d(Y_GENERAL),
    "doyle-2d-yg": lambda: doyle_2d(Y_GENERAL),
    "doyle-2d-ys": lambda: doyle_2d(Y_SPECIAL),
}


def _key_line(text, key):
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def parse_problem(text: str) -> ProblemInstance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno) from exc
    if not isinstance(data, dict):
        raise ProblemFileError("top level must be a JSON object", 1)
    version = data.get("version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ProblemFileError(f"unsupported version {version!r}", _key_line(text, "version"))
    arrays = {}
    for key in REQUIRED_KEYS + ("E0",):
        if key not in data:
            if key == "E0":
                continue
            raise ProblemFileError(f"missing required key {key!r}")
        try:
            a = np.array(data[key], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ProblemFileError(
                f"{key} must be a rectangular nested array of numbers", _key_line(text, key)
            ) from exc
        if a.ndim != 2 or not np.all(np.isfinite(a)):
            raise ProblemFileError(
                f"{key} must be a 2-D array of finite numbers (row-major nested lists)",
                _key_line(text, key),
            )
        arrays[key] = a
    try:
        return ProblemInstance.from_arrays(**arrays)
    except (DimensionError, ValueError) as exc:
        key = next((k for k in arrays if str(exc).startswith(k)), None)
        raise ProblemFileError(str(exc), _key_line(text, key) if key else None) from exc


def load_problem(spec: str) -> ProblemInstance:
    """Load a built-in by name or a problem file by path."""
    if spec in BUILTINS:
        return BUILTINS[spec]()
    try:
        with open(spec, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ProblemFileError(
            f"cannot read problem file {spec!r} ({exc.strerror}); "
            f"built-ins are: {', '.join(sorted(BUILTINS))}"
        ) from exc
    return parse_problem(text)


def problem_to_dict(p: ProblemInstance) -> dict:
    out = {
        "version": FORMAT_VERSION,
        "A": p.plant.A.tolist(),
        "B": p.plant.B.tolist(),
        "C": p.plant.C.tolist(),
        "Q": p.weights.Q.tolist(),
        "R": p.weights.R.tolist(),
        "Y": p.correlation.Y.tolist(),
    }
    if p.E0_override is not None:
        out["E0"] = p.E0_override.tolist()
    return out

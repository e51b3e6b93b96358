"""Problem spec files: a flat YAML document with explicit matrices.

Sections: meta{name}, dims{n, d}, polyhedron{rows: [{normal, offset0, offset_slope}]},
dynamics{A, B, c, lipschitz?}, controls{lo, hi}, cost{wT, W, xref},
endpoint{E, e, T_interval}, init{x0}.
"""
import math
import warnings
from importlib import resources

import numpy as np
import yaml

from .errors import SpecParseError, SweepError
from .geometry import UNIT_TOL, MovingPolyhedron, Row
from .sweeping import SweepingProblem

RENORM_WARN = 1e-9
SECTIONS = ("meta", "dims", "polyhedron", "dynamics", "controls", "cost", "endpoint", "init")


def _mark(node):
    m = node.start_mark
    return m.line + 1, m.column + 1


class _Doc:
    """Parsed values alongside the node tree, so errors can point at a line and column."""

    def __init__(self, text):
        try:
            self.root = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line, col = (mark.line + 1, mark.column + 1) if mark is not None else (None, None)
            raise SpecParseError(f"not valid YAML: {getattr(exc, 'problem', exc)}", line, col) from None
        if self.root is None or not isinstance(self.root, yaml.MappingNode):
            raise SpecParseError("spec must be a mapping of sections", 1, 1)

    def node(self, *path):
        node = self.root
        for key in path:
            if isinstance(node, yaml.MappingNode):
                found = None
                for k, v in node.value:
                    if k.value == key:
                        found = v
                        break
                if found is None:
                    raise SpecParseError(f"missing key {'.'.join(map(str, path))}", *_mark(node))
                node = found
            elif isinstance(node, yaml.SequenceNode):
                node = node.value[key]
            else:
                raise SpecParseError(f"{'.'.join(map(str, path[:-1]))} is not a container", *_mark(node))
        return node

    def has(self, *path):
        try:
            self.node(*path)
            return True
        except SpecParseError:
            return False

    def value(self, *path):
        return _construct(self.node(*path))

    def array(self, *path, ndim=1):
        node = self.node(*path)
        raw = _construct(node)
        try:
            arr = np.array(raw, dtype=float)
        except (TypeError, ValueError):
            raise SpecParseError(f"{'.'.join(map(str, path))} must be numeric", *_mark(node)) from None
        if ndim == 2 and arr.ndim == 1 and arr.size == 0:
            arr = arr.reshape(0, 0)
        if arr.ndim != ndim:
            raise SpecParseError(f"{'.'.join(map(str, path))} must have {ndim} dimension(s)", *_mark(node))
        return arr

    def number(self, *path):
        node = self.node(*path)
        try:
            return float(_construct(node))
        except (TypeError, ValueError):
            raise SpecParseError(f"{'.'.join(map(str, path))} must be a number", *_mark(node)) from None


def _construct(node):
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node, deep=True)
    finally:
        loader.dispose()


def _rows(doc):
    rows_node = doc.node("polyhedron", "rows")
    if not isinstance(rows_node, yaml.SequenceNode) or not rows_node.value:
        raise SpecParseError("polyhedron.rows must be a nonempty list", *_mark(rows_node))
    rows = []
    for r in range(len(rows_node.value)):
        normal = doc.array("polyhedron", "rows", r, "normal")
        c0 = doc.number("polyhedron", "rows", r, "offset0")
        c1 = doc.number("polyhedron", "rows", r, "offset_slope") if doc.has("polyhedron", "rows", r, "offset_slope") else 0.0
        length = float(np.linalg.norm(normal))
        if not math.isfinite(length) or length == 0.0:
            raise SpecParseError(f"row {r + 1}: normal has zero length", *_mark(doc.node("polyhedron", "rows", r, "normal")))
        if abs(length - 1.0) > RENORM_WARN:
            warnings.warn(f"row {r + 1}: normal of length {length!r} rescaled to unit length")
        if abs(length - 1.0) > UNIT_TOL:  # already unit within rounding: keep the floats as written
            normal, c0, c1 = normal / length, c0 / length, c1 / length
        rows.append(Row(tuple(float(v) for v in normal), c0, c1))
    return rows


def loads(text):
    """Parse spec text into a SweepingProblem; SpecParseError carries the line and column."""
    doc = _Doc(text)
    for sec in SECTIONS:
        doc.node(sec)
    n = int(doc.number("dims", "n"))
    d = int(doc.number("dims", "d"))
    rows = _rows(doc)
    E = doc.array("endpoint", "E", ndim=2)
    if E.size == 0:
        E = np.zeros((0, n))
    T_int = doc.array("endpoint", "T_interval")
    if T_int.shape != (2,):
        raise SpecParseError("endpoint.T_interval must be [lo, hi]", *_mark(doc.node("endpoint", "T_interval")))
    lip = doc.number("dynamics", "lipschitz") if doc.has("dynamics", "lipschitz") else None
    name = str(doc.value("meta", "name"))
    try:
        C = MovingPolyhedron(n, tuple(rows))
        return SweepingProblem(
            n=n,
            d=d,
            C=C,
            g_A=doc.array("dynamics", "A", ndim=2),
            g_B=doc.array("dynamics", "B", ndim=2),
            g_c=doc.array("dynamics", "c"),
            U_lo=doc.array("controls", "lo"),
            U_hi=doc.array("controls", "hi"),
            x0=doc.array("init", "x0"),
            phi_wT=doc.number("cost", "wT"),
            phi_W=doc.array("cost", "W"),
            phi_xref=doc.array("cost", "xref"),
            omega_x_E=E,
            omega_x_e=doc.array("endpoint", "e"),
            omega_T=(float(T_int[0]), float(T_int[1])),
            lipschitz=lip,
            name=name,
        )
    except (SweepError, ValueError) as exc:
        raise SpecParseError(f"inconsistent spec: {exc}", *_mark(doc.root)) from None


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def dumps(P):
    """Spec text for P; loads(dumps(P)) == P."""
    doc = {
        "meta": {"name": P.name},
        "dims": {"n": P.n, "d": P.d},
        "polyhedron": {
            "rows": [
                {"normal": [float(v) for v in r.normal], "offset0": float(r.offset0), "offset_slope": float(r.offset_slope)}
                for r in P.C.rows
            ]
        },
        "dynamics": {"A": _floats(P.g_A), "B": _floats(P.g_B), "c": _floats(P.g_c)},
        "controls": {"lo": _floats(P.U_lo), "hi": _floats(P.U_hi)},
        "cost": {"wT": float(P.phi_wT), "W": _floats(P.phi_W), "xref": _floats(P.phi_xref)},
        "endpoint": {"E": _floats(P.omega_x_E), "e": _floats(P.omega_x_e), "T_interval": [float(v) for v in P.omega_T]},
        "init": {"x0": _floats(P.x0)},
    }
    if P.lipschitz is not None:
        doc["dynamics"]["lipschitz"] = float(P.lipschitz)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def dump(P, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(P))


def bundled_example_path():
    return str(resources.files("sweepopt") / "data" / "example61.spec")

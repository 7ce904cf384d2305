"""Line-oriented text formats for clique problems, chain instances and
collective models.

Clique problem files hold one or more blocks::

    n R family key=value ...
    <n rows of R node potentials>
    <R rows of R weights>        (majority families)
    <R rows of n+1 table values> (maxlabel)

Keys: ``id``, ``lambda``, ``seed``, ``index``.  Floats are written with
``repr`` so they round-trip exactly.  ``#`` starts a comment line.

Instance files hold one or more blocks::

    instance NAME
    labels L1 L2 ...
    tokens t1 t2 ...
    node
    <T rows of Y values>
    edge
    <(T-1)*Y rows of Y values: transition blocks in position order>
    gold y1 y2 ...               (optional label indices)

A collective model manifest lists instance files (relative to the manifest),
property blocks and options::

    other Other
    instances FILE
    property kind=nextlabel anchor=Title potential=potts lambda=1
    option restrict=true exclusion=true solver=auto damping=0
"""
from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chain_mrf import ChainInstance
from .clique_infer import CliqueProblem
from .cluster_graph import PropertyConfig
from .potentials import Entropy, LinearMakespan, Majority, MaxLabelTable, Potts, SquareMakespan
from .properties import make_property

LAMBDA_FAMILIES = {"potts": Potts, "entropy": Entropy, "makespan": LinearMakespan,
                   "makespan2": SquareMakespan}
MATRIX_FAMILIES = ("maj-dense", "maj-sparse", "majority")


class FormatError(ValueError):
    pass


def _fmt(x) -> str:
    return repr(float(x))


def _rows(lines, count, width, what):
    out = []
    for _ in range(count):
        try:
            ln = next(lines)
        except StopIteration:
            raise FormatError(f"unexpected end of file while reading {what}") from None
        vals = ln.split()
        if len(vals) != width:
            raise FormatError(f"{what}: expected {width} values, got {len(vals)}")
        try:
            out.append([float(v) for v in vals])
        except ValueError as e:
            raise FormatError(f"{what}: {e}") from None
    return np.array(out, dtype=float).reshape(count, width)


def _content_lines(text):
    for ln in text.splitlines():
        ln = ln.strip()
        if ln and not ln.startswith("#"):
            yield ln


def _kv(tokens):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise FormatError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


# ---------------------------------------------------------------------------
# clique problems
# ---------------------------------------------------------------------------

def problem_family(problem: CliqueProblem) -> str:
    fam = problem.meta.get("family")
    if fam:
        return fam
    pot = problem.potential
    for name, cls in LAMBDA_FAMILIES.items():
        if type(pot) is cls:
            return name
    if isinstance(pot, Majority):
        return "majority"
    if isinstance(pot, MaxLabelTable):
        return "maxlabel"
    raise FormatError(f"no file format for potential {type(pot).__name__}")


def format_problem(problem: CliqueProblem) -> str:
    fam = problem_family(problem)
    pot = problem.potential
    head = [str(problem.n), str(problem.R), fam, f"id={problem.name}"]
    if fam in LAMBDA_FAMILIES:
        head.append(f"lambda={_fmt(pot.lam)}")
    elif "lambda" in problem.meta:
        head.append(f"lambda={_fmt(problem.meta['lambda'])}")
    for key in ("seed", "index"):
        if key in problem.meta:
            head.append(f"{key}={int(problem.meta[key])}")
    lines = [" ".join(head)]
    lines.extend(" ".join(_fmt(x) for x in row) for row in problem.psi)
    if fam in MATRIX_FAMILIES:
        lines.extend(" ".join(_fmt(x) for x in row) for row in pot.W)
    elif fam == "maxlabel":
        lines.extend(" ".join(_fmt(x) for x in row) for row in pot.tables)
    return "\n".join(lines) + "\n"


def write_problems(problems, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in problems:
            fh.write(format_problem(p))


def parse_problems(text: str) -> list:
    lines = _content_lines(text)
    problems = []
    for head in lines:
        parts = head.split()
        if len(parts) < 3:
            raise FormatError(f"bad problem header {head!r}")
        try:
            n, R = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(f"bad problem header {head!r}") from None
        if n < 1 or R < 2:
            raise FormatError(f"need n >= 1 and R >= 2 in header {head!r}")
        fam = parts[2]
        params = _kv(parts[3:])
        psi = _rows(lines, n, R, "node potentials")
        meta = {"family": fam}
        if "lambda" in params:
            meta["lambda"] = float(params["lambda"])
        for key in ("seed", "index"):
            if key in params:
                meta[key] = int(params[key])
        try:
            if fam in LAMBDA_FAMILIES:
                pot = LAMBDA_FAMILIES[fam](R, lam=float(params.get("lambda", 1.0)))
            elif fam in MATRIX_FAMILIES:
                pot = Majority(R, W=_rows(lines, R, R, "majority weights"))
            elif fam == "maxlabel":
                pot = MaxLabelTable(R, tables=_rows(lines, R, n + 1, "max-label tables"))
            else:
                raise FormatError(f"unknown family {fam!r}")
        except FormatError:
            raise
        except ValueError as e:
            raise FormatError(str(e)) from None
        problems.append(CliqueProblem(psi, pot, name=params.get("id", f"problem-{len(problems)}"),
                                      meta=meta))
    return problems


def read_problems(path) -> list:
    return parse_problems(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# chain instances
# ---------------------------------------------------------------------------

def format_instance(inst: ChainInstance, gold=None) -> str:
    lines = [f"instance {inst.name or 'unnamed'}", "labels " + " ".join(inst.labels),
             "tokens " + " ".join(inst.tokens), "node"]
    lines.extend(" ".join(_fmt(x) for x in row) for row in inst.node)
    lines.append("edge")
    for block in inst.edge:
        lines.extend(" ".join(_fmt(x) for x in row) for row in block)
    if gold is not None:
        lines.append("gold " + " ".join(str(int(g)) for g in gold))
    return "\n".join(lines) + "\n"


def write_instances(instances, path, gold=None) -> None:
    gold = gold if gold is not None else [None] * len(instances)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst, g in zip(instances, gold):
            fh.write(format_instance(inst, g))


def _expect(lines, keyword):
    try:
        ln = next(lines)
    except StopIteration:
        raise FormatError(f"unexpected end of file, expected {keyword!r}") from None
    parts = ln.split()
    if parts[0] != keyword:
        raise FormatError(f"expected {keyword!r}, got {ln!r}")
    return parts[1:]


def parse_instances(text: str):
    """Returns ``(instances, gold)``; ``gold[i]`` is None when absent."""
    raw = list(_content_lines(text))
    instances, gold = [], []
    pos = 0
    while pos < len(raw):
        it = iter(raw[pos:])
        name = " ".join(_expect(it, "instance"))
        labels = _expect(it, "labels")
        tokens = _expect(it, "tokens")
        T, Y = len(tokens), len(labels)
        if T < 1 or Y < 1:
            raise FormatError(f"instance {name!r} needs tokens and labels")
        _expect(it, "node")
        node = _rows(it, T, Y, "node potentials")
        _expect(it, "edge")
        edge = _rows(it, (T - 1) * Y, Y, "edge potentials").reshape(T - 1, Y, Y)
        used = 5 + T + (T - 1) * Y
        g = None
        if pos + used < len(raw) and raw[pos + used].split()[0] == "gold":
            try:
                g = [int(x) for x in raw[pos + used].split()[1:]]
            except ValueError:
                raise FormatError(f"bad gold line for {name!r}") from None
            if len(g) != T or any(not 0 <= x < Y for x in g):
                raise FormatError(f"gold labeling of {name!r} does not fit the instance")
            used += 1
        try:
            instances.append(ChainInstance(tuple(tokens), node, edge, tuple(labels), name=name))
        except ValueError as e:
            raise FormatError(str(e)) from None
        gold.append(g)
        pos += used
    return instances, gold


def read_instances(path):
    return parse_instances(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# collective model manifests
# ---------------------------------------------------------------------------

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


@dataclass
class ModelManifest:
    instances: list
    gold: list
    configs: list
    other: str = "Other"
    options: dict = field(default_factory=dict)


def property_config(params: dict) -> PropertyConfig:
    try:
        prop = make_property(params["kind"], anchor=params.get("anchor"), token=params.get("token"))
    except KeyError:
        raise FormatError("property line needs kind=") from None
    except ValueError as e:
        raise FormatError(str(e)) from None
    try:
        return PropertyConfig(prop, potential=params.get("potential", "potts"),
                              lam=float(params.get("lambda", 1.0)),
                              w_same=float(params.get("w_same", 1.0)),
                              w_diff=float(params.get("w_diff", 0.0)))
    except ValueError as e:
        raise FormatError(str(e)) from None


def format_property(cfg: PropertyConfig) -> str:
    p = cfg.prop
    parts = ["property", f"kind={p.kind}"]
    if getattr(p, "anchor", None) is not None:
        parts.append(f"anchor={p.anchor}")
    if getattr(p, "token", None) is not None:
        parts.append(f"token={p.token}")
    parts.append(f"potential={cfg.potential}")
    if cfg.potential == "majority":
        parts += [f"w_same={_fmt(cfg.w_same)}", f"w_diff={_fmt(cfg.w_diff)}"]
    else:
        parts.append(f"lambda={_fmt(cfg.lam)}")
    return " ".join(parts)


def parse_manifest(text: str, base: Path) -> ModelManifest:
    instances, gold, configs = [], [], []
    other = "Other"
    options = {}
    for ln in _content_lines(text):
        parts = shlex.split(ln)
        key, rest = parts[0], parts[1:]
        if key == "other":
            if len(rest) != 1:
                raise FormatError("other takes one label")
            other = rest[0]
        elif key == "instances":
            for name in rest:
                path = base / name
                if not path.exists():
                    raise FormatError(f"instance file {name!r} not found")
                inst, g = read_instances(path)
                instances.extend(inst)
                gold.extend(g)
        elif key == "property":
            configs.append(property_config(_kv(rest)))
        elif key == "option":
            for k, v in _kv(rest).items():
                if k in ("restrict", "exclusion"):
                    if v.lower() not in _BOOL:
                        raise FormatError(f"option {k} expects true/false")
                    options[k] = _BOOL[v.lower()]
                elif k == "damping":
                    options[k] = float(v)
                elif k == "solver":
                    options["clique_solver"] = v
                elif k == "beam":
                    options["beam_width"] = int(v)
                else:
                    raise FormatError(f"unknown option {k!r}")
        else:
            raise FormatError(f"unknown manifest line {ln!r}")
    if not instances:
        raise FormatError("manifest lists no instances")
    return ModelManifest(instances, gold, configs, other, options)


def read_manifest(path) -> ModelManifest:
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), path.parent)


def write_manifest(path, instance_files, configs, other="Other", options=None) -> None:
    lines = [f"other {other}", "instances " + " ".join(instance_files)]
    lines.extend(format_property(c) for c in configs)
    if options:
        lines.append("option " + " ".join(f"{k}={str(v).lower()}" for k, v in options.items()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

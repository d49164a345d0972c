"""Declarative supervision graphs: nodes are networks, edges are CPS or EMA supervision.

A CPS edge ``src -> dst`` trains ``dst`` on the argmax pseudo label of ``src``.
An EMA edge ``src -> dst`` makes teacher ``dst`` the moving average of learner ``src``.
Every learner additionally receives the supervised loss on labeled data.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .errors import ConfigurationError
from .semi_supervision import LEARNER, TEACHER, NetworkHandle

CPS, EMA = "CPS", "EMA"


@dataclass(frozen=True)
class Node:
    id: str
    arch: str
    role: str = LEARNER


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: str


@dataclass
class FrameworkSpec:
    nodes: list
    edges: list
    test_node: str
    name: Optional[str] = None

    def node(self, node_id):
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    @property
    def learners(self):
        return [n for n in self.nodes if n.role == LEARNER]

    @property
    def teachers(self):
        return [n for n in self.nodes if n.role == TEACHER]

    def to_dict(self):
        return {
            "name": self.name,
            "nodes": [{"id": n.id, "arch": n.arch, "role": n.role} for n in self.nodes],
            "edges": [{"src": e.src, "dst": e.dst, "kind": e.kind} for e in self.edges],
            "test_node": self.test_node,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            nodes = [Node(n["id"], n["arch"], n.get("role", LEARNER)) for n in d["nodes"]]
            edges = [Edge(e["src"], e["dst"], e["kind"]) for e in d.get("edges") or []]
            return cls(nodes, edges, d["test_node"], d.get("name"))
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed framework spec: missing {exc}") from exc

    def dump(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    ids: tuple = ()


def validate(spec: FrameworkSpec):
    """Return the list of invariant violations (empty when the spec is valid)."""
    out = []
    ids = [n.id for n in spec.nodes]
    by_id = {n.id: n for n in spec.nodes}
    for nid in {i for i in ids if ids.count(i) > 1}:
        out.append(Violation("duplicate node", f"node id {nid!r} is used more than once", (nid,)))
    for n in spec.nodes:
        if n.arch not in ("CNN", "ViT"):
            out.append(Violation("unknown arch", f"node {n.id!r} has arch {n.arch!r}", (n.id,)))
        if n.role not in (LEARNER, TEACHER):
            out.append(Violation("unknown role", f"node {n.id!r} has role {n.role!r}", (n.id,)))
    if not any(n.role == LEARNER for n in spec.nodes):
        out.append(Violation("no learner", "a framework needs at least one learner"))
    if spec.test_node not in by_id:
        out.append(Violation("unknown test node", f"test node {spec.test_node!r} does not exist", (spec.test_node,)))
    seen = set()
    for e in spec.edges:
        eid = (e.src, e.dst, e.kind)
        if eid in seen:
            out.append(Violation("duplicate edge", f"edge {e.src}->{e.dst} ({e.kind}) repeats", (e.src, e.dst)))
        seen.add(eid)
        if e.src not in by_id or e.dst not in by_id:
            out.append(Violation("dangling edge", f"edge {e.src}->{e.dst} names an unknown node", (e.src, e.dst)))
            continue
        s, d = by_id[e.src], by_id[e.dst]
        if e.kind == EMA:
            if s.role != LEARNER or d.role != TEACHER:
                out.append(Violation("EMA roles", f"EMA edge {e.src}->{e.dst} must go learner -> teacher", (e.src, e.dst)))
            if s.arch != d.arch:
                out.append(Violation("arch mismatch", f"EMA edge {e.src}->{e.dst} joins {s.arch} and {d.arch}", (e.src, e.dst)))
        elif e.kind == CPS:
            if e.src == e.dst:
                out.append(Violation("self supervision", f"CPS edge {e.src}->{e.dst} is a self-loop", (e.src,)))
            if d.role != LEARNER:
                out.append(Violation("CPS target", f"CPS edge {e.src}->{e.dst} targets a teacher", (e.src, e.dst)))
        else:
            out.append(Violation("unknown edge kind", f"edge {e.src}->{e.dst} has kind {e.kind!r}", (e.src, e.dst)))
    for t in spec.nodes:
        if t.role != TEACHER:
            continue
        n_in = sum(1 for e in spec.edges if e.kind == EMA and e.dst == t.id)
        if n_in != 1:
            out.append(Violation("EMA sources", f"teacher {t.id!r} has {n_in} EMA sources, needs exactly 1", (t.id,)))
    return out


def check(spec):
    problems = validate(spec)
    if problems:
        raise ConfigurationError("; ".join(v.message for v in problems))
    return spec


# ---------------------------------------------------------------- presets

def _spec(name, nodes, edges, test):
    return FrameworkSpec([Node(*n) for n in nodes], [Edge(*e) for e in edges], test, name)


def _cps_pair(a, b):
    return [(a, b, CPS), (b, a, CPS)]


def _cps_pair_spec(name, arch_a, arch_b, test):
    return _spec(name, [("A", arch_a), ("B", arch_b)], _cps_pair("A", "B"), test)


def _mean_teacher_spec(name, arch, test):
    return _spec(name, [("B", arch), ("C", arch, TEACHER)], [("B", "C", EMA), ("C", "B", CPS)], test)


def _triple_spec(name, arch_a, arch_b, test):
    edges = _cps_pair("A", "B") + [("B", "C", EMA), ("C", "A", CPS), ("C", "B", CPS)]
    return _spec(name, [("A", arch_a), ("B", arch_b), ("C", arch_b, TEACHER)], edges, test)


_FAMILIES = {
    "ViT-ViT-CPS": lambda t: _cps_pair_spec("ViT-ViT-CPS", "ViT", "ViT", t),
    "CNN-CNN-CPS": lambda t: _cps_pair_spec("CNN-CNN-CPS", "CNN", "CNN", t),
    "CNN-MT": lambda t: _mean_teacher_spec("CNN-MT", "CNN", t),
    "ViT-MT": lambda t: _mean_teacher_spec("ViT-MT", "ViT", t),
    "ViT-ViT-ViT": lambda t: _triple_spec("ViT-ViT-ViT", "ViT", "ViT", t),
    "CNN-CNN-CNN": lambda t: _triple_spec("CNN-CNN-CNN", "CNN", "CNN", t),
    "CNN-ViT-ViT": lambda t: _triple_spec("CNN-ViT-ViT", "CNN", "ViT", t),
    # cross teaching between a CNN and a ViT learner (mode A)
    "A": lambda t: _cps_pair_spec("A", "CNN", "ViT", t),
    # mean teacher with a CNN backbone (mode D)
    "D": lambda t: _mean_teacher_spec("D", "CNN", t),
    "SUP-ViT": lambda t: _spec("SUP-ViT", [("A", "ViT")], [], t),
    "SUP-CNN": lambda t: _spec("SUP-CNN", [("A", "CNN")], [], t),
}
_DEFAULT_TEST = {"CNN-MT": "B", "ViT-MT": "B", "D": "B", "CNN-ViT-ViT": "C"}
_ALIASES = {"W": "CNN-ViT-ViT/C", "S4CVnet": "CNN-ViT-ViT/C", "MT": "D", "CTCT": "A"}

# architecture ablation rows, in order, named family/test-network
ABLATION_PRESETS = [
    "ViT-ViT-CPS/A", "ViT-ViT-CPS/B",
    "CNN-CNN-CPS/A", "CNN-CNN-CPS/B",
    "CNN-MT/B", "CNN-MT/C",
    "ViT-MT/B", "ViT-MT/C",
    "ViT-ViT-ViT/A", "ViT-ViT-ViT/B", "ViT-ViT-ViT/C",
    "CNN-CNN-CNN/A", "CNN-CNN-CNN/B", "CNN-CNN-CNN/C",
    "CNN-ViT-ViT/A", "CNN-ViT-ViT/B", "CNN-ViT-ViT/C",
]


def preset_names():
    return sorted(_FAMILIES) + sorted(_ALIASES)


def preset(name):
    """Build a shipped framework. ``family/X`` selects node X as the test network."""
    full = _ALIASES.get(name, name)
    family, _, test = full.partition("/")
    if family not in _FAMILIES:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(preset_names())}")
    test = test or _DEFAULT_TEST.get(family, "A")
    spec = _FAMILIES[family](test)
    if test not in {n.id for n in spec.nodes}:
        raise KeyError(f"preset {name!r}: no node {test!r}")
    if name in _ALIASES:
        spec.name = name
    elif family in _MULTI_TEST:
        spec.name = f"{family}/{test}"
    return spec


_MULTI_TEST = {p.split("/")[0] for p in ABLATION_PRESETS}


def resolve_spec(ref):
    """A preset name or a path to a spec file."""
    try:
        return preset(ref)
    except KeyError:
        pass
    if os.path.exists(ref):
        return FrameworkSpec.load(ref)
    raise KeyError(f"{ref!r} is neither a preset nor a spec file; presets: {', '.join(preset_names())}")


# ---------------------------------------------------------------- wiring

@dataclass(frozen=True)
class SemiTerm:
    source: str
    target: str
    weight: str  # "lambda1" (learner-sourced) or "lambda2" (teacher-sourced)


@dataclass
class LossWiring:
    sup: list
    semi: list
    ema: list

    @property
    def cps_terms(self):
        return [t for t in self.semi if t.weight == "lambda1"]

    @property
    def guide_terms(self):
        return [t for t in self.semi if t.weight == "lambda2"]

    def multiplicities(self):
        return len(self.sup), len(self.cps_terms), len(self.guide_terms)


def wire(spec: FrameworkSpec):
    """Loss structure of a valid spec, without building networks."""
    check(spec)
    sup = [n.id for n in spec.learners]
    semi = []
    for e in spec.edges:
        if e.kind == CPS:
            weight = "lambda2" if spec.node(e.src).role == TEACHER else "lambda1"
            semi.append(SemiTerm(e.src, e.dst, weight))
    # lambda1 terms first, then lambda2, each in edge order
    semi = [t for t in semi if t.weight == "lambda1"] + [t for t in semi if t.weight == "lambda2"]
    ema = [(e.src, e.dst) for e in spec.edges if e.kind == EMA]
    return LossWiring(sup, semi, ema)


@dataclass
class Assembly:
    spec: FrameworkSpec
    handles: dict
    wiring: LossWiring
    model_cfg: object = None

    @property
    def learners(self):
        return [h for h in self.handles.values() if not h.is_teacher]

    @property
    def teachers(self):
        return [h for h in self.handles.values() if h.is_teacher]

    @property
    def test_handle(self):
        return self.handles[self.spec.test_node]

    def ordered(self):
        return [self.handles[n.id] for n in self.spec.nodes]


def instantiate(spec, model_cfg, seed=0, dtype=None):
    """Build one network per node; learners get separate initialisations.

    Teachers start as copies of their EMA source and never require gradients.
    """
    import torch

    from .backbones import build_network

    wiring = wire(spec)
    handles = {}
    for i, n in enumerate(spec.nodes):
        if n.role == TEACHER:
            continue
        torch.manual_seed(seed * 1000 + i)
        net = build_network(n.arch, model_cfg)
        if dtype is not None:
            net = net.to(dtype)
        handles[n.id] = NetworkHandle(n.id, n.arch, LEARNER, net)
    sources = {dst: src for src, dst in wiring.ema}
    for n in spec.nodes:
        if n.role != TEACHER:
            continue
        net = copy.deepcopy(handles[sources[n.id]].module)
        handles[n.id] = NetworkHandle(n.id, n.arch, TEACHER, net, ema_source=sources[n.id])
    handles = {n.id: handles[n.id] for n in spec.nodes}
    return Assembly(spec, handles, wiring, model_cfg)


# ---------------------------------------------------------------- grid placement

def supervision_mode(spec):
    n_learn, n_teach = len(spec.learners), len(spec.teachers)
    has_cps = any(e.kind == CPS and spec.node(e.src).role == LEARNER for e in spec.edges)
    if n_teach and has_cps:
        mode = "CPS+EMA"
    elif n_teach:
        mode = "EMA"
    elif has_cps:
        mode = "CPS"
    else:
        mode = "SUP"
    return f"{len(spec.nodes)}-net {mode}"


def cnn_fraction(spec):
    return sum(n.arch == "CNN" for n in spec.nodes) / len(spec.nodes)


def grid_position(spec):
    """(row label, column label) of a spec in the mode x CNN-share heatmap."""
    test_role = spec.node(spec.test_node).role if spec.test_node in {n.id for n in spec.nodes} else "?"
    row = f"{supervision_mode(spec)} / test {spec.test_node} ({test_role})"
    n_cnn = sum(n.arch == "CNN" for n in spec.nodes)
    col = f"CNN:ViT {n_cnn}:{len(spec.nodes) - n_cnn}"
    return row, col


def spec_json(spec):
    return json.dumps(spec.to_dict(), sort_keys=True)


__all__ = [
    "Assembly", "CPS", "EMA", "Edge", "FrameworkSpec", "LossWiring", "Node", "SemiTerm",
    "ABLATION_PRESETS", "Violation", "check", "cnn_fraction", "grid_position", "instantiate",
    "preset", "preset_names", "resolve_spec", "spec_json", "supervision_mode", "validate", "wire",
]

"""Run configuration: a TOML document with families and experiment tables.

Example::

    seed = 0
    output = "runs/default"
    resolution_scale = 1.0

    [surface]
    kind = "round_sphere"

    [[families]]
    family = "random_harmonic"
    seeds = [1, 2, 3]

    [[experiments]]
    name = "verify-estimate-1"
    family = "highest_weight"
    p = 4.0
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
import sys
from dataclasses import dataclass, field

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .experiments import EXPERIMENTS, FamilySpec
from .geometry import Surface

TOP_KEYS = ("seed", "output", "jobs", "resolution_scale", "surface", "families", "experiments")
SAMPLER_KEYS = ("base_grid", "direction_count", "levels", "length")


@dataclass
class RunConfig:
    surface: dict = field(default_factory=lambda: {"kind": "round_sphere", "radius": 1.0})
    families: list = field(default_factory=list)
    experiments: list = field(default_factory=list)
    output: str = "runs/default"
    seed: int = 0
    resolution_scale: float = 1.0
    jobs: int = 1

    def to_dict(self):
        return {"seed": self.seed, "output": self.output, "jobs": self.jobs,
                "resolution_scale": self.resolution_scale, "surface": dict(self.surface),
                "families": [dict(f) for f in self.families],
                "experiments": [dict(e) for e in self.experiments]}

    def to_toml(self):
        return tomli_w.dumps(self.to_dict())

    def canonical(self):
        """Semantic content: everything except where output goes and how many workers."""
        d = self.to_dict()
        d.pop("output")
        d.pop("jobs")
        d["families"] = [spec.to_dict() for spec in self.family_specs().values()]
        d["experiments"] = [self.resolved(e) for e in self.experiments]
        return d

    def config_hash(self):
        blob = json.dumps(_json_safe(self.canonical()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def family_specs(self):
        """Declared families keyed by name; random seeds default to seed+1..seed+8."""
        out = {}
        for d in self.families:
            d = dict(d)
            if d["family"] == "random_harmonic" and "seeds" not in d:
                d["seeds"] = list(range(self.seed + 1, self.seed + 9))
            out[d["family"]] = FamilySpec.from_dict(d)
        return out

    def resolved(self, exp):
        """Experiment parameters with schema defaults filled in."""
        schema = EXPERIMENTS[exp["name"]].schema
        p = copy.deepcopy(schema)
        p.update({k: v for k, v in exp.items() if k != "name"})
        p["name"] = exp["name"]
        return p

    def with_overrides(self, *, seed=None, resolution_scale=None, output=None, jobs=None):
        c = copy.deepcopy(self)
        if seed is not None:
            c.seed = int(seed)
        if resolution_scale is not None:
            c.resolution_scale = float(resolution_scale)
        if output is not None:
            c.output = str(output)
        if jobs is not None:
            c.jobs = int(jobs)
        return c


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _line_of(text, key, start=0):
    """1-based line of the first ``key =`` assignment (or table header) after ``start``."""
    if text is None:
        return None
    pat = re.compile(rf"^\s*(\[\[?\s*)?\"?{re.escape(key)}\"?\s*(=|\]\]?)", re.M)
    lines = text.splitlines()
    offset = sum(len(line) + 1 for line in lines[:start])
    m = pat.search(text, offset)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _experiment_lines(text):
    if text is None:
        return []
    return [i for i, line in enumerate(text.splitlines())
            if re.match(r"^\s*\[\[\s*experiments\s*\]\]", line)]


def _fail(msg, key, text, start=0):
    raise ConfigError(msg, key=key, line=_line_of(text, key, start))


def from_dict(d, text=None):
    """Validate a parsed document; ``text`` (the source) supplies line numbers."""
    d = dict(d)
    for k in d:
        if k not in TOP_KEYS:
            _fail(f"unknown key {k!r}", k, text)
    cfg = RunConfig()
    if "seed" in d:
        if not isinstance(d["seed"], int) or isinstance(d["seed"], bool):
            _fail("seed must be an integer", "seed", text)
        cfg.seed = d["seed"]
    if "jobs" in d:
        if not isinstance(d["jobs"], int) or d["jobs"] < 1:
            _fail("jobs must be a positive integer", "jobs", text)
        cfg.jobs = d["jobs"]
    if "resolution_scale" in d:
        r = d["resolution_scale"]
        if not isinstance(r, (int, float)) or not r > 0:
            _fail("resolution_scale must be positive", "resolution_scale", text)
        cfg.resolution_scale = float(r)
    if "output" in d:
        cfg.output = str(d["output"])
    if "surface" in d:
        try:
            surf = Surface.from_dict(d["surface"])
        except (ValueError, TypeError, KeyError) as exc:
            _fail(f"invalid surface: {exc}", "surface", text)
        cfg.surface = dict(d["surface"])
        if surf.kind != "round_sphere" or surf.radius != 1.0:
            _fail("spherical families require the unit round sphere surface", "surface", text)
    for f in d.get("families", []):
        try:
            FamilySpec.from_dict(f)
        except (ValueError, KeyError) as exc:
            _fail(f"invalid family: {exc}", "families", text)
        cfg.families.append(dict(f))
    names = {f["family"] for f in cfg.families}
    starts = _experiment_lines(text)
    for i, e in enumerate(d.get("experiments", [])):
        start = starts[i] if i < len(starts) else 0
        e = dict(e)
        name = e.get("name")
        if name not in EXPERIMENTS:
            _fail(f"unknown experiment {name!r}", "name", text, start)
        schema = EXPERIMENTS[name].schema
        for k, v in e.items():
            if k == "name":
                continue
            if k not in schema:
                _fail(f"unknown parameter {k!r} for {name}", k, text, start)
            if k == "sampler":
                bad = set(v) - set(SAMPLER_KEYS)
                if bad:
                    _fail(f"unknown sampler keys {sorted(bad)}", "sampler", text, start)
        p = dict(schema, **e)
        refs = [p["family"]] if "family" in schema else list(p.get("families", []))
        for r in refs:
            if r not in names:
                _fail(f"experiment {name} uses undeclared family {r!r}",
                      "family" if "family" in schema else "families", text, start)
        cfg.experiments.append(e)
    return cfg


def loads(text):
    try:
        d = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", line=int(m.group(1)) if m else None)
    return from_dict(d, text)


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def dumps(cfg):
    return cfg.to_toml()

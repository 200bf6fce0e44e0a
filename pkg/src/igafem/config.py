"""Problem configuration: JSON schema, validation and problem assembly.

One config file fully specifies a run.  See README for the schema; errors
name the offending field path.  Paths inside the config are resolved
relative to the config file location.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cohesive import CohesiveLaw, build_cohesive_zone
from .elasticity import LoadCase, Material
from .errors import ConfigError
from .mesh import RegionSpec, import_mesh
from .solver import (
    CoupledProblem,
    SolverOptions,
    build_global_model,
    build_local_model,
)
from .splines import (
    KnotVector,
    SplinePatch,
    quarter_annulus_patch,
    refine_to_spans,
    square_patch,
)

_SIDE_SETS = ("side_xi0", "side_xi1", "side_eta0", "side_eta1")


def _req(table, key, path):
    if key not in table:
        raise ConfigError(f"{path}.{key}: missing required field")
    return table[key]


@dataclass
class LocalSpec:
    name: str
    region: tuple
    kind: str = "generated"  # generated | imported
    element: str = "T6"
    mesh_path: str = None
    behavior: str = "elastic"  # elastic | cohesive
    material: dict = None
    cohesive: dict = None


@dataclass
class ProblemConfig:
    patch: dict
    elements: tuple
    material: dict
    load: dict
    locals: list = field(default_factory=list)
    local_refinement: tuple = (1, 1)
    solver: dict = field(default_factory=dict)
    output_dir: str = "out"
    reference_energy: float = None
    base_dir: Path = field(default=Path("."), repr=False)

    def to_dict(self):
        out = {
            "patch": self.patch,
            "elements": list(self.elements),
            "local_refinement": list(self.local_refinement),
            "material": self.material,
            "load": self.load,
            "locals": [
                {
                    k: v
                    for k, v in {
                        "name": s.name,
                        "region": [list(r) for r in s.region],
                        "type": s.kind,
                        "element": s.element,
                        "mesh": s.mesh_path,
                        "behavior": s.behavior,
                        "material": s.material,
                        "cohesive": s.cohesive,
                    }.items()
                    if v is not None
                }
                for s in self.locals
            ],
            "solver": self.solver,
            "output": {"dir": self.output_dir},
        }
        if self.reference_energy is not None:
            out["reference_energy"] = self.reference_energy
        return out


def parse_config(raw: dict, base_dir=".") -> ProblemConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    patch = _req(raw, "patch", "")
    elements = _req(raw, "elements", "")
    if not (isinstance(elements, (list, tuple)) and len(elements) == 2):
        raise ConfigError("elements: must be [n1, n2]")
    material = _req(raw, "material", "")
    for key in ("E", "nu"):
        if key not in material:
            raise ConfigError(f"material.{key}: missing required field")
    load = _req(raw, "load", "")
    for k, entry in enumerate(load.get("dirichlet", [])):
        for key in ("set", "component", "value"):
            if key not in entry:
                raise ConfigError(f"load.dirichlet[{k}].{key}: missing required field")
        if entry["set"] not in _SIDE_SETS:
            raise ConfigError(
                f"load.dirichlet[{k}].set: unknown side '{entry['set']}'"
            )
    for k, entry in enumerate(load.get("neumann", [])):
        if "set" not in entry:
            raise ConfigError(f"load.neumann[{k}].set: missing required field")
        if ("traction" in entry) == ("pressure" in entry):
            raise ConfigError(
                f"load.neumann[{k}]: exactly one of 'traction' or 'pressure' required"
            )
    steps = load.get("steps", 1)
    if not isinstance(steps, int) or steps < 1:
        raise ConfigError("load.steps: must be a positive integer")

    locals_spec = []
    for k, entry in enumerate(raw.get("locals", [])):
        path = f"locals[{k}]"
        name = _req(entry, "name", path)
        region = _req(entry, "region", path)
        try:
            region = tuple((int(a), int(b)) for a, b in region)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}.region: must be [[i0,i1],[j0,j1]]") from None
        kind = entry.get("type", "generated")
        if kind not in ("generated", "imported"):
            raise ConfigError(f"{path}.type: must be 'generated' or 'imported'")
        if kind == "imported" and "mesh" not in entry:
            raise ConfigError(f"{path}.mesh: required for imported local models")
        behavior = entry.get("behavior", "elastic")
        if behavior not in ("elastic", "cohesive"):
            raise ConfigError(f"{path}.behavior: must be 'elastic' or 'cohesive'")
        if behavior == "cohesive":
            coh = _req(entry, "cohesive", path)
            for key in ("sigma_c", "g_c", "penalty", "side_a", "side_b"):
                if key not in coh:
                    raise ConfigError(f"{path}.cohesive.{key}: missing required field")
        locals_spec.append(
            LocalSpec(
                name,
                region,
                kind,
                entry.get("element", "T6"),
                entry.get("mesh"),
                behavior,
                entry.get("material"),
                entry.get("cohesive"),
            )
        )
    names = [s.name for s in locals_spec]
    if len(set(names)) != len(names):
        raise ConfigError("locals: names must be distinct")
    regions = [(s.name, RegionSpec(s.region, s.name)) for s in locals_spec]
    for i in range(len(regions)):
        for j in range(i + 1, len(regions)):
            if regions[i][1].overlaps(regions[j][1]):
                raise ConfigError(
                    f"locals: regions '{regions[i][0]}' and '{regions[j][0]}' overlap"
                )

    solver = raw.get("solver", {})
    for key in ("tol", "newton_tol"):
        if key in solver and solver[key] <= 0:
            raise ConfigError(f"solver.{key}: must be positive")

    return ProblemConfig(
        patch=patch,
        elements=tuple(int(n) for n in elements),
        material=material,
        load=load,
        locals=locals_spec,
        local_refinement=tuple(raw.get("local_refinement", [1, 1])),
        solver=solver,
        output_dir=raw.get("output", {}).get("dir", "out"),
        reference_energy=raw.get("reference_energy"),
        base_dir=Path(base_dir),
    )


def load_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return parse_config(raw, base_dir=path.parent)


def dump_config(cfg: ProblemConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def build_patch(spec: dict) -> SplinePatch:
    if "preset" in spec:
        preset = spec["preset"]
        if preset == "quarter_annulus":
            return quarter_annulus_patch(spec.get("r_in", 5.0), spec.get("r_out", 10.0))
        if preset == "square":
            return square_patch(spec.get("side", 10.0), spec.get("degree", 2))
        raise ConfigError(f"patch.preset: unknown preset '{preset}'")
    for key in ("degrees", "knots", "control_points"):
        if key not in spec:
            raise ConfigError(f"patch.{key}: missing required field")
    degrees = spec["degrees"]
    kvs = tuple(
        KnotVector(np.asarray(k, dtype=float), int(p))
        for k, p in zip(spec["knots"], degrees)
    )
    return SplinePatch(
        kvs, np.asarray(spec["control_points"], dtype=float), spec.get("weights")
    )


def build_material(spec: dict) -> Material:
    return Material(
        float(spec["E"]), float(spec["nu"]), float(spec.get("thickness", 1.0))
    )


def build_load_case(spec: dict) -> LoadCase:
    dirichlet = [
        (e["set"], e["component"], float(e["value"]))
        for e in spec.get("dirichlet", [])
    ]
    neumann = []
    for e in spec.get("neumann", []):
        if "pressure" in e:
            neumann.append((e["set"], ("pressure", float(e["pressure"]))))
        else:
            neumann.append((e["set"], tuple(float(t) for t in e["traction"])))
    return LoadCase(dirichlet=dirichlet, neumann=neumann)


def build_solver_options(cfg: ProblemConfig) -> SolverOptions:
    s = cfg.solver
    return SolverOptions(
        tol=float(s.get("tol", 1e-8)),
        max_iters=int(s.get("max_iters", 100)),
        aitken=bool(s.get("aitken", True)),
        variant=s.get("variant", "V3"),
        load_steps=int(cfg.load.get("steps", 1)),
        newton_tol=float(s.get("newton_tol", 1e-10)),
        newton_max=int(s.get("newton_max", 50)),
    )


def build_problem(cfg: ProblemConfig) -> CoupledProblem:
    """Assemble the coupled problem described by the configuration."""
    patch0 = build_patch(cfg.patch)
    patch_c, _ = refine_to_spans(patch0, cfg.elements)
    material = build_material(cfg.material)
    load = build_load_case(cfg.load)
    gm = build_global_model(patch_c, material, load, cfg.local_refinement)
    locals_ = []
    for spec in cfg.locals:
        region = RegionSpec(spec.region, spec.name)
        region.validate_against(patch_c)
        mesh = None
        if spec.kind == "imported":
            mesh = import_mesh(cfg.base_dir / spec.mesh_path)
        local_mat = build_material(spec.material) if spec.material else material
        cohesive = None
        if spec.behavior == "cohesive":
            coh = spec.cohesive
            law = CohesiveLaw(
                float(coh["sigma_c"]), float(coh["g_c"]), float(coh["penalty"])
            )
            for side in ("side_a", "side_b"):
                if coh[side] not in mesh.node_sets:
                    raise ConfigError(
                        f"locals '{spec.name}': cohesive node set '{coh[side]}' "
                        "not present in the imported mesh"
                    )
            cohesive = build_cohesive_zone(
                mesh,
                mesh.node_sets[coh["side_a"]],
                mesh.node_sets[coh["side_b"]],
                law,
                closed=bool(coh.get("closed", True)),
                thickness=local_mat.thickness,
            )
        locals_.append(
            build_local_model(
                spec.name,
                gm,
                region,
                material=local_mat,
                element=spec.element,
                mesh=mesh,
                cohesive=cohesive,
            )
        )
    return CoupledProblem(gm, locals_, build_solver_options(cfg))

"""Coupled global/local solves: the monolithic saddle-point reference and the
non-invasive iterative exchange algorithm with Aitken acceleration.

The global operator is projected onto the spline basis, factorized exactly
once per problem, and never modified afterwards; every iteration only swaps
interface loads on the right-hand side.  Within one iteration the local
solves are mutually independent (they read the shared global field and write
disjoint state), so they may run concurrently; contributions are always
accumulated in canonical (name-sorted) order, which keeps the results
independent of the local execution order.

Three algebraically equivalent variants of the exchange are exposed:
V1 works with the mortar mass matrices and the unscaled multiplier, V2 with
trace operators and the load-like multiplier, V3 (default) builds every
global quantity from fine FE operators pushed through the bridge.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .cohesive import CohesiveZone, assemble_cohesive
from .coupling import (
    CoveredRegion,
    InterfaceOperators,
    build_covered_region,
    build_interface_operators,
    covered_reaction,
)
from .elasticity import (
    ConstrainedOperator,
    LoadCase,
    Material,
    assemble_loads,
    assemble_stiffness,
    dirichlet_dofs,
    project_operator,
    prolong_solution,
    strain_energy,
)
from .errors import ConfigError, NonConvergenceError
from .extraction import (
    BridgeOperator,
    compose_bridge,
    expand_dofs,
    identity_bridge,
    lagrange_extraction,
)
from .mesh import (
    FEMesh,
    InterfaceTrace,
    RegionSpec,
    StructuredGrid,
    build_global_fe_mesh,
    covered_element_ids,
    extract_interface,
    generate_local_mesh,
    local_interface_ids,
)
from .splines import SplinePatch, refine_to_spans

V1, V2, V3 = "V1", "V2", "V3"


def control_point_side_sets(patch: SplinePatch):
    """Boundary control-point index sets named like the mesh side sets."""
    n1, n2 = patch.basis_shape
    ii = np.arange(n1)
    jj = np.arange(n2)
    return {
        "side_xi0": 0 + jj * n1,
        "side_xi1": (n1 - 1) + jj * n1,
        "side_eta0": ii,
        "side_eta1": ii + (n2 - 1) * n1,
    }


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iters: int = 100
    aitken: bool = True
    variant: str = V3
    load_steps: int = 1
    newton_tol: float = 1e-10
    newton_max: int = 50
    omega_bounds: tuple = (0.1, 2.0)

    def __post_init__(self):
        if self.tol <= 0 or self.newton_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.variant not in (V1, V2, V3):
            raise ConfigError(f"unknown algorithm variant {self.variant}")
        if self.load_steps < 1:
            raise ConfigError("load_steps must be >= 1")


@dataclass
class GlobalModel:
    """Projected global model with its one-time factorization."""

    patch: SplinePatch  # solved (coarse) patch; None for a pure-FE global
    grid: StructuredGrid
    bridge: BridgeOperator  # coarse DOF -> fine FE nodes (identity if pure FE)
    material: Material
    load: LoadCase
    k_c: sps.csr_matrix
    f_c: np.ndarray
    operator: ConstrainedOperator
    patch_f: SplinePatch = None
    refine_op: object = None  # RefinementOperator, coarse patch -> fine patch
    fine_bridge: BridgeOperator = None  # fine patch -> FE nodes
    _d2: sps.csr_matrix = None

    @property
    def num_coarse_dofs(self):
        return self.k_c.shape[0]

    @property
    def n_factorizations(self):
        return self.operator.n_factorizations

    @property
    def d2(self):
        if self._d2 is None:
            self._d2 = expand_dofs(self.bridge.matrix)
        return self._d2

    def prolong(self, u_c):
        return prolong_solution(self.bridge, u_c)


def build_global_model(
    patch_c: SplinePatch,
    material: Material,
    load: LoadCase,
    local_refinement=(1, 1),
    pure_fe=False,
) -> GlobalModel:
    """Refine, extract the bridge, assemble on the FE mesh and project.

    `local_refinement` subdivides every knot span of the solved patch to set
    the fine level on which interfaces and local meshes are built; with
    `pure_fe` the fine FE model itself is solved (identity bridge).
    """
    spans = patch_c.spans()
    targets = tuple(s * r for s, r in zip(spans, local_refinement))
    patch_f, refine_op = refine_to_spans(patch_c, targets)
    fine_bridge = lagrange_extraction(patch_f)
    grid = build_global_fe_mesh(patch_f, fine_bridge)
    k_f = assemble_stiffness(grid.mesh, material)
    f_f = assemble_loads(grid.mesh, load, material.thickness)
    if pure_fe:
        bridge = identity_bridge(grid.mesh.num_nodes, fine_bridge.node_params)
        k_c, f_c = k_f, f_f
        sets = grid.mesh.node_sets
    else:
        if patch_c.is_rational:
            bridge = compose_bridge(
                refine_op, fine_bridge, patch_c.weights, patch_f.weights
            )
        else:
            bridge = compose_bridge(refine_op, fine_bridge)
        k_c, f_c = project_operator(bridge, k_f, f_f)
        sets = control_point_side_sets(patch_c)
    fixed, vals = dirichlet_dofs(load, sets, k_c.shape[0] // 2)
    op = ConstrainedOperator(k_c, fixed, vals)
    return GlobalModel(
        None if pure_fe else patch_c,
        grid,
        bridge,
        material,
        load,
        k_c,
        f_c,
        op,
        patch_f=patch_f,
        refine_op=refine_op,
        fine_bridge=fine_bridge,
    )


@dataclass
class LocalModel:
    """One local FE model, its interface operators and covered region."""

    name: str
    mesh: FEMesh
    material: Material
    trace: InterfaceTrace
    iface_ids: np.ndarray
    ops: InterfaceOperators
    covered: CoveredRegion
    load: LoadCase = field(default_factory=LoadCase)
    cohesive: CohesiveZone = None
    k2: sps.csr_matrix = None
    f2: np.ndarray = None
    _fixed: tuple = None
    _factor: tuple = None
    _saddle: tuple = None
    _covered_coarse: tuple = None

    def __post_init__(self):
        if self.k2 is None:
            self.k2 = assemble_stiffness(self.mesh, self.material)
        if self.f2 is None:
            self.f2 = assemble_loads(self.mesh, self.load, self.material.thickness)

    @property
    def is_linear(self):
        return self.cohesive is None

    def interface_dofs(self):
        ids = self.iface_ids
        return np.stack([2 * ids, 2 * ids + 1], axis=1).ravel()

    def fixed_dofs(self):
        """Own Dirichlet DOF (unit load factor), interface DOF excluded."""
        if self._fixed is None:
            idx, vals = dirichlet_dofs(
                self.load, self.mesh.node_sets, self.mesh.num_nodes
            )
            iface = set(self.interface_dofs().tolist())
            keep = [k for k, dof in enumerate(idx) if int(dof) not in iface]
            self._fixed = (idx[keep], vals[keep])
        return self._fixed

    def covered_coarse(self, d2):
        """Projected covered operators K_bar_c, f_bar_c (V1/V2 route)."""
        if self._covered_coarse is None:
            k_bar_c = (d2 @ self.covered.k_bar @ d2.T).tocsr()
            f_bar_c = d2 @ self.covered.f_bar
            self._covered_coarse = (k_bar_c, f_bar_c)
        return self._covered_coarse

    def energy(self, u2):
        return strain_energy(self.k2, u2)


def _inherit_boundary_load(global_load: LoadCase, mesh: FEMesh) -> LoadCase:
    """Dirichlet specs of the global load case restricted to the side sets
    the local mesh inherited from the patch boundary."""
    dirichlet = [
        (s, c, v) for (s, c, v) in global_load.dirichlet if s in mesh.node_sets
    ]
    return LoadCase(dirichlet=dirichlet, neumann=[])


def build_local_model(
    name,
    global_model: GlobalModel,
    region: RegionSpec,
    material: Material = None,
    element="T6",
    mesh: FEMesh = None,
    load: LoadCase = None,
    cohesive: CohesiveZone = None,
) -> LocalModel:
    """Assemble a local model on a generated or imported mesh."""
    grid = global_model.grid
    if global_model.patch is not None:
        region.validate_against(global_model.patch)
        r1 = grid.spans[0] // global_model.patch.spans()[0]
        r2 = grid.spans[1] // global_model.patch.spans()[1]
        (a1, b1), (a2, b2) = region.ranges
        fine_ranges = ((a1 * r1, b1 * r1), (a2 * r2, b2 * r2))
    else:
        fine_ranges = region.ranges
        if fine_ranges[0][1] > grid.spans[0] or fine_ranges[1][1] > grid.spans[1]:
            raise ConfigError(f"region {region.name} outside the global span grid")
    material = material or global_model.material
    trace = extract_interface(grid, fine_ranges)
    if mesh is None:
        mesh = generate_local_mesh(grid, fine_ranges, element=element)
    ids = local_interface_ids(mesh, trace, grid.mesh.nodes)
    ops = build_interface_operators(trace, grid.mesh, mesh, ids)
    covered = build_covered_region(
        grid.mesh,
        global_model.material,
        covered_element_ids(grid, fine_ranges),
        global_model.load,
        global_model.material.thickness,
    )
    local_load = load if load is not None else _inherit_boundary_load(global_model.load, mesh)
    return LocalModel(
        name, mesh, material, trace, ids, ops, covered, local_load, cohesive
    )


@dataclass
class CoupledProblem:
    global_model: GlobalModel
    locals: list
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        self.locals = sorted(self.locals, key=lambda loc: loc.name)
        names = [loc.name for loc in self.locals]
        if len(set(names)) != len(names):
            raise ConfigError("local model names must be distinct")


@dataclass
class IterationState:
    """Mutable exchange state of one load step."""

    lam_tilde: dict  # accepted interface force per local
    lam_bar: dict  # covered-region reaction (fine DOF vector) per local
    u_c: np.ndarray  # global solution the lam_bar were computed from
    u_f: np.ndarray
    u_locals: dict
    residual_history: list = field(default_factory=list)
    omega: float = 1.0
    prev_increment: np.ndarray = None
    reference: float = 0.0
    ref_initialized: bool = False


def aitken_update(prev_increment, increment, omega, bounds=(0.1, 2.0)):
    """Dynamic relaxation factor from two successive residual vectors."""
    diff = increment - prev_increment
    den = float(diff @ diff)
    if den == 0.0:
        return omega
    omega_new = -omega * float(prev_increment @ diff) / den
    return float(np.clip(omega_new, bounds[0], bounds[1]))


def _relaxation_factor(state, increment, opts):
    """Aitken factor with a restart: when the raw update leaves the clamp
    interval the secant model is no longer trustworthy, so the memory is
    cleared and the clamped value used once."""
    if not opts.aitken or state.prev_increment is None:
        state.prev_increment = increment
        return 1.0
    diff = increment - state.prev_increment
    den = float(diff @ diff)
    raw = state.omega if den == 0.0 else -state.omega * float(
        state.prev_increment @ diff
    ) / den
    lo, hi = opts.omega_bounds
    if raw < lo or raw > hi:
        state.prev_increment = None
        return float(np.clip(raw, lo, hi))
    state.prev_increment = increment
    return raw


def global_step(problem: CoupledProblem, state: IterationState, load_factor=1.0):
    """Neumann solve of the global model (factorization reused).

    The exchanged interface force and covered-region reaction of the
    previous iterate enter the right-hand side; V1 spreads the multiplier
    through the mortar mass matrices, V2/V3 through the trace operators.
    """
    gm = problem.global_model
    d2 = gm.d2
    variant = problem.options.variant
    rhs = load_factor * gm.f_c
    for loc in problem.locals:
        lam = state.lam_tilde[loc.name]
        if variant == V1:
            rhs = rhs - d2 @ (loc.ops.c_1f.T @ loc.ops.ct_solve(lam))
        else:
            rhs = rhs - d2 @ loc.ops.spread_multiplier(lam)
    for loc in problem.locals:
        rhs = rhs + d2 @ state.lam_bar[loc.name]
    return gm.operator.solve(rhs, load_factor), rhs


def local_step(
    problem: CoupledProblem, loc: LocalModel, u_f, load_factor=1.0, u_start=None
):
    """Dirichlet solve of one local model; returns (u_2, lam_tilde_raw).

    The prescribed trace is the mortar image of the fine global field; the
    returned multiplier is the interface reaction load vector in the
    multiplier numbering.
    """
    opts = problem.options
    g = loc.ops.project_global_trace(u_f)
    iface_dofs = loc.interface_dofs()
    own_idx, own_vals = loc.fixed_dofs()
    f_ext = load_factor * loc.f2
    if not loc.is_linear:
        fixed_idx = np.concatenate([iface_dofs, own_idx])
        fixed_vals = np.concatenate([g, load_factor * own_vals])
        return _local_newton_solve(
            loc, fixed_idx, fixed_vals, f_ext, iface_dofs, opts, u_start
        )
    if opts.variant in (V1, V2):
        return _local_saddle_solve(loc, g, f_ext, load_factor, opts.variant)
    if loc._factor is None:
        fixed_idx = np.concatenate([iface_dofs, own_idx])
        mask = np.ones(loc.mesh.num_dofs, dtype=bool)
        mask[fixed_idx] = False
        free = np.nonzero(mask)[0]
        loc._factor = (
            fixed_idx,
            free,
            loc.k2[free].tocsr(),
            spla.splu(loc.k2[free][:, free].tocsc(), permc_spec="MMD_AT_PLUS_A"),
        )
    fixed_idx, free, k_rows, factor = loc._factor
    u2 = np.zeros(loc.mesh.num_dofs)
    u2[fixed_idx] = np.concatenate([g, load_factor * own_vals])
    u2[free] = factor.solve(f_ext[free] - k_rows @ u2)
    resid = loc.k2 @ u2 - f_ext
    return u2, resid[iface_dofs]


def _local_saddle_solve(loc: LocalModel, g, f_ext, load_factor, variant):
    """Saddle-point form of the local Dirichlet problem (linear case).

    V2 (matched interface) uses the boolean trace blocks and solves for the
    load-like multiplier directly; V1 (and V2 on a mixed interface) uses the
    mortar mass blocks and recovers lam_tilde = C_T lam.
    """
    own_idx, own_vals = loc.fixed_dofs()
    n = loc.mesh.num_dofs
    use_trace = variant == V2 and loc.ops.matched
    key = "T" if use_trace else "C"
    if loc._saddle is None or loc._saddle[0] != key:
        mask = np.ones(n, dtype=bool)
        mask[own_idx] = False
        free = np.nonzero(mask)[0]
        cmat = sps.csr_matrix(loc.ops.t_2 if use_trace else loc.ops.c_2)
        big = sps.bmat(
            [[loc.k2[free][:, free], -cmat[:, free].T], [-cmat[:, free], None]],
            format="csc",
        )
        loc._saddle = (key, free, cmat, spla.splu(big))
    _, free, cmat, factor = loc._saddle
    u2 = np.zeros(n)
    u2[own_idx] = load_factor * own_vals
    datum = g if use_trace else loc.ops.c_t @ g
    rhs2 = -(datum - cmat[:, own_idx] @ u2[own_idx])
    rhs = np.concatenate([f_ext[free] - loc.k2[free] @ u2, rhs2])
    sol = factor.solve(rhs)
    u2[free] = sol[: free.size]
    mult = sol[free.size :]
    lam_tilde = mult if use_trace else loc.ops.c_t @ mult
    return u2, lam_tilde


def _local_newton_solve(loc, fixed_idx, fixed_vals, f_ext, iface_dofs, opts, u_start):
    """Full Newton with backtracking for a cohesive local model.

    The bilinear law's kinks make raw Newton oscillate, so steps are halved
    (up to 8 times) whenever the force residual does not decrease.
    """
    n = loc.mesh.num_dofs
    mask = np.ones(n, dtype=bool)
    mask[fixed_idx] = False
    free = np.nonzero(mask)[0]
    u = u_start.copy() if u_start is not None else np.zeros(n)
    u[fixed_idx] = fixed_vals
    k_scale = float(np.abs(loc.k2.diagonal()).max())
    g_scale = float(np.abs(fixed_vals).max()) if fixed_vals.size else 0.0
    f_scale = max(float(np.abs(f_ext).max()), k_scale * g_scale, 1e-30)

    def residual(vec):
        f_coh, k_coh = assemble_cohesive(loc.cohesive, vec, n)
        return loc.k2 @ vec + f_coh - f_ext, k_coh

    resid, k_coh = residual(u)
    rnorm = float(np.linalg.norm(resid[free]))
    for _ in range(opts.newton_max):
        if rnorm <= opts.newton_tol * f_scale:
            return u, resid[iface_dofs]
        ktan = (loc.k2 + k_coh).tocsr()
        du = spla.splu(ktan[free][:, free].tocsc()).solve(-resid[free])
        step = 1.0
        for _ in range(8):
            trial = u.copy()
            trial[free] += step * du
            t_resid, t_kcoh = residual(trial)
            t_norm = float(np.linalg.norm(t_resid[free]))
            if t_norm < rnorm or t_norm <= opts.newton_tol * f_scale:
                break
            step *= 0.5
        u, resid, k_coh, rnorm = trial, t_resid, t_kcoh, t_norm
    raise NonConvergenceError(
        f"local Newton for '{loc.name}' stalled at residual {rnorm:.3e} "
        f"(tolerance {opts.newton_tol:g} x {f_scale:.3e})"
    )


def interface_residual(problem: CoupledProblem, state: IterationState, new_lam, new_bar):
    """Relative interface equilibrium residual.

    The increment of the local reactions is balanced against the increment
    of the covered-region reactions on the interface; the norm is normalized
    by the first-iteration imbalance (so the configured tolerances are
    relative).  A self-equilibrated first iterate yields zero directly.
    """
    parts = []
    scale = 0.0
    for loc in problem.locals:
        t1 = loc.ops.t_1f
        bar_inc = t1 @ new_bar[loc.name] - t1 @ state.lam_bar[loc.name]
        parts.append((new_lam[loc.name] - state.lam_tilde[loc.name]) - bar_inc)
        scale += float(np.linalg.norm(new_lam[loc.name]))
        scale += float(np.linalg.norm(t1 @ new_bar[loc.name]))
    num = float(np.linalg.norm(np.concatenate(parts))) if parts else 0.0
    if not state.ref_initialized:
        # an imbalance at round-off level of the interface forces counts as
        # already equilibrated (e.g. a local model identical to its covered
        # region, or a zero load); across load steps the reference is the
        # largest first-iteration imbalance seen so far
        cand = num if num > 1e-12 * scale else 0.0
        state.reference = max(state.reference, cand)
        state.ref_initialized = True
    if state.reference == 0.0:
        return 0.0
    return num / state.reference


@dataclass
class CouplingResult:
    u_c: np.ndarray
    u_f: np.ndarray
    u_locals: dict
    lam_tilde: dict
    histories: list  # one (iteration, residual, omega) list per load step
    reactions: list  # global reactions at the prescribed DOF per step
    energies: list  # coupled strain energy per step

    @property
    def iterations_per_step(self):
        return [len(h) for h in self.histories]

    @property
    def final_residuals(self):
        return [h[-1][1] for h in self.histories]


def run_coupling(problem: CoupledProblem) -> CouplingResult:
    """Iterative non-invasive exchange, optionally over several load steps.

    Every step alternates the global Neumann solve with the independent
    local Dirichlet solves until the interface residual drops below the
    tolerance; the exchanged interface force is Aitken-relaxed.  Cohesive
    history commits once per converged step.
    """
    opts = problem.options
    gm = problem.global_model
    order = [loc.name for loc in problem.locals]
    by_name = {loc.name: loc for loc in problem.locals}
    lam_tilde = {n: np.zeros(by_name[n].ops.num_multiplier_dofs) for n in order}
    u_locals = {n: np.zeros(by_name[n].mesh.num_dofs) for n in order}
    u_c = np.zeros(gm.num_coarse_dofs)
    u_f = np.zeros(gm.grid.mesh.num_dofs)
    histories, reactions, energies = [], [], []
    reference = 0.0

    for step in range(1, opts.load_steps + 1):
        factor = step / opts.load_steps
        lam_bar = {
            n: covered_reaction(by_name[n].covered, u_f, factor) for n in order
        }
        state = IterationState(
            lam_tilde, lam_bar, u_c, u_f, u_locals, reference=reference
        )
        history = []
        converged = False
        rhs_used = None
        for it in range(1, opts.max_iters + 1):
            u_c, rhs_used = global_step(problem, state, factor)
            u_f = gm.prolong(u_c)
            new_bar = {
                n: covered_reaction(by_name[n].covered, u_f, factor) for n in order
            }
            new_lam = {}
            for n in order:
                u2, lam_raw = local_step(
                    problem, by_name[n], u_f, factor, u_start=u_locals[n]
                )
                u_locals[n] = u2
                new_lam[n] = lam_raw
            res = interface_residual(problem, state, new_lam, new_bar)
            history.append((it, res, state.omega))
            state.residual_history.append(res)
            state.u_c, state.u_f = u_c, u_f
            if res <= opts.tol:
                for n in order:
                    state.lam_tilde[n] = new_lam[n]
                    state.lam_bar[n] = new_bar[n]
                converged = True
                break
            # both exchanged Neumann data (local reaction and covered
            # reaction) are relaxed by the same Aitken factor
            increment = (
                np.concatenate(
                    [new_lam[n] - state.lam_tilde[n] for n in order]
                    + [new_bar[n] - state.lam_bar[n] for n in order]
                )
                if order
                else np.zeros(0)
            )
            omega = _relaxation_factor(state, increment, opts)
            state.omega = omega
            for n in order:
                state.lam_tilde[n] = state.lam_tilde[n] + omega * (
                    new_lam[n] - state.lam_tilde[n]
                )
                state.lam_bar[n] = state.lam_bar[n] + omega * (
                    new_bar[n] - state.lam_bar[n]
                )
        histories.append(history)
        reference = state.reference
        if not converged:
            raise NonConvergenceError(
                f"coupling step {step} stalled at residual {history[-1][1]:.3e} "
                f"after {opts.max_iters} iterations",
                history=histories,
            )
        for n in order:
            if by_name[n].cohesive is not None:
                by_name[n].cohesive.commit(u_locals[n])
        reactions.append(gm.operator.reactions(u_c, rhs_used))
        energies.append(coupled_energy(problem, u_c, u_f, u_locals))
        lam_tilde = state.lam_tilde

    return CouplingResult(
        u_c, u_f, dict(u_locals), dict(lam_tilde), histories, reactions, energies
    )


def coupled_energy(problem: CoupledProblem, u_c, u_f, u_locals):
    """Strain energy of the coupled model: global part restricted to the
    uncovered domain plus the local bulk energies."""
    gm = problem.global_model
    e = strain_energy(gm.k_c, u_c)
    for loc in problem.locals:
        e -= strain_energy(loc.covered.k_bar, u_f)
        e += loc.energy(u_locals[loc.name])
    return e


def solve_monolithic(problem: CoupledProblem, load_factor=1.0):
    """Direct solve of the block saddle-point coupling system (linear locals).

    Serves as the oracle for the iterative path.  Coarse DOF whose basis
    support lies entirely inside a covered region drop out of the coupled
    problem and are pinned to zero.  Returns (u_c, u_locals, lam_tilde).
    """
    gm = problem.global_model
    for loc in problem.locals:
        if not loc.is_linear:
            raise ConfigError("monolithic solve supports linear local models only")
    d2 = gm.d2
    k11 = gm.k_c.copy()
    f11 = load_factor * gm.f_c.copy()
    for loc in problem.locals:
        k11 = k11 - d2 @ loc.covered.k_bar @ d2.T
        f11 = f11 - load_factor * (d2 @ loc.covered.f_bar)
    k11 = 0.5 * (k11 + k11.T).tocsr()

    ng = gm.num_coarse_dofs
    offsets = {}
    size = ng
    for loc in problem.locals:
        offsets[loc.name] = size
        size += loc.mesh.num_dofs + loc.ops.num_multiplier_dofs

    entries = [(sps.coo_matrix(k11), 0, 0)]
    rhs = np.zeros(size)
    rhs[:ng] = f11
    fixed = {
        int(dof): load_factor * float(val)
        for dof, val in zip(gm.operator.fixed_idx, gm.operator.fixed_vals)
    }
    diag = np.abs(k11.diagonal())
    for dof in np.nonzero(diag <= 1e-12 * max(float(diag.max()), 1.0))[0]:
        fixed.setdefault(int(dof), 0.0)

    for loc in problem.locals:
        o = offsets[loc.name]
        n2 = loc.mesh.num_dofs
        c_1c = sps.csr_matrix(loc.ops.c_1f @ d2.T)
        entries.append((sps.coo_matrix(loc.k2), o, o))
        entries.append((sps.coo_matrix(-loc.ops.c_2.T), o, o + n2))
        entries.append((sps.coo_matrix(c_1c.T), 0, o + n2))
        entries.append((sps.coo_matrix(c_1c), o + n2, 0))
        entries.append((sps.coo_matrix(-loc.ops.c_2), o + n2, o))
        rhs[o : o + n2] = load_factor * loc.f2
        own_idx, own_vals = loc.fixed_dofs()
        for dof, val in zip(own_idx, own_vals):
            fixed[o + int(dof)] = load_factor * float(val)

    rows = np.concatenate([e.row + r0 for e, r0, _ in entries])
    cols = np.concatenate([e.col + c0 for e, _, c0 in entries])
    data = np.concatenate([e.data for e, _, _ in entries])
    big = sps.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsr()

    fixed_idx = np.array(sorted(fixed), dtype=np.int64)
    fixed_vals = np.array([fixed[i] for i in fixed_idx])
    mask = np.ones(size, dtype=bool)
    mask[fixed_idx] = False
    free = np.nonzero(mask)[0]
    sol = np.zeros(size)
    sol[fixed_idx] = fixed_vals
    rhs_free = rhs[free] - big[free][:, fixed_idx] @ fixed_vals
    sol[free] = spla.splu(big[free][:, free].tocsc()).solve(rhs_free)

    u_c = sol[:ng]
    u_locals, lam_tilde = {}, {}
    for loc in problem.locals:
        o = offsets[loc.name]
        n2 = loc.mesh.num_dofs
        m = loc.ops.num_multiplier_dofs
        u_locals[loc.name] = sol[o : o + n2]
        lam_tilde[loc.name] = loc.ops.c_t @ sol[o + n2 : o + n2 + m]
    return u_c, u_locals, lam_tilde

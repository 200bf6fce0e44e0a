"""Bilinear traction-separation cohesive interfaces on matched node pairs.

Mode-I (normal) opening drives the bilinear law; the tangential direction
stays elastic at the initial stiffness until the pair is broken.  Negative
openings are penalized with the initial stiffness (no interpenetration
damage).  Integration is node-pair based with tributary lengths, which is
equivalent to continuum interface elements on matched meshes.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .errors import MeshError

UNDAMAGED, DAMAGED, BROKEN = 0, 1, 2


@dataclass(frozen=True)
class CohesiveLaw:
    """sigma_c (MPa), g_c (mm MPa) and the penalty coefficient p in (0, 1).

    The triangle under the curve carries exactly g_c: delta_c = 2 g_c /
    sigma_c, delta_0 = p delta_c, k_0 = sigma_c / delta_0.
    """

    sigma_c: float
    g_c: float
    penalty: float

    def __post_init__(self):
        if self.sigma_c <= 0 or self.g_c <= 0:
            raise ValueError("sigma_c and g_c must be positive")
        if not 0.0 < self.penalty < 1.0:
            raise ValueError("penalty coefficient must lie in (0, 1)")

    @property
    def delta_c(self):
        return 2.0 * self.g_c / self.sigma_c

    @property
    def delta_0(self):
        return self.penalty * self.delta_c

    @property
    def k_0(self):
        return self.sigma_c / self.delta_0

    def envelope(self, delta):
        """Loading-branch traction at opening delta >= 0."""
        delta = np.asarray(delta, dtype=np.float64)
        t = np.where(
            delta <= self.delta_0,
            self.k_0 * delta,
            self.sigma_c * (self.delta_c - delta) / (self.delta_c - self.delta_0),
        )
        return np.where(delta >= self.delta_c, 0.0, t)

    def dissipated(self, delta_max):
        """Energy per unit length irreversibly lost at history delta_max."""
        delta_max = np.minimum(np.asarray(delta_max, dtype=np.float64), self.delta_c)
        area = np.where(
            delta_max <= self.delta_0,
            0.5 * self.k_0 * delta_max**2,
            0.5 * self.sigma_c * self.delta_0
            + 0.5
            * (delta_max - self.delta_0)
            * (self.sigma_c + self.envelope(delta_max)),
        )
        return area - 0.5 * self.envelope(delta_max) * delta_max


def traction(law: CohesiveLaw, delta, delta_max):
    """Normal traction and tangent at opening `delta` given the committed
    history maximum: envelope on loading, secant to the origin on unloading,
    k_0 penalty in compression."""
    delta = np.asarray(delta, dtype=np.float64)
    delta_max = np.broadcast_to(np.asarray(delta_max, dtype=np.float64), delta.shape)
    t = np.empty_like(delta)
    k = np.empty_like(delta)

    comp = delta < 0.0
    t[comp] = law.k_0 * delta[comp]
    k[comp] = law.k_0

    loading = (~comp) & (delta >= delta_max)
    d = delta[loading]
    t[loading] = law.envelope(d)
    kl = np.where(d <= law.delta_0, law.k_0, -law.sigma_c / (law.delta_c - law.delta_0))
    k[loading] = np.where(d >= law.delta_c, 0.0, kl)

    unload = (~comp) & (delta < delta_max)
    dm = delta_max[unload]
    sec = np.where(dm > 0.0, law.envelope(dm) / np.maximum(dm, 1e-300), law.k_0)
    t[unload] = sec * delta[unload]
    k[unload] = sec
    return t, k


def classify(law: CohesiveLaw, delta_max):
    """Status per integration point: 0 undamaged, 1 damaged, 2 broken."""
    delta_max = np.asarray(delta_max, dtype=np.float64)
    out = np.zeros(delta_max.shape, dtype=np.int64)
    out[delta_max > law.delta_0] = DAMAGED
    out[delta_max >= law.delta_c] = BROKEN
    return out


@dataclass
class CohesiveZone:
    """Matched node pairs along an interface chain.

    pairs[k] = (node on side a, node on side b); the opening is
    u_b - u_a projected on the outward normal of side a's chain.
    """

    pairs: np.ndarray
    normals: np.ndarray
    tributary: np.ndarray
    law: CohesiveLaw
    elastic_only: bool = False
    delta_max: np.ndarray = None  # committed history, one value per pair
    segments: np.ndarray = None  # (nseg, 2) pair-index chain for output

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64)
        self.normals = np.asarray(self.normals, dtype=np.float64)
        self.tributary = np.asarray(self.tributary, dtype=np.float64)
        if self.delta_max is None:
            self.delta_max = np.zeros(self.pairs.shape[0])

    @property
    def num_pairs(self):
        return self.pairs.shape[0]

    def openings(self, u):
        """Normal and tangential opening per pair for a displacement vector."""
        a, b = self.pairs[:, 0], self.pairs[:, 1]
        du = np.column_stack([u[2 * b] - u[2 * a], u[2 * b + 1] - u[2 * a + 1]])
        tau = np.column_stack([-self.normals[:, 1], self.normals[:, 0]])
        return np.einsum("ki,ki->k", du, self.normals), np.einsum("ki,ki->k", du, tau)

    def commit(self, u):
        """Irreversibly update the history maxima from a converged state."""
        dn, _ = self.openings(u)
        self.delta_max = np.maximum(self.delta_max, dn)

    def statuses(self):
        return classify(self.law, self.delta_max)


def build_cohesive_zone(
    mesh, side_a, side_b, law: CohesiveLaw, closed=True, thickness=1.0
) -> CohesiveZone:
    """Pair two equally long, ordered node chains into a cohesive zone.

    side_a must wind counterclockwise around the enclosed (inclusion) side so
    the rotated tangents point outward.
    """
    side_a = np.asarray(side_a, dtype=np.int64)
    side_b = np.asarray(side_b, dtype=np.int64)
    if side_a.size != side_b.size:
        raise MeshError("cohesive sides must pair equally many nodes")
    xa = mesh.nodes[side_a]
    xb = mesh.nodes[side_b]
    gap = np.linalg.norm(xa - xb, axis=1)
    if gap.max() > 1e-8 * max(mesh.bbox_diagonal(), 1.0):
        bad = int(np.argmax(gap))
        raise MeshError(
            f"cohesive pair {bad} (nodes {int(side_a[bad])}, {int(side_b[bad])}) "
            f"is not coincident (gap {gap.max():g})"
        )
    n = side_a.size
    if closed:
        nxt = np.roll(np.arange(n), -1)
        prv = np.roll(np.arange(n), 1)
    else:
        nxt = np.minimum(np.arange(n) + 1, n - 1)
        prv = np.maximum(np.arange(n) - 1, 0)
    tang = xa[nxt] - xa[prv]
    tang /= np.linalg.norm(tang, axis=1)[:, None]
    normals = np.column_stack([tang[:, 1], -tang[:, 0]])
    seg_len = np.linalg.norm(xa[nxt] - xa, axis=1)
    tributary = 0.5 * seg_len
    if closed:
        tributary = tributary + 0.5 * np.linalg.norm(xa - xa[prv], axis=1)
    else:
        # open chain: seg_len[-1] is zero, each interior node gets both halves
        tributary[1:] += 0.5 * seg_len[:-1]
    segments = np.column_stack([np.arange(n), nxt])
    if not closed:
        segments = segments[:-1]
    return CohesiveZone(
        np.column_stack([side_a, side_b]),
        normals,
        tributary * thickness,
        law,
        segments=segments,
    )


def assemble_cohesive(zone: CohesiveZone, u, num_dofs):
    """Internal force vector and consistent tangent of the cohesive pairs."""
    dn, dt = zone.openings(u)
    if zone.elastic_only:
        tn = zone.law.k_0 * dn
        kn = np.full(zone.num_pairs, zone.law.k_0)
        broken = np.zeros(zone.num_pairs, dtype=bool)
    else:
        tn, kn = traction(zone.law, dn, zone.delta_max)
        # tangential release keyed to the committed history only: a pair
        # breaking mid-step sheds its shear at the step commit, which keeps
        # the in-step force field continuous for the Newton solve
        broken = zone.delta_max >= zone.law.delta_c
    kt = np.where(broken, 0.0, zone.law.k_0)
    tt = kt * dt

    n = zone.normals
    tau = np.column_stack([-n[:, 1], n[:, 0]])
    w = zone.tributary
    force = (tn * w)[:, None] * n + (tt * w)[:, None] * tau

    f = np.zeros(num_dofs)
    a, b = zone.pairs[:, 0], zone.pairs[:, 1]
    np.add.at(f, 2 * b, force[:, 0])
    np.add.at(f, 2 * b + 1, force[:, 1])
    np.add.at(f, 2 * a, -force[:, 0])
    np.add.at(f, 2 * a + 1, -force[:, 1])

    # per-pair 2x2 material block M = w (kn n n^T + kt tau tau^T)
    m = (kn * w)[:, None, None] * np.einsum("ki,kj->kij", n, n) + (
        kt * w
    )[:, None, None] * np.einsum("ki,kj->kij", tau, tau)
    dofs = np.stack([2 * a, 2 * a + 1, 2 * b, 2 * b + 1], axis=1)
    sign = np.array([[1.0, -1.0], [-1.0, 1.0]])
    blocks = np.einsum("st,kij->ksitj", sign, m).reshape(zone.num_pairs, 4, 4)
    rows = np.repeat(dofs, 4, axis=1).ravel()
    cols = np.tile(dofs, (1, 4)).ravel()
    k = sps.coo_matrix(
        (blocks.ravel(), (rows, cols)), shape=(num_dofs, num_dofs)
    ).tocsr()
    return f, k

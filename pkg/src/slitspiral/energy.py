"""Scallop-uniformity and iso-curve smoothness energies of a scalar field.

``E = E_w + alpha * (E_n + E_g)`` where, per face with gradient ``g`` and
normal curvature ``K_s`` along ``g``,

    E_w = sum_f A_f (q_f + 1/q_f),   q_f = (K_s + K_c) / (8 |g|^2),

``E_n`` integrates the squared normal curvature of the iso-curve tangent over
faces, and ``E_g`` integrates the squared divergence of the normalized
gradient (the geodesic curvature of the iso-curves) over dual cells.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse

from .errors import InfeasibleError
from .mesh import curvature_tensor

CURVATURE_FLOOR = 1e-6
GRAD_FLOOR_REL = 1e-8
REFERENCE_ALPHA = 10.0


@dataclass(frozen=True)
class CutterSpec:
    """Ball-end mill. Only the radius enters the model; the rest is metadata."""

    tool_radius: float = 10.0
    flutes: int = 2
    overhang: float = 79.2

    def __post_init__(self):
        if not self.tool_radius > 0:
            raise ValueError("tool_radius must be positive")

    @property
    def curvature(self):
        """Cutter curvature ``K_c`` in 1/mm."""
        return 1.0 / self.tool_radius


@dataclass
class EnergyReport:
    E_w: float
    E_n: float
    E_g: float
    E_k: float
    E: float
    avg: float
    alpha: float
    per_face: dict = field(default=None, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("per_face")
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


class EnergyModel:
    """Precomputed surface data for repeated energy evaluations.

    Parameters
    ----------
    mesh : TriMesh
    cutter : CutterSpec
    alpha : float
        Smoothness weight.
    grad_floor : float, optional
        Fixed gradient floor. By default it is derived from each evaluated
        field as ``1e-8 * (T range) / (bbox diagonal)``; pass a value to
        freeze it (the optimizer does, so local and global energies agree).
    printed_normal : bool
        Use the unsquared along-gradient normal-curvature term instead of the
        squared iso-tangent form.
    """

    def __init__(self, mesh, cutter, alpha=REFERENCE_ALPHA, *, frame=None, grad_floor=None,
                 printed_normal=False):
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.mesh = mesh
        self.cutter = cutter
        self.alpha = float(alpha)
        self.frame = frame if frame is not None else curvature_tensor(mesh)
        self.C3 = self.frame.ambient()
        self.grad_floor = grad_floor
        self.printed_normal = printed_normal
        self.G = mesh.hat_gradients
        self.W = mesh.divergence_weights
        self.A = mesh.face_areas
        self.dual = mesh.dual_areas
        self.normals = mesh.face_normals

    # ------------------------------------------------------------------
    def floor_for(self, T):
        if self.grad_floor is not None:
            return self.grad_floor
        rng = float(np.ptp(T))
        return GRAD_FLOOR_REL * rng / self.mesh.bbox_diagonal

    def gradients(self, T):
        return np.einsum("fk,fkd->fd", T[self.mesh.faces], self.G)

    def _face_parts(self, g, faces, floor):
        """Return ``(E_w density*A, E_n density*A, unit gradient, q)`` for faces."""
        gn = np.linalg.norm(g, axis=-1)
        ok = gn > 0
        u = g / np.where(ok, gn, 1.0)[..., None]
        C = self.C3[faces]
        ks = np.einsum("...i,...ij,...j->...", u, C, u)
        ks = np.where(ok, ks, 0.0)
        k = np.maximum(ks + self.cutter.curvature, CURVATURE_FLOOR)
        g2 = np.maximum(gn, floor) ** 2
        q = k / (8.0 * g2)
        A = self.A[faces]
        ew = A * (q + 1.0 / q)
        if self.printed_normal:
            en = A * ks
        else:
            t = np.cross(self.normals[faces], u)
            kn = np.einsum("...i,...ij,...j->...", t, C, t)
            en = A * kn ** 2
        return ew, np.where(ok, en, 0.0), u * ok[..., None], q

    def _div_sums(self, X):
        """Integrated divergence ``S_j`` (so that div_j = S_j / C_j)."""
        contrib = np.einsum("fkd,fd->fk", self.W, X)
        return np.bincount(self.mesh.faces.reshape(-1), contrib.reshape(-1), self.mesh.n_vertices)

    # ------------------------------------------------------------------
    def evaluate(self, T, per_face=False):
        T = np.asarray(T, dtype=float)
        g = self.gradients(T)
        gn = np.linalg.norm(g, axis=1)
        if not np.any(gn > 0):
            raise InfeasibleError("field is constant")
        floor = self.floor_for(T)
        faces = np.arange(self.mesh.n_faces)
        ew, en, X, q = self._face_parts(g, faces, floor)
        S = self._div_sums(X)
        eg_v = S ** 2 / self.dual
        E_w, E_n, E_g = float(ew.sum()), float(en.sum()), float(eg_v.sum())
        E_k = E_n + E_g
        rep = EnergyReport(
            E_w=E_w, E_n=E_n, E_g=E_g, E_k=E_k, E=E_w + self.alpha * E_k,
            avg=float(np.sum(self.A * q) / self.A.sum()), alpha=self.alpha,
        )
        if per_face:
            rep.per_face = {"E_w": ew, "E_n": en, "q": q, "grad_norm": gn, "div": S / self.dual}
        return rep

    def total(self, T):
        return self.evaluate(T).E

    # ------------------------------------------------------------------
    def local_support(self, v):
        """Faces and vertex terms of the two-ring submesh that see ``T[v]``."""
        mesh = self.mesh
        ring = np.r_[v, mesh.neighbors(v)]
        faces = np.unique(np.concatenate([mesh.faces_of(j) for j in ring]))
        return faces, ring

    def local_energy(self, T, v, floor=None):
        """Energy of the two-ring submesh around ``v``, evaluated on that submesh only."""
        T = np.asarray(T, dtype=float)
        floor = self.floor_for(T) if floor is None else floor
        faces, ring = self.local_support(v)
        F = self.mesh.faces[faces]
        g = np.einsum("fk,fkd->fd", T[F], self.G[faces])
        ew, en, X, _ = self._face_parts(g, faces, floor)
        contrib = np.einsum("fkd,fd->fk", self.W[faces], X)
        S = np.zeros(len(ring))
        for i, j in enumerate(ring):
            S[i] = contrib[F == j].sum()
        eg = np.sum(S ** 2 / self.dual[ring])
        return float(ew.sum() + self.alpha * (en.sum() + eg))

    def local_changes(self, T, delta, floor=None):
        """Exact local energy change when each vertex alone moves by ``delta[v]``.

        Vectorized over all vertices: entry ``v`` equals
        ``local_energy(T + delta[v] e_v, v) - local_energy(T, v)``.
        """
        T = np.asarray(T, dtype=float)
        delta = np.broadcast_to(np.asarray(delta, dtype=float), T.shape)
        floor = self.floor_for(T) if floor is None else floor
        mesh = self.mesh
        F = mesh.faces
        m = mesh.n_faces
        g = self.gradients(T)
        faces = np.arange(m)
        ew0, en0, X0, _ = self._face_parts(g, faces, floor)
        a0 = ew0 + self.alpha * en0
        S = self._div_sums(X0)

        d = delta[F]  # (m, 3)
        g1 = g[:, None, :] + d[..., None] * self.G  # (m, 3, 3): corner k perturbed
        fidx = np.broadcast_to(faces[:, None], (m, 3))
        ew1, en1, X1, _ = self._face_parts(g1, fidx, floor)
        dface = ew1 + self.alpha * en1 - a0[:, None]
        out = np.bincount(F.reshape(-1), dface.reshape(-1), mesh.n_vertices)

        if self.alpha:
            dX = X1 - X0[:, None, :]  # (m, k, 3)
            # t[f, k, l] = W[f, l] . dX[f, k]
            t = np.einsum("fld,fkd->fkl", self.W, dX)
            rows = np.repeat(F, 3, axis=1).reshape(-1)
            cols = np.tile(F, (1, 3)).reshape(-1)
            D = sparse.coo_matrix((t.reshape(-1), (rows, cols)), shape=(mesh.n_vertices,) * 2).tocsr()
            D.sum_duplicates()
            inv_c = 1.0 / self.dual
            deg = D @ (2 * S * inv_c) + D.multiply(D) @ inv_c
            out = out + self.alpha * np.asarray(deg).ravel()
        return out

    def vertex_derivatives(self, T, h, floor=None):
        """Central differences ``dE/dT_v`` of the local energy with per-vertex step ``h``."""
        h = np.broadcast_to(np.asarray(h, dtype=float), np.shape(T))
        floor = self.floor_for(T) if floor is None else floor
        plus = self.local_changes(T, h, floor)
        minus = self.local_changes(T, -h, floor)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(h > 0, (plus - minus) / (2 * h), 0.0)


def evaluate_energy(mesh, field, cutter, alpha=REFERENCE_ALPHA, **kw):
    """Energy report for a per-vertex field on ``mesh``."""
    return EnergyModel(mesh, cutter, alpha, **kw).evaluate(field)


def local_energy(mesh, field, vertex, cutter, alpha=REFERENCE_ALPHA, model=None):
    model = model or EnergyModel(mesh, cutter, alpha)
    return model.local_energy(field, vertex)


class EnergyState:
    """A field with cached per-face and per-vertex terms for cheap sparse updates.

    ``propose(idx, dT)`` returns the exact energy change of adding ``dT`` to
    ``T[idx]`` together with an opaque update; ``commit`` applies it.
    """

    def __init__(self, model, T, floor=None):
        self.model = model
        self.T = np.array(T, dtype=float)
        self.floor = model.floor_for(self.T) if floor is None else floor
        m = model.mesh
        self.g = model.gradients(self.T)
        ew, en, self.X, _ = model._face_parts(self.g, np.arange(m.n_faces), self.floor)
        self.a = ew + model.alpha * en
        self.S = model._div_sums(self.X)
        self.E = float(self.a.sum() + model.alpha * np.sum(self.S ** 2 / model.dual))

    def support(self, idx):
        """Faces touched by ``idx`` and their vertices; reusable across proposals."""
        mesh = self.model.mesh
        faces = np.unique(mesh.vertex_faces[np.asarray(idx)].indices)
        F = mesh.faces[faces]
        verts, inv = np.unique(F.reshape(-1), return_inverse=True)
        return faces, F, verts, inv

    def propose(self, idx, dT, support=None):
        model = self.model
        idx = np.asarray(idx)
        faces, F, verts, inv = support if support is not None else self.support(idx)
        full = np.zeros(model.mesh.n_vertices)
        full[idx] = dT
        g = self.g[faces] + np.einsum("fk,fkd->fd", full[F], model.G[faces])
        ew, en, X, _ = model._face_parts(g, faces, self.floor)
        a = ew + model.alpha * en
        dE = float(np.sum(a - self.a[faces]))
        contrib = np.einsum("fkd,fd->fk", model.W[faces], X - self.X[faces])
        dS = np.bincount(inv, contrib.reshape(-1), len(verts))
        if model.alpha:
            S0 = self.S[verts]
            dE += model.alpha * float(np.sum((2 * S0 * dS + dS ** 2) / model.dual[verts]))
        return dE, (idx, dT, faces, g, X, a, verts, dS)

    def commit(self, dE, update):
        idx, dT, faces, g, X, a, verts, dS = update
        self.T[idx] += dT
        self.g[faces] = g
        self.X[faces] = X
        self.a[faces] = a
        self.S[verts] += dS
        self.E += dE

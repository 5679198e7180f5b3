"""Batched sphere-overlap cost shared by the placement problem models.

Evaluates the weighted penetration cost between a set of movable bodies
(each carrying its own sphere set) and between those bodies and a fixed
set of static spheres, for a whole batch of candidate poses at once.
Movable bodies translate freely and optionally rotate about world z.
"""

from __future__ import annotations

import numpy as np

from ..geometry import LINEAR, QUADRATIC, _check_mode


class SphereInteractions:
    """Precomputed pairwise structure for batched penetration costs.

    Pose batches are (P, n, 3) positions plus an optional (P, n) yaw array;
    yaw ``None`` means every body stays at yaw 0 (its authored orientation).
    """

    def __init__(
        self,
        local_centers: list[np.ndarray],
        local_radii: list[np.ndarray],
        static_centers: np.ndarray,
        static_radii: np.ndarray,
        *,
        body_body_weight: float,
        body_static_weight: float,
    ) -> None:
        self.n_bodies = len(local_centers)
        if len(local_radii) != self.n_bodies:
            raise ValueError("local_centers and local_radii length mismatch")
        self._locals = np.concatenate([np.asarray(c, dtype=float) for c in local_centers])
        self._mov_radii = np.concatenate([np.asarray(r, dtype=float) for r in local_radii])
        self._sphere_body = np.concatenate(
            [np.full(len(c), b, dtype=int) for b, c in enumerate(local_centers)]
        )
        self._static_centers = np.asarray(static_centers, dtype=float).reshape(-1, 3)
        self._static_radii = np.asarray(static_radii, dtype=float).reshape(-1)

        counts = [len(c) for c in local_centers]
        offsets = np.concatenate([[0], np.cumsum(counts)])
        ent_a, ent_b, ent_w, ent_rsum = [], [], [], []
        # Body-body entries, bodies in index order, spheres in C order.
        for i in range(self.n_bodies):
            for j in range(i + 1, self.n_bodies):
                sa = np.arange(offsets[i], offsets[i + 1])
                sb = np.arange(offsets[j], offsets[j + 1])
                aa, bb = np.meshgrid(sa, sb, indexing="ij")
                ent_a.append(aa.ravel())
                ent_b.append(bb.ravel())
                ent_w.append(np.full(aa.size, body_body_weight))
                ent_rsum.append(
                    (self._mov_radii[aa] + self._mov_radii[bb]).ravel()
                )
        n_mov = len(self._locals)
        # Body-static entries; static spheres live past the movable table.
        if len(self._static_centers):
            sa = np.arange(n_mov)
            sw = np.arange(len(self._static_centers))
            aa, ww = np.meshgrid(sa, sw, indexing="ij")
            ent_a.append(aa.ravel())
            ent_b.append((n_mov + ww).ravel())
            ent_w.append(np.full(aa.size, body_static_weight))
            ent_rsum.append(
                (self._mov_radii[aa] + self._static_radii[ww]).ravel()
            )

        if ent_a:
            self._ent_a = np.concatenate(ent_a)
            self._ent_b = np.concatenate(ent_b)
            self._ent_w = np.concatenate(ent_w)
            self._ent_rsum = np.concatenate(ent_rsum)
        else:
            self._ent_a = np.zeros(0, dtype=int)
            self._ent_b = np.zeros(0, dtype=int)
            self._ent_w = np.zeros(0)
            self._ent_rsum = np.zeros(0)

        # Entry lists per body for gradient scatter. B-side only covers
        # body-body entries; static spheres take no gradient.
        ent_b_body = np.where(
            self._ent_b < n_mov, self._sphere_body[np.minimum(self._ent_b, n_mov - 1)], -1
        )
        if n_mov == 0:
            ent_b_body = np.full(len(self._ent_b), -1)
        ent_a_body = self._sphere_body[self._ent_a] if n_mov else np.zeros(0, dtype=int)
        self._a_entries = [np.flatnonzero(ent_a_body == b) for b in range(self.n_bodies)]
        self._b_entries = [np.flatnonzero(ent_b_body == b) for b in range(self.n_bodies)]
        self._n_mov = n_mov

    @property
    def n_entries(self) -> int:
        return len(self._ent_a)

    def _world_table(self, pos: np.ndarray, yaw: np.ndarray | None) -> np.ndarray:
        """(P, S_mov + S_static, 3) world sphere centres for the batch."""
        p = pos.shape[0]
        if self._n_mov:
            if yaw is None:
                mov = pos[:, self._sphere_body, :] + self._locals[None, :, :]
            else:
                mov = pos[:, self._sphere_body, :] + self._rotated_locals(yaw)
        else:
            mov = np.zeros((p, 0, 3))
        if len(self._static_centers):
            stat = np.broadcast_to(self._static_centers, (p, len(self._static_centers), 3))
            return np.concatenate([mov, stat], axis=1)
        return mov

    def _rotated_locals(self, yaw: np.ndarray) -> np.ndarray:
        """(P, S_mov, 3) local centres rotated by each body's yaw."""
        cs = np.cos(yaw)[:, self._sphere_body]
        sn = np.sin(yaw)[:, self._sphere_body]
        lx, ly, lz = self._locals[:, 0], self._locals[:, 1], self._locals[:, 2]
        out = np.empty((yaw.shape[0], self._n_mov, 3))
        out[..., 0] = cs * lx - sn * ly
        out[..., 1] = sn * lx + cs * ly
        out[..., 2] = lz
        return out

    def _rotated_locals_dyaw(self, yaw: np.ndarray) -> np.ndarray:
        """Derivative of the rotated local centres w.r.t. each body's yaw."""
        cs = np.cos(yaw)[:, self._sphere_body]
        sn = np.sin(yaw)[:, self._sphere_body]
        lx, ly = self._locals[:, 0], self._locals[:, 1]
        out = np.zeros((yaw.shape[0], self._n_mov, 3))
        out[..., 0] = -sn * lx - cs * ly
        out[..., 1] = cs * lx - sn * ly
        return out

    def evaluate(self, pos: np.ndarray, yaw: np.ndarray | None, mode: str) -> np.ndarray:
        """Total weighted penetration cost per batch row, shape (P,)."""
        _check_mode(mode)
        if self.n_entries == 0:
            return np.zeros(pos.shape[0])
        world = self._world_table(pos, yaw)
        diff = world[:, self._ent_a, :] - world[:, self._ent_b, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))
        pen = np.maximum(0.0, self._ent_rsum - d)
        if mode == QUADRATIC:
            pen = pen * pen
        return pen @ self._ent_w

    def gradient(
        self, pos: np.ndarray, yaw: np.ndarray | None, mode: str
    ) -> tuple[np.ndarray, np.ndarray | None]:
        """Cost gradient w.r.t. positions and (if given) yaws.

        Returns (grad_pos (P, n, 3), grad_yaw (P, n) or None). Uses the
        subgradient 0 at exact contact and for coincident centres.
        """
        _check_mode(mode)
        p = pos.shape[0]
        grad_pos = np.zeros((p, self.n_bodies, 3))
        grad_yaw = None if yaw is None else np.zeros((p, self.n_bodies))
        if self.n_entries == 0:
            return grad_pos, grad_yaw
        world = self._world_table(pos, yaw)
        diff = world[:, self._ent_a, :] - world[:, self._ent_b, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))
        pen = np.maximum(0.0, self._ent_rsum - d)
        active = (pen > 0.0) & (d > 0.0)
        factor = self._ent_w if mode == LINEAR else 2.0 * self._ent_w * pen
        scale = np.where(active, -factor / np.where(d > 0.0, d, 1.0), 0.0)
        g_a = scale[..., None] * diff  # dcost / d(centre of sphere ent_a)
        dcdyaw = None if yaw is None else self._rotated_locals_dyaw(yaw)
        for b in range(self.n_bodies):
            ka, kb = self._a_entries[b], self._b_entries[b]
            grad_pos[:, b, :] = g_a[:, ka, :].sum(axis=1) - g_a[:, kb, :].sum(axis=1)
            if grad_yaw is not None:
                ga = np.sum(g_a[:, ka, :] * dcdyaw[:, self._ent_a[ka], :], axis=(1, 2))
                gb = np.sum(g_a[:, kb, :] * dcdyaw[:, self._ent_b[kb], :], axis=(1, 2))
                grad_yaw[:, b] = ga - gb
        return grad_pos, grad_yaw

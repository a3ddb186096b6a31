# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled substep kernel for the mass-spring simulator.

Mirrors the semantics of ``_ref.run_substeps``; this is the hot inner loop.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite

BACKEND = "cython"


def run_substeps(
    double[:, ::1] pos,
    double[:, ::1] vel,
    double[::1] mass,
    long[::1] edges_i,
    long[::1] edges_j,
    double[::1] rest,
    double[::1] stiffness,
    long[::1] anchor_idx,
    double[:, ::1] anchor_to,
    int nsub,
    double h,
    double damping,
    double gravity,
    double table_y,
    double friction,
    double pole_x,
    double pole_y,
    double pole_r,
):
    cdef int P = pos.shape[0]
    cdef int S = edges_i.shape[0]
    cdef int A = anchor_idx.shape[0]
    cdef int s, p, e, a, k
    cdef double dx, dy, length, f, fx, fy, fn, fstop, ft, lim
    cdef double alpha, tx, ty, dist, vn, nx, ny
    cdef cnp.ndarray[double, ndim=2] force_arr = np.empty((P, 2), dtype=np.float64)
    cdef double[:, ::1] force = force_arr
    cdef cnp.ndarray[double, ndim=2] afrom_arr = np.empty((A, 2), dtype=np.float64)
    cdef double[:, ::1] anchor_from = afrom_arr
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] free_arr = np.ones(P, dtype=np.uint8)
    cdef cnp.uint8_t[::1] free = free_arr

    for a in range(A):
        free[anchor_idx[a]] = 0
        anchor_from[a, 0] = pos[anchor_idx[a], 0]
        anchor_from[a, 1] = pos[anchor_idx[a], 1]

    for s in range(nsub):
        for p in range(P):
            force[p, 0] = -damping * mass[p] * vel[p, 0]
            force[p, 1] = -damping * mass[p] * vel[p, 1] - mass[p] * gravity

        for e in range(S):
            dx = pos[edges_j[e], 0] - pos[edges_i[e], 0]
            dy = pos[edges_j[e], 1] - pos[edges_i[e], 1]
            length = sqrt(dx * dx + dy * dy)
            if length > 0.0:
                f = stiffness[e] * (length - rest[e]) / length
                fx = f * dx
                fy = f * dy
                force[edges_i[e], 0] += fx
                force[edges_i[e], 1] += fy
                force[edges_j[e], 0] -= fx
                force[edges_j[e], 1] -= fy

        for p in range(P):
            if pos[p, 1] <= table_y + 1e-9:
                fn = -force[p, 1]
                if fn < 0.0:
                    fn = 0.0
                fstop = -mass[p] * vel[p, 0] / h - force[p, 0]
                lim = friction * fn
                ft = fstop
                if ft > lim:
                    ft = lim
                elif ft < -lim:
                    ft = -lim
                force[p, 0] += ft

            if free[p]:
                vel[p, 0] += h * force[p, 0] / mass[p]
                vel[p, 1] += h * force[p, 1] / mass[p]
                pos[p, 0] += h * vel[p, 0]
                pos[p, 1] += h * vel[p, 1]
                if pos[p, 1] < table_y:
                    pos[p, 1] = table_y
                    if vel[p, 1] < 0.0:
                        vel[p, 1] = 0.0
                if pole_r > 0.0:
                    dx = pos[p, 0] - pole_x
                    dy = pos[p, 1] - pole_y
                    dist = sqrt(dx * dx + dy * dy)
                    if 0.0 < dist < pole_r:
                        nx = dx / dist
                        ny = dy / dist
                        pos[p, 0] = pole_x + pole_r * nx
                        pos[p, 1] = pole_y + pole_r * ny
                        vn = vel[p, 0] * nx + vel[p, 1] * ny
                        if vn < 0.0:
                            vel[p, 0] -= vn * nx
                            vel[p, 1] -= vn * ny

        alpha = (s + 1.0) / nsub
        for a in range(A):
            k = anchor_idx[a]
            tx = anchor_from[a, 0] + alpha * (anchor_to[a, 0] - anchor_from[a, 0])
            ty = anchor_from[a, 1] + alpha * (anchor_to[a, 1] - anchor_from[a, 1])
            vel[k, 0] = (tx - pos[k, 0]) / h
            vel[k, 1] = (ty - pos[k, 1]) / h
            pos[k, 0] = tx
            pos[k, 1] = ty

    for p in range(P):
        if not (
            isfinite(pos[p, 0]) and isfinite(pos[p, 1])
            and isfinite(vel[p, 0]) and isfinite(vel[p, 1])
        ):
            return 1
    return 0

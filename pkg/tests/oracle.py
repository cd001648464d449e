"""Independent brute-force assembly oracle.

Everything here is deliberately written from scratch: quadrature comes from
tensor Gauss-Legendre rules collapsed onto the triangle/tet (Duffy maps),
basis functions are evaluated through their own barycentric solve, and the
global matrix is accumulated densely with plain Python loops.  The only
shared ingredient with the library is the geometry object (exact closest
points), which is verified independently in test_geometry.
"""

import numpy as np

TET_EDGE_PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def gl_unit(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_points(n=8):
    """Duffy-collapsed rule on the unit triangle; weights sum to 1/2."""
    u, wu = gl_unit(n)
    v, wv = gl_unit(n)
    pts, wts = [], []
    for i in range(n):
        for j in range(n):
            pts.append((u[i], v[j] * (1.0 - u[i])))
            wts.append(wu[i] * wv[j] * (1.0 - u[i]))
    return np.array(pts), np.array(wts)


def tet_points(n=6):
    """Duffy-collapsed rule on the unit tet; weights sum to 1/6."""
    u, wu = gl_unit(n)
    v, wv = gl_unit(n)
    w, ww = gl_unit(n)
    pts, wts = [], []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                x = u[i]
                y = v[j] * (1.0 - u[i])
                z = w[k] * (1.0 - u[i]) * (1.0 - v[j])
                pts.append((x, y, z))
                wts.append(wu[i] * wv[j] * ww[k] * (1.0 - u[i]) ** 2 * (1.0 - v[j]))
    return np.array(pts), np.array(wts)


def bary_and_grads(tet_verts, x):
    """Barycentric coords of x and their gradients, via one 4x4 solve."""
    mat = np.vstack([np.ones(4), np.asarray(tet_verts, dtype=float).T])
    inv = np.linalg.inv(mat)
    lam = inv @ np.concatenate([[1.0], x])
    grads = inv[:, 1:]
    return lam, grads


def shape_tet(tet_verts, order, x):
    """Values and physical gradients of the P1/P2 tet basis at x."""
    lam, glam = bary_and_grads(tet_verts, x)
    if order == 1:
        return lam.copy(), glam.copy()
    values = np.empty(10)
    grads = np.empty((10, 3))
    for i in range(4):
        values[i] = lam[i] * (2.0 * lam[i] - 1.0)
        grads[i] = (4.0 * lam[i] - 1.0) * glam[i]
    for k, (a, b) in enumerate(TET_EDGE_PAIRS):
        values[4 + k] = 4.0 * lam[a] * lam[b]
        grads[4 + k] = 4.0 * (lam[a] * glam[b] + lam[b] * glam[a])
    return values, grads


def interpolant_gradient(tet_verts, values, order, x):
    """Gradient of the nodal level-set interpolant (own formulas)."""
    _, grads = shape_tet(tet_verts, order, x)
    return values @ grads


def oracle_assemble(vspace, pspace, ds, active, surface, data, kind, tau, alpha):
    """Dense global matrix and rhs of the expanded stabilized system."""
    n_u = vspace.global_dofs
    n_p = pspace.global_dofs
    total = 3 * n_u + n_p + 1
    mat = np.zeros((total, total))
    rhs = np.zeros(total)
    f_fun, g_fun = data
    h = active.h
    k_g = ds.k_g

    tri_xi, tri_w = triangle_points()
    for cell in ds.cells:
        assert cell.order == 1, "oracle covers planar cells"
        v0, v1, v2 = cell.vertices
        area = 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0))
        tet_pos = int(np.flatnonzero(ds.active.active_tets == cell.parent_tet)[0])
        tet_verts = active.tet_vertices[tet_pos]
        vdofs = vspace.cell_dofs[tet_pos]
        pdofs = pspace.cell_dofs[tet_pos]
        for (xi, eta), wq in zip(tri_xi, tri_w):
            x = v0 + xi * (v1 - v0) + eta * (v2 - v0)
            weight = 2.0 * area * wq
            phi_u, _ = shape_tet(tet_verts, vspace.order, x)
            phi_p, grad_p = shape_tet(tet_verts, pspace.order, x)
            for c in range(3):
                off = c * n_u
                for i in range(len(vdofs)):
                    gi = off + vdofs[i]
                    for j in range(len(vdofs)):
                        mat[gi, off + vdofs[j]] += 0.5 * weight * phi_u[i] * phi_u[j]
                    for j in range(len(pdofs)):
                        mat[gi, 3 * n_u + pdofs[j]] += (
                            0.5 * weight * phi_u[i] * grad_p[j, c]
                        )
                        mat[3 * n_u + pdofs[j], gi] -= (
                            0.5 * weight * phi_u[i] * grad_p[j, c]
                        )
            for i in range(len(pdofs)):
                gi = 3 * n_u + pdofs[i]
                for j in range(len(pdofs)):
                    mat[gi, 3 * n_u + pdofs[j]] += (
                        0.5 * weight * grad_p[i] @ grad_p[j]
                    )
                mat[gi, total - 1] += weight * phi_p[i]
                mat[total - 1, gi] += weight * phi_p[i]
            # right-hand side with pull-back extension
            proj = surface.closest_point(x)
            f_val = float(np.atleast_1d(f_fun(proj[None]))[0])
            g_val = np.atleast_2d(g_fun(proj[None]))[0]
            for c in range(3):
                for i in range(len(vdofs)):
                    rhs[c * n_u + vdofs[i]] += 0.5 * weight * g_val[c] * phi_u[i]
            for i in range(len(pdofs)):
                rhs[3 * n_u + pdofs[i]] += weight * (
                    f_val * phi_p[i] + 0.5 * g_val @ grad_p[i]
                )

    tet_xi, tet_w = tet_points()
    scale = tau * h ** (alpha - 1.0)
    for tet_pos in range(len(active)):
        tet_verts = active.tet_vertices[tet_pos]
        vol = abs(np.linalg.det((tet_verts[1:] - tet_verts[0]).T)) / 6.0
        nodal = None
        if kind == "normal":
            if k_g == 1:
                nodes = tet_verts
            else:
                mids = np.array(
                    [0.5 * (tet_verts[a] + tet_verts[b]) for a, b in TET_EDGE_PAIRS]
                )
                nodes = np.vstack([tet_verts, mids])
            nodal = np.atleast_1d(surface.signed_distance(nodes))
        for (bx, by, bz), wq in zip(tet_xi, tet_w):
            x = (
                tet_verts[0]
                + bx * (tet_verts[1] - tet_verts[0])
                + by * (tet_verts[2] - tet_verts[0])
                + bz * (tet_verts[3] - tet_verts[0])
            )
            weight = 6.0 * vol * wq
            for space, offsets in ((vspace, (0, n_u, 2 * n_u)), (pspace, (3 * n_u,))):
                _, grads = shape_tet(tet_verts, space.order, x)
                if kind == "normal":
                    grad_phi = interpolant_gradient(nodes, nodal, k_g, x)
                    norm = np.linalg.norm(grad_phi)
                    normal = (
                        grad_phi / norm
                        if norm > 1e-10
                        else np.atleast_2d(surface.surface_normal(x[None]))[0]
                    )
                    comp = grads @ normal
                    local = scale * weight * np.outer(comp, comp)
                else:
                    local = scale * weight * (grads @ grads.T)
                dofs = space.cell_dofs[tet_pos]
                for off in offsets:
                    for i in range(len(dofs)):
                        for j in range(len(dofs)):
                            mat[off + dofs[i], off + dofs[j]] += local[i, j]
    return mat, rhs

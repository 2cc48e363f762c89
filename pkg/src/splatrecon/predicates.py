"""Exact-sign geometric predicates.

Each predicate evaluates a determinant in fast float arithmetic first and
compares against a conservative forward-error bound; only when the value is
too close to zero does it fall back to exact rational arithmetic (floats are
dyadic rationals, so Fraction evaluation is exact).
"""

from __future__ import annotations

from fractions import Fraction

GHOST = -1  # symbolic vertex id for hull (ghost) cells

# filter constants: eps-scaled coefficients, deliberately conservative
_ORIENT_BOUND = 1e-14
_INSPHERE_BOUND = 1e-13


def orient3d(a, b, c, d):
    """Sign of ((b-a) x (c-a)) . (d-a).

    +1 when d lies on the positive (right-hand normal) side of plane abc,
    -1 on the opposite side, 0 when exactly coplanar.
    """
    adx = a[0] - d[0]; ady = a[1] - d[1]; adz = a[2] - d[2]
    bdx = b[0] - d[0]; bdy = b[1] - d[1]; bdz = b[2] - d[2]
    cdx = c[0] - d[0]; cdy = c[1] - d[1]; cdz = c[2] - d[2]

    bdxcdy = bdx * cdy; cdxbdy = cdx * bdy
    cdxady = cdx * ady; adxcdy = adx * cdy
    adxbdy = adx * bdy; bdxady = bdx * ady

    # det(a-d, b-d, c-d) = -((b-a) x (c-a)) . (d-a), hence the flipped returns
    det = adz * (bdxcdy - cdxbdy) + bdz * (cdxady - adxcdy) + cdz * (adxbdy - bdxady)
    permanent = (
        (abs(bdxcdy) + abs(cdxbdy)) * abs(adz)
        + (abs(cdxady) + abs(adxcdy)) * abs(bdz)
        + (abs(adxbdy) + abs(bdxady)) * abs(cdz)
    )
    if abs(det) > _ORIENT_BOUND * permanent:
        return -1 if det > 0 else 1
    return _orient3d_exact(a, b, c, d)


def _orient3d_exact(a, b, c, d):
    ax, ay, az = Fraction(a[0]) - Fraction(d[0]), Fraction(a[1]) - Fraction(d[1]), Fraction(a[2]) - Fraction(d[2])
    bx, by, bz = Fraction(b[0]) - Fraction(d[0]), Fraction(b[1]) - Fraction(d[1]), Fraction(b[2]) - Fraction(d[2])
    cx, cy, cz = Fraction(c[0]) - Fraction(d[0]), Fraction(c[1]) - Fraction(d[1]), Fraction(c[2]) - Fraction(d[2])
    det = az * (bx * cy - cx * by) + bz * (cx * ay - ax * cy) + cz * (ax * by - bx * ay)
    if det > 0:
        return -1
    if det < 0:
        return 1
    return 0


def insphere_sign(a, b, c, d, e):
    """Sign of the 4x4 lifted determinant with rows (p - e, |p - e|^2).

    For a POSITIVELY oriented tetrahedron (a,b,c,d), i.e.
    orient3d(a,b,c,d) > 0, the value is negative exactly when e lies
    strictly inside the circumsphere.
    """
    aex = a[0] - e[0]; aey = a[1] - e[1]; aez = a[2] - e[2]
    bex = b[0] - e[0]; bey = b[1] - e[1]; bez = b[2] - e[2]
    cex = c[0] - e[0]; cey = c[1] - e[1]; cez = c[2] - e[2]
    dex = d[0] - e[0]; dey = d[1] - e[1]; dez = d[2] - e[2]

    ab = aex * bey - bex * aey
    bc = bex * cey - cex * bey
    cd = cex * dey - dex * cey
    da = dex * aey - aex * dey
    ac = aex * cey - cex * aey
    bd = bex * dey - dex * bey

    abc = aez * bc - bez * ac + cez * ab
    bcd = bez * cd - cez * bd + dez * bc
    cda = cez * da + dez * ac + aez * cd
    dab = dez * ab + aez * bd + bez * da

    alift = aex * aex + aey * aey + aez * aez
    blift = bex * bex + bey * bey + bez * bez
    clift = cex * cex + cey * cey + cez * cez
    dlift = dex * dex + dey * dey + dez * dez

    det = (dlift * abc - clift * dab) + (blift * cda - alift * bcd)

    aezplus = abs(aez); bezplus = abs(bez); cezplus = abs(cez); dezplus = abs(dez)
    abplus = abs(ab); bcplus = abs(bc); cdplus = abs(cd)
    daplus = abs(da); acplus = abs(ac); bdplus = abs(bd)
    permanent = (
        (cdplus * bezplus + bdplus * cezplus + bcplus * dezplus) * alift
        + (cdplus * aezplus + acplus * dezplus + daplus * cezplus) * blift
        + (bdplus * aezplus + abplus * dezplus + daplus * bezplus) * clift
        + (bcplus * aezplus + abplus * cezplus + acplus * bezplus) * dlift
    )
    if abs(det) > _INSPHERE_BOUND * permanent:
        return 1 if det > 0 else -1
    return _insphere_exact(a, b, c, d, e)


def _insphere_exact(a, b, c, d, e):
    ex, ey, ez = Fraction(e[0]), Fraction(e[1]), Fraction(e[2])
    rows = []
    for p in (a, b, c, d):
        px, py, pz = Fraction(p[0]) - ex, Fraction(p[1]) - ey, Fraction(p[2]) - ez
        rows.append((px, py, pz, px * px + py * py + pz * pz))
    det = _det4(rows)
    if det > 0:
        return 1
    if det < 0:
        return -1
    return 0


def _det3(m):
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def _det4(m):
    total = Fraction(0)
    sign = 1
    for col in range(4):
        minor = [[m[r][cc] for cc in range(4) if cc != col] for r in (1, 2, 3)]
        total += sign * m[0][col] * _det3(minor)
        sign = -sign
    return total


def incircle_coplanar(a, b, c, p):
    """Incircle sign for four exactly coplanar 3D points.

    Returns +1 when p is strictly inside the circumcircle of triangle abc
    (within their common plane), -1 outside, 0 on the circle. Exact.
    """
    # project onto the dominant axis plane of the triangle normal
    ax, ay, az = (Fraction(a[i]) for i in range(3))
    bx, by, bz = (Fraction(b[i]) for i in range(3))
    cx, cy, cz = (Fraction(c[i]) for i in range(3))
    ux, uy, uz = bx - ax, by - ay, bz - az
    vx, vy, vz = cx - ax, cy - ay, cz - az
    nx = uy * vz - uz * vy
    ny = uz * vx - ux * vz
    nz = ux * vy - uy * vx
    anx, any_, anz = abs(nx), abs(ny), abs(nz)
    if anx >= any_ and anx >= anz:
        axes, ncomp = (1, 2), nx
    elif any_ >= anz:
        axes, ncomp = (2, 0), ny
    else:
        axes, ncomp = (0, 1), nz
    if ncomp == 0:
        return 0  # degenerate triangle

    pts2 = []
    for q in (a, b, c, p):
        pts2.append((Fraction(q[axes[0]]), Fraction(q[axes[1]])))
    det = _incircle2d_exact(*pts2)
    # projection keeps orientation when the dropped normal component is > 0
    if ncomp < 0:
        det = -det
    if det > 0:
        return 1
    if det < 0:
        return -1
    return 0


def _incircle2d_exact(a, b, c, p):
    """2D incircle determinant: positive when p inside circle(abc) for ccw abc."""
    rows = []
    for q in (a, b, c):
        qx, qy = q[0] - p[0], q[1] - p[1]
        rows.append((qx, qy, qx * qx + qy * qy))
    return _det3(rows)

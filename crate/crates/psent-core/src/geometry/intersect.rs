//! Line-mesh intersection for the guidance-pin axis.

use alloc::vec::Vec;

use super::linalg::{add, cross, dot, norm, normalize, scale, sub, Vec3};
use super::{GeometryError, TriMesh};

/// An intersection between the pin line and the mesh surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineHit {
    /// Signed distance along the line direction from the line origin, mm.
    pub t_mm: f64,
    /// Intersection point.
    pub point: Vec3,
}

/// Intersections of an infinite line with every triangle of `mesh`,
/// ascending in `t_mm`. Hits shared by adjacent triangles (edges, vertices)
/// are reported once. `direction` need not be unit length; `t_mm` is
/// measured in mm along the normalized direction.
///
/// The line models the guidance pin: for a closed vertebra surface the first
/// and last hit are the pin's entry and exit points.
pub fn pin_mesh_intersection(
    mesh: &TriMesh,
    origin: Vec3,
    direction: Vec3,
) -> Result<Vec<LineHit>, GeometryError> {
    let dir = normalize(direction).ok_or(GeometryError::ZeroDirection)?;
    let mut hits: Vec<LineHit> = Vec::new();
    const EPS_PARALLEL: f64 = 1e-12;
    const EPS_BARY: f64 = 1e-10;

    for tri in mesh.triangles() {
        let v0 = mesh.vertices()[tri[0]];
        let v1 = mesh.vertices()[tri[1]];
        let v2 = mesh.vertices()[tri[2]];
        let e1 = sub(v1, v0);
        let e2 = sub(v2, v0);
        let p = cross(dir, e2);
        let d = dot(e1, p);
        if d.abs() < EPS_PARALLEL {
            continue;
        }
        let inv = 1.0 / d;
        let s = sub(origin, v0);
        let u = dot(s, p) * inv;
        if !(-EPS_BARY..=1.0 + EPS_BARY).contains(&u) {
            continue;
        }
        let q = cross(s, e1);
        let v = dot(dir, q) * inv;
        if v < -EPS_BARY || u + v > 1.0 + EPS_BARY {
            continue;
        }
        let t = dot(e2, q) * inv;
        hits.push(LineHit {
            t_mm: t,
            point: add(origin, scale(dir, t)),
        });
    }

    hits.sort_by(|a, b| a.t_mm.partial_cmp(&b.t_mm).unwrap());
    // Merge duplicates from shared edges/vertices; scale the tolerance with
    // the mesh so large models dedup as reliably as small ones.
    let span = mesh.bounding_radius().max(1.0);
    let eps = 1e-9 * span;
    let mut deduped: Vec<LineHit> = Vec::with_capacity(hits.len());
    for h in hits {
        match deduped.last() {
            Some(last) if (h.t_mm - last.t_mm).abs() <= eps => {}
            _ => deduped.push(h),
        }
    }
    Ok(deduped)
}

/// Closest point on a triangle to `p` (used by the surface-distance mode).
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    // Ericson's barycentric region walk.
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return add(a, scale(ab, v));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return add(a, scale(ac, w));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return add(b, scale(sub(c, b), w));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    add(a, add(scale(ab, v), scale(ac, w)))
}

/// Distance from `p` to the nearest point of the mesh surface.
pub fn surface_distance(mesh: &TriMesh, p: Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for tri in mesh.triangles() {
        let q = closest_point_on_triangle(
            p,
            mesh.vertices()[tri[0]],
            mesh.vertices()[tri[1]],
            mesh.vertices()[tri[2]],
        );
        best = best.min(norm(sub(p, q)));
    }
    best
}

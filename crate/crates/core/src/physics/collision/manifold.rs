//! Analytic contact-manifold generation for the supported shape pairs.
//!
//! Conventions: every emitted point carries a unit normal directed from the
//! second body (`b`) toward the first (`a`), a non-negative penetration
//! depth, and a non-negative separation. Exactly one of penetration and
//! separation is nonzero except at exact touch.

use crate::math::{Pose, Vec3};
use crate::physics::body::Shape;

/// One raw manifold point before body ids and velocities are attached.
#[derive(Debug, Clone, Copy)]
pub struct ManifoldPoint {
    pub point: Vec3,
    /// Unit normal from body B toward body A.
    pub normal: Vec3,
    pub penetration: f64,
    pub separation: f64,
    /// Stable-ish feature tag used to persist friction state across steps.
    pub feature: u32,
}

impl ManifoldPoint {
    fn from_signed_distance(point: Vec3, normal: Vec3, signed: f64, feature: u32) -> Self {
        ManifoldPoint {
            point,
            normal,
            penetration: (-signed).max(0.0),
            separation: signed.max(0.0),
            feature,
        }
    }
}

/// Dispatch over shape pairs. `margin` is the proximity band within which
/// separated pairs still produce speculative points.
pub fn collide(
    sa: &Shape,
    pa: &Pose,
    sb: &Shape,
    pb: &Pose,
    margin: f64,
) -> Vec<ManifoldPoint> {
    match (sa, sb) {
        (Shape::HalfSpace { .. }, Shape::HalfSpace { .. }) => Vec::new(),
        (_, Shape::HalfSpace { normal, offset }) => {
            let n = Vec3::from_column_slice(normal);
            let n = (pb.orientation * n).normalize();
            let off = n.dot(&pb.position) + offset;
            shape_vs_halfspace(sa, pa, &n, off, margin)
        }
        (Shape::HalfSpace { normal, offset }, _) => {
            let n = Vec3::from_column_slice(normal);
            let n = (pa.orientation * n).normalize();
            let off = n.dot(&pa.position) + offset;
            flip(shape_vs_halfspace(sb, pb, &n, off, margin))
        }
        (Shape::Sphere { radius: ra }, Shape::Sphere { radius: rb }) => {
            sphere_vs_sphere(pa, *ra, pb, *rb, margin)
        }
        (Shape::Sphere { radius }, Shape::Box { .. }) => sphere_vs_box(pa, *radius, sb, pb, margin),
        (Shape::Box { .. }, Shape::Sphere { radius }) => {
            flip(sphere_vs_box(pb, *radius, sa, pa, margin))
        }
        (Shape::Box { .. }, Shape::Box { .. }) => box_vs_box(sa, pa, sb, pb, margin),
    }
}

fn flip(mut pts: Vec<ManifoldPoint>) -> Vec<ManifoldPoint> {
    for p in &mut pts {
        p.normal = -p.normal;
    }
    pts
}

/// Convex shape above the half-space `dot(n, x) <= offset`.
fn shape_vs_halfspace(
    shape: &Shape,
    pose: &Pose,
    n: &Vec3,
    offset: f64,
    margin: f64,
) -> Vec<ManifoldPoint> {
    match shape {
        Shape::Sphere { radius } => {
            let signed = n.dot(&pose.position) - offset - radius;
            if signed > margin {
                return Vec::new();
            }
            let point = pose.position - n * *radius;
            vec![ManifoldPoint::from_signed_distance(point, *n, signed, 0)]
        }
        Shape::Box { half_extents } => {
            let h = Vec3::from_column_slice(half_extents);
            let mut pts: Vec<(f64, u32, Vec3)> = Vec::with_capacity(8);
            for i in 0..8u32 {
                let local = Vec3::new(
                    if i & 1 == 0 { -h.x } else { h.x },
                    if i & 2 == 0 { -h.y } else { h.y },
                    if i & 4 == 0 { -h.z } else { h.z },
                );
                let world = pose.transform_point(&local);
                let signed = n.dot(&world) - offset;
                if signed <= margin {
                    pts.push((signed, i, world));
                }
            }
            // Keep the four deepest vertices; ties broken by vertex index.
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            pts.truncate(4);
            pts.into_iter()
                .map(|(signed, i, world)| {
                    ManifoldPoint::from_signed_distance(world, *n, signed, i)
                })
                .collect()
        }
        Shape::HalfSpace { .. } => Vec::new(),
    }
}

fn sphere_vs_sphere(
    pa: &Pose,
    ra: f64,
    pb: &Pose,
    rb: f64,
    margin: f64,
) -> Vec<ManifoldPoint> {
    let delta = pa.position - pb.position;
    let dist = delta.norm();
    let normal = if dist > 1e-12 { delta / dist } else { Vec3::z() };
    let signed = dist - ra - rb;
    if signed > margin {
        return Vec::new();
    }
    let point = pb.position + normal * (rb + 0.5 * signed.min(0.0));
    vec![ManifoldPoint::from_signed_distance(point, normal, signed, 0)]
}

/// Sphere A against box B.
fn sphere_vs_box(
    pa: &Pose,
    radius: f64,
    sb: &Shape,
    pb: &Pose,
    margin: f64,
) -> Vec<ManifoldPoint> {
    let h = sb.half_extents().expect("box shape");
    let c = pb.inverse_transform_point(&pa.position);
    let clamped = Vec3::new(
        c.x.clamp(-h.x, h.x),
        c.y.clamp(-h.y, h.y),
        c.z.clamp(-h.z, h.z),
    );
    let delta = c - clamped;
    let d2 = delta.norm_squared();

    if d2 > 1e-24 {
        // Center outside the box.
        let dist = d2.sqrt();
        let signed = dist - radius;
        if signed > margin {
            return Vec::new();
        }
        let n_local = delta / dist;
        let normal = pb.transform_vector(&n_local);
        let point = pb.transform_point(&clamped);
        vec![ManifoldPoint::from_signed_distance(point, normal, signed, 0)]
    } else {
        // Center inside the box: push out through the nearest face.
        let gaps = [h.x - c.x.abs(), h.y - c.y.abs(), h.z - c.z.abs()];
        let axis = if gaps[0] <= gaps[1] && gaps[0] <= gaps[2] {
            0
        } else if gaps[1] <= gaps[2] {
            1
        } else {
            2
        };
        let mut n_local = Vec3::zeros();
        n_local[axis] = 1.0f64.copysign(c[axis]);
        let signed = -(gaps[axis] + radius);
        let mut surf = c;
        surf[axis] = h[axis].copysign(c[axis]);
        let normal = pb.transform_vector(&n_local);
        let point = pb.transform_point(&surf);
        vec![ManifoldPoint::from_signed_distance(point, normal, signed, 0)]
    }
}

struct ObbAxes {
    center: Vec3,
    axes: [Vec3; 3],
    h: Vec3,
}

impl ObbAxes {
    fn new(shape: &Shape, pose: &Pose) -> Self {
        let h = shape.half_extents().expect("box shape");
        let r = pose.orientation.to_rotation_matrix();
        ObbAxes {
            center: pose.position,
            axes: [
                r.matrix().column(0).into(),
                r.matrix().column(1).into(),
                r.matrix().column(2).into(),
            ],
            h,
        }
    }

    fn project_radius(&self, axis: &Vec3) -> f64 {
        self.h.x * self.axes[0].dot(axis).abs()
            + self.h.y * self.axes[1].dot(axis).abs()
            + self.h.z * self.axes[2].dot(axis).abs()
    }

    fn face_vertices(&self, axis_idx: usize, sign: f64) -> [Vec3; 4] {
        let (u, v) = ((axis_idx + 1) % 3, (axis_idx + 2) % 3);
        let fc = self.center + self.axes[axis_idx] * (self.h[axis_idx] * sign);
        let eu = self.axes[u] * self.h[u];
        let ev = self.axes[v] * self.h[v];
        [fc + eu + ev, fc - eu + ev, fc - eu - ev, fc + eu - ev]
    }

    fn support_point(&self, dir: &Vec3) -> Vec3 {
        let mut p = self.center;
        for k in 0..3 {
            p += self.axes[k] * self.h[k].copysign(self.axes[k].dot(dir));
        }
        p
    }
}

/// SAT box-box test with face clipping; falls back to a GJK witness pair for
/// separated-but-close configurations.
fn box_vs_box(
    sa: &Shape,
    pa: &Pose,
    sb: &Shape,
    pb: &Pose,
    margin: f64,
) -> Vec<ManifoldPoint> {
    let a = ObbAxes::new(sa, pa);
    let b = ObbAxes::new(sb, pb);
    let t = a.center - b.center;

    // Minimum-overlap axis over the 15 SAT candidates; overlap < 0 means a
    // separating axis exists.
    let mut best_effective = f64::INFINITY;
    let mut best_overlap = f64::INFINITY;
    let mut best_axis = Vec3::zeros();
    let mut best_idx = usize::MAX;
    let mut consider = |axis: Vec3, idx: usize| -> bool {
        let len2 = axis.norm_squared();
        if len2 < 1e-18 {
            return true; // degenerate cross product, skip
        }
        let axis = axis / len2.sqrt();
        let overlap = a.project_radius(&axis) + b.project_radius(&axis) - t.dot(&axis).abs();
        if overlap < -margin {
            return false; // separated beyond the margin
        }
        // Penalize edge axes slightly so face manifolds win near ties;
        // deterministic and avoids jittery edge contacts on aligned stacks.
        let effective = if idx >= 6 { overlap + 1e-9 } else { overlap };
        if effective < best_effective {
            best_effective = effective;
            best_overlap = overlap;
            best_axis = axis;
            best_idx = idx;
        }
        true
    };

    for k in 0..3 {
        if !consider(a.axes[k], k) {
            return Vec::new();
        }
    }
    for k in 0..3 {
        if !consider(b.axes[k], 3 + k) {
            return Vec::new();
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            if !consider(a.axes[i].cross(&b.axes[j]), 6 + 3 * i + j) {
                return Vec::new();
            }
        }
    }
    if best_idx == usize::MAX {
        return Vec::new();
    }

    // Orient the axis from B toward A.
    let mut normal = best_axis;
    if normal.dot(&t) < 0.0 {
        normal = -normal;
    }

    if best_overlap < 0.0 {
        // Within the margin but not penetrating: single speculative point
        // from the GJK witnesses.
        return match super::gjk::distance(sa, pa, sb, pb) {
            super::gjk::GjkResult::Separated { distance, point_a, point_b, normal } => {
                vec![ManifoldPoint {
                    point: 0.5 * (point_a + point_b),
                    normal,
                    penetration: 0.0,
                    separation: distance.max(0.0),
                    feature: 100,
                }]
            }
            super::gjk::GjkResult::Overlapping => Vec::new(),
        };
    }

    if best_idx < 6 {
        // Face contact: clip the incident face of the other box against the
        // side planes of the reference face.
        let (ref_box, inc_box, ref_axis_idx, ref_is_a) = if best_idx < 3 {
            (&a, &b, best_idx, true)
        } else {
            (&b, &a, best_idx - 3, false)
        };
        // Reference face normal points from the reference box toward the
        // incident one; `normal` itself always points from B toward A.
        let ref_n = if ref_is_a { -normal } else { normal };
        let sign = 1.0f64.copysign(ref_box.axes[ref_axis_idx].dot(&ref_n));
        let ref_face = ref_box.face_vertices(ref_axis_idx, sign);
        let face_normal = ref_box.axes[ref_axis_idx] * sign;

        // Incident face: the face of inc_box most anti-parallel to ref_n.
        let mut inc_axis = 0;
        let mut inc_align = -f64::INFINITY;
        for k in 0..3 {
            let align = inc_box.axes[k].dot(&ref_n).abs();
            if align > inc_align {
                inc_align = align;
                inc_axis = k;
            }
        }
        let inc_sign = -1.0f64.copysign(inc_box.axes[inc_axis].dot(&ref_n));
        let mut poly: Vec<Vec3> = inc_box.face_vertices(inc_axis, inc_sign).to_vec();

        // Clip against the four side planes of the reference face.
        let (u, v) = ((ref_axis_idx + 1) % 3, (ref_axis_idx + 2) % 3);
        for &(axis_i, side) in &[(u, 1.0f64), (u, -1.0), (v, 1.0), (v, -1.0)] {
            let plane_n = ref_box.axes[axis_i] * side;
            let plane_d = plane_n.dot(&ref_box.center) + ref_box.h[axis_i];
            poly = clip_polygon(&poly, &plane_n, plane_d);
            if poly.is_empty() {
                return Vec::new();
            }
        }

        // Keep points at or below the reference face (within the margin).
        let face_d = face_normal.dot(&ref_face[0]);
        let mut pts: Vec<ManifoldPoint> = Vec::new();
        for (i, p) in poly.iter().enumerate() {
            let signed = face_normal.dot(p) - face_d;
            if signed <= margin {
                pts.push(ManifoldPoint::from_signed_distance(
                    // Report the midpoint of the overlap span.
                    p - face_normal * (0.5 * signed.min(0.0)),
                    normal,
                    signed,
                    i as u32,
                ));
            }
        }
        reduce_manifold(&mut pts);
        // Re-tag features by final rank for cross-step stability.
        for (i, p) in pts.iter_mut().enumerate() {
            p.feature = i as u32;
        }
        pts
    } else {
        // Edge-edge contact: closest points between the two support edges.
        let i = (best_idx - 6) / 3;
        let j = (best_idx - 6) % 3;
        let pa_sup = a.support_point(&-normal);
        let pb_sup = b.support_point(&normal);
        let (qa, qb) = closest_edge_points(
            pa_sup,
            a.axes[i],
            a.h[i],
            pb_sup,
            b.axes[j],
            b.h[j],
        );
        vec![ManifoldPoint {
            point: 0.5 * (qa + qb),
            normal,
            penetration: best_overlap.max(0.0),
            separation: 0.0,
            feature: 6 + best_idx as u32,
        }]
    }
}

/// Sutherland–Hodgman clip of a polygon against `dot(n, x) <= d`.
fn clip_polygon(poly: &[Vec3], n: &Vec3, d: f64) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        let dp = n.dot(&p) - d;
        let dq = n.dot(&q) - d;
        if dp <= 0.0 {
            out.push(p);
        }
        if dp * dq < 0.0 {
            let t = dp / (dp - dq);
            out.push(p + (q - p) * t);
        }
    }
    out
}

/// Deterministic reduction of a clipped manifold to at most four points:
/// the deepest point, the point farthest from it, and the two points with
/// the largest perpendicular spread on either side of that base segment.
fn reduce_manifold(pts: &mut Vec<ManifoldPoint>) {
    if pts.len() <= 4 {
        sort_points(pts);
        return;
    }
    let deepest = pts
        .iter()
        .enumerate()
        .max_by(|(_, x), (_, y)| {
            x.penetration
                .partial_cmp(&y.penetration)
                .unwrap()
                .then_with(|| cmp_lex(&y.point, &x.point))
        })
        .map(|(i, _)| i)
        .unwrap();
    let p0 = pts[deepest];

    let far = pts
        .iter()
        .enumerate()
        .max_by(|(_, x), (_, y)| {
            let da = (x.point - p0.point).norm_squared();
            let db = (y.point - p0.point).norm_squared();
            da.partial_cmp(&db)
                .unwrap()
                .then_with(|| cmp_lex(&y.point, &x.point))
        })
        .map(|(i, _)| i)
        .unwrap();
    let p1 = pts[far];

    let base = p1.point - p0.point;
    let mut keep = vec![p0, p1];
    for sign in [1.0f64, -1.0] {
        let mut best: Option<ManifoldPoint> = None;
        let mut best_val = 1e-18;
        for p in pts.iter() {
            let offset = (p.point - p0.point).cross(&base);
            let side = offset.dot(&p0.normal) * sign;
            if side > best_val {
                best_val = side;
                best = Some(*p);
            }
        }
        if let Some(p) = best {
            keep.push(p);
        }
    }
    keep.truncate(4);
    *pts = keep;
    sort_points(pts);
}

fn cmp_lex(a: &Vec3, b: &Vec3) -> std::cmp::Ordering {
    a.x.partial_cmp(&b.x)
        .unwrap()
        .then(a.y.partial_cmp(&b.y).unwrap())
        .then(a.z.partial_cmp(&b.z).unwrap())
}

fn sort_points(pts: &mut [ManifoldPoint]) {
    pts.sort_by(|a, b| {
        a.point
            .x
            .partial_cmp(&b.point.x)
            .unwrap()
            .then(a.point.y.partial_cmp(&b.point.y).unwrap())
            .then(a.point.z.partial_cmp(&b.point.z).unwrap())
    });
}

fn closest_edge_points(
    pa: Vec3,
    da: Vec3,
    ha: f64,
    pb: Vec3,
    db: Vec3,
    hb: f64,
) -> (Vec3, Vec3) {
    // Segments centered on the support points along the edge directions.
    let a0 = pa - da * ha;
    let b0 = pb - db * hb;
    let r = a0 - b0;
    let la = 2.0 * ha;
    let lb = 2.0 * hb;
    let a_dir = da * la;
    let b_dir = db * lb;
    let aa = a_dir.norm_squared();
    let bb = b_dir.norm_squared();
    let ab = a_dir.dot(&b_dir);
    let ar = a_dir.dot(&r);
    let br = b_dir.dot(&r);
    let denom = aa * bb - ab * ab;
    let mut s = if denom.abs() > 1e-18 {
        ((ab * br - ar * bb) / denom).clamp(0.0, 1.0)
    } else {
        0.5
    };
    let mut t = if bb > 1e-18 {
        ((ab * s + br) / bb).clamp(0.0, 1.0)
    } else {
        0.5
    };
    s = if aa > 1e-18 {
        ((ab * t - ar) / aa).clamp(0.0, 1.0)
    } else {
        0.5
    };
    t = if bb > 1e-18 {
        ((ab * s + br) / bb).clamp(0.0, 1.0)
    } else {
        0.5
    };
    (a0 + a_dir * s, b0 + b_dir * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_above_halfspace_penetration() {
        // Sphere r = 0.05 centered 0.04 above the plane: 0.01 penetration.
        let s = Shape::Sphere { radius: 0.05 };
        let hs = Shape::HalfSpace { normal: [0.0, 0.0, 1.0], offset: 0.0 };
        let pts = collide(
            &s,
            &Pose::from_position(Vec3::new(0.0, 0.0, 0.04)),
            &hs,
            &Pose::identity(),
            1e-3,
        );
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0].penetration, 0.01, epsilon = 1e-12);
        assert_relative_eq!(pts[0].normal.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn resting_box_has_four_points() {
        let b = Shape::Box { half_extents: [0.5, 0.5, 0.5] };
        let hs = Shape::HalfSpace { normal: [0.0, 0.0, 1.0], offset: 0.0 };
        let pts = collide(
            &b,
            &Pose::from_position(Vec3::new(0.0, 0.0, 0.4995)),
            &hs,
            &Pose::identity(),
            1e-3,
        );
        assert_eq!(pts.len(), 4);
        for p in &pts {
            assert_relative_eq!(p.penetration, 5e-4, epsilon = 1e-12);
        }
    }

    #[test]
    fn box_box_face_manifold() {
        let sa = Shape::Box { half_extents: [0.5, 0.5, 0.5] };
        let sb = Shape::Box { half_extents: [0.5, 0.5, 0.5] };
        let pts = collide(
            &sa,
            &Pose::from_position(Vec3::new(0.0, 0.0, 0.99)),
            &sb,
            &Pose::identity(),
            1e-3,
        );
        assert_eq!(pts.len(), 4);
        for p in &pts {
            assert_relative_eq!(p.penetration, 0.01, epsilon = 1e-9);
            assert_relative_eq!(p.normal.z, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn separated_boxes_empty() {
        let sa = Shape::Box { half_extents: [0.5, 0.5, 0.5] };
        let sb = Shape::Box { half_extents: [0.5, 0.5, 0.5] };
        let pts = collide(
            &sa,
            &Pose::from_position(Vec3::new(2.0, 0.0, 0.0)),
            &sb,
            &Pose::identity(),
            1e-3,
        );
        assert!(pts.is_empty());
    }
}

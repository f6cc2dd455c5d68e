//! Exact intersection-over-union of oriented boxes.
//!
//! Box `a` is treated as a convex polyhedron given by its six faces and
//! clipped against the six halfspaces of box `b`. Each clip runs
//! Sutherland-Hodgman on every face and closes the cut with a cap polygon.

use crate::pose::{OrientedBox, Vec3};

type Polygon = Vec<Vec3>;

/// Corner indices of the six faces, in cyclic order.
const FACES: [[usize; 4]; 6] = [
    [0, 2, 6, 4], // -x
    [1, 5, 7, 3], // +x
    [0, 4, 5, 1], // -y
    [2, 3, 7, 6], // +y
    [0, 1, 3, 2], // -z
    [4, 6, 7, 5], // +z
];

/// Outward halfspaces `n . p <= d` of a box.
fn halfspaces(b: &OrientedBox) -> [(Vec3, f64); 6] {
    let r = b.pose.rotation.matrix();
    let t = b.pose.translation;
    let half = b.scale.extents() / 2.0;
    std::array::from_fn(|i| {
        let axis = i / 2;
        let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
        let n: Vec3 = r.column(axis) * sign;
        (n, n.dot(&t) + half[axis])
    })
}

fn clip(faces: Vec<Polygon>, n: &Vec3, d: f64, eps: f64) -> Vec<Polygon> {
    let mut out = Vec::with_capacity(faces.len() + 1);
    let mut cap: Vec<Vec3> = Vec::new();
    let mut cut = false;
    for face in faces {
        let dist: Vec<f64> = face.iter().map(|p| n.dot(p) - d).collect();
        if dist.iter().all(|&s| s <= eps) {
            cap.extend(face.iter().zip(&dist).filter(|(_, s)| s.abs() <= eps).map(|(p, _)| *p));
            out.push(face);
            continue;
        }
        cut = true;
        let mut kept = Vec::with_capacity(face.len() + 1);
        for i in 0..face.len() {
            let j = (i + 1) % face.len();
            let (p, q) = (face[i], face[j]);
            let (sp, sq) = (dist[i], dist[j]);
            if sp <= eps {
                kept.push(p);
                if sp.abs() <= eps {
                    cap.push(p);
                }
            }
            if (sp < -eps && sq > eps) || (sp > eps && sq < -eps) {
                let x = p + (q - p) * (sp / (sp - sq));
                kept.push(x);
                cap.push(x);
            }
        }
        if kept.len() >= 3 {
            out.push(kept);
        }
    }
    if cut && !out.is_empty() {
        if let Some(poly) = cap_polygon(cap, n, eps) {
            out.push(poly);
        }
    }
    out
}

/// Orders points lying on one plane into a convex polygon.
fn cap_polygon(mut pts: Vec<Vec3>, n: &Vec3, eps: f64) -> Option<Polygon> {
    let mut unique: Vec<Vec3> = Vec::with_capacity(pts.len());
    for p in pts.drain(..) {
        if unique.iter().all(|q| (p - q).norm() > eps) {
            unique.push(p);
        }
    }
    if unique.len() < 3 {
        return None;
    }
    let c = unique.iter().sum::<Vec3>() / unique.len() as f64;
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    let mut keyed: Vec<(f64, Vec3)> = unique
        .into_iter()
        .map(|p| {
            let d = p - c;
            (d.dot(&e2).atan2(d.dot(&e1)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(keyed.into_iter().map(|(_, p)| p).collect())
}

/// Volume of a closed convex polyhedron given by its faces.
fn volume(faces: &[Polygon]) -> f64 {
    let count: usize = faces.iter().map(Vec::len).sum();
    if faces.len() < 4 || count == 0 {
        return 0.0;
    }
    let c = faces.iter().flatten().sum::<Vec3>() / count as f64;
    faces
        .iter()
        .map(|f| {
            (1..f.len() - 1)
                .map(|i| (f[0] - c).dot(&(f[i] - c).cross(&(f[i + 1] - c))).abs() / 6.0)
                .sum::<f64>()
        })
        .sum()
}

/// Intersection volume of two oriented boxes.
pub fn intersection_volume(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let size = a.scale.extents().max().max(b.scale.extents().max());
    let reach = (a.pose.translation.norm() + b.pose.translation.norm()).max(size);
    let eps = 1e-12 * reach;
    let corners = a.corners();
    let mut faces: Vec<Polygon> = FACES.iter().map(|f| f.iter().map(|&i| corners[i]).collect()).collect();
    for (n, d) in halfspaces(b) {
        faces = clip(faces, &n, d, eps);
        if faces.is_empty() {
            return 0.0;
        }
    }
    volume(&faces)
}

/// Intersection over union of two oriented boxes, in `[0, 1]`.
pub fn oriented_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let inter = intersection_volume(a, b);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

use super::{add, cross, dist2, dot, scale, sub, Point3};
use crate::error::{Error, Result};

/// True when the triangle's area is negligible relative to its edge lengths.
pub fn triangle_is_degenerate(t: &[Point3; 3]) -> bool {
    let e0 = sub(t[1], t[0]);
    let e1 = sub(t[2], t[0]);
    let e2 = sub(t[2], t[1]);
    let longest = dot(e0, e0).max(dot(e1, e1)).max(dot(e2, e2));
    let c = cross(e0, e1);
    !(longest > 0.0) || dot(c, c) <= 1e-24 * longest * longest
}

/// Closest point of the closed triangle to `p` (Voronoi-region walk over
/// vertices, edges and interior).
pub fn closest_point_on_triangle(p: Point3, t: &[Point3; 3]) -> Point3 {
    let [a, b, c] = *t;
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

pub(crate) fn triangle_distance2_unchecked(p: Point3, t: &[Point3; 3]) -> f64 {
    dist2(p, closest_point_on_triangle(p, t))
}

/// Euclidean distance from `p` to the closed triangle `t`.
pub fn point_triangle_distance(p: Point3, t: &[Point3; 3]) -> Result<f64> {
    if triangle_is_degenerate(t) {
        return Err(Error::Argument(format!("degenerate triangle {t:?}")));
    }
    Ok(triangle_distance2_unchecked(p, t).sqrt())
}

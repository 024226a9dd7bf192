//! Axis-aligned bounding-volume hierarchy for closest-triangle queries.

use super::triangle::triangle_distance2_unchecked;
use super::{Mesh, Point3};

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Point3,
    hi: Point3,
}

impl Aabb {
    const EMPTY: Self = Self {
        lo: [f64::INFINITY; 3],
        hi: [f64::NEG_INFINITY; 3],
    };

    fn grow(&mut self, p: Point3) {
        for a in 0..3 {
            self.lo[a] = self.lo[a].min(p[a]);
            self.hi[a] = self.hi[a].max(p[a]);
        }
    }

    fn merge(&mut self, o: &Aabb) {
        self.grow(o.lo);
        self.grow(o.hi);
    }

    /// Squared distance from `p` to the box (0 inside).
    fn dist2(&self, p: Point3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.lo[a] {
                self.lo[a] - p[a]
            } else if p[a] > self.hi[a] {
                p[a] - self.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Hierarchy over the faces of a mesh, split at the centroid median of the
/// longest axis.
#[derive(Clone, Debug)]
pub struct Bvh {
    triangles: Vec<[Point3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl Bvh {
    pub fn build(mesh: &Mesh) -> Self {
        let triangles: Vec<[Point3; 3]> = mesh.triangles().collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let centroids: Vec<Point3> = triangles
            .iter()
            .map(|t| {
                let mut c = [0.0; 3];
                for a in 0..3 {
                    c[a] = (t[0][a] + t[1][a] + t[2][a]) / 3.0;
                }
                c
            })
            .collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            build_node(&triangles, &centroids, &mut order, 0, triangles.len(), &mut nodes);
        }
        Self {
            triangles,
            order,
            nodes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Index of the closest face and the squared distance to it, or `None`
    /// for an empty mesh. Among equal distances the lowest face index wins.
    pub fn closest(&self, p: Point3) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds().dist2(p) > best.1 {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &f in &self.order[start..end] {
                        let d = triangle_distance2_unchecked(p, &self.triangles[f]);
                        if d < best.1 || (d == best.1 && f < best.0) {
                            best = (f, d);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().dist2(p);
                    let dr = self.nodes[right].bounds().dist2(p);
                    // Nearer child on top of the stack.
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        Some(best)
    }

    /// Unsigned distance from `p` to the mesh surface.
    pub fn distance(&self, p: Point3) -> Option<f64> {
        self.closest(p).map(|(_, d2)| d2.sqrt())
    }
}

fn build_node(
    tris: &[[Point3; 3]],
    centroids: &[Point3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::EMPTY;
    let mut cbounds = Aabb::EMPTY;
    for &f in &order[start..end] {
        for v in tris[f] {
            bounds.grow(v);
        }
        cbounds.grow(centroids[f]);
    }
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return id;
    }
    let axis = (0..3)
        .max_by(|&a, &b| {
            (cbounds.hi[a] - cbounds.lo[a]).total_cmp(&(cbounds.hi[b] - cbounds.lo[b]))
        })
        .unwrap_or(0);
    let mid = start + (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&x, &y| {
        centroids[x][axis]
            .total_cmp(&centroids[y][axis])
            .then(x.cmp(&y))
    });
    nodes.push(Node::Leaf {
        bounds,
        start,
        end,
    });
    let left = build_node(tris, centroids, order, start, mid, nodes);
    let right = build_node(tris, centroids, order, mid, end, nodes);
    let mut merged = *nodes[left].bounds();
    merged.merge(nodes[right].bounds());
    nodes[id] = Node::Inner {
        bounds: merged,
        left,
        right,
    };
    id
}

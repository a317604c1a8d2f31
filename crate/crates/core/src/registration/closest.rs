use nalgebra::Vector3;

use crate::Mesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Vector3<f64>,
    pub triangle: usize,
    /// Unit face normal of `triangle` (zero for degenerate triangles).
    pub normal: Vector3<f64>,
    pub distance_squared: f64,
}

/// Closest point to `p` on triangle `(a, b, c)` (Voronoi-region walk).
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    /// Leaf: `start..start+count` into `order`; inner: children at `left`, `left+1`.
    start: usize,
    count: usize,
    left: usize,
}

/// Bounding-volume hierarchy over a mesh's triangles for exact nearest-point
/// queries.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    tris: Vec<[Vector3<f64>; 3]>,
    normals: Vec<Vector3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

const LEAF_SIZE: usize = 4;

impl TriangleBvh {
    pub fn build(mesh: &Mesh) -> Self {
        let tris: Vec<[Vector3<f64>; 3]> = mesh
            .triangles
            .iter()
            .map(|t| t.map(|i| mesh.vertices[i]))
            .collect();
        let normals = (0..mesh.triangles.len()).map(|t| mesh.face_normal(t)).collect();
        let centroids: Vec<Vector3<f64>> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut bvh = Self {
            order: (0..tris.len()).collect(),
            tris,
            normals,
            nodes: Vec::new(),
        };
        if !bvh.tris.is_empty() {
            bvh.nodes.push(Node {
                lo: Vector3::zeros(),
                hi: Vector3::zeros(),
                start: 0,
                count: bvh.order.len(),
                left: 0,
            });
            bvh.split(0, &centroids);
        }
        bvh
    }

    fn split(&mut self, node: usize, centroids: &[Vector3<f64>]) {
        let (start, count) = (self.nodes[node].start, self.nodes[node].count);
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &t in &self.order[start..start + count] {
            for v in &self.tris[t] {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
        }
        self.nodes[node].lo = lo;
        self.nodes[node].hi = hi;
        if count <= LEAF_SIZE {
            return;
        }
        let axis = (hi - lo).imax();
        let slice = &mut self.order[start..start + count];
        let mid = count / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let left = self.nodes.len();
        self.nodes[node].left = left;
        self.nodes[node].count = 0;
        self.nodes.push(Node {
            lo,
            hi,
            start,
            count: mid,
            left: 0,
        });
        self.nodes.push(Node {
            lo,
            hi,
            start: start + mid,
            count: count - mid,
            left: 0,
        });
        self.split(left, centroids);
        self.split(left + 1, centroids);
    }

    fn box_distance_squared(node: &Node, p: &Vector3<f64>) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < node.lo[k] {
                node.lo[k] - p[k]
            } else if p[k] > node.hi[k] {
                p[k] - node.hi[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Nearest surface point. Equal distances resolve to the lowest triangle
    /// index. A non-finite query yields a NaN distance. Panics on an empty
    /// mesh.
    pub fn closest(&self, p: &Vector3<f64>) -> ClosestPoint {
        assert!(!self.nodes.is_empty(), "closest point query on an empty mesh");
        let mut best = (f64::INFINITY, usize::MAX, Vector3::zeros());
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if Self::box_distance_squared(node, p) > best.0 {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start..node.start + node.count] {
                    let [a, b, c] = &self.tris[t];
                    let q = closest_point_on_triangle(p, a, b, c);
                    let d = (q - p).norm_squared();
                    if d < best.0 || (d == best.0 && t < best.1) {
                        best = (d, t, q);
                    }
                }
            } else {
                let (l, r) = (node.left, node.left + 1);
                let dl = Self::box_distance_squared(&self.nodes[l], p);
                let dr = Self::box_distance_squared(&self.nodes[r], p);
                // Visit the nearer child first.
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        if best.1 == usize::MAX {
            return ClosestPoint {
                point: Vector3::repeat(f64::NAN),
                triangle: 0,
                normal: self.normals[0],
                distance_squared: f64::NAN,
            };
        }
        ClosestPoint {
            point: best.2,
            triangle: best.1,
            normal: self.normals[best.1],
            distance_squared: best.0,
        }
    }
}

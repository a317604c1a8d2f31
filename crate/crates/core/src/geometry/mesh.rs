use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::{Error, Result};

/// Position, texture and normal indices of one face corner.
type Corner = (usize, Option<usize>, Option<usize>);

/// Fixed-topology triangle mesh with per-corner UV coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// UV coordinates of each triangle's three corners, in `[0, 1]^2`.
    pub uv_corners: Vec<[[f64; 2]; 3]>,
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl Mesh {
    pub fn validate(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::InvalidMesh("triangle list is empty".into()));
        }
        if self.uv_corners.len() != self.triangles.len() {
            return Err(Error::InvalidMesh(format!(
                "{} triangles but {} UV triples",
                self.triangles.len(),
                self.uv_corners.len()
            )));
        }
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references a vertex out of range ({n} vertices)"
                )));
            }
        }
        for (t, uvs) in self.uv_corners.iter().enumerate() {
            for uv in uvs {
                if !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1]) {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {t} has UV ({}, {}) outside the unit square",
                        uv[0], uv[1]
                    )));
                }
            }
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::InvalidMesh("normal count differs from vertex count".into()));
            }
        }
        Ok(())
    }

    pub fn bbox(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).norm()
    }

    /// Unique undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }

    pub fn face_normal(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangles[t];
        let n = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    /// Area-weighted vertex normals computed from the current positions.
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for &[a, b, c] in &self.triangles {
            let n = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
            acc[a] += n;
            acc[b] += n;
            acc[c] += n;
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    n
                }
            })
            .collect()
    }

    /// Number of texel centers (on an `side`×`side` grid) strictly inside more
    /// than one UV triangle. Centers on shared edges are resolved by the
    /// coverage tie-break and do not count.
    pub fn uv_overlap_count(&self, side: usize) -> usize {
        let mut hits = vec![0u8; side * side];
        for uvs in &self.uv_corners {
            let pts = uvs.map(|uv| [uv[0] * side as f64, uv[1] * side as f64]);
            let (x0, x1, y0, y1) = texel_range(&pts, side);
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = [x as f64 + 0.5, y as f64 + 0.5];
                    if let Some(w) = super::barycentric_2d(pts[0], pts[1], pts[2], p) {
                        if w.iter().all(|&v| v > 0.0) {
                            let h = &mut hits[y * side + x];
                            *h = h.saturating_add(1);
                        }
                    }
                }
            }
        }
        hits.iter().filter(|&&h| h > 1).count()
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mesh = Self::parse_obj(&text, path)?;
        let overlaps = mesh.uv_overlap_count(256);
        if overlaps > 0 {
            log::warn!(
                "{}: UV triangles overlap at {} texel centers (256x256 grid)",
                path.display(),
                overlaps
            );
        }
        Ok(mesh)
    }

    /// Parses ASCII OBJ text. Polygon faces are fan-triangulated.
    pub fn parse_obj(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: PathBuf::from(path),
            line,
            message,
        };
        let mut positions = Vec::new();
        let mut texcoords: Vec<[f64; 2]> = Vec::new();
        let mut normals_in = Vec::new();
        let mut corners_per_face: Vec<(usize, Vec<Corner>)> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut it = line.split_whitespace();
            let Some(tag) = it.next() else { continue };
            let nums = |it: std::str::SplitWhitespace, n: usize| -> Result<Vec<f64>> {
                let vals: Vec<f64> = it
                    .take(n)
                    .map(|s| s.parse::<f64>().map_err(|e| err(line_no, format!("bad number `{s}`: {e}"))))
                    .collect::<Result<_>>()?;
                if vals.len() < n {
                    return Err(err(line_no, format!("expected {n} numbers")));
                }
                Ok(vals)
            };
            match tag {
                "v" => {
                    let v = nums(it, 3)?;
                    positions.push(Vector3::new(v[0], v[1], v[2]));
                }
                "vt" => {
                    let v = nums(it, 2)?;
                    texcoords.push([v[0], v[1]]);
                }
                "vn" => {
                    let v = nums(it, 3)?;
                    normals_in.push(Vector3::new(v[0], v[1], v[2]));
                }
                "f" => {
                    let mut corners = Vec::new();
                    for tok in it {
                        let mut parts = tok.split('/');
                        let resolve = |s: Option<&str>, count: usize, what: &str| -> Result<Option<usize>> {
                            match s {
                                None | Some("") => Ok(None),
                                Some(s) => {
                                    let i: i64 = s
                                        .parse()
                                        .map_err(|e| err(line_no, format!("bad {what} index `{s}`: {e}")))?;
                                    let idx = if i > 0 {
                                        i - 1
                                    } else if i < 0 {
                                        count as i64 + i
                                    } else {
                                        return Err(err(line_no, format!("{what} index 0 is invalid (OBJ is 1-based)")));
                                    };
                                    if idx < 0 || idx as usize >= count {
                                        return Err(err(
                                            line_no,
                                            format!("{what} index {i} out of range ({count} defined)"),
                                        ));
                                    }
                                    Ok(Some(idx as usize))
                                }
                            }
                        };
                        let v = resolve(parts.next(), positions.len(), "vertex")?
                            .ok_or_else(|| err(line_no, "face corner without vertex index".into()))?;
                        let vt = resolve(parts.next(), texcoords.len(), "texture")?;
                        let vn = resolve(parts.next(), normals_in.len(), "normal")?;
                        corners.push((v, vt, vn));
                    }
                    if corners.len() < 3 {
                        return Err(err(line_no, "face with fewer than 3 corners".into()));
                    }
                    corners_per_face.push((line_no, corners));
                }
                _ => {}
            }
        }

        let mut triangles = Vec::new();
        let mut uv_corners = Vec::new();
        let mut vertex_normals: Vec<Option<Vector3<f64>>> = vec![None; positions.len()];
        let mut any_normals = false;
        for (_line, corners) in &corners_per_face {
            if corners.iter().any(|c| c.1.is_none()) {
                return Err(Error::MissingUv);
            }
            for &(v, _, vn) in corners {
                if let Some(n) = vn {
                    vertex_normals[v] = Some(normals_in[n]);
                    any_normals = true;
                }
            }
            for k in 1..corners.len() - 1 {
                let tri = [corners[0], corners[k], corners[k + 1]];
                triangles.push(tri.map(|c| c.0));
                uv_corners.push(tri.map(|c| texcoords[c.1.unwrap()]));
            }
        }
        let normals = if any_normals && vertex_normals.iter().all(Option::is_some) {
            Some(vertex_normals.into_iter().map(Option::unwrap).collect())
        } else {
            None
        };
        let mesh = Mesh {
            vertices: positions,
            triangles,
            uv_corners,
            normals,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Serializes to OBJ. Floats use shortest round-trip formatting, so
    /// `parse_obj(to_obj(m))` reproduces `m` exactly.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        let mut vt_index: Vec<[usize; 3]> = Vec::with_capacity(self.uv_corners.len());
        let mut seen: std::collections::HashMap<(u64, u64), usize> = Default::default();
        let mut vts: Vec<[f64; 2]> = Vec::new();
        for uvs in &self.uv_corners {
            vt_index.push(uvs.map(|uv| {
                *seen.entry((uv[0].to_bits(), uv[1].to_bits())).or_insert_with(|| {
                    vts.push(uv);
                    vts.len() - 1
                })
            }));
        }
        for uv in &vts {
            let _ = writeln!(out, "vt {} {}", uv[0], uv[1]);
        }
        if let Some(ns) = &self.normals {
            for n in ns {
                let _ = writeln!(out, "vn {} {} {}", n.x, n.y, n.z);
            }
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            out.push('f');
            for k in 0..3 {
                if self.normals.is_some() {
                    let _ = write!(out, " {}/{}/{}", tri[k] + 1, vt_index[t][k] + 1, tri[k] + 1);
                } else {
                    let _ = write!(out, " {}/{}", tri[k] + 1, vt_index[t][k] + 1);
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_obj())?;
        Ok(())
    }
}

/// Texel index range `[x0, x1) × [y0, y1)` conservatively covering a 2D triangle
/// given in texel units, padded by one texel.
pub(crate) fn texel_range(pts: &[[f64; 2]; 3], side: usize) -> (usize, usize, usize, usize) {
    grid_range(pts, side, side)
}

pub(crate) fn grid_range(pts: &[[f64; 2]; 3], width: usize, height: usize) -> (usize, usize, usize, usize) {
    let minx = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let maxx = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let miny = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let maxy = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let clampi = |v: f64, hi: usize| -> usize {
        if v.is_nan() || v <= 0.0 {
            0
        } else if v >= hi as f64 {
            hi
        } else {
            v as usize
        }
    };
    let x0 = clampi((minx - 0.5).floor() - 1.0, width);
    let x1 = clampi((maxx - 0.5).floor() + 2.0, width);
    let y0 = clampi((miny - 0.5).floor() - 1.0, height);
    let y1 = clampi((maxy - 0.5).floor() + 2.0, height);
    (x0, x1, y0, y1)
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3\nf 1/1 3/3 4/4\n";

    fn parse(s: &str) -> Result<Mesh> {
        Mesh::parse_obj(s, Path::new("test.obj"))
    }

    #[test]
    fn unit_quad_echoes_file_order() {
        let m = parse(QUAD).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.uv_corners[0], [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        assert_eq!(m.uv_corners[1], [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
    }

    #[test]
    fn polygon_faces_are_fan_triangulated() {
        let m = parse("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3 4/4\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn zero_index_reports_line() {
        let e = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 0/1 2/1 3/1\n").unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_index_reports_line() {
        let e = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\n\nf 1/1 2/1 9/1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 6, .. }), "{e}");
    }

    #[test]
    fn missing_texcoords_is_an_error() {
        let e = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap_err();
        assert!(matches!(e, Error::MissingUv));
        assert_eq!(e.to_string(), "mesh lacks UV parameterization");
    }

    #[test]
    fn normals_and_negative_indices() {
        let m = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvn 0 0 1\nf -3/-3/-1 -2/-2/-1 -1/-1/-1\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        assert_eq!(m.normals.as_ref().unwrap()[2], Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn obj_text_roundtrip_is_exact() {
        let mut m = parse(QUAD).unwrap();
        m.vertices[2].x = 0.1 + 0.2;
        let back = parse(&m.to_obj()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn edges_are_unique() {
        let m = parse(QUAD).unwrap();
        assert_eq!(m.edges(), vec![(0, 1), (0, 2), (0, 3), (1, 2), (2, 3)]);
    }

    #[test]
    fn overlap_detection() {
        let m = parse(QUAD).unwrap();
        assert_eq!(m.uv_overlap_count(16), 0);
        let twice = parse("v 0 0 0\nv 1 0 0\nv 1 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nf 1/1 2/2 3/3\nf 1/1 2/2 3/3\n").unwrap();
        assert!(twice.uv_overlap_count(16) > 0);
    }
}

//! Conforming triangulations with a polynomial degree per triangle.

use std::collections::HashMap;

use crate::basis::hierarchic::EDGES;
use crate::error::{Result, SatError};
use crate::rtflux::AffineTriangle;

/// Default bound on circumradius / inradius checked at load.
pub const DEFAULT_SHAPE_BOUND: f64 = 20.0;

#[derive(Debug, Clone)]
pub struct HpMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    degrees: Vec<usize>,
    /// Sorted vertex pairs.
    edges: Vec<[usize; 2]>,
    /// Global edge of local edge `EDGES[e]`.
    tri_edges: Vec<[usize; 3]>,
    edge_tris: Vec<Vec<usize>>,
    vertex_tris: Vec<Vec<usize>>,
    boundary_edge: Vec<bool>,
    boundary_vertex: Vec<bool>,
}

impl HpMesh {
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, degrees: Vec<usize>) -> Result<Self> {
        Self::with_shape_bound(vertices, triangles, degrees, DEFAULT_SHAPE_BOUND)
    }

    pub fn with_shape_bound(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        degrees: Vec<usize>,
        shape_bound: f64,
    ) -> Result<Self> {
        let nv = vertices.len();
        if triangles.is_empty() {
            return Err(SatError::Mesh("no triangles".into()));
        }
        if degrees.len() != triangles.len() {
            return Err(SatError::Mesh(format!(
                "{} degrees for {} triangles",
                degrees.len(),
                triangles.len()
            )));
        }
        if let Some(t) = degrees.iter().position(|&p| p == 0) {
            return Err(SatError::Mesh(format!("triangle {t} has degree 0; need p_T ≥ 1")));
        }
        let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<Vec<usize>> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        let mut vertex_tris = vec![Vec::new(); nv];
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) || tri[0] == tri[1] || tri[0] == tri[2] || tri[1] == tri[2] {
                return Err(SatError::Mesh(format!("triangle {t} has invalid vertices {tri:?}")));
            }
            let verts = tri.map(|v| vertices[v]);
            let area2 = (verts[1][0] - verts[0][0]) * (verts[2][1] - verts[0][1])
                - (verts[2][0] - verts[0][0]) * (verts[1][1] - verts[0][1]);
            if area2 <= 0.0 {
                return Err(SatError::Mesh(format!("triangle {t} is not counterclockwise")));
            }
            let ratio = shape_ratio(&verts);
            if ratio > shape_bound {
                return Err(SatError::Mesh(format!(
                    "triangle {t} has circumradius/inradius {ratio:.3} > {shape_bound}"
                )));
            }
            let mut te = [0; 3];
            for (e, &(a, b)) in EDGES.iter().enumerate() {
                let key = sorted(tri[a], tri[b]);
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_tris.push(Vec::new());
                    edges.len() - 1
                });
                edge_tris[id].push(t);
                if edge_tris[id].len() > 2 {
                    return Err(SatError::Mesh(format!("edge {key:?} is shared by more than two triangles")));
                }
                te[e] = id;
            }
            tri_edges.push(te);
            for &v in tri {
                vertex_tris[v].push(t);
            }
        }
        if let Some(v) = vertex_tris.iter().position(|l| l.is_empty()) {
            return Err(SatError::Mesh(format!("vertex {v} belongs to no triangle")));
        }
        let boundary_edge: Vec<bool> = edge_tris.iter().map(|l| l.len() == 1).collect();
        let mut boundary_vertex = vec![false; nv];
        for (e, &b) in boundary_edge.iter().enumerate() {
            if b {
                boundary_vertex[edges[e][0]] = true;
                boundary_vertex[edges[e][1]] = true;
            }
        }
        // a vertex inside a boundary edge is a hanging node
        for (e, &b) in boundary_edge.iter().enumerate() {
            if !b {
                continue;
            }
            let [a, c] = edges[e];
            for (v, x) in vertices.iter().enumerate() {
                if v != a && v != c && on_open_segment(*x, vertices[a], vertices[c]) {
                    return Err(SatError::Mesh(format!("vertex {v} hangs on edge {:?}", edges[e])));
                }
            }
        }
        Ok(Self {
            vertices,
            triangles,
            degrees,
            edges,
            tri_edges,
            edge_tris,
            vertex_tris,
            boundary_edge,
            boundary_vertex,
        })
    }

    /// `[0,1]²` split into `n × n` squares, each cut along the diagonal
    /// `(i,j)-(i+1,j+1)`.
    pub fn unit_square(n: usize, p: usize) -> Result<Self> {
        let n = n.max(1);
        let h = 1.0 / n as f64;
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut v = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                v.push([i as f64 * h, j as f64 * h]);
            }
        }
        let mut t = Vec::new();
        for j in 0..n {
            for i in 0..n {
                t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let d = vec![p; t.len()];
        Self::new(v, t, d)
    }

    /// `[0,1]²` cut into four triangles meeting at the center.
    pub fn crossed_square(p: usize) -> Result<Self> {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let t = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
        Self::new(v, t, vec![p; 4])
    }

    /// Plain-text format: `V F`, then `V` lines `x y`, then `F` lines
    /// `i j k [p]`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let bad = |m: &str| SatError::Mesh(m.to_string());
        let head: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("empty mesh file"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("bad count line")))
            .collect::<Result<_>>()?;
        if head.len() != 2 {
            return Err(bad("first line must be `V F`"));
        }
        let (nv, nf) = (head[0], head[1]);
        let mut vertices = Vec::with_capacity(nv);
        for i in 0..nv {
            let l = lines.next().ok_or_else(|| bad(&format!("missing vertex {i}")))?;
            let xy: Vec<f64> = l
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad(&format!("bad vertex line {i}"))))
                .collect::<Result<_>>()?;
            if xy.len() != 2 {
                return Err(bad(&format!("vertex {i} needs two coordinates")));
            }
            vertices.push([xy[0], xy[1]]);
        }
        let mut triangles = Vec::with_capacity(nf);
        let mut degrees = Vec::with_capacity(nf);
        for i in 0..nf {
            let l = lines.next().ok_or_else(|| bad(&format!("missing triangle {i}")))?;
            let ids: Vec<usize> = l
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad(&format!("bad triangle line {i}"))))
                .collect::<Result<_>>()?;
            match ids.len() {
                3 => degrees.push(1),
                4 => degrees.push(ids[3]),
                _ => return Err(bad(&format!("triangle {i} needs 3 indices and an optional degree"))),
            }
            triangles.push([ids[0], ids[1], ids[2]]);
        }
        if lines.next().is_some() {
            return Err(bad("trailing lines after the triangles"));
        }
        Self::new(vertices, triangles, degrees)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.vertices.len(), self.triangles.len());
        for v in &self.vertices {
            s.push_str(&format!("{} {}\n", v[0], v[1]));
        }
        for (t, p) in self.triangles.iter().zip(&self.degrees) {
            s.push_str(&format!("{} {} {} {}\n", t[0], t[1], t[2], p));
        }
        s
    }

    /// Same geometry with new degrees.
    pub fn with_degrees(&self, degrees: Vec<usize>) -> Result<Self> {
        if degrees.len() != self.triangles.len() || degrees.iter().any(|&p| p == 0) {
            return Err(SatError::Mesh("degree vector must match triangles and be ≥ 1".into()));
        }
        let mut m = self.clone();
        m.degrees = degrees;
        Ok(m)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn degree(&self, t: usize) -> usize {
        self.degrees[t]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(1)
    }

    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    pub fn tri_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn edge_triangles(&self, e: usize) -> &[usize] {
        &self.edge_tris[e]
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_tris[v]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edge[e]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn geometry(&self, t: usize) -> AffineTriangle {
        AffineTriangle::new(self.triangles[t].map(|v| self.vertices[v]))
    }

    /// Local edge flips that orient every edge from its lower to its higher
    /// global vertex.
    pub fn flips(&self, t: usize) -> [bool; 3] {
        let tri = self.triangles[t];
        std::array::from_fn(|e| tri[EDGES[e].0] > tri[EDGES[e].1])
    }

    /// Local index (0..3) of global vertex `v` in triangle `t`.
    pub fn local_vertex(&self, t: usize, v: usize) -> Option<usize> {
        self.triangles[t].iter().position(|&w| w == v)
    }
}

fn sorted(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn on_open_segment(x: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let cross = (x[0] - a[0]) * dy - (x[1] - a[1]) * dx;
    let t = ((x[0] - a[0]) * dx + (x[1] - a[1]) * dy) / len2;
    cross.abs() <= 1e-12 * len2 && t > 1e-12 && t < 1.0 - 1e-12
}

/// Circumradius over inradius.
pub fn shape_ratio(v: &[[f64; 2]; 3]) -> f64 {
    let d = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let (a, b, c) = (d(v[1], v[2]), d(v[0], v[2]), d(v[0], v[1]));
    let area = 0.5
        * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs();
    let s = 0.5 * (a + b + c);
    let circ = a * b * c / (4.0 * area);
    let inr = area / s;
    circ / inr
}

/// The star of vertex `a`: its triangles in rotational order, with the edges
/// through `a` and those opposite to it.
#[derive(Debug, Clone)]
pub struct StarPatch {
    pub center: usize,
    pub interior: bool,
    pub triangles: Vec<usize>,
    /// Edges containing the center.
    pub inner_edges: Vec<usize>,
    /// Edges opposite the center, one per triangle.
    pub outer_edges: Vec<usize>,
    /// `max p_T` over the star.
    pub p_max: usize,
    pub degrees: Vec<usize>,
}

impl StarPatch {
    pub fn new(mesh: &HpMesh, a: usize) -> Self {
        let tris = mesh.vertex_triangles(a);
        let interior = !mesh.is_boundary_vertex(a);
        // walk across edges through `a`
        let through = |t: usize| -> Vec<usize> {
            mesh.tri_edges(t)
                .into_iter()
                .filter(|&e| mesh.edge(e).contains(&a))
                .collect()
        };
        let start = if interior {
            tris[0]
        } else {
            *tris
                .iter()
                .find(|&&t| through(t).iter().any(|&e| mesh.is_boundary_edge(e)))
                .unwrap_or(&tris[0])
        };
        let mut order = vec![start];
        let mut came: Option<usize> = if interior {
            None
        } else {
            through(start).into_iter().find(|&e| mesh.is_boundary_edge(e))
        };
        let mut cur = start;
        loop {
            let next_edge = through(cur).into_iter().find(|&e| Some(e) != came);
            let Some(e) = next_edge else { break };
            let Some(&n) = mesh.edge_triangles(e).iter().find(|&&s| s != cur) else { break };
            if n == start || order.contains(&n) {
                break;
            }
            order.push(n);
            came = Some(e);
            cur = n;
        }
        let mut inner: Vec<usize> = Vec::new();
        let mut outer = Vec::new();
        for &t in &order {
            for e in mesh.tri_edges(t) {
                if mesh.edge(e).contains(&a) {
                    if !inner.contains(&e) {
                        inner.push(e);
                    }
                } else {
                    outer.push(e);
                }
            }
        }
        let degrees: Vec<usize> = order.iter().map(|&t| mesh.degree(t)).collect();
        Self {
            center: a,
            interior,
            p_max: degrees.iter().copied().max().unwrap_or(1),
            triangles: order,
            inner_edges: inner,
            outer_edges: outer,
            degrees,
        }
    }

    /// Hat function `ψ_a` on triangle `t` of the star, at a physical point.
    pub fn hat(&self, mesh: &HpMesh, t: usize, x: f64, y: f64) -> f64 {
        let k = mesh.local_vertex(t, self.center).expect("triangle not in star");
        mesh.geometry(t).barycentric(x, y)[k]
    }

    pub fn hat_gradient(&self, mesh: &HpMesh, t: usize) -> [f64; 2] {
        let k = mesh.local_vertex(t, self.center).expect("triangle not in star");
        mesh.geometry(t).barycentric_gradients()[k]
    }
}

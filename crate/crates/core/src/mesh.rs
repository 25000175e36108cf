//! 2D simplicial meshes of the unit square.
//!
//! The mesh carries everything the lowest-order mixed assembly and the
//! spanning-tree construction need: oriented cell/edge incidence, globally
//! fixed edge normals, boundary identification, lengths and areas.
//!
//! Orientation conventions:
//! - every cell is stored counter-clockwise (positive signed area);
//! - an edge's global normal points from its lower-indexed incident cell to
//!   the higher-indexed one; boundary edge normals point outward;
//! - the incidence sign of (cell, edge) is +1 iff the global normal points
//!   out of that cell, so each interior edge carries opposite signs on its
//!   two cells.
//!
//! A mesh is immutable after construction and safe to share across threads.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Edge {
    /// Endpoint node indices, lower first.
    pub nodes: [usize; 2],
    /// Global unit normal, perpendicular to the edge.
    pub normal: [f64; 2],
    pub length: f64,
    /// Incident cells; interior edges have two, boundary edges one.
    pub cells: (usize, Option<usize>),
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }

    pub fn midpoint(&self, mesh: &Mesh2D) -> [f64; 2] {
        let a = mesh.nodes[self.nodes[0]];
        let b = mesh.nodes[self.nodes[1]];
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }
}

#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub nodes: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Per cell: the three incident edges with incidence signs.
    pub cell_edges: Vec<[(usize, i8); 3]>,
    pub boundary_edges: Vec<usize>,
    pub cell_areas: Vec<f64>,
}

impl Mesh2D {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn cell_centroid(&self, c: usize) -> [f64; 2] {
        let [a, b, d] = self.cells[c];
        let (pa, pb, pd) = (self.nodes[a], self.nodes[b], self.nodes[d]);
        [
            (pa[0] + pb[0] + pd[0]) / 3.0,
            (pa[1] + pb[1] + pd[1]) / 3.0,
        ]
    }

    /// Midpoints of the three cell edges; the assembly quadrature points.
    pub fn cell_edge_midpoints(&self, c: usize) -> [[f64; 2]; 3] {
        let [a, b, d] = self.cells[c];
        let (pa, pb, pd) = (self.nodes[a], self.nodes[b], self.nodes[d]);
        [
            [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])],
            [0.5 * (pb[0] + pd[0]), 0.5 * (pb[1] + pd[1])],
            [0.5 * (pd[0] + pa[0]), 0.5 * (pd[1] + pa[1])],
        ]
    }

    /// Build a mesh from raw geometry; all connectivity is derived here and
    /// every invariant is checked.
    pub fn from_nodes_cells(nodes: Vec<[f64; 2]>, cells: Vec<[usize; 3]>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::MeshInvariant("mesh has no cells".into()));
        }
        for (c, cell) in cells.iter().enumerate() {
            for &v in cell {
                if v >= nodes.len() {
                    return Err(Error::MeshInvariant(format!(
                        "cell {c} references node {v} out of {}",
                        nodes.len()
                    )));
                }
            }
            if cell[0] == cell[1] || cell[1] == cell[2] || cell[0] == cell[2] {
                return Err(Error::MeshInvariant(format!("cell {c} repeats a node")));
            }
        }

        let mut cell_areas = Vec::with_capacity(cells.len());
        for (c, &[a, b, d]) in cells.iter().enumerate() {
            let area = 0.5 * cross(sub(nodes[b], nodes[a]), sub(nodes[d], nodes[a]));
            if area <= 0.0 {
                return Err(Error::MeshInvariant(format!(
                    "cell {c} has non-positive signed area {area:.3e}"
                )));
            }
            cell_areas.push(area);
        }

        // Edge discovery in first-encounter order over cells.
        let mut edge_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut cell_edges: Vec<[(usize, i8); 3]> = vec![[(0, 0); 3]; cells.len()];
        for (c, &[a, b, d]) in cells.iter().enumerate() {
            for (slot, (u, v)) in [(a, b), (b, d), (d, a)].into_iter().enumerate() {
                let key = (u.min(v), u.max(v));
                let e = match edge_of.get(&key) {
                    Some(&e) => {
                        if edges[e].cells.1.is_some() {
                            return Err(Error::MeshInvariant(format!(
                                "edge ({}, {}) shared by more than two cells",
                                key.0, key.1
                            )));
                        }
                        edges[e].cells.1 = Some(c);
                        e
                    }
                    None => {
                        let pa = nodes[key.0];
                        let pb = nodes[key.1];
                        let t = sub(pb, pa);
                        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
                        if len == 0.0 {
                            return Err(Error::MeshInvariant(format!(
                                "edge ({}, {}) has zero length",
                                key.0, key.1
                            )));
                        }
                        let e = edges.len();
                        edge_of.insert(key, e);
                        edges.push(Edge {
                            nodes: [key.0, key.1],
                            normal: [t[1] / len, -t[0] / len],
                            length: len,
                            cells: (c, None),
                        });
                        e
                    }
                };
                cell_edges[c][slot] = (e, 0);
            }
        }

        // Fix global normals, then derive incidence signs.
        let centroid = |c: usize| -> [f64; 2] {
            let [a, b, d] = cells[c];
            [
                (nodes[a][0] + nodes[b][0] + nodes[d][0]) / 3.0,
                (nodes[a][1] + nodes[b][1] + nodes[d][1]) / 3.0,
            ]
        };
        let mut boundary_edges = Vec::new();
        for (e, edge) in edges.iter_mut().enumerate() {
            let mid = [
                0.5 * (nodes[edge.nodes[0]][0] + nodes[edge.nodes[1]][0]),
                0.5 * (nodes[edge.nodes[0]][1] + nodes[edge.nodes[1]][1]),
            ];
            match edge.cells {
                (c1, Some(c2)) => {
                    let (lo, hi) = if c1 < c2 { (c1, c2) } else { (c2, c1) };
                    edge.cells = (lo, Some(hi));
                    let towards_hi = sub(centroid(hi), centroid(lo));
                    if dot2(edge.normal, towards_hi) < 0.0 {
                        edge.normal = [-edge.normal[0], -edge.normal[1]];
                    }
                }
                (c1, None) => {
                    let outward = sub(mid, centroid(c1));
                    if dot2(edge.normal, outward) < 0.0 {
                        edge.normal = [-edge.normal[0], -edge.normal[1]];
                    }
                    boundary_edges.push(e);
                }
            }
        }
        for (c, slots) in cell_edges.iter_mut().enumerate() {
            for (e, sign) in slots.iter_mut() {
                let edge = &edges[*e];
                *sign = match edge.cells {
                    (c1, Some(_)) if c1 == c => 1,
                    (_, Some(c2)) if c2 == c => -1,
                    (c1, None) if c1 == c => 1,
                    _ => {
                        return Err(Error::MeshInvariant(format!(
                            "cell {c} not incident to its own edge {e}"
                        )))
                    }
                };
            }
        }

        let mesh = Mesh2D {
            nodes,
            cells,
            edges,
            cell_edges,
            boundary_edges,
            cell_areas,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Check every structural invariant, naming the first one that fails.
    pub fn validate(&self) -> Result<()> {
        // Euler relation for planar triangulations of a disk.
        if self.n_nodes() != self.n_edges() - (self.n_cells() - 1) {
            return Err(Error::MeshInvariant(format!(
                "Euler relation: {} nodes != {} edges - ({} cells - 1)",
                self.n_nodes(),
                self.n_edges(),
                self.n_cells()
            )));
        }
        for (e, edge) in self.edges.iter().enumerate() {
            let n = edge.normal;
            if ((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() > 1e-12 {
                return Err(Error::MeshInvariant(format!("edge {e} normal not unit")));
            }
            let t = sub(self.nodes[edge.nodes[1]], self.nodes[edge.nodes[0]]);
            if dot2(n, t).abs() > 1e-12 * edge.length {
                return Err(Error::MeshInvariant(format!(
                    "edge {e} normal not perpendicular to the edge"
                )));
            }
        }
        // Interior edges: exactly two cells, opposite signs; boundary: one.
        let mut signs: Vec<Vec<(usize, i8)>> = vec![Vec::new(); self.n_edges()];
        for (c, slots) in self.cell_edges.iter().enumerate() {
            for &(e, s) in slots {
                signs[e].push((c, s));
            }
        }
        for (e, inc) in signs.iter().enumerate() {
            let edge = &self.edges[e];
            match (edge.is_boundary(), inc.len()) {
                (true, 1) => {}
                (false, 2) => {
                    if inc[0].1 * inc[1].1 != -1 {
                        return Err(Error::MeshInvariant(format!(
                            "interior edge {e} incidence signs do not oppose"
                        )));
                    }
                }
                (b, n) => {
                    return Err(Error::MeshInvariant(format!(
                        "edge {e} (boundary: {b}) incident to {n} cells"
                    )));
                }
            }
        }
        if self.cell_areas.iter().any(|&a| a <= 0.0) {
            return Err(Error::MeshInvariant("non-positive cell area".into()));
        }
        Ok(())
    }

    /// Save in the mesh text format; connectivity is never serialized.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mesh2d {} {}", self.n_nodes(), self.n_cells());
        for p in &self.nodes {
            // Shortest round-trip representation: reload is bit-exact.
            let _ = writeln!(s, "{:?} {:?}", p[0], p[1]);
        }
        for c in &self.cells {
            let _ = writeln!(s, "{} {} {}", c[0], c[1], c[2]);
        }
        s
    }
}

/// Structured triangulation of the unit square: `n × n` squares, each split
/// along the diagonal from its lower-left to its upper-right corner.
///
/// Counts: `(n+1)²` nodes, `2n²` cells, `3n² + 2n` edges; `h = 1/n`.
pub fn structured_unit_square(n: usize) -> Result<Mesh2D> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "structured grid needs n >= 1".into(),
        ));
    }
    let np = n + 1;
    let mut nodes = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            nodes.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let id = |i: usize, j: usize| j * np + i;
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            cells.push([a, b, c]);
            cells.push([a, c, d]);
        }
    }
    Mesh2D::from_nodes_cells(nodes, cells)
}

/// Parse the mesh text format; connectivity is derived, not read.
pub fn load_mesh(path: &Path) -> Result<Mesh2D> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

pub fn parse_mesh(text: &str) -> Result<Mesh2D> {
    let mut lines = text.lines().enumerate();
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::MeshParse { line: 1, msg: "empty file".into() })?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("mesh2d") {
        return Err(Error::MeshParse {
            line: line_no + 1,
            msg: "expected header `mesh2d <n_nodes> <n_cells>`".into(),
        });
    }
    let n_nodes: usize = parse_field(parts.next(), line_no + 1, "node count")?;
    let n_cells: usize = parse_field(parts.next(), line_no + 1, "cell count")?;

    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (ln, s) = lines.next().ok_or_else(|| Error::MeshParse {
            line: n_nodes + 1,
            msg: "unexpected end of file in node block".into(),
        })?;
        let mut p = s.split_whitespace();
        let x: f64 = parse_field(p.next(), ln + 1, "node x")?;
        let y: f64 = parse_field(p.next(), ln + 1, "node y")?;
        nodes.push([x, y]);
    }
    let mut cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let (ln, s) = lines.next().ok_or_else(|| Error::MeshParse {
            line: n_nodes + n_cells + 1,
            msg: "unexpected end of file in cell block".into(),
        })?;
        let mut p = s.split_whitespace();
        let i: usize = parse_field(p.next(), ln + 1, "cell node")?;
        let j: usize = parse_field(p.next(), ln + 1, "cell node")?;
        let k: usize = parse_field(p.next(), ln + 1, "cell node")?;
        cells.push([i, j, k]);
    }
    Mesh2D::from_nodes_cells(nodes, cells)
}

fn parse_field<T: std::str::FromStr>(
    field: Option<&str>,
    line: usize,
    what: &str,
) -> Result<T> {
    field
        .ok_or_else(|| Error::MeshParse {
            line,
            msg: format!("missing {what}"),
        })?
        .parse()
        .map_err(|_| Error::MeshParse {
            line,
            msg: format!("malformed {what}"),
        })
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_structured_grid_counts() {
        let m = structured_unit_square(1).unwrap();
        assert_eq!(m.n_nodes(), 4);
        assert_eq!(m.n_cells(), 2);
        assert_eq!(m.n_edges(), 5);
        assert_eq!(m.n_nodes(), m.n_edges() - (m.n_cells() - 1));
    }

    #[test]
    fn structured_grid_counts_match_formulae() {
        for n in [2, 4, 16, 32] {
            let m = structured_unit_square(n).unwrap();
            assert_eq!(m.n_nodes(), (n + 1) * (n + 1));
            assert_eq!(m.n_cells(), 2 * n * n);
            assert_eq!(m.n_edges(), 3 * n * n + 2 * n);
        }
        // n = 16: 289 nodes, 512 cells, 800 edges.
        let m = structured_unit_square(16).unwrap();
        assert_eq!((m.n_nodes(), m.n_cells(), m.n_edges()), (289, 512, 800));
        // n = 32 and the published unstructured counts obey the same relation.
        let m = structured_unit_square(32).unwrap();
        assert_eq!((m.n_nodes(), m.n_cells(), m.n_edges()), (1089, 2048, 3136));
        assert_eq!(1265, 3664 - (2400 - 1));
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(matches!(
            structured_unit_square(0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn unit_square_area_sums_to_one() {
        for n in [1, 3, 8] {
            let m = structured_unit_square(n).unwrap();
            let total: f64 = m.cell_areas.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_edge_signs_oppose() {
        let m = structured_unit_square(4).unwrap();
        let mut by_edge: Vec<Vec<i8>> = vec![Vec::new(); m.n_edges()];
        for slots in &m.cell_edges {
            for &(e, s) in slots {
                by_edge[e].push(s);
            }
        }
        for (e, signs) in by_edge.iter().enumerate() {
            if m.edges[e].is_boundary() {
                assert_eq!(signs.len(), 1);
            } else {
                assert_eq!(signs.len(), 2);
                assert_eq!(signs[0] * signs[1], -1);
            }
        }
    }

    #[test]
    fn boundary_normals_point_outward() {
        let m = structured_unit_square(3).unwrap();
        for &e in &m.boundary_edges {
            let edge = &m.edges[e];
            let mid = edge.midpoint(&m);
            // On the unit square the outward normal at a boundary edge has a
            // positive component along (mid - center).
            let out = [mid[0] - 0.5, mid[1] - 0.5];
            assert!(edge.normal[0] * out[0] + edge.normal[1] * out[1] > 0.0);
        }
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let text = "mesh2d 3 1\n0 0\n1 0\n2 0\n0 1 2\n";
        assert!(matches!(parse_mesh(text), Err(Error::MeshInvariant(_))));
    }

    #[test]
    fn malformed_file_reports_line() {
        let text = "mesh2d 2 1\n0 0\nnot-a-number 1\n0 1 2\n";
        match parse_mesh(text) {
            Err(Error::MeshParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn save_load_roundtrip_bitwise() {
        let m = structured_unit_square(8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.txt");
        m.save(&path).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(m.nodes, back.nodes);
        assert_eq!(m.cells, back.cells);
        // Connectivity is derived deterministically, so it matches too.
        assert_eq!(m.cell_edges, back.cell_edges);
        assert_eq!(m.boundary_edges, back.boundary_edges);
    }

    #[test]
    fn loaded_permuted_mesh_matches_structured_up_to_indexing() {
        // Same two triangles as structured_unit_square(1) with nodes renumbered.
        let text = "mesh2d 4 2\n1 1\n0 0\n1 0\n0 1\n1 2 0\n1 0 3\n";
        let m = parse_mesh(text).unwrap();
        let s = structured_unit_square(1).unwrap();
        assert_eq!(m.n_nodes(), s.n_nodes());
        assert_eq!(m.n_cells(), s.n_cells());
        assert_eq!(m.n_edges(), s.n_edges());
        let mut a: Vec<_> = m.nodes.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
        let mut b: Vec<_> = s.nodes.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        let area: f64 = m.cell_areas.iter().sum();
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euler_relation_on_loaded_meshes() {
        let m = structured_unit_square(5).unwrap();
        let back = parse_mesh(&m.to_text()).unwrap();
        assert_eq!(
            back.n_nodes(),
            back.n_edges() - (back.n_cells() - 1)
        );
    }
}

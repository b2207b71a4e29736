//! Structured hexahedral reference meshes, their extrusion into a 4D space-time complex
//! through the rotation placement map, incidence matrices, dual-facet bivectors and DoF maps.
//!
//! Orientation is inherited from the reference axes: edges point along increasing logical
//! coordinate, faces are oriented by their two axes in ascending order, volumes by
//! (ρ, φ, z). A timelike facet over edge `l` is oriented γ_t∧l ("first time then space").
//! With these conventions every local tesseract facet agrees with its global facet, so no
//! local/global sign table is needed.
//!
//! Global facet numbering follows the time-layer order b⁰, e^{1/2}, b¹, … : facet `m` at
//! time `t_n` has index `n·(F + E) + m`, the timelike facet over edge `l` on
//! `[t_n, t_{n+1}]` has index `n·(F + E) + F + l`.

use crate::sta::{Bivector, CausalClass, FourVector};
use crate::whitney::{self, CellMap, LocalFacet};
use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid mesh dimensions: {0}")]
    InvalidDimensions(String),
    #[error("invalid time step: {0}")]
    InvalidTimeStep(String),
    #[error("facet {facet} is not timelike (class {class:?}); reduce Ω·Δt or refine the mesh")]
    NotTimelike { facet: usize, class: CausalClass },
    #[error("facet {facet} is not spacelike (class {class:?})")]
    NotSpacelike { facet: usize, class: CausalClass },
    #[error("mesh needs at least {needed} time intervals, has {have}")]
    TooFewLayers { needed: usize, have: usize },
}

/// Reference-domain shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// Annulus a < r < b, 0 < z < h; logical axes (ρ, φ, z), periodic in φ.
    Ring { a: f64, b: f64, h: f64 },
    /// Box [0,lx]×[0,ly]×[0,lz]; logical axes (x, y, z).
    Box { lx: f64, ly: f64, lz: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Edge {
    pub nodes: [usize; 2],
    pub axis: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Face {
    /// Corner nodes in counter-clockwise order with respect to the face orientation.
    pub nodes: [usize; 4],
    /// Spanned logical axes, ascending.
    pub axes: (usize, usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Volume {
    /// Nodes in local vertex order: bit k of the index selects the high side of axis k.
    pub nodes: [usize; 8],
    /// Edge along axis d at the corner code of the two other axes: `edges[4d + code]`,
    /// code bit 0 = high side of the lower other axis, bit 1 = of the higher one.
    pub edges: [usize; 12],
    /// Face normal to axis c on side s: `faces[2c + s]`.
    pub faces: [usize; 6],
}

/// 3D structured hexahedral mesh.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mesh3 {
    pub domain: Domain,
    pub divisions: [usize; 3],
    pub periodic: [bool; 3],
    pub nodes: Vec<[f64; 3]>,
    /// (r, φ, z) of every node.
    pub cylindrical: Vec<[f64; 3]>,
    pub edges: Vec<Edge>,
    pub faces: Vec<Face>,
    pub volumes: Vec<Volume>,
    pub boundary_edge: Vec<bool>,
    pub boundary_face: Vec<bool>,
}

struct Grid {
    div: [usize; 3],
    periodic: [bool; 3],
}

impl Grid {
    fn node_count(&self, axis: usize) -> usize {
        if self.periodic[axis] {
            self.div[axis]
        } else {
            self.div[axis] + 1
        }
    }
    fn node(&self, ijk: [usize; 3]) -> usize {
        let n = [self.node_count(0), self.node_count(1), self.node_count(2)];
        let w: [usize; 3] = std::array::from_fn(|k| ijk[k] % n[k]);
        (w[2] * n[1] + w[1]) * n[0] + w[0]
    }
    /// Whether a node index sits on a non-periodic extreme of `axis`.
    fn on_wall(&self, ijk: [usize; 3], axis: usize) -> bool {
        !self.periodic[axis] && (ijk[axis] == 0 || ijk[axis] == self.div[axis])
    }
    /// Number of edge or cell starts along `axis` for an element that extends along it.
    fn starts_along(&self, axis: usize) -> usize {
        self.div[axis]
    }
}

fn unit(axis: usize) -> [usize; 3] {
    let mut u = [0; 3];
    u[axis] = 1;
    u
}

fn add(a: [usize; 3], b: [usize; 3]) -> [usize; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

impl Mesh3 {
    /// Annular hexahedral mesh with straight edges, nodes on the tensor grid (r_i, φ_j, z_k).
    pub fn ring(a: f64, b: f64, h: f64, n_r: usize, n_theta: usize, n_z: usize) -> Result<Self, MeshError> {
        if !(a > 0.0 && b > a && h > 0.0) || !(a.is_finite() && b.is_finite() && h.is_finite()) {
            return Err(MeshError::InvalidDimensions(format!("need 0 < a < b and h > 0, got a={a}, b={b}, h={h}")));
        }
        if n_r < 1 || n_theta < 3 || n_z < 1 {
            return Err(MeshError::InvalidDimensions(format!(
                "need N_r ≥ 1, N_θ ≥ 3, N_z ≥ 1, got {n_r}, {n_theta}, {n_z}"
            )));
        }
        let coord = move |ijk: [usize; 3]| {
            let r = a + (b - a) * ijk[0] as f64 / n_r as f64;
            let phi = 2.0 * PI * (ijk[1] % n_theta) as f64 / n_theta as f64;
            let z = h * ijk[2] as f64 / n_z as f64;
            ([r * phi.cos(), r * phi.sin(), z], [r, phi, z])
        };
        Ok(Self::structured(Domain::Ring { a, b, h }, [n_r, n_theta, n_z], [false, true, false], coord))
    }

    /// Cartesian box mesh; all six walls are boundary.
    pub fn cartesian_box(lx: f64, ly: f64, lz: f64, nx: usize, ny: usize, nz: usize) -> Result<Self, MeshError> {
        if !(lx > 0.0 && ly > 0.0 && lz > 0.0) || nx < 1 || ny < 1 || nz < 1 {
            return Err(MeshError::InvalidDimensions(format!(
                "box needs positive extents and divisions, got {lx}×{ly}×{lz}, {nx}×{ny}×{nz}"
            )));
        }
        let coord = move |ijk: [usize; 3]| {
            let p = [lx * ijk[0] as f64 / nx as f64, ly * ijk[1] as f64 / ny as f64, lz * ijk[2] as f64 / nz as f64];
            (p, [p[0].hypot(p[1]), p[1].atan2(p[0]), p[2]])
        };
        Ok(Self::structured(Domain::Box { lx, ly, lz }, [nx, ny, nz], [false; 3], coord))
    }

    fn structured<F>(domain: Domain, div: [usize; 3], periodic: [bool; 3], coord: F) -> Self
    where
        F: Fn([usize; 3]) -> ([f64; 3], [f64; 3]),
    {
        let g = Grid { div, periodic };
        let nn = [g.node_count(0), g.node_count(1), g.node_count(2)];
        let mut nodes = Vec::with_capacity(nn.iter().product());
        let mut cylindrical = Vec::with_capacity(nodes.capacity());
        for k in 0..nn[2] {
            for j in 0..nn[1] {
                for i in 0..nn[0] {
                    let (p, c) = coord([i, j, k]);
                    nodes.push(p);
                    cylindrical.push(c);
                }
            }
        }

        // Elements are enumerated by base node over the index ranges where they exist.
        let range = |axis: usize, extends: bool| -> usize {
            if extends {
                g.starts_along(axis)
            } else {
                g.node_count(axis)
            }
        };
        let for_each = |ext: [bool; 3], f: &mut dyn FnMut([usize; 3])| {
            for k in 0..range(2, ext[2]) {
                for j in 0..range(1, ext[1]) {
                    for i in 0..range(0, ext[0]) {
                        f([i, j, k]);
                    }
                }
            }
        };

        let mut edges = Vec::new();
        let mut boundary_edge = Vec::new();
        let mut edge_index = std::collections::HashMap::new();
        for axis in 0..3 {
            let mut ext = [false; 3];
            ext[axis] = true;
            for_each(ext, &mut |ijk| {
                let n0 = g.node(ijk);
                let n1 = g.node(add(ijk, unit(axis)));
                edge_index.insert((axis, g.node(ijk)), edges.len());
                edges.push(Edge { nodes: [n0, n1], axis });
                boundary_edge.push((0..3).filter(|&d| d != axis).any(|d| g.on_wall(ijk, d)));
            });
        }

        let mut faces = Vec::new();
        let mut boundary_face = Vec::new();
        let mut face_index = std::collections::HashMap::new();
        for (a0, a1) in [(0, 1), (0, 2), (1, 2)] {
            let normal = 3 - a0 - a1;
            let mut ext = [false; 3];
            ext[a0] = true;
            ext[a1] = true;
            for_each(ext, &mut |ijk| {
                let p0 = g.node(ijk);
                let p1 = g.node(add(ijk, unit(a0)));
                let p2 = g.node(add(add(ijk, unit(a0)), unit(a1)));
                let p3 = g.node(add(ijk, unit(a1)));
                face_index.insert((normal, g.node(ijk)), faces.len());
                faces.push(Face { nodes: [p0, p1, p2, p3], axes: (a0, a1) });
                boundary_face.push(g.on_wall(ijk, normal));
            });
        }

        let mut volumes = Vec::new();
        for_each([true; 3], &mut |ijk| {
            let corner = |bits: usize| add(ijk, [bits & 1, (bits >> 1) & 1, (bits >> 2) & 1]);
            let nodes: [usize; 8] = std::array::from_fn(|v| g.node(corner(v)));
            let edges_of: [usize; 12] = std::array::from_fn(|slot| {
                let (d, code) = (slot / 4, slot % 4);
                let others: Vec<usize> = (0..3).filter(|&o| o != d).collect();
                let mut off = [0; 3];
                off[others[0]] = code & 1;
                off[others[1]] = (code >> 1) & 1;
                edge_index[&(d, g.node(add(ijk, off)))]
            });
            let faces_of: [usize; 6] = std::array::from_fn(|slot| {
                let (c, s) = (slot / 2, slot % 2);
                let mut off = [0; 3];
                off[c] = s;
                face_index[&(c, g.node(add(ijk, off)))]
            });
            volumes.push(Volume { nodes, edges: edges_of, faces: faces_of });
        });

        Self {
            domain,
            divisions: div,
            periodic,
            nodes,
            cylindrical,
            edges,
            faces,
            volumes,
            boundary_edge,
            boundary_face,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }
    pub fn n_volumes(&self) -> usize {
        self.volumes.len()
    }

    /// Node-to-edge incidence (gradient), edges × nodes.
    pub fn gradient(&self) -> CsMat<i32> {
        let mut t = TriMat::new((self.n_edges(), self.n_nodes()));
        for (e, edge) in self.edges.iter().enumerate() {
            t.add_triplet(e, edge.nodes[0], -1);
            t.add_triplet(e, edge.nodes[1], 1);
        }
        t.to_csr()
    }

    /// Edge-to-face incidence (curl C), faces × edges.
    pub fn curl(&self) -> CsMat<i32> {
        let mut t = TriMat::new((self.n_faces(), self.n_edges()));
        let lookup = self.edge_lookup();
        for (f, face) in self.faces.iter().enumerate() {
            let (a0, a1) = face.axes;
            let [p0, p1, _, p3] = face.nodes;
            // ∂(I_a0 × I_a1) = (a1-edge at a0 high) − (a1-edge at a0 low)
            //                 − (a0-edge at a1 high) + (a0-edge at a1 low)
            t.add_triplet(f, lookup[&(a0, p0)], 1);
            t.add_triplet(f, lookup[&(a1, p1)], 1);
            t.add_triplet(f, lookup[&(a0, p3)], -1);
            t.add_triplet(f, lookup[&(a1, p0)], -1);
        }
        t.to_csr()
    }

    /// Face-to-volume incidence (divergence), volumes × faces.
    pub fn divergence(&self) -> CsMat<i32> {
        let mut t = TriMat::new((self.n_volumes(), self.n_faces()));
        for (v, vol) in self.volumes.iter().enumerate() {
            for c in 0..3 {
                // ∂(I0×I1×I2): face normal to axis c carries (−1)^c, high side +, low side −.
                let sign = if c == 1 { -1 } else { 1 };
                t.add_triplet(v, vol.faces[2 * c + 1], sign);
                t.add_triplet(v, vol.faces[2 * c], -sign);
            }
        }
        t.to_csr()
    }

    fn edge_lookup(&self) -> std::collections::HashMap<(usize, usize), usize> {
        self.edges.iter().enumerate().map(|(i, e)| ((e.axis, e.nodes[0]), i)).collect()
    }

    /// Edge midpoint radius.
    pub fn edge_mid_radius(&self, l: usize) -> f64 {
        let [p, q] = self.edges[l].nodes;
        let (a, b) = (self.nodes[p], self.nodes[q]);
        (0.5 * (a[0] + b[0])).hypot(0.5 * (a[1] + b[1]))
    }

    pub fn write_json<W: Write>(&self, w: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, self)
    }

    /// Legacy VTK unstructured-grid text of the reference layer, with a boundary flag per cell
    /// count of boundary faces.
    pub fn write_vtk<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "reference layer")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", self.n_nodes())?;
        for p in &self.nodes {
            writeln!(w, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
        }
        writeln!(w, "CELLS {} {}", self.n_volumes(), 9 * self.n_volumes())?;
        // VTK hexahedron order: bottom quad counter-clockwise, then top quad.
        const VTK_ORDER: [usize; 8] = [0, 1, 3, 2, 4, 5, 7, 6];
        for v in &self.volumes {
            write!(w, "8")?;
            for &k in &VTK_ORDER {
                write!(w, " {}", v.nodes[k])?;
            }
            writeln!(w)?;
        }
        writeln!(w, "CELL_TYPES {}", self.n_volumes())?;
        for _ in &self.volumes {
            writeln!(w, "12")?;
        }
        writeln!(w, "CELL_DATA {}", self.n_volumes())?;
        writeln!(w, "SCALARS boundary_faces int 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in &self.volumes {
            writeln!(w, "{}", v.faces.iter().filter(|&&f| self.boundary_face[f]).count())?;
        }
        Ok(())
    }
}

/// Rim speed of the constant-rotation law, v(r) = tanh(rΩ).
pub fn velocity_profile(r: f64, omega: f64) -> f64 {
    (r * omega).tanh()
}

/// Rotation angle accumulated by reference point at radius `r` after time `t`.
pub fn rotation_angle(r: f64, t: f64, omega: f64) -> f64 {
    if r.abs() < 1e-300 || (r * omega).abs() < 1e-8 {
        // tanh(x)/x = 1 − x²/3 + O(x⁴); also the r → 0 limit Ω t.
        let x = r * omega;
        omega * t * (1.0 - x * x / 3.0)
    } else {
        (r * omega).tanh() * t / r
    }
}

/// Event of reference point (r, φ, z) at reference time t.
pub fn placement(cyl: &[f64; 3], t: f64, omega: f64) -> FourVector {
    let [r, phi, z] = *cyl;
    let theta = phi + rotation_angle(r, t, omega);
    FourVector::new(t, r * theta.cos(), r * theta.sin(), z)
}

/// Four-velocity of the rotating observer at reference point (r, φ) and time t.
pub fn observer_velocity(cyl: &[f64; 3], t: f64, omega: f64) -> FourVector {
    let [r, phi, _] = *cyl;
    let theta = phi + rotation_angle(r, t, omega);
    let (ch, sh) = ((r * omega).cosh(), (r * omega).sinh());
    FourVector::new(ch, -sh * theta.sin(), sh * theta.cos(), 0.0)
}

/// Which dual-mesh construction supplies W̃.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualVariant {
    /// Dual edges are straight segments between 4D cell barycenters; facets are triangle fans.
    StraightEdge,
    /// Dual facets pass through the barycenters of every primal object they cross.
    Barycentric,
}

/// Primal DoF kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DofKind {
    /// Spacelike facet (reference face m, time t_n).
    B,
    /// Timelike facet (reference edge l, interval [t_n, t_{n+1}]).
    E,
}

/// Position of a global facet in the layered numbering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofIndex {
    pub kind: DofKind,
    /// Face index for B, edge index for E.
    pub reference: usize,
    /// Time layer n (B at t_n, E on [t_n, t_{n+1}]).
    pub step: usize,
}

/// Extruded space-time mesh over `n_t` time intervals.
#[derive(Clone, Debug)]
pub struct Mesh4 {
    pub mesh3: Mesh3,
    pub dt: f64,
    pub n_t: usize,
    pub omega: f64,
    /// Node events, layer-major: `events[n·N + p]`.
    pub events: Vec<FourVector>,
    /// Volume across face slot `2c + s` of each reference volume.
    neighbours: Vec<[Option<usize>; 6]>,
}

impl Mesh4 {
    /// Places every reference node at t_n = n·Δt for n = 0..=n_t.
    pub fn extrude(mesh3: &Mesh3, dt: f64, n_t: usize, omega: f64) -> Result<Self, MeshError> {
        if !(dt > 0.0 && dt.is_finite()) || n_t < 1 {
            return Err(MeshError::InvalidTimeStep(format!("need Δt > 0 and N_t ≥ 1, got {dt}, {n_t}")));
        }
        if !omega.is_finite() {
            return Err(MeshError::InvalidTimeStep("Ω must be finite".into()));
        }
        let mut events = Vec::with_capacity((n_t + 1) * mesh3.n_nodes());
        for n in 0..=n_t {
            let t = n as f64 * dt;
            events.extend(mesh3.cylindrical.iter().map(|c| placement(c, t, omega)));
        }
        Self::from_events(mesh3, dt, n_t, omega, events)
    }

    /// Builds the complex from explicitly placed node events (layer-major) and checks that
    /// vertical facets are timelike and layer facets spacelike.
    pub fn from_events(
        mesh3: &Mesh3,
        dt: f64,
        n_t: usize,
        omega: f64,
        events: Vec<FourVector>,
    ) -> Result<Self, MeshError> {
        if events.len() != (n_t + 1) * mesh3.n_nodes() {
            return Err(MeshError::InvalidDimensions(format!(
                "expected {} events, got {}",
                (n_t + 1) * mesh3.n_nodes(),
                events.len()
            )));
        }
        let mut owners: Vec<Vec<usize>> = vec![Vec::new(); mesh3.n_faces()];
        for (v, vol) in mesh3.volumes.iter().enumerate() {
            for &f in &vol.faces {
                owners[f].push(v);
            }
        }
        let neighbours = mesh3
            .volumes
            .iter()
            .enumerate()
            .map(|(v, vol)| std::array::from_fn(|slot| owners[vol.faces[slot]].iter().copied().find(|&w| w != v)))
            .collect();
        let m4 = Self { mesh3: mesh3.clone(), dt, n_t, omega, events, neighbours };
        m4.check_causal_classes()?;
        Ok(m4)
    }

    pub fn n_cells(&self) -> usize {
        self.n_t * self.mesh3.n_volumes()
    }

    /// Facets per time layer block (F + E).
    pub fn layer_stride(&self) -> usize {
        self.mesh3.n_faces() + self.mesh3.n_edges()
    }

    pub fn n_facets(&self) -> usize {
        self.n_t * self.layer_stride() + self.mesh3.n_faces()
    }

    pub fn event(&self, node3: usize, layer: usize) -> FourVector {
        self.events[layer * self.mesh3.n_nodes() + node3]
    }

    pub fn b_index(&self, face: usize, step: usize) -> usize {
        step * self.layer_stride() + face
    }

    pub fn e_index(&self, edge: usize, step: usize) -> usize {
        step * self.layer_stride() + self.mesh3.n_faces() + edge
    }

    /// Inverse of the layered numbering.
    pub fn dof_index(&self, facet: usize) -> DofIndex {
        let stride = self.layer_stride();
        let (step, rem) = (facet / stride, facet % stride);
        if rem < self.mesh3.n_faces() {
            DofIndex { kind: DofKind::B, reference: rem, step }
        } else {
            DofIndex { kind: DofKind::E, reference: rem - self.mesh3.n_faces(), step }
        }
    }

    /// Whether a global facet carries a PEC constraint (timelike facet over a wall edge) or
    /// lies in a wall (spacelike facet on a wall face).
    pub fn on_boundary(&self, facet: usize) -> bool {
        let d = self.dof_index(facet);
        match d.kind {
            DofKind::B => self.mesh3.boundary_face[d.reference],
            DofKind::E => self.mesh3.boundary_edge[d.reference],
        }
    }

    /// Cell (volume v, interval n) as a cell map; 4D vertex index = t-bit + 2·(3D vertex).
    pub fn cell_map(&self, cell: usize) -> CellMap {
        let (n, v) = (cell / self.mesh3.n_volumes(), cell % self.mesh3.n_volumes());
        let vol = &self.mesh3.volumes[v];
        CellMap::new(std::array::from_fn(|k| self.event(vol.nodes[k >> 1], n + (k & 1))))
    }

    /// Global facet of local facet `f` in `cell`.
    pub fn global_facet(&self, cell: usize, f: &LocalFacet) -> usize {
        let (n, v) = (cell / self.mesh3.n_volumes(), cell % self.mesh3.n_volumes());
        let vol = &self.mesh3.volumes[v];
        let high = |s: i8| usize::from(s > 0);
        if f.is_timelike() {
            // Spatial axis of the edge and the two fixed spatial axes (reference axes 1..4).
            let d = f.span.1 - 1;
            let code = high(f.signs.0) + 2 * high(f.signs.1);
            self.e_index(vol.edges[4 * d + code], n)
        } else {
            // Fixed axes are t (i = 0) and one spatial axis c.
            let c = f.fixed.1 - 1;
            let face = vol.faces[2 * c + high(f.signs.1)];
            self.b_index(face, n + high(f.signs.0))
        }
    }

    /// Oriented bivector of a global facet (half the wedge of the quad diagonals).
    pub fn facet_bivector(&self, facet: usize) -> Bivector {
        let d = self.dof_index(facet);
        match d.kind {
            DofKind::B => {
                let [p0, p1, p2, p3] = self.mesh3.faces[d.reference].nodes;
                let e = |p| self.event(p, d.step);
                whitney::quad_bivector(&e(p0), &e(p1), &e(p2), &e(p3))
            }
            DofKind::E => {
                let [p, q] = self.mesh3.edges[d.reference].nodes;
                let (n, m) = (d.step, d.step + 1);
                whitney::quad_bivector(&self.event(p, n), &self.event(p, m), &self.event(q, m), &self.event(q, n))
            }
        }
    }

    pub fn facet_class(&self, facet: usize) -> CausalClass {
        self.facet_bivector(facet).to_multivector().classify().unwrap_or(CausalClass::Lightlike)
    }

    fn check_causal_classes(&self) -> Result<(), MeshError> {
        for facet in 0..self.n_facets() {
            let class = self.facet_class(facet);
            match self.dof_index(facet).kind {
                DofKind::E if class != CausalClass::Timelike => return Err(MeshError::NotTimelike { facet, class }),
                DofKind::B if class != CausalClass::Spacelike => return Err(MeshError::NotSpacelike { facet, class }),
                _ => {}
            }
        }
        Ok(())
    }

    /// Incidence D^k between (k+1)-cells and k-cells, k = 0..=3.
    ///
    /// Spatial k-cells σ at layer n keep their reference incidence; the timelike (k+1)-cell
    /// I×σ over [t_n, t_{n+1}] has boundary σ_{n+1} − σ_n − I×∂σ.
    pub fn incidence(&self, k: usize) -> CsMat<i32> {
        let m = &self.mesh3;
        let nt = self.n_t;
        // Reference incidence d_k: (k+1)-cells × k-cells of M³; counts c_k.
        let counts = [m.n_nodes(), m.n_edges(), m.n_faces(), m.n_volumes()];
        let reference: [Option<CsMat<i32>>; 3] = [Some(m.gradient()), Some(m.curl()), Some(m.divergence())];
        // 4D k-cells: spatial k-cells in each of nt+1 layers, then timelike (k−1)-cells × intervals.
        let spatial = |kk: usize, cell: usize, layer: usize| layer * counts[kk] + cell;
        let timelike = |kk: usize, cell: usize, interval: usize| {
            (nt + 1) * if kk < 4 { counts[kk] } else { 0 } + interval * counts[kk - 1] + cell
        };
        let size = |kk: usize| {
            let s = if kk < 4 { (nt + 1) * counts[kk] } else { 0 };
            let t = if kk >= 1 { nt * counts[kk - 1] } else { 0 };
            s + t
        };
        let mut t = TriMat::new((size(k + 1), size(k)));
        // Spatial (k+1)-cells.
        if k < 3 {
            let d = reference[k].as_ref().expect("reference incidence");
            for layer in 0..=nt {
                for (row, vec) in d.outer_iterator().enumerate() {
                    for (col, &val) in vec.iter() {
                        t.add_triplet(spatial(k + 1, row, layer), spatial(k, col, layer), val);
                    }
                }
            }
        }
        // Timelike (k+1)-cells I×σ with σ a spatial k-cell.
        for interval in 0..nt {
            for sigma in 0..counts[k] {
                let row = timelike(k + 1, sigma, interval);
                t.add_triplet(row, spatial(k, sigma, interval + 1), 1);
                t.add_triplet(row, spatial(k, sigma, interval), -1);
            }
            if k >= 1 {
                let d = reference[k - 1].as_ref().expect("reference incidence");
                for (sigma, vec) in d.outer_iterator().enumerate() {
                    for (tau, &val) in vec.iter() {
                        t.add_triplet(timelike(k + 1, sigma, interval), timelike(k, tau, interval), -val);
                    }
                }
            }
        }
        t.to_csr()
    }

    /// Reorders D² columns into the layered facet numbering used for DoFs.
    pub fn facet_permutation(&self) -> Vec<usize> {
        // Position in `incidence` numbering → layered DoF index.
        let (nf, ne) = (self.mesh3.n_faces(), self.mesh3.n_edges());
        let mut perm = Vec::with_capacity(self.n_facets());
        for layer in 0..=self.n_t {
            for face in 0..nf {
                perm.push(self.b_index(face, layer));
            }
        }
        for interval in 0..self.n_t {
            for edge in 0..ne {
                perm.push(self.e_index(edge, interval));
            }
        }
        perm
    }

    /// Dual bivectors W̃_{j,i} for every (cell, local facet), `out[cell][k]`.
    pub fn dual_bivectors(&self, variant: DualVariant) -> Vec<[Bivector; 24]> {
        let facets = whitney::local_facets();
        let maps: Vec<CellMap> = (0..self.n_cells()).map(|c| self.cell_map(c)).collect();
        match variant {
            DualVariant::Barycentric => maps
                .iter()
                .map(|cm| std::array::from_fn(|k| whitney::barycentric_dual_bivector(&facets[k], cm)))
                .collect(),
            DualVariant::StraightEdge => {
                let centers: Vec<FourVector> = maps.iter().map(|cm| cm.map_point(&[0.0; 4])).collect();
                let closure = |cell: usize, axis: usize, sign: i8| {
                    let mut p = [0.0; 4];
                    p[axis] = f64::from(sign);
                    maps[cell].map_point(&p)
                };
                // Where the dual facet crosses the primal one, seen from one cell: its center,
                // pushed onto the mesh boundary along fixed axes without a neighbour.
                let crossing_estimate = |cell: usize, f: &LocalFacet| {
                    let mut p = [0.0; 4];
                    for (axis, sign) in [(f.fixed.0, f.signs.0), (f.fixed.1, f.signs.1)] {
                        if self.neighbour(cell, axis, sign).is_none() {
                            p[axis] = f64::from(sign);
                        }
                    }
                    maps[cell].map_point(&p)
                };
                let mut around: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.n_facets()];
                for cell in 0..self.n_cells() {
                    for (k, f) in facets.iter().enumerate() {
                        around[self.global_facet(cell, f)].push((cell, k));
                    }
                }
                // Fan center: mean of the per-cell estimates around each primal facet; the mean
                // of the surrounding dual nodes for interior facets.
                let fan_centers: Vec<FourVector> = around
                    .iter()
                    .map(|owners| {
                        owners
                            .iter()
                            .fold(FourVector::default(), |s, &(c, k)| s.add(&crossing_estimate(c, &facets[k])))
                            .scale(1.0 / owners.len() as f64)
                    })
                    .collect();
                (0..self.n_cells())
                    .map(|cell| {
                        std::array::from_fn(|k| {
                            let f = &facets[k];
                            let fan_center = fan_centers[self.global_facet(cell, f)];
                            let neighbour_mid = |axis: usize, sign: i8| match self.neighbour(cell, axis, sign) {
                                Some(nb) => centers[cell].add(&centers[nb]).scale(0.5),
                                None => closure(cell, axis, sign),
                            };
                            let mi = neighbour_mid(f.fixed.0, f.signs.0);
                            let mj = neighbour_mid(f.fixed.1, f.signs.1);
                            whitney::quad_bivector(&centers[cell], &mi, &fan_center, &mj)
                                .scale(f64::from(f.signs.0 * f.signs.1) * whitney::dual_orientation_sign(f))
                        })
                    })
                    .collect()
            }
        }
    }

    /// Cell across the 3-facet at reference coordinate `axis = sign`.
    pub fn neighbour(&self, cell: usize, axis: usize, sign: i8) -> Option<usize> {
        let nv = self.mesh3.n_volumes();
        let (n, v) = (cell / nv, cell % nv);
        if axis == 0 {
            let n2 = n as isize + isize::from(sign);
            return (n2 >= 0 && (n2 as usize) < self.n_t).then(|| n2 as usize * nv + v);
        }
        self.neighbours[v][2 * (axis - 1) + usize::from(sign > 0)].map(|w| n * nv + w)
    }

    /// Largest Euclidean deviation between each cell's geometry at interval n and at
    /// interval 0, after rotating about z by the accumulated angle of the cell's first node.
    /// Zero at Ω = 0; otherwise the differential rotation tanh(rΩ)/r shears the cells.
    pub fn layer_congruence_defect(&self) -> f64 {
        let nv = self.mesh3.n_volumes();
        let mut worst: f64 = 0.0;
        for n in 1..self.n_t {
            for v in 0..nv {
                let c0 = self.cell_map(v).vertices;
                let cn = self.cell_map(n * nv + v).vertices;
                let r0 = self.mesh3.cylindrical[self.mesh3.volumes[v].nodes[0]][0];
                let angle = rotation_angle(r0, n as f64 * self.dt, self.omega);
                let (c, s) = (angle.cos(), angle.sin());
                for k in 0..16 {
                    let rel0 = c0[k].sub(&c0[0]);
                    let reln = cn[k].sub(&cn[0]);
                    // Rotate layer-0 relative geometry forward by `angle`.
                    let rot = FourVector::new(
                        rel0.0[0],
                        c * rel0.0[1] - s * rel0.0[2],
                        s * rel0.0[1] + c * rel0.0[2],
                        rel0.0[3],
                    );
                    let d = rot.sub(&reln);
                    worst = worst.max(d.0.iter().map(|x| x * x).sum::<f64>().sqrt());
                }
            }
        }
        worst
    }

    /// Summary counts for reports.
    pub fn summary(&self) -> MeshSummary {
        MeshSummary {
            nodes3: self.mesh3.n_nodes(),
            edges3: self.mesh3.n_edges(),
            faces3: self.mesh3.n_faces(),
            volumes3: self.mesh3.n_volumes(),
            boundary_edges: self.mesh3.boundary_edge.iter().filter(|&&b| b).count(),
            boundary_faces: self.mesh3.boundary_face.iter().filter(|&&b| b).count(),
            time_intervals: self.n_t,
            cells4: self.n_cells(),
            facets4: self.n_facets(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub nodes3: usize,
    pub edges3: usize,
    pub faces3: usize,
    pub volumes3: usize,
    pub boundary_edges: usize,
    pub boundary_faces: usize,
    pub time_intervals: usize,
    pub cells4: usize,
    pub facets4: usize,
}

/// True when the integer product `a·b` has no nonzero entry.
pub fn product_vanishes(a: &CsMat<i32>, b: &CsMat<i32>) -> bool {
    let p = a * b;
    p.data().iter().all(|&x| x == 0)
}

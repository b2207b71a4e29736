//! Independent oracles shared by the integration targets.

#![allow(dead_code)]

use stfit::mesh::Mesh3;

/// Staggered-grid FDTD on a PEC box with ε = ν = 1, coded directly on (i, j, k) arrays.
///
/// E_x lives at (i+½, j, k), B_x at (i, j+½, k+½) and so on; E is advanced first, then B.
pub struct Yee {
    pub n: [usize; 3],
    pub h: [f64; 3],
    pub dt: f64,
    /// E components, indexed by [`Yee::e_index`].
    pub e: [Vec<f64>; 3],
    /// B components, indexed by [`Yee::b_index`].
    pub b: [Vec<f64>; 3],
}

impl Yee {
    pub fn new(n: [usize; 3], extent: [f64; 3], dt: f64) -> Self {
        let h = [extent[0] / n[0] as f64, extent[1] / n[1] as f64, extent[2] / n[2] as f64];
        let e = std::array::from_fn(|c| vec![0.0; Self::e_shape(n, c).iter().product()]);
        let b = std::array::from_fn(|c| vec![0.0; Self::b_shape(n, c).iter().product()]);
        Self { n, h, dt, e, b }
    }

    fn e_shape(n: [usize; 3], c: usize) -> [usize; 3] {
        std::array::from_fn(|d| if d == c { n[d] } else { n[d] + 1 })
    }

    fn b_shape(n: [usize; 3], c: usize) -> [usize; 3] {
        std::array::from_fn(|d| if d == c { n[d] + 1 } else { n[d] })
    }

    fn flat(shape: [usize; 3], ijk: [usize; 3]) -> usize {
        (ijk[2] * shape[1] + ijk[1]) * shape[0] + ijk[0]
    }

    pub fn e_index(&self, c: usize, ijk: [usize; 3]) -> usize {
        Self::flat(Self::e_shape(self.n, c), ijk)
    }

    pub fn b_index(&self, c: usize, ijk: [usize; 3]) -> usize {
        Self::flat(Self::b_shape(self.n, c), ijk)
    }

    fn ex(&self, i: usize, j: usize, k: usize) -> f64 {
        self.e[0][self.e_index(0, [i, j, k])]
    }
    fn ey(&self, i: usize, j: usize, k: usize) -> f64 {
        self.e[1][self.e_index(1, [i, j, k])]
    }
    fn ez(&self, i: usize, j: usize, k: usize) -> f64 {
        self.e[2][self.e_index(2, [i, j, k])]
    }
    fn bx(&self, i: usize, j: usize, k: usize) -> f64 {
        self.b[0][self.b_index(0, [i, j, k])]
    }
    fn by(&self, i: usize, j: usize, k: usize) -> f64 {
        self.b[1][self.b_index(1, [i, j, k])]
    }
    fn bz(&self, i: usize, j: usize, k: usize) -> f64 {
        self.b[2][self.b_index(2, [i, j, k])]
    }

    /// ∂B/∂t = −∇×E.
    pub fn update_b(&mut self) {
        let ([nx, ny, nz], [dx, dy, dz], dt) = (self.n, self.h, self.dt);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..=nx {
                    let curl =
                        (self.ez(i, j + 1, k) - self.ez(i, j, k)) / dy - (self.ey(i, j, k + 1) - self.ey(i, j, k)) / dz;
                    let idx = self.b_index(0, [i, j, k]);
                    self.b[0][idx] -= dt * curl;
                }
            }
        }
        for k in 0..nz {
            for j in 0..=ny {
                for i in 0..nx {
                    let curl =
                        (self.ex(i, j, k + 1) - self.ex(i, j, k)) / dz - (self.ez(i + 1, j, k) - self.ez(i, j, k)) / dx;
                    let idx = self.b_index(1, [i, j, k]);
                    self.b[1][idx] -= dt * curl;
                }
            }
        }
        for k in 0..=nz {
            for j in 0..ny {
                for i in 0..nx {
                    let curl =
                        (self.ey(i + 1, j, k) - self.ey(i, j, k)) / dx - (self.ex(i, j + 1, k) - self.ex(i, j, k)) / dy;
                    let idx = self.b_index(2, [i, j, k]);
                    self.b[2][idx] -= dt * curl;
                }
            }
        }
    }

    /// ∂E/∂t = ∇×B on interior edges; tangential E on the walls stays zero.
    pub fn update_e(&mut self) {
        let ([nx, ny, nz], [dx, dy, dz], dt) = (self.n, self.h, self.dt);
        for k in 1..nz {
            for j in 1..ny {
                for i in 0..nx {
                    let curl =
                        (self.bz(i, j, k) - self.bz(i, j - 1, k)) / dy - (self.by(i, j, k) - self.by(i, j, k - 1)) / dz;
                    let idx = self.e_index(0, [i, j, k]);
                    self.e[0][idx] += dt * curl;
                }
            }
        }
        for k in 1..nz {
            for j in 0..ny {
                for i in 1..nx {
                    let curl =
                        (self.bx(i, j, k) - self.bx(i, j, k - 1)) / dz - (self.bz(i, j, k) - self.bz(i - 1, j, k)) / dx;
                    let idx = self.e_index(1, [i, j, k]);
                    self.e[1][idx] += dt * curl;
                }
            }
        }
        for k in 0..nz {
            for j in 1..ny {
                for i in 1..nx {
                    let curl =
                        (self.by(i, j, k) - self.by(i - 1, j, k)) / dx - (self.bx(i, j, k) - self.bx(i, j - 1, k)) / dy;
                    let idx = self.e_index(2, [i, j, k]);
                    self.e[2][idx] += dt * curl;
                }
            }
        }
    }
}

/// Location of a mesh edge or face in the staggered grid, with the sign relating the mesh
/// orientation to the positive coordinate direction and the length or area.
#[derive(Clone, Copy, Debug)]
pub struct GridSlot {
    pub component: usize,
    pub index: usize,
    pub sign: f64,
    pub measure: f64,
}

fn lower_corner(mesh: &Mesh3, nodes: &[usize], h: [f64; 3]) -> [usize; 3] {
    std::array::from_fn(|d| {
        let lo = nodes.iter().map(|&p| mesh.nodes[p][d]).fold(f64::INFINITY, f64::min);
        (lo / h[d]).round() as usize
    })
}

/// Maps every mesh edge to its E slot by geometry alone.
pub fn edge_slots(mesh: &Mesh3, yee: &Yee) -> Vec<GridSlot> {
    mesh.edges
        .iter()
        .map(|edge| {
            let [p, q] = edge.nodes;
            let delta: [f64; 3] = std::array::from_fn(|d| mesh.nodes[q][d] - mesh.nodes[p][d]);
            let c = (0..3).max_by(|&u, &v| delta[u].abs().total_cmp(&delta[v].abs())).unwrap();
            let ijk = lower_corner(mesh, &edge.nodes, yee.h);
            GridSlot { component: c, index: yee.e_index(c, ijk), sign: delta[c].signum(), measure: yee.h[c] }
        })
        .collect()
}

/// Maps every mesh face to its B slot; the sign compares the right-hand normal of the
/// listed corner order with the positive axis.
pub fn face_slots(mesh: &Mesh3, yee: &Yee) -> Vec<GridSlot> {
    mesh.faces
        .iter()
        .map(|face| {
            let p: Vec<[f64; 3]> = face.nodes.iter().map(|&k| mesh.nodes[k]).collect();
            let d1: [f64; 3] = std::array::from_fn(|d| p[2][d] - p[0][d]);
            let d2: [f64; 3] = std::array::from_fn(|d| p[3][d] - p[1][d]);
            let normal = [d1[1] * d2[2] - d1[2] * d2[1], d1[2] * d2[0] - d1[0] * d2[2], d1[0] * d2[1] - d1[1] * d2[0]];
            let c = (0..3).max_by(|&u, &v| normal[u].abs().total_cmp(&normal[v].abs())).unwrap();
            let ijk = lower_corner(mesh, &face.nodes, yee.h);
            let area = yee.h[(c + 1) % 3] * yee.h[(c + 2) % 3];
            GridSlot { component: c, index: yee.b_index(c, ijk), sign: normal[c].signum(), measure: area }
        })
        .collect()
}

/// Largest |x − y| over paired DoFs after mapping the grid fields with b = ∫B·dA and
/// e = −Δt ∫E·dl.
pub fn max_dof_mismatch(yee: &Yee, edges: &[GridSlot], faces: &[GridSlot], b: &[f64], e: &[f64]) -> f64 {
    let db = faces.iter().zip(b).map(|(s, &v)| (s.sign * s.measure * yee.b[s.component][s.index] - v).abs());
    let de = edges.iter().zip(e).map(|(s, &v)| (-yee.dt * s.sign * s.measure * yee.e[s.component][s.index] - v).abs());
    db.chain(de).fold(0.0, f64::max)
}

/// Loads mesh DoFs into the grid (inverse of the mapping in [`max_dof_mismatch`]).
pub fn load_dofs(yee: &mut Yee, edges: &[GridSlot], faces: &[GridSlot], b: &[f64], e: &[f64]) {
    for (s, &v) in faces.iter().zip(b) {
        yee.b[s.component][s.index] = v / (s.sign * s.measure);
    }
    for (s, &v) in edges.iter().zip(e) {
        yee.e[s.component][s.index] = -v / (yee.dt * s.sign * s.measure);
    }
}

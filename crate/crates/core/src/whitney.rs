//! Lowest-order Whitney forms on the reference tesseract Ξ = [−1,1]⁴ and their pullback to
//! physical cells through the 16-node quadrilinear map.
//!
//! Reference axes are numbered 0..4 as (t̄, x̄, ȳ, z̄); in mesh cells they are (t̄, ρ̄, φ̄, z̄).
//! Vertex `v` of Ξ has coordinate `+1` on axis `k` iff bit `k` of `v` is set.
//!
//! A 2-facet spans axes `a < b` and sits at fixed signs on the two remaining axes `i < j`.
//! Its orientation is γ̄_a∧γ̄_b ("first time then space"), and its basis function is
//! `N = (1/16)(1 + s_i x^i)(1 + s_j x^j) γ̄^b∧γ̄^a`, the reciprocal of that orientation.

use crate::quadrature::GaussRule;
use crate::sta::{Bivector, FourVector, Multivector};
use nalgebra::Matrix4;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WhitneyError {
    #[error("degenerate cell: |det J| = {det:e} below threshold {threshold:e}")]
    DegenerateCell { det: f64, threshold: f64 },
}

/// Axis pairs spanned by the six facet families, timelike families first.
pub const SPAN_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// One of the 24 two-dimensional facets of Ξ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalFacet {
    /// Spanned axes, `a < b`.
    pub span: (usize, usize),
    /// Fixed axes `i < j`.
    pub fixed: (usize, usize),
    /// Signs (±1) of the fixed coordinates.
    pub signs: (i8, i8),
}

impl LocalFacet {
    /// Facet `index` in 0..24: family `index / 4`, sign code `index % 4`
    /// (bit 0 set: `s_i = +1`, bit 1 set: `s_j = +1`).
    pub const fn from_index(index: usize) -> Self {
        let span = SPAN_PAIRS[index / 4];
        let fixed = complement(span);
        let code = index % 4;
        let si = if code & 1 != 0 { 1 } else { -1 };
        let sj = if code & 2 != 0 { 1 } else { -1 };
        Self { span, fixed, signs: (si, sj) }
    }

    pub fn index(&self) -> usize {
        let family = SPAN_PAIRS.iter().position(|&p| p == self.span).expect("valid span");
        family * 4 + usize::from(self.signs.0 > 0) + 2 * usize::from(self.signs.1 > 0)
    }

    pub fn is_timelike(&self) -> bool {
        self.span.0 == 0
    }

    /// Reference barycenter.
    pub fn barycenter(&self) -> [f64; 4] {
        let mut p = [0.0; 4];
        p[self.fixed.0] = f64::from(self.signs.0);
        p[self.fixed.1] = f64::from(self.signs.1);
        p
    }

    /// Scalar weight (1 + s_i x^i)(1 + s_j x^j) / 16.
    pub fn weight(&self, xr: &[f64; 4]) -> f64 {
        (1.0 + f64::from(self.signs.0) * xr[self.fixed.0]) * (1.0 + f64::from(self.signs.1) * xr[self.fixed.1]) / 16.0
    }

    /// Gradient of [`Self::weight`] with respect to reference coordinates.
    pub fn weight_gradient(&self, xr: &[f64; 4]) -> [f64; 4] {
        let (i, j) = self.fixed;
        let (si, sj) = (f64::from(self.signs.0), f64::from(self.signs.1));
        let mut g = [0.0; 4];
        g[i] = si * (1.0 + sj * xr[j]) / 16.0;
        g[j] = sj * (1.0 + si * xr[i]) / 16.0;
        g
    }
}

const fn complement(span: (usize, usize)) -> (usize, usize) {
    let mut rest = [0usize; 2];
    let mut n = 0;
    let mut k = 0;
    while k < 4 {
        if k != span.0 && k != span.1 {
            rest[n] = k;
            n += 1;
        }
        k += 1;
    }
    (rest[0], rest[1])
}

/// All 24 facets in index order.
pub fn local_facets() -> [LocalFacet; 24] {
    std::array::from_fn(LocalFacet::from_index)
}

/// Minkowski basis vector γ_k as a four-vector.
pub fn basis_vector(k: usize) -> FourVector {
    let mut v = FourVector::default();
    v.0[k] = 1.0;
    v
}

/// Reciprocal basis vector γ^k (γ^t = γ_t, γ^α = −γ_α).
pub fn reciprocal_basis_vector(k: usize) -> FourVector {
    let mut v = FourVector::default();
    v.0[k] = if k == 0 { 1.0 } else { -1.0 };
    v
}

/// T_i at reference point `xr`.
pub fn shape_value(vertex: usize, xr: &[f64; 4]) -> f64 {
    (0..4).map(|k| 1.0 + vertex_sign(vertex, k) * xr[k]).product::<f64>() / 16.0
}

pub fn vertex_sign(vertex: usize, axis: usize) -> f64 {
    if vertex & (1 << axis) != 0 {
        1.0
    } else {
        -1.0
    }
}

/// Physical vertex events of one 4D cell, in reference vertex order.
#[derive(Clone, Debug)]
pub struct CellMap {
    pub vertices: [FourVector; 16],
}

/// Tangent frame, reciprocal frame and Jacobian determinant at a reference point.
#[derive(Clone, Copy, Debug)]
pub struct Frames {
    pub tangent: [FourVector; 4],
    pub reciprocal: [FourVector; 4],
    pub det: f64,
}

impl CellMap {
    pub fn new(vertices: [FourVector; 16]) -> Self {
        Self { vertices }
    }

    /// The reference tesseract itself.
    pub fn identity() -> Self {
        Self::new(std::array::from_fn(|v| FourVector(std::array::from_fn(|k| vertex_sign(v, k)))))
    }

    /// x = Σ T_i(x̄) x_i.
    pub fn map_point(&self, xr: &[f64; 4]) -> FourVector {
        let mut p = FourVector::default();
        for (v, x) in self.vertices.iter().enumerate() {
            p = p.add(&x.scale(shape_value(v, xr)));
        }
        p
    }

    /// Characteristic length: largest vertex distance from the first vertex, Euclidean.
    pub fn scale(&self) -> f64 {
        let o = self.vertices[0];
        self.vertices.iter().map(|v| v.sub(&o).0.iter().map(|c| c * c).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    /// Columns ∂x/∂x̄^k of the Jacobian.
    pub fn tangents(&self, xr: &[f64; 4]) -> [FourVector; 4] {
        std::array::from_fn(|k| {
            let mut d = FourVector::default();
            for (v, x) in self.vertices.iter().enumerate() {
                let mut w = vertex_sign(v, k) / 16.0;
                for l in (0..4).filter(|&l| l != k) {
                    w *= 1.0 + vertex_sign(v, l) * xr[l];
                }
                d = d.add(&x.scale(w));
            }
            d
        })
    }

    /// Second derivatives ∂²x/∂x̄^k∂x̄^l (zero on the diagonal for a multilinear map).
    pub fn second_derivatives(&self, xr: &[f64; 4]) -> [[FourVector; 4]; 4] {
        std::array::from_fn(|k| {
            std::array::from_fn(|l| {
                let mut d = FourVector::default();
                if k == l {
                    return d;
                }
                for (v, x) in self.vertices.iter().enumerate() {
                    let mut w = vertex_sign(v, k) * vertex_sign(v, l) / 16.0;
                    for m in (0..4).filter(|&m| m != k && m != l) {
                        w *= 1.0 + vertex_sign(v, m) * xr[m];
                    }
                    d = d.add(&x.scale(w));
                }
                d
            })
        })
    }

    pub fn frames(&self, xr: &[f64; 4]) -> Result<Frames, WhitneyError> {
        let tangent = self.tangents(xr);
        let jac = Matrix4::from_fn(|row, col| tangent[col].0[row]);
        let det = jac.determinant();
        let threshold = 1e-10 * self.scale().powi(4);
        let inv = match jac.try_inverse() {
            Some(inv) if det.abs() >= threshold => inv,
            _ => return Err(WhitneyError::DegenerateCell { det, threshold }),
        };
        // γ̄^a = Σ_β (J⁻¹)_{aβ} γ^β.
        let reciprocal = std::array::from_fn(|a| {
            FourVector(std::array::from_fn(|beta| {
                let g = if beta == 0 { 1.0 } else { -1.0 };
                inv[(a, beta)] * g
            }))
        });
        Ok(Frames { tangent, reciprocal, det })
    }
}

/// Reference basis bivector γ^b∧γ^a of a facet.
pub fn reference_reciprocal_blade(f: &LocalFacet) -> Bivector {
    reciprocal_basis_vector(f.span.1).wedge(&reciprocal_basis_vector(f.span.0))
}

/// N²_f on the reference tesseract.
pub fn whitney2_ref(f: &LocalFacet, xr: &[f64; 4]) -> Bivector {
    reference_reciprocal_blade(f).scale(f.weight(xr))
}

/// Appendix-style closed form (1/16)(γ_i∧γ_j ⌟ I⁽⁴⁾)(1 ± x^i)(1 ± x^j) with I⁽⁴⁾ = γ^t∧γ^x∧γ^y∧γ^z.
pub fn whitney2_ref_closed_form(f: &LocalFacet, xr: &[f64; 4]) -> Bivector {
    let gij = basis_vector(f.fixed.0).wedge(&basis_vector(f.fixed.1));
    let blade = gij.to_multivector() * reciprocal_pseudoscalar();
    Bivector::from_multivector(&blade).scale(f.weight(xr))
}

/// I⁽⁴⁾ = γ^t∧γ^x∧γ^y∧γ^z = −I.
pub fn reciprocal_pseudoscalar() -> Multivector {
    -Multivector::pseudoscalar()
}

/// N³ for the 3-facet at x^axis = sign, in the closed form ±γ_axis ⌟ I⁽⁴⁾ (1 ± x^axis).
/// This blade is opposite to the reciprocal of the outward orientation, so with the
/// incidence of [`local_d2`] the complex commutes as ∇∧N²_k = −(1/16) Σ_F D_Fk N³_F.
pub fn whitney3_ref(axis: usize, sign: i8, xr: &[f64; 4]) -> Multivector {
    let s = f64::from(sign);
    (basis_vector(axis).to_multivector() * reciprocal_pseudoscalar()).scale(s * (1.0 + s * xr[axis]))
}

/// N⁴ = I⁽⁴⁾.
pub fn whitney4_ref() -> Multivector {
    reciprocal_pseudoscalar()
}

/// N²_f pulled back to a physical cell: reference reciprocal vectors replaced by physical ones.
pub fn whitney2_phys(f: &LocalFacet, frames: &Frames, xr: &[f64; 4]) -> Bivector {
    frames.reciprocal[f.span.1].wedge(&frames.reciprocal[f.span.0]).scale(f.weight(xr))
}

/// All 24 physical basis bivectors at one point.
pub fn whitney2_phys_all(frames: &Frames, xr: &[f64; 4]) -> [Bivector; 24] {
    std::array::from_fn(|k| whitney2_phys(&LocalFacet::from_index(k), frames, xr))
}

/// F(x) = Σ_k f_k N²_k(x̄).
pub fn reconstruct(dofs: &[f64; 24], cell: &CellMap, xr: &[f64; 4]) -> Result<Bivector, WhitneyError> {
    let frames = cell.frames(xr)?;
    let mut field = Bivector::ZERO;
    for (k, &f) in dofs.iter().enumerate() {
        if f != 0.0 {
            field = field.add(&whitney2_phys(&LocalFacet::from_index(k), &frames, xr).scale(f));
        }
    }
    Ok(field)
}

/// Oriented tangent bivector of facet `f` at a reference point (the integrand d²x without
/// the coordinate measure).
pub fn facet_tangent(f: &LocalFacet, cell: &CellMap, xr: &[f64; 4]) -> Bivector {
    let t = cell.tangents(xr);
    t[f.span.0].wedge(&t[f.span.1])
}

/// Reference points and weights for integrating over facet `f` with `rule` per direction.
pub fn facet_quadrature(f: &LocalFacet, rule: &GaussRule) -> Vec<([f64; 4], f64)> {
    let mut out = Vec::with_capacity(rule.len() * rule.len());
    for (&xa, &wa) in rule.points.iter().zip(&rule.weights) {
        for (&xb, &wb) in rule.points.iter().zip(&rule.weights) {
            let mut p = f.barycenter();
            p[f.span.0] = xa;
            p[f.span.1] = xb;
            out.push((p, wa * wb));
        }
    }
    out
}

/// ∫_{facet} (d²x)·F for a field given as a function of the reference point.
pub fn facet_integral<F>(f: &LocalFacet, cell: &CellMap, rule: &GaussRule, field: F) -> f64
where
    F: Fn(&[f64; 4], &FourVector) -> Bivector,
{
    facet_quadrature(f, rule)
        .iter()
        .map(|(p, w)| {
            let x = cell.map_point(p);
            w * facet_tangent(f, cell, p).dot(&field(p, &x))
        })
        .sum()
}

/// ∫_cell N²_f |d⁴x| by tensor-product quadrature.
pub fn cell_integral_of_basis(cell: &CellMap, rule: &GaussRule) -> Result<[Bivector; 24], WhitneyError> {
    let mut acc = [Bivector::ZERO; 24];
    for (p, w) in rule.tensor4() {
        let frames = cell.frames(&p)?;
        let weight = w * frames.det.abs();
        for (k, n) in whitney2_phys_all(&frames, &p).iter().enumerate() {
            acc[k] = acc[k].add(&n.scale(weight));
        }
    }
    Ok(acc)
}

/// Sign relating the in-cell dual quadrilateral traversal to the facet orientation:
/// the dual of `e_i∧e_j` must pair positively with `e_a∧e_b`.
pub fn dual_orientation_sign(f: &LocalFacet) -> f64 {
    let ij = basis_vector(f.fixed.0).wedge(&basis_vector(f.fixed.1));
    let ab = basis_vector(f.span.0).wedge(&basis_vector(f.span.1));
    ij.dual().dot(&ab).signum()
}

/// In-cell portion of the barycentric dual facet: image of the reference square spanned by
/// the cell center, the two adjacent 3-facet barycenters and the facet barycenter.
pub fn barycentric_dual_bivector(f: &LocalFacet, cell: &CellMap) -> Bivector {
    let (i, j) = f.fixed;
    let mut pi = [0.0; 4];
    pi[i] = f64::from(f.signs.0);
    let mut pj = [0.0; 4];
    pj[j] = f64::from(f.signs.1);
    let center = cell.map_point(&[0.0; 4]);
    let facet = cell.map_point(&f.barycenter());
    let ci = cell.map_point(&pi);
    let cj = cell.map_point(&pj);
    quad_bivector(&center, &ci, &facet, &cj).scale(f64::from(f.signs.0 * f.signs.1) * dual_orientation_sign(f))
}

/// Oriented area bivector of the (possibly skew) quadrilateral p0→p1→p2→p3:
/// half the wedge of its diagonals.
pub fn quad_bivector(p0: &FourVector, p1: &FourVector, p2: &FourVector, p3: &FourVector) -> Bivector {
    p2.sub(p0).wedge(&p3.sub(p1)).scale(0.5)
}

/// Exterior derivative ∇∧N²_f in physical components, computed from the frame derivatives
/// ∂_k γ̄^a = −γ̄^a (∂_k J) J⁻¹ without assuming the frames are gradients.
pub fn whitney2_phys_curl(f: &LocalFacet, cell: &CellMap, xr: &[f64; 4]) -> Result<Multivector, WhitneyError> {
    let frames = cell.frames(xr)?;
    let hess = cell.second_derivatives(xr);
    let (a, b) = f.span;
    let w = f.weight(xr);
    let dw = f.weight_gradient(xr);
    // ∂_k γ̄^c: components on γ^β given by −Σ_m (J⁻¹)_{c·}(∂_kJ)… expressed through the
    // identity γ̄^c·(∂_k γ̄_m) contracted with γ̄^m.
    let dreciprocal = |k: usize, c: usize| -> FourVector {
        let mut d = FourVector::default();
        for m in 0..4 {
            // coefficient (γ̄^c · ∂_k γ̄_m) multiplies γ̄^m with a minus sign.
            let coeff = frames.reciprocal[c].dot(&hess[k][m]);
            d = d.sub(&frames.reciprocal[m].scale(coeff));
        }
        d
    };
    let blade = frames.reciprocal[b].wedge(&frames.reciprocal[a]);
    let mut out = Multivector::ZERO;
    for k in 0..4 {
        let dblade =
            dreciprocal(k, b).wedge(&frames.reciprocal[a]).add(&frames.reciprocal[b].wedge(&dreciprocal(k, a)));
        let dn = blade.scale(dw[k]).add(&dblade.scale(w));
        out += frames.reciprocal[k].to_multivector().outer(&dn.to_multivector());
    }
    Ok(out)
}

/// N³ pulled back: reference reciprocal trivector replaced by the physical one.
pub fn whitney3_phys(axis: usize, sign: i8, frames: &Frames, xr: &[f64; 4]) -> Multivector {
    // Reference N³ = ±γ_axis ⌟ I⁽⁴⁾ (1 ± x) is a multiple of the reciprocal trivector
    // of the three remaining axes; find that multiple on Ξ and reuse it.
    let others: Vec<usize> = (0..4).filter(|&k| k != axis).collect();
    let reference = whitney3_ref(axis, sign, xr);
    let ref_tri = reciprocal_basis_vector(others[0])
        .to_multivector()
        .outer(&reciprocal_basis_vector(others[1]).to_multivector())
        .outer(&reciprocal_basis_vector(others[2]).to_multivector());
    let idx = (0..16).max_by(|&p, &q| ref_tri.0[p].abs().total_cmp(&ref_tri.0[q].abs())).unwrap();
    let factor = reference.0[idx] / ref_tri.0[idx];
    frames.reciprocal[others[0]]
        .to_multivector()
        .outer(&frames.reciprocal[others[1]].to_multivector())
        .outer(&frames.reciprocal[others[2]].to_multivector())
        .scale(factor)
}

/// Local incidence of 2-facets in outward-oriented 3-facets of Ξ, as (3-facet, facet, sign).
/// 3-facets are indexed `2·axis + (sign > 0)`.
pub fn local_d2() -> Vec<(usize, usize, i8)> {
    let mut out = Vec::new();
    for (k, f) in local_facets().iter().enumerate() {
        for (fixed_axis, s) in [(f.fixed.0, f.signs.0), (f.fixed.1, f.signs.1)] {
            // The 3-facet at x^fixed_axis = s contains f; the other fixed axis c is the
            // normal of f inside that 3-facet.
            let (c, sc) = if fixed_axis == f.fixed.0 { (f.fixed.1, f.signs.1) } else { (f.fixed.0, f.signs.0) };
            // Outward orientation of the 3-facet: s·(−1)^axis·(remaining axes in order).
            let facet3_sign = f64::from(s) * if fixed_axis % 2 == 0 { 1.0 } else { -1.0 };
            // Induced boundary orientation: outward normal first, n∧W = T.
            // Permutation parity of (c, a, b) relative to ascending order of {c,a,b}.
            let perm = [c, f.span.0, f.span.1];
            let parity = permutation_sign(&perm);
            let sign = facet3_sign * f64::from(sc) * parity;
            out.push((2 * fixed_axis + usize::from(s > 0), k, sign as i8));
        }
    }
    out
}

fn permutation_sign(p: &[usize]) -> f64 {
    let mut s = 1.0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                s = -s;
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn affine_cell(matrix: [[f64; 4]; 4], shift: [f64; 4]) -> CellMap {
        let id = CellMap::identity();
        CellMap::new(std::array::from_fn(|v| {
            let r = id.vertices[v].0;
            FourVector(std::array::from_fn(|row| shift[row] + (0..4).map(|c| matrix[row][c] * r[c]).sum::<f64>()))
        }))
    }

    /// A cell close to a scaled tesseract, with independent vertex jitter.
    fn jittered_cell(scale: [f64; 4], jitter: &[f64]) -> CellMap {
        let id = CellMap::identity();
        CellMap::new(std::array::from_fn(|v| {
            FourVector(std::array::from_fn(|k| scale[k] * id.vertices[v].0[k] + jitter[4 * v + k]))
        }))
    }

    fn close(a: &Bivector, b: &Bivector, tol: f64) -> bool {
        a.sub(b).max_abs() <= tol
    }

    #[test]
    fn facet_indexing_round_trips() {
        for k in 0..24 {
            let f = LocalFacet::from_index(k);
            assert_eq!(f.index(), k);
            assert_eq!(f.is_timelike(), k < 12);
            let mut all = [f.span.0, f.span.1, f.fixed.0, f.fixed.1];
            all.sort_unstable();
            assert_eq!(all, [0, 1, 2, 3]);
        }
    }

    #[test]
    fn basis_for_fixed_x_plus_y_plus_is_gamma_z_wedge_gamma_t() {
        // Facet fixed at x̄ = +1, ȳ = +1: spans (t̄, z̄), basis (1+x)(1+y)/16 γ^z∧γ^t.
        let f = LocalFacet { span: (0, 3), fixed: (1, 2), signs: (1, 1) };
        let p = [0.3, -0.2, 0.5, 0.7];
        let expected =
            reciprocal_basis_vector(3).wedge(&reciprocal_basis_vector(0)).scale((1.0 + p[1]) * (1.0 + p[2]) / 16.0);
        assert!(close(&whitney2_ref(&f, &p), &expected, 1e-15));
        // γ^z∧γ^t = −γ_z∧γ_t = γ_t∧γ_z.
        assert!(close(&reference_reciprocal_blade(&f), &basis_vector(0).wedge(&basis_vector(3)), 0.0));
    }

    #[test]
    fn tx_facet_at_low_y_and_z() {
        // Spans (t̄, x̄) at ȳ = z̄ = −1: basis γ^x∧γ^t (1 − y)(1 − z)/16.
        let f = LocalFacet::from_index(0);
        assert_eq!((f.span, f.fixed, f.signs), ((0, 1), (2, 3), (-1, -1)));
        let p = [0.9, -0.3, 0.25, -0.5];
        let expected =
            reciprocal_basis_vector(1).wedge(&reciprocal_basis_vector(0)).scale((1.0 - p[2]) * (1.0 - p[3]) / 16.0);
        assert!(close(&whitney2_ref(&f, &p), &expected, 1e-15));
        // At the facet's own corner the weight is 1/4.
        assert!((f.weight(&[0.0, 0.0, -1.0, -1.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn shape_functions_form_a_partition_of_unity() {
        for p in [[0.0; 4], [0.3, -0.7, 0.1, 0.9], [-1.0, 1.0, -1.0, 1.0]] {
            let total: f64 = (0..16).map(|v| shape_value(v, &p)).sum();
            assert!((total - 1.0).abs() < 1e-15);
        }
        // Nodal property at the vertices.
        for v in 0..16 {
            let corner: [f64; 4] = std::array::from_fn(|k| vertex_sign(v, k));
            for w in 0..16 {
                assert_eq!(shape_value(w, &corner), if v == w { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn reference_center_maps_to_the_vertex_average() {
        let cell = affine_cell(
            [[1.0, 0.2, 0.0, 0.1], [0.1, 0.8, 0.2, 0.0], [0.0, 0.1, 1.3, 0.1], [0.05, 0.0, 0.1, 0.6]],
            [0.5, -1.0, 0.0, 2.0],
        );
        let center = cell.map_point(&[0.0; 4]);
        for k in 0..4 {
            let mean = cell.vertices.iter().map(|v| v.0[k]).sum::<f64>() / 16.0;
            assert!((center.0[k] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_matches_up_to_orientation() {
        let p = [0.1, 0.2, -0.4, 0.6];
        for f in local_facets() {
            let ours = whitney2_ref(&f, &p);
            let closed = whitney2_ref_closed_form(&f, &p);
            let same = close(&ours, &closed, 1e-15);
            let flipped = close(&ours, &closed.scale(-1.0), 1e-15);
            assert!(same || flipped, "facet {f:?}: {ours:?} vs {closed:?}");
        }
    }

    #[test]
    fn closed_form_flips_exactly_two_families() {
        // γ_i∧γ_j⌟I⁽⁴⁾ orients the facet fixed in (t,y) as (z,x) and the one fixed in
        // (x,z) as (y,t); the other four families agree with ascending order.
        let p = [0.0; 4];
        let mut flipped = Vec::new();
        for f in local_facets().iter().filter(|f| f.signs == (1, 1)) {
            if close(&whitney2_ref(f, &p), &whitney2_ref_closed_form(f, &p).scale(-1.0), 1e-15) {
                flipped.push(f.fixed);
            }
        }
        assert_eq!(flipped, vec![(1, 3), (0, 2)]);
    }

    #[test]
    fn interpolation_identity_on_reference() {
        let rule = GaussRule::new(2);
        let cell = CellMap::identity();
        for l in local_facets() {
            for k in local_facets() {
                let value = facet_integral(&l, &cell, &rule, |p, _| whitney2_ref(&k, p));
                let expected = if k == l { 1.0 } else { 0.0 };
                assert!((value - expected).abs() < 1e-14, "{l:?} {k:?}: {value}");
            }
        }
    }

    #[test]
    fn frames_are_dual() {
        let cell = affine_cell(
            [[2.0, 0.1, 0.0, 0.0], [0.2, 1.0, 0.1, 0.0], [0.0, 0.3, 1.5, 0.2], [0.1, 0.0, 0.0, 0.7]],
            [1.0, 2.0, 3.0, 4.0],
        );
        let fr = cell.frames(&[0.2, -0.1, 0.3, 0.4]).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let d = fr.tangent[a].dot(&fr.reciprocal[b]);
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn degenerate_cell_is_rejected() {
        let cell = affine_cell(
            [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0]],
            [0.0; 4],
        );
        assert!(matches!(cell.frames(&[0.0; 4]), Err(WhitneyError::DegenerateCell { .. })));
    }

    #[test]
    fn energetic_condition_holds_on_affine_cells() {
        let rule = GaussRule::new(2);
        let cell = affine_cell(
            [[1.0, 0.2, 0.0, 0.1], [0.1, 0.8, 0.2, 0.0], [0.0, 0.1, 1.3, 0.1], [0.05, 0.0, 0.1, 0.6]],
            [0.5, -1.0, 0.0, 2.0],
        );
        let integrals = cell_integral_of_basis(&cell, &rule).unwrap();
        for (k, f) in local_facets().iter().enumerate() {
            let dual = barycentric_dual_bivector(f, &cell).dual();
            assert!(close(&integrals[k], &dual, 1e-12), "facet {k}: {:?} vs {dual:?}", integrals[k]);
        }
    }

    #[test]
    fn exterior_derivative_matches_local_incidence() {
        let cell = CellMap::identity();
        let d2 = local_d2();
        let p = [0.3, -0.6, 0.1, 0.45];
        for (k, f) in local_facets().iter().enumerate() {
            let curl = whitney2_phys_curl(f, &cell, &p).unwrap();
            let mut expected = Multivector::ZERO;
            for &(facet3, _, sign) in d2.iter().filter(|e| e.1 == k) {
                let (axis, s) = (facet3 / 2, if facet3 % 2 == 1 { 1 } else { -1 });
                expected += whitney3_ref(axis, s, &p).scale(-f64::from(sign) / 16.0);
            }
            assert!((curl - expected).max_abs() < 1e-14, "facet {k}: {:?} vs {:?}", curl.0, expected.0);
        }
    }

    #[test]
    fn local_boundary_of_boundary_vanishes() {
        // Every 3-facet is a cube with six faces; every 2-facet lies in two 3-facets whose
        // outward orientations induce opposite orientations on it.
        let d2 = local_d2();
        for facet3 in 0..8 {
            assert_eq!(d2.iter().filter(|e| e.0 == facet3).count(), 6);
        }
        for k in 0..24 {
            let incident: Vec<i8> = d2.iter().filter(|e| e.1 == k).map(|e| e.2).collect();
            assert_eq!(incident.len(), 2);
            assert_eq!(incident[0] + incident[1], 0);
        }
    }

    proptest! {
        #[test]
        fn interpolation_identity_on_distorted_cells(jitter in proptest::collection::vec(-0.15f64..0.15, 64)) {
            let cell = jittered_cell([1.0, 0.8, 1.2, 0.9], &jitter);
            let rule = GaussRule::new(3);
            for l in local_facets() {
                for k in local_facets() {
                    let value = facet_integral(&l, &cell, &rule, |p, _| {
                        let fr = cell.frames(p).unwrap();
                        whitney2_phys(&k, &fr, p)
                    });
                    let expected = if k == l { 1.0 } else { 0.0 };
                    prop_assert!((value - expected).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn analytic_curl_matches_finite_differences(
            jitter in proptest::collection::vec(-0.15f64..0.15, 64),
            point in proptest::array::uniform4(-0.8f64..0.8),
            k in 0usize..24,
        ) {
            let cell = jittered_cell([1.1, 0.9, 1.0, 1.2], &jitter);
            let f = LocalFacet::from_index(k);
            let analytic = whitney2_phys_curl(&f, &cell, &point).unwrap();
            let fr = cell.frames(&point).unwrap();
            let h = 1e-5;
            let mut numeric = Multivector::ZERO;
            for axis in 0..4 {
                let (mut hi, mut lo) = (point, point);
                hi[axis] += h;
                lo[axis] -= h;
                let nh = whitney2_phys(&f, &cell.frames(&hi).unwrap(), &hi);
                let nl = whitney2_phys(&f, &cell.frames(&lo).unwrap(), &lo);
                let d = nh.sub(&nl).scale(0.5 / h);
                numeric += fr.reciprocal[axis].to_multivector().outer(&d.to_multivector());
            }
            prop_assert!((analytic - numeric).max_abs() < 1e-7);
        }

        #[test]
        fn curl_of_interpolant_has_zero_divergence(
            jitter in proptest::collection::vec(-0.1f64..0.1, 64),
            point in proptest::array::uniform4(-0.9f64..0.9),
            dofs in proptest::array::uniform24(-1.0f64..1.0),
        ) {
            // ∇∧(∇∧F) = 0 for the interpolated field: check by central differences of the
            // analytic curl.
            let cell = jittered_cell([1.0; 4], &jitter);
            let curl_at = |p: &[f64; 4]| {
                let mut acc = Multivector::ZERO;
                for (k, &d) in dofs.iter().enumerate() {
                    acc += whitney2_phys_curl(&LocalFacet::from_index(k), &cell, p).unwrap().scale(d);
                }
                acc
            };
            let fr = cell.frames(&point).unwrap();
            let h = 1e-4;
            let mut div = Multivector::ZERO;
            for axis in 0..4 {
                let (mut hi, mut lo) = (point, point);
                hi[axis] += h;
                lo[axis] -= h;
                let d = (curl_at(&hi) - curl_at(&lo)).scale(0.5 / h);
                div += fr.reciprocal[axis].to_multivector().outer(&d);
            }
            prop_assert!(div.max_abs() < 1e-6);
        }
    }
}

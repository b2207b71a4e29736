//! Rotating ring-resonator experiment: annular TM_{m,1,0} modes, initial DoFs, probe
//! sampling, beat-frequency estimation and error tables.
//!
//! Natural units throughout (c = 1): lengths and times in metres, Ω in 1/m.

use crate::material::{scheme_blocks, Material, MaterialError, Method};
use crate::mesh::{observer_velocity, DofKind, Mesh3, Mesh4, MeshError};
use crate::quadrature::GaussRule;
use crate::solver::{EnergyForm, EnergyMonitor, Scheme, SolverError, State, Stepper};
use crate::sparse;
use crate::sta::{recombine_field, split_field, Bivector, FourVector, StaError};
use crate::whitney::{self, local_facets, CellMap, WhitneyError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResonatorError {
    #[error("no sign change of the Bessel cross product for k in ({lo}, {hi})")]
    Root { lo: f64, hi: f64 },
    #[error("radius {r} outside the annulus [{a}, {b}]")]
    OutsideAnnulus { r: f64, a: f64, b: f64 },
    #[error("signal of duration {duration} shows no envelope null; extend the horizon")]
    HorizonTooShort { duration: f64 },
    #[error("invalid experiment setting: {0}")]
    Config(String),
    #[error("energy diverged at step {step}")]
    Diverged { step: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Whitney(#[from] WhitneyError),
    #[error(transparent)]
    Sta(#[from] StaError),
}

/// Bessel functions of integer order from their integral representations.
pub mod bessel {
    use crate::quadrature::GaussRule;
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    fn rule() -> &'static GaussRule {
        static RULE: OnceLock<GaussRule> = OnceLock::new();
        RULE.get_or_init(|| GaussRule::new(24))
    }

    /// Composite Gauss–Legendre over `panels` equal panels of [lo, hi].
    fn integrate(lo: f64, hi: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let g = rule();
        let width = (hi - lo) / panels as f64;
        (0..panels)
            .map(|p| {
                let mid = lo + (p as f64 + 0.5) * width;
                g.points.iter().zip(&g.weights).map(|(x, w)| w * f(mid + 0.5 * width * x)).sum::<f64>()
            })
            .sum::<f64>()
            * 0.5
            * width
    }

    fn panels_for(x: f64, n: i32) -> usize {
        8 + (x.abs() + f64::from(n.abs())) as usize / 4
    }

    /// J_n(x): power series for |x| < 2, where the integral loses relative accuracy on tiny
    /// values; (1/π)∫₀^π cos(nτ − x sin τ) dτ otherwise.
    pub fn j(n: i32, x: f64) -> f64 {
        if n < 0 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            return sign * j(-n, x);
        }
        if x.abs() < 2.0 {
            return j_series(n, x);
        }
        let nf = f64::from(n);
        integrate(0.0, PI, panels_for(x, n), |t| (nf * t - x * t.sin()).cos()) / PI
    }

    /// Σ_k (−1)^k (x/2)^{2k+n} / (k!(k+n)!); terms shrink monotonically for |x| < 2.
    fn j_series(n: i32, x: f64) -> f64 {
        let half = 0.5 * x;
        let mut term = (1..=n).fold(1.0, |acc, i| acc * half / f64::from(i));
        let mut sum = term;
        for k in 1..60 {
            term *= -half * half / (f64::from(k) * f64::from(k + n));
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    }

    /// Y_n(x) = (1/π)∫₀^π sin(x sin τ − nτ) dτ − (1/π)∫₀^∞ (e^{nt} + (−1)ⁿ e^{−nt}) e^{−x sinh t} dt, x > 0.
    pub fn y(n: i32, x: f64) -> f64 {
        assert!(x > 0.0, "Y_n needs a positive argument");
        if n < 0 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            return sign * y(-n, x);
        }
        let nf = f64::from(n);
        let oscillatory = integrate(0.0, PI, panels_for(x, n), |t| (x * t.sin() - nf * t).sin());
        // Cut the tail where the exponent falls below −50.
        let mut upper = 1.0;
        while x * f64::sinh(upper) - nf.abs() * upper < 50.0 {
            upper += 0.5;
        }
        let parity = if n % 2 == 0 { 1.0 } else { -1.0 };
        let tail = integrate(0.0, upper, 16 + 4 * upper as usize, |t| {
            ((nf * t - x * t.sinh()).exp()) + parity * ((-nf * t - x * t.sinh()).exp())
        });
        (oscillatory - tail) / PI
    }

    /// dJ_n/dx = (J_{n−1} − J_{n+1})/2.
    pub fn j_prime(n: i32, x: f64) -> f64 {
        0.5 * (j(n - 1, x) - j(n + 1, x))
    }

    /// dY_n/dx = (Y_{n−1} − Y_{n+1})/2.
    pub fn y_prime(n: i32, x: f64) -> f64 {
        0.5 * (y(n - 1, x) - y(n + 1, x))
    }
}

/// TM_{m,1,0} mode of a PEC annular cavity a < r < b, 0 < z < h:
/// E_z = R(kr) cos(mθ) cos(ωt), R(x) = J_m(x)Y_m(ka) − Y_m(x)J_m(ka), ω = k.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnnularMode {
    pub m: u32,
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub k: f64,
    pub omega: f64,
    /// Scale making max |E_z| ≈ 1.
    pub amplitude: f64,
    #[serde(skip)]
    profile: RadialProfile,
}

/// Chebyshev interpolant of (R, R') on [0.8a, 1.2b]; the Bessel integrals are too slow to
/// evaluate at every quadrature point.
#[derive(Clone, Debug, Default, PartialEq)]
struct RadialProfile {
    lo: f64,
    hi: f64,
    values: Vec<(f64, f64)>,
}

const PROFILE_NODES: usize = 64;

impl RadialProfile {
    fn node(&self, j: usize) -> f64 {
        let x = (PI * j as f64 / PROFILE_NODES as f64).cos();
        0.5 * (self.lo + self.hi) + 0.5 * (self.hi - self.lo) * x
    }

    fn build(lo: f64, hi: f64, f: impl Fn(f64) -> (f64, f64)) -> Self {
        let mut p = Self { lo, hi, values: Vec::new() };
        p.values = (0..=PROFILE_NODES).map(|j| f(p.node(j))).collect();
        p
    }

    /// Barycentric interpolation at Chebyshev points of the second kind.
    fn eval(&self, r: f64) -> Option<(f64, f64)> {
        if !(r >= self.lo && r <= self.hi) {
            return None;
        }
        let (mut num0, mut num1, mut den) = (0.0, 0.0, 0.0);
        for (j, &(v0, v1)) in self.values.iter().enumerate() {
            let d = r - self.node(j);
            if d == 0.0 {
                return Some((v0, v1));
            }
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == PROFILE_NODES {
                w *= 0.5;
            }
            let w = w / d;
            num0 += w * v0;
            num1 += w * v1;
            den += w;
        }
        Some((num0 / den, num1 / den))
    }
}

/// J_m(kb)Y_m(ka) − Y_m(kb)J_m(ka).
pub fn cross_product(m: u32, a: f64, b: f64, k: f64) -> f64 {
    let n = m as i32;
    bessel::j(n, k * b) * bessel::y(n, k * a) - bessel::y(n, k * b) * bessel::j(n, k * a)
}

impl AnnularMode {
    /// Smallest positive root of the cross product by scanning then bisection.
    pub fn new(m: u32, a: f64, b: f64, h: f64) -> Result<Self, ResonatorError> {
        if !(a > 0.0 && b > a && h > 0.0) {
            return Err(ResonatorError::Config(format!("need 0 < a < b and h > 0, got a={a}, b={b}, h={h}")));
        }
        let step = PI / (b - a) / 64.0;
        let limit = 64.0 * PI / (b - a);
        let mut lo = step;
        let mut f_lo = cross_product(m, a, b, lo);
        let (mut lo, mut hi) = loop {
            let hi = lo + step;
            if hi > limit {
                return Err(ResonatorError::Root { lo: step, hi: limit });
            }
            let f_hi = cross_product(m, a, b, hi);
            if f_lo == 0.0 {
                break (lo, lo);
            }
            if f_lo.signum() != f_hi.signum() {
                break (lo, hi);
            }
            lo = hi;
            f_lo = f_hi;
        };
        while hi - lo > 4.0 * f64::EPSILON * hi {
            let mid = 0.5 * (lo + hi);
            let f_mid = cross_product(m, a, b, mid);
            if f_mid == 0.0 {
                lo = mid;
                hi = mid;
            } else if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        let k = 0.5 * (lo + hi);
        let mut mode = Self { m, a, b, h, k, omega: k, amplitude: 1.0, profile: RadialProfile::default() };
        mode.profile = RadialProfile::build(0.8 * a, 1.2 * b, |r| (mode.radial(r), mode.radial_prime(r)));
        let peak = (0..=1000).map(|i| mode.profile(a + (b - a) * f64::from(i) / 1000.0).0.abs()).fold(0.0, f64::max);
        mode.amplitude = 1.0 / peak;
        Ok(mode)
    }

    /// (R, R') from the interpolant, or directly outside its range.
    fn profile(&self, r: f64) -> (f64, f64) {
        self.profile.eval(r).unwrap_or_else(|| (self.radial(r), self.radial_prime(r)))
    }

    /// R(kr) before amplitude scaling.
    pub fn radial(&self, r: f64) -> f64 {
        let n = self.m as i32;
        let ka = self.k * self.a;
        bessel::j(n, self.k * r) * bessel::y(n, ka) - bessel::y(n, self.k * r) * bessel::j(n, ka)
    }

    /// dR/dx at x = kr, before amplitude scaling.
    pub fn radial_prime(&self, r: f64) -> f64 {
        let n = self.m as i32;
        let ka = self.k * self.a;
        bessel::j_prime(n, self.k * r) * bessel::y(n, ka) - bessel::y_prime(n, self.k * r) * bessel::j(n, ka)
    }

    /// Spatial amplitudes at (r, θ): E_z for the cos(ωt) phase and (B_x, B_y) for the
    /// sin(ωt) phase, both as relative vectors (bivectors on σ_k = γ_kγ_t).
    pub fn amplitudes(&self, r: f64, theta: f64) -> Result<(Bivector, Bivector), ResonatorError> {
        let tol = 1e-12 * self.b;
        if !(r >= self.a - tol && r <= self.b + tol) {
            return Err(ResonatorError::OutsideAnnulus { r, a: self.a, b: self.b });
        }
        Ok(self.amplitudes_unchecked(r, theta))
    }

    /// Same as [`Self::amplitudes`] for any r > 0. Straight-chord meshes reach slightly
    /// inside r = a; the Bessel combination continues smoothly there.
    fn amplitudes_unchecked(&self, r: f64, theta: f64) -> (Bivector, Bivector) {
        let mf = f64::from(self.m);
        let (radial, radial_prime) = self.profile(r);
        let ez = self.amplitude * radial * (mf * theta).cos();
        let b_r = self.amplitude * mf / (r * self.omega) * radial * (mf * theta).sin();
        let b_theta = self.amplitude * radial_prime * (mf * theta).cos();
        let (c, s) = (theta.cos(), theta.sin());
        (relative_vector([0.0, 0.0, ez]), relative_vector([b_r * c - b_theta * s, b_r * s + b_theta * c, 0.0]))
    }

    /// Lab-frame Faraday bivector F = E + I B at an event.
    pub fn field(&self, x: &FourVector) -> Result<Bivector, ResonatorError> {
        let [t, px, py, _] = x.0;
        let r = px.hypot(py);
        if !(r > 0.0 && r.is_finite()) {
            return Err(ResonatorError::OutsideAnnulus { r, a: self.a, b: self.b });
        }
        let (e, b) = self.amplitudes_unchecked(r, py.atan2(px));
        let wt = self.omega * t;
        Ok(recombine_field(&e.scale(wt.cos()), &b.scale(wt.sin())))
    }
}

/// Σ v_k σ_k with σ_k = γ_kγ_t = −γ_tγ_k.
pub fn relative_vector(v: [f64; 3]) -> Bivector {
    Bivector([-v[0], -v[1], -v[2], 0.0, 0.0, 0.0])
}

/// z component of a relative vector.
pub fn relative_z(e: &Bivector) -> f64 {
    -e.0[2]
}

/// Excitation frame of the initial data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Excitation {
    /// Facet integrals of the lab-frame mode over the rotating mesh.
    Stationary,
    /// Lab-frame edge integrals over unrotated facets, scaled by 1/cosh(r_l Ω).
    Rotating,
}

/// b⁰ and e^{½}.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialDofs {
    pub b0: Vec<f64>,
    pub e_half: Vec<f64>,
}

/// Gauss points per facet direction for initial-data integrals.
pub const PROJECTION_POINTS: usize = 6;

/// Facet integrals of the mode over every b⁰ face and e^{½} edge of the first interval.
fn facet_dofs(mode: &AnnularMode, m4: &Mesh4, rule: &GaussRule) -> Result<InitialDofs, ResonatorError> {
    let (nf, ne, nv) = (m4.mesh3.n_faces(), m4.mesh3.n_edges(), m4.mesh3.n_volumes());
    let mut b0 = vec![f64::NAN; nf];
    let mut e_half = vec![f64::NAN; ne];
    for cell in 0..nv {
        let map = m4.cell_map(cell);
        for f in local_facets() {
            let d = m4.dof_index(m4.global_facet(cell, &f));
            let slot = match (d.kind, d.step) {
                (DofKind::B, 0) => &mut b0[d.reference],
                (DofKind::E, 0) => &mut e_half[d.reference],
                _ => continue,
            };
            if slot.is_nan() {
                *slot = integrate_field(mode, &map, &f, rule)?;
            }
        }
    }
    Ok(InitialDofs { b0, e_half })
}

fn integrate_field(
    mode: &AnnularMode,
    map: &CellMap,
    f: &whitney::LocalFacet,
    rule: &GaussRule,
) -> Result<f64, ResonatorError> {
    // facet_integral takes an infallible closure; evaluate the field first.
    let points = whitney::facet_quadrature(f, rule);
    let mut sum = 0.0;
    for (p, w) in points {
        let x = map.map_point(&p);
        sum += w * whitney::facet_tangent(f, map, &p).dot(&mode.field(&x)?);
    }
    Ok(sum)
}

/// Initial DoFs with PEC edges zeroed.
pub fn project_initial(
    mode: &AnnularMode,
    m4: &Mesh4,
    frame: Excitation,
    points: usize,
) -> Result<InitialDofs, ResonatorError> {
    let rule = GaussRule::new(points);
    let mut dofs = match frame {
        Excitation::Stationary => facet_dofs(mode, m4, &rule)?,
        Excitation::Rotating => {
            let at_rest = Mesh4::extrude(&m4.mesh3, m4.dt, 1, 0.0)?;
            let mut d = facet_dofs(mode, &at_rest, &rule)?;
            for (l, e) in d.e_half.iter_mut().enumerate() {
                *e /= (m4.mesh3.edge_mid_radius(l) * m4.omega).cosh();
            }
            d
        }
    };
    for (e, &wall) in dofs.e_half.iter_mut().zip(&m4.mesh3.boundary_edge) {
        if wall {
            *e = 0.0;
        }
    }
    Ok(dofs)
}

/// Where a DoF lives relative to the state (b^{n−1}, e^{n−½}, b^n).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    BPrev,
    EHalf,
    BCurr,
}

/// Co-rotating E_z probe at a mesh node, as a fixed linear functional of the state. The
/// field is reconstructed at mid-interval in every cell touching the node and averaged.
#[derive(Clone, Debug)]
pub struct Probe {
    pub node: usize,
    /// Reference (r, φ, z) of the node.
    pub position: [f64; 3],
    weights: Vec<(Slot, usize, f64)>,
}

impl Probe {
    /// Probe at the node nearest to reference point `cyl`, built on interval 1 of `m4`.
    pub fn nearest(m4: &Mesh4, cyl: [f64; 3]) -> Result<Self, ResonatorError> {
        if m4.n_t < 2 {
            return Err(MeshError::TooFewLayers { needed: 2, have: m4.n_t }.into());
        }
        let target = [cyl[0] * cyl[1].cos(), cyl[0] * cyl[1].sin(), cyl[2]];
        let dist = |p: &[f64; 3]| (0..3).map(|k| (p[k] - target[k]).powi(2)).sum::<f64>();
        let node = (0..m4.mesh3.n_nodes())
            .min_by(|&p, &q| dist(&m4.mesh3.nodes[p]).total_cmp(&dist(&m4.mesh3.nodes[q])))
            .ok_or_else(|| ResonatorError::Config("empty mesh".into()))?;
        let position = m4.mesh3.cylindrical[node];
        let nv = m4.mesh3.n_volumes();
        let u = observer_velocity(&position, 1.5 * m4.dt, m4.omega);
        let mut acc: std::collections::BTreeMap<(u8, usize), f64> = Default::default();
        let mut cells = 0usize;
        for (v, vol) in m4.mesh3.volumes.iter().enumerate() {
            let Some(corner) = vol.nodes.iter().position(|&p| p == node) else { continue };
            cells += 1;
            let cell = nv + v;
            let map = m4.cell_map(cell);
            let xr = [
                0.0,
                whitney::vertex_sign(corner, 0),
                whitney::vertex_sign(corner, 1),
                whitney::vertex_sign(corner, 2),
            ];
            let frames = map.frames(&xr)?;
            for f in local_facets() {
                let basis = whitney::whitney2_phys(&f, &frames, &xr);
                let (e, _) = split_field(&basis, &u)?;
                let w = relative_z(&e);
                if w == 0.0 {
                    continue;
                }
                let d = m4.dof_index(m4.global_facet(cell, &f));
                let slot = match (d.kind, d.step) {
                    (DofKind::B, 1) => 0,
                    (DofKind::E, _) => 1,
                    _ => 2,
                };
                *acc.entry((slot, d.reference)).or_insert(0.0) += w;
            }
        }
        let slots = [Slot::BPrev, Slot::EHalf, Slot::BCurr];
        let weights = acc.into_iter().map(|((s, r), w)| (slots[usize::from(s)], r, w / cells as f64)).collect();
        Ok(Self { node, position, weights })
    }

    /// E_z at time (n − ½)Δt for the state at step n.
    pub fn sample(&self, s: &State) -> f64 {
        self.weights
            .iter()
            .map(|&(slot, r, w)| {
                w * match slot {
                    Slot::BPrev => s.b_prev[r],
                    Slot::EHalf => s.e_half[r],
                    Slot::BCurr => s.b_curr[r],
                }
            })
            .sum()
    }
}

/// Uniformly sampled probe signal: value i at t0 + i·dt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSignal {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TimeSignal {
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.values.len().saturating_sub(1) as f64
    }

    /// CSV `t,E_z,envelope`; the envelope column uses `carrier` for demodulation.
    pub fn write_csv<W: Write>(&self, mut w: W, carrier: f64) -> std::io::Result<()> {
        let env = envelope(self, carrier);
        writeln!(w, "t,E_z,envelope")?;
        for (i, (v, e)) in self.values.iter().zip(&env).enumerate() {
            writeln!(w, "{:.17e},{v:.17e},{e:.17e}", self.time(i))?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`Self::write_csv`] (only the first two columns are used).
    pub fn read_csv(text: &str) -> Result<Self, ResonatorError> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (line_no, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut next = || -> Result<f64, ResonatorError> {
                cols.next()
                    .and_then(|c| c.trim().parse().ok())
                    .ok_or_else(|| ResonatorError::Config(format!("malformed signal line {}", line_no + 1)))
            };
            times.push(next()?);
            values.push(next()?);
        }
        if times.len() < 2 {
            return Err(ResonatorError::Config("signal needs at least two samples".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
            return Err(ResonatorError::Config("signal is not uniformly sampled".into()));
        }
        Ok(Self { t0: times[0], dt, values })
    }
}

/// Amplitude envelope by I/Q demodulation at `carrier`; each quadrature is averaged over
/// a centered window of exactly one carrier period (fractional end weights), truncated at
/// the signal ends.
pub fn envelope(sig: &TimeSignal, carrier: f64) -> Vec<f64> {
    let half = PI / carrier / sig.dt;
    let (i, q): (Vec<f64>, Vec<f64>) = sig
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let (s, c) = (carrier * sig.time(k)).sin_cos();
            (v * c, v * s)
        })
        .unzip();
    let (i, q) = (window_average(&i, half), window_average(&q, half));
    i.iter().zip(&q).map(|(a, b)| 2.0 * a.hypot(*b)).collect()
}

/// Average over [k − half, k + half] samples: weight 1 inside, (half − ⌊half⌋) + ½ on the
/// two partial end samples (midpoint rule of a box of width 2·half).
fn window_average(x: &[f64], half: f64) -> Vec<f64> {
    let n = x.len();
    let whole = (half - 0.5).floor().max(0.0) as usize;
    let edge = half - whole as f64 - 0.5;
    let mut prefix = vec![0.0; n + 1];
    for (k, v) in x.iter().enumerate() {
        prefix[k + 1] = prefix[k] + v;
    }
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(whole);
            let hi = (k + whole).min(n - 1);
            let mut sum = prefix[hi + 1] - prefix[lo];
            let mut weight = (hi + 1 - lo) as f64;
            if edge > 0.0 {
                if k > whole {
                    sum += edge * x[k - whole - 1];
                    weight += edge;
                }
                if k + whole + 1 < n {
                    sum += edge * x[k + whole + 1];
                    weight += edge;
                }
            }
            sum / weight
        })
        .collect()
}

/// Beat-frequency estimate of a probe signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    /// Time of the first envelope null, or of the first shallow minimum when no null forms.
    pub t0: f64,
    /// π/(2T₀).
    pub from_null: f64,
    /// Two-tone least-squares refinement, when requested and successful.
    pub refined: Option<f64>,
}

impl ShiftEstimate {
    pub fn delta_omega(&self) -> f64 {
        self.refined.unwrap_or(self.from_null)
    }
}

/// Level (fraction of the pre-null peak) whose two crossings bracket the null.
const NULL_LEVEL: f64 = 0.2;

/// δω = π/(2T₀) for the first envelope null T₀, refined by a two-tone least-squares fit
/// when `refine` is set.
///
/// T₀ is the midpoint of the envelope's down- and up-crossings of 0.2 × peak (|cos δω t| is
/// symmetric there); the null must dip below half that level so ripple cannot fake a
/// crossing pair. Without an up-crossing inside the record, T₀ follows from the
/// down-crossing alone, assuming the envelope starts at its peak.
pub fn estimate_shift(sig: &TimeSignal, carrier: f64, refine: bool) -> Result<ShiftEstimate, ResonatorError> {
    if !(carrier > 0.0) {
        return Err(ResonatorError::Config(format!("carrier must be positive, got {carrier}")));
    }
    let env = envelope(sig, carrier);
    let short = || ResonatorError::HorizonTooShort { duration: sig.duration() };
    let t0 = match null_time(sig, &env) {
        Some(t0) => t0,
        None => shallow_minimum_time(sig, &env).ok_or_else(short)?,
    };
    let from_null = PI / (2.0 * t0);
    let refined = if refine { refine_two_tone(sig, carrier, from_null) } else { None };
    Ok(ShiftEstimate { t0, from_null, refined })
}

/// Midpoint of the first pair of crossings of the null level around a deep dip.
fn null_time(sig: &TimeSignal, env: &[f64]) -> Option<f64> {
    let mut peak = 0.0f64;
    let mut deep = None;
    for (k, &v) in env.iter().enumerate() {
        peak = peak.max(v);
        if k > 0 && v < 0.5 * NULL_LEVEL * peak {
            deep = Some(k);
            break;
        }
    }
    let deep = deep?;
    let level = NULL_LEVEL * peak;
    let down = (1..=deep).rev().find(|&k| env[k - 1] >= level)?;
    let crossing = |k: usize| {
        let (p, q) = (env[k - 1], env[k]);
        sig.time(k - 1) + sig.dt * (p - level) / (p - q)
    };
    Some(match (deep + 1..env.len()).find(|&k| env[k] >= level) {
        Some(up) => 0.5 * (crossing(down) + crossing(up)),
        None => crossing(down) * 0.5 * PI / NULL_LEVEL.acos(),
    })
}

/// Unequal tone amplitudes leave a shallow envelope minimum instead of a null. Takes the lowest
/// point of the first excursion below half the running peak, which must recover above it.
fn shallow_minimum_time(sig: &TimeSignal, env: &[f64]) -> Option<f64> {
    let mut peak = 0.0f64;
    let mut start = None;
    for (k, &v) in env.iter().enumerate() {
        peak = peak.max(v);
        if v < 0.5 * peak {
            start = Some(k);
            break;
        }
    }
    let start = start?;
    let end = (start..env.len()).find(|&k| env[k] >= 0.5 * peak)?;
    let k = (start..end).min_by(|&p, &q| env[p].total_cmp(&env[q]))?;
    if k == 0 || k + 1 >= env.len() {
        return Some(sig.time(k));
    }
    // Vertex of the parabola through the three samples around the minimum.
    let (p, q, r) = (env[k - 1], env[k], env[k + 1]);
    let curvature = p - 2.0 * q + r;
    let shift = if curvature > 0.0 { 0.5 * (p - r) / curvature } else { 0.0 };
    Some(sig.time(k) + shift * sig.dt)
}

/// Residual of the best fit by cos/sin of (ω_c ± δ)t.
fn two_tone_residual(sig: &TimeSignal, centre: f64, delta: f64) -> f64 {
    let mut ata = nalgebra::Matrix4::<f64>::zeros();
    let mut atb = nalgebra::Vector4::<f64>::zeros();
    let mut bb = 0.0;
    // Phasors advanced by exact rotations, re-seeded periodically against drift.
    let (w1, w2) = (centre - delta, centre + delta);
    let (r1, r2) = ((w1 * sig.dt).sin_cos(), (w2 * sig.dt).sin_cos());
    let (mut p1, mut p2) = ((0.0, 1.0), (0.0, 1.0));
    for (k, v) in sig.values.iter().enumerate() {
        if k % 1024 == 0 {
            let t = sig.time(k);
            p1 = (w1 * t).sin_cos();
            p2 = (w2 * t).sin_cos();
        }
        let row = nalgebra::Vector4::new(p1.1, p1.0, p2.1, p2.0);
        ata += row * row.transpose();
        atb += row * *v;
        bb += v * v;
        p1 = (p1.0 * r1.1 + p1.1 * r1.0, p1.1 * r1.1 - p1.0 * r1.0);
        p2 = (p2.0 * r2.1 + p2.1 * r2.0, p2.1 * r2.1 - p2.0 * r2.0);
    }
    match ata.cholesky() {
        Some(ch) => (bb - atb.dot(&ch.solve(&atb))).max(0.0),
        None => f64::INFINITY,
    }
}

/// Minimizes `f` over [lo, hi] by a coarse scan followed by golden-section search.
fn scan_then_golden(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    const SCAN: usize = 41;
    let step = (hi - lo) / (SCAN - 1) as f64;
    let best = (0..SCAN).map(|i| lo + step * i as f64).min_by(|p, q| f(*p).total_cmp(&f(*q))).unwrap_or(lo);
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Alternating one-dimensional searches over carrier and half-splitting. Returns None when
/// the fit does not beat the null-based model or leaves a ±20% window around it.
fn refine_two_tone(sig: &TimeSignal, carrier: f64, delta0: f64) -> Option<f64> {
    let resolution = 2.0 * PI / sig.duration().max(sig.dt);
    // Carrier from the zero-crossing count.
    let crossings = sig.values.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
    let mut centre = if crossings > 4 { PI * crossings as f64 / sig.duration() } else { carrier };
    let mut delta = delta0;
    let start = two_tone_residual(sig, centre, delta);
    for _ in 0..3 {
        centre = scan_then_golden(centre - resolution, centre + resolution, |c| two_tone_residual(sig, c, delta));
        delta = scan_then_golden(0.8 * delta0, 1.2 * delta0, |d| two_tone_residual(sig, centre, d));
    }
    let end = two_tone_residual(sig, centre, delta);
    (end <= start && (delta / delta0 - 1.0).abs() < 0.199).then_some(delta)
}

/// |δω_est − mΩ| / (mΩ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftResult {
    pub estimated: f64,
    pub analytic: f64,
    pub relative_error: f64,
}

impl ShiftResult {
    pub fn new(estimated: f64, m: u32, omega: f64) -> Self {
        let analytic = f64::from(m) * omega;
        Self { estimated, analytic, relative_error: (estimated - analytic).abs() / analytic }
    }
}

/// Rotation rate giving rim speed `v_max` at r = b: Ω = atanh(v_max)/b.
pub fn omega_from_rim_speed(v_max: f64, b: f64) -> f64 {
    v_max.atanh() / b
}

/// Everything needed for one simulated resonator run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub n_z: usize,
    /// Time step; `None` picks half the Courant limit of the smallest edges.
    pub dt: Option<f64>,
    /// Number of steps; `None` covers 1.3 quarter-periods of the beat expected at the probe,
    /// plus a demodulation margin (see [`ExperimentConfig::steps`]).
    pub n_steps: Option<usize>,
    pub omega: f64,
    pub method: Method,
    pub scheme: Scheme,
    pub m: u32,
    pub excitation: Excitation,
    /// Reference (r, φ, z) of the probe; `None` uses ((a+b)/2, 0, h/2).
    pub probe: Option<[f64; 3]>,
    /// Energy growth factor treated as divergence.
    pub growth_limit: f64,
}

impl ExperimentConfig {
    /// Desk-scale setup: a = 5 mm, b = 10 mm, h = 2 mm on a 4×32×2 mesh.
    pub fn desk(m: u32, omega: f64, method: Method) -> Self {
        Self {
            a: 5e-3,
            b: 10e-3,
            h: 2e-3,
            n_r: 4,
            n_theta: 32,
            n_z: 2,
            dt: None,
            n_steps: None,
            omega,
            method,
            scheme: Scheme::Implicit,
            m,
            excitation: Excitation::Stationary,
            probe: None,
            growth_limit: 10.0,
        }
    }

    pub fn probe_position(&self) -> [f64; 3] {
        self.probe.unwrap_or([0.5 * (self.a + self.b), 0.0, 0.5 * self.h])
    }

    /// Half the Courant limit of a brick with the smallest radial, azimuthal (chord at a)
    /// and axial edges.
    pub fn default_dt(&self) -> f64 {
        let dr = (self.b - self.a) / self.n_r as f64;
        let chord = 2.0 * self.a * (PI / self.n_theta as f64).sin();
        let dz = self.h / self.n_z as f64;
        0.5 / (dr.powi(-2) + chord.powi(-2) + dz.powi(-2)).sqrt()
    }

    pub fn time_step(&self) -> f64 {
        self.dt.unwrap_or_else(|| self.default_dt())
    }

    /// Steps covering 1.3 quarter-periods of the slowest plausible beat m·tanh(r₀Ω)/r₀ (the
    /// probe's lab angular speed times m), plus about four carrier periods of margin for the
    /// demodulation window (the lowest carrier has period near 2(b − a)); 2000 steps when m or
    /// Ω vanish.
    pub fn steps(&self) -> usize {
        if let Some(n) = self.n_steps {
            return n;
        }
        let r0 = self.probe_position()[0];
        let beat = f64::from(self.m) * (r0 * self.omega).tanh() / r0;
        if beat > 0.0 {
            let margin = 8.0 * (self.b - self.a);
            ((1.3 * PI / (2.0 * beat) + margin) / self.time_step()).ceil() as usize
        } else {
            2000
        }
    }

    pub fn validate(&self) -> Result<(), ResonatorError> {
        let positive = [self.a, self.b - self.a, self.h, self.time_step(), self.growth_limit];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ResonatorError::Config("geometry, Δt and growth limit must be positive and finite".into()));
        }
        if !self.omega.is_finite() || (self.b * self.omega).abs() >= 20.0 {
            return Err(ResonatorError::Config(format!("Ω = {} is not a usable rotation rate", self.omega)));
        }
        if self.n_r < 1 || self.n_theta < 3 || self.n_z < 1 {
            return Err(ResonatorError::Config("need N_r ≥ 1, N_θ ≥ 3, N_z ≥ 1".into()));
        }
        if let Scheme::Extrapolated(order) = self.scheme {
            if order > 2 {
                return Err(SolverError::Order(order).into());
            }
        }
        Ok(())
    }
}

/// Result of one run.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub mode: AnnularMode,
    pub signal: TimeSignal,
    pub energy: EnergyMonitor,
    pub probe: [f64; 3],
    pub n_edges: usize,
    pub n_faces: usize,
    pub diverged_at: Option<usize>,
}

/// Builds the mesh and blocks, projects the mode and steps the chosen scheme, sampling the
/// probe after every step. Divergence stops the run and keeps the partial signal.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment, ResonatorError> {
    config.validate()?;
    let dt = config.time_step();
    let mesh3 = Mesh3::ring(config.a, config.b, config.h, config.n_r, config.n_theta, config.n_z)?;
    let m4 = Mesh4::extrude(&mesh3, dt, 3, config.omega)?;
    let materials = vec![Material::VACUUM; mesh3.n_volumes()];
    let blocks = scheme_blocks(&m4, &materials, config.method)?;
    let mode = AnnularMode::new(config.m, config.a, config.b, config.h)?;
    let init = project_initial(&mode, &m4, config.excitation, PROJECTION_POINTS)?;
    run_with(config, &m4, &blocks, mode, init)
}

/// Stepping part of [`run_experiment`] for callers that already hold the blocks.
pub fn run_with(
    config: &ExperimentConfig,
    m4: &Mesh4,
    blocks: &crate::material::MaterialBlocks,
    mode: AnnularMode,
    init: InitialDofs,
) -> Result<Experiment, ResonatorError> {
    let dt = m4.dt;
    let curl = sparse::to_f64(&m4.mesh3.curl());
    let pec = &m4.mesh3.boundary_edge;
    let stepper = Stepper::new(config.scheme, blocks, &curl, pec)?;
    let form = EnergyForm::new(blocks, &curl)?;
    let probe = Probe::nearest(m4, config.probe_position())?;
    let mut state = State::start(init.b0, init.e_half, &curl, pec, dt)?;
    let mut monitor = EnergyMonitor::new(config.growth_limit);
    let mut values = vec![probe.sample(&state)];
    monitor.record(state.step, state.time(), form.evaluate(&state));
    for _ in 0..config.steps() {
        state = match stepper.step(&state) {
            Ok(s) => s,
            Err(SolverError::NonFinite { step }) => {
                monitor.diverged_at.get_or_insert(step);
                break;
            }
            Err(e) => return Err(e.into()),
        };
        values.push(probe.sample(&state));
        if monitor.record(state.step, state.time(), form.evaluate(&state)) {
            break;
        }
    }
    Ok(Experiment {
        mode,
        signal: TimeSignal { t0: 0.5 * dt, dt, values },
        diverged_at: monitor.diverged_at,
        energy: monitor,
        probe: probe.position,
        n_edges: m4.mesh3.n_edges(),
        n_faces: m4.mesh3.n_faces(),
    })
}

/// One entry of an error table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum TableCell {
    /// No shift is defined (m = 0).
    Null,
    Value {
        delta_omega: f64,
        expected: f64,
        relative_error: f64,
    },
    Failed {
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub method: Method,
    /// Rim speeds v_max/c of the columns.
    pub rim_speeds: Vec<f64>,
    pub omegas: Vec<f64>,
    pub modes: Vec<u32>,
    /// `cells[row][column]`, rows follow `modes`.
    pub cells: Vec<Vec<TableCell>>,
}

/// Runs every (m, v_max) cell independently; failures are recorded in their cell.
pub fn error_table(base: &ExperimentConfig, modes: &[u32], rim_speeds: &[f64], refine: bool) -> ErrorTable {
    let omegas: Vec<f64> = rim_speeds.iter().map(|&v| omega_from_rim_speed(v, base.b)).collect();
    let jobs: Vec<(usize, usize)> = (0..modes.len()).flat_map(|r| (0..omegas.len()).map(move |c| (r, c))).collect();
    let results: Vec<TableCell> = jobs
        .par_iter()
        .map(|&(r, c)| {
            let m = modes[r];
            if m == 0 {
                return TableCell::Null;
            }
            let config = ExperimentConfig { m, omega: omegas[c], ..base.clone() };
            match run_cell(&config, refine) {
                Ok(res) => TableCell::Value {
                    delta_omega: res.estimated,
                    expected: res.analytic,
                    relative_error: res.relative_error,
                },
                Err(e) => TableCell::Failed { reason: e.to_string() },
            }
        })
        .collect();
    let mut cells = vec![Vec::with_capacity(omegas.len()); modes.len()];
    for ((r, _), cell) in jobs.into_iter().zip(results) {
        cells[r].push(cell);
    }
    ErrorTable { method: base.method, rim_speeds: rim_speeds.to_vec(), omegas, modes: modes.to_vec(), cells }
}

/// Simulates one configuration and compares the beat with mΩ.
pub fn run_cell(config: &ExperimentConfig, refine: bool) -> Result<ShiftResult, ResonatorError> {
    let run = run_experiment(config)?;
    if let Some(step) = run.diverged_at {
        return Err(ResonatorError::Diverged { step });
    }
    let estimate = estimate_shift(&run.signal, run.mode.omega, refine)?;
    Ok(ShiftResult::new(estimate.delta_omega(), config.m, config.omega))
}

impl ErrorTable {
    /// Aligned text: one row per mode, relative errors in percent.
    pub fn to_text(&self) -> String {
        let mut out = format!("relative error of δω vs mΩ ({:?})\n", self.method);
        out.push_str(&format!("{:>4}", "m"));
        for v in &self.rim_speeds {
            out.push_str(&format!("{:>14}", format!("{:.2}%", 100.0 * v)));
        }
        out.push('\n');
        for (m, row) in self.modes.iter().zip(&self.cells) {
            out.push_str(&format!("{m:>4}"));
            for cell in row {
                let text = match cell {
                    TableCell::Null => "Null".to_string(),
                    TableCell::Value { relative_error, .. } => format!("{:.2}%", 100.0 * relative_error),
                    TableCell::Failed { .. } => "failed".to_string(),
                };
                out.push_str(&format!("{text:>14}"));
            }
            out.push('\n');
        }
        out
    }

    /// Whitespace data `Omega m delta_omega expected` for the line plot.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("# Omega m delta_omega m*Omega\n");
        for (m, row) in self.modes.iter().zip(&self.cells) {
            for (omega, cell) in self.omegas.iter().zip(row) {
                if let TableCell::Value { delta_omega, expected, .. } = cell {
                    out.push_str(&format!("{omega:.12e} {m} {delta_omega:.12e} {expected:.12e}\n"));
                }
            }
        }
        out
    }
}

/// gnuplot script plotting E_z and its envelope from a signal CSV.
pub fn signal_plot_script(csv: &str, png: &str) -> String {
    format!(
        "set datafile separator ','\nset terminal pngcairo size 1000,500\nset output '{png}'\n\
         set xlabel 't [m]'\nset ylabel 'E_z'\n\
         plot '{csv}' using 1:2 with lines title 'E_z', '' using 1:3 with lines title 'envelope'\n"
    )
}

/// gnuplot script plotting U against time from an energy CSV.
pub fn energy_plot_script(csv: &str, png: &str) -> String {
    format!(
        "set datafile separator ','\nset terminal pngcairo size 1000,500\nset output '{png}'\n\
         set xlabel 't [m]'\nset ylabel 'U'\nplot '{csv}' using 2:3 with lines title 'energy'\n"
    )
}

/// gnuplot script for δω vs Ω points against the line mΩ, from [`ErrorTable::plot_data`].
pub fn linear_plot_script(data: &str, png: &str) -> String {
    format!(
        "set terminal pngcairo size 800,600\nset output '{png}'\nset key left top\n\
         set xlabel 'Omega [1/m]'\nset ylabel 'delta omega [1/m]'\n\
         plot '{data}' using 1:3 with points pt 7 title 'simulated', '' using 1:4 with linespoints title 'm Omega'\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bessel_reference_values() {
        let cases = [
            (bessel::j(0, 1.0), 0.7651976865579666),
            (bessel::y(0, 1.0), 0.08825696421567696),
            (bessel::j(1, 1.0), 0.4400505857449335),
            (bessel::y(1, 1.0), -0.7812128213002887),
            (bessel::j(2, 5.0), 0.04656511627775229),
            (bessel::y(3, 7.5), 0.15970759193793516),
            (bessel::y(4, 3.3), -0.7461539261399626),
            (bessel::j(3, 12.0), 0.19513693953109265),
        ];
        for (got, want) in cases {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
    }

    proptest! {
        #[test]
        fn bessel_wronskian(n in 0i32..6, x in 0.5f64..40.0) {
            // J_{n+1} Y_n − J_n Y_{n+1} = 2/(πx).
            let (p, q) = (bessel::j(n + 1, x) * bessel::y(n, x), bessel::j(n, x) * bessel::y(n + 1, x));
            prop_assert!((p - q - 2.0 / (PI * x)).abs() < 1e-13 * (p.abs() + q.abs()));
        }
    }

    #[test]
    fn mode_root_is_bracketed_and_walls_vanish() {
        let (a, b) = (5e-3, 10e-3);
        for m in 0..4 {
            let mode = AnnularMode::new(m, a, b, 2e-3).unwrap();
            assert!(cross_product(m, a, b, mode.k).abs() < 1e-12);
            // Oracle: the cross product changes sign across the root and not before it.
            let eps = 1e-6 * mode.k;
            assert!(cross_product(m, a, b, mode.k - eps).signum() != cross_product(m, a, b, mode.k + eps).signum());
            let below: Vec<f64> = (1..200).map(|i| cross_product(m, a, b, mode.k * f64::from(i) / 200.0)).collect();
            assert!(below.windows(2).all(|w| w[0].signum() == w[1].signum()));
            for r in [a, b] {
                let (e, _) = mode.amplitudes(r, 0.3).unwrap();
                assert!(relative_z(&e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn radial_interpolant_matches_direct_evaluation() {
        let mode = AnnularMode::new(3, 5e-3, 10e-3, 2e-3).unwrap();
        let scale = 1.0 / mode.amplitude;
        for i in 0..=37 {
            let r = 4.2e-3 + 7.5e-3 * f64::from(i) / 37.0;
            let (p, q) = mode.profile(r);
            assert!((p - mode.radial(r)).abs() < 1e-13 * scale);
            assert!((q - mode.radial_prime(r)).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn axisymmetric_mode_has_no_azimuthal_pattern() {
        let mode = AnnularMode::new(0, 5e-3, 10e-3, 2e-3).unwrap();
        let (e0, _) = mode.amplitudes(7e-3, 0.0).unwrap();
        for theta in [0.4, 1.9, 4.0] {
            let (e, _) = mode.amplitudes(7e-3, theta).unwrap();
            assert!((relative_z(&e) - relative_z(&e0)).abs() < 1e-15);
        }
        assert!(matches!(mode.amplitudes(4e-3, 0.0), Err(ResonatorError::OutsideAnnulus { .. })));
    }

    #[test]
    fn mode_satisfies_maxwell_by_finite_differences() {
        // ∂_t B = −∇×E and ∂_t E = ∇×B for the lab-frame field, central differences.
        let mode = AnnularMode::new(2, 5e-3, 10e-3, 2e-3).unwrap();
        let h = 1e-7;
        let at = |t: f64, x: f64, y: f64| {
            let f = mode.field(&FourVector::new(t, x, y, 1e-3)).unwrap();
            let (e, b) = split_field(&f, &FourVector::new(1.0, 0.0, 0.0, 0.0)).unwrap();
            ([-e.0[0], -e.0[1], -e.0[2]], [-b.0[0], -b.0[1], -b.0[2]])
        };
        let (t, x, y) = (3e-3, 4e-3, 5e-3);
        let d = |f: &dyn Fn(f64) -> f64| (f(h) - f(-h)) / (2.0 * h);
        let dez_dx = d(&|s| at(t, x + s, y).0[2]);
        let dez_dy = d(&|s| at(t, x, y + s).0[2]);
        let dbx_dt = d(&|s| at(t + s, x, y).1[0]);
        let dby_dt = d(&|s| at(t + s, x, y).1[1]);
        let scale = dez_dx.abs().max(dez_dy.abs());
        assert!((dbx_dt + dez_dy).abs() < 1e-6 * scale);
        assert!((dby_dt - dez_dx).abs() < 1e-6 * scale);
        let curl_b = d(&|s| at(t, x + s, y).1[1]) - d(&|s| at(t, x, y + s).1[0]);
        let dez_dt = d(&|s| at(t + s, x, y).0[2]);
        assert!((dez_dt - curl_b).abs() < 1e-6 * curl_b.abs().max(1.0));
    }

    fn small_case(omega: f64) -> (Mesh4, AnnularMode) {
        let mesh3 = Mesh3::ring(5e-3, 10e-3, 2e-3, 2, 12, 1).unwrap();
        let m4 = Mesh4::extrude(&mesh3, 4e-4, 3, omega).unwrap();
        (m4, AnnularMode::new(1, 5e-3, 10e-3, 2e-3).unwrap())
    }

    #[test]
    fn frames_coincide_without_rotation() {
        let (m4, mode) = small_case(0.0);
        let s = project_initial(&mode, &m4, Excitation::Stationary, 4).unwrap();
        let r = project_initial(&mode, &m4, Excitation::Rotating, 4).unwrap();
        assert_eq!(s, r);
    }

    #[test]
    fn initial_dofs_are_facet_integrals_of_the_mode() {
        let (m4, mode) = small_case(3.0);
        let d = project_initial(&mode, &m4, Excitation::Stationary, PROJECTION_POINTS).unwrap();
        // b⁰ vanishes (B ∝ sin ωt), e^{½} equals −∫₀^Δt ∫ E·dl on the unsheared edge to O(Ω).
        assert!(d.b0.iter().all(|v| v.abs() < 1e-15));
        let fine = project_initial(&mode, &m4, Excitation::Stationary, 12).unwrap();
        let scale = d.e_half.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = d.e_half.iter().zip(&fine.e_half).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8 * scale, "{diff}");
        // Independent line integral for a z edge: E_z constant along it.
        let l = (0..m4.mesh3.n_edges()).find(|&l| m4.mesh3.edges[l].axis == 2 && !m4.mesh3.boundary_edge[l]).unwrap();
        let [p, _] = m4.mesh3.edges[l].nodes;
        let [x, y, _] = m4.mesh3.nodes[p];
        let (e, _) = mode.amplitudes(x.hypot(y), y.atan2(x)).unwrap();
        let expected = -relative_z(&e) * 2e-3 * (mode.omega * m4.dt).sin() / mode.omega;
        let at_rest = project_initial(&mode, &m4, Excitation::Rotating, PROJECTION_POINTS).unwrap();
        let cosh = (m4.mesh3.edge_mid_radius(l) * m4.omega).cosh();
        assert!((at_rest.e_half[l] * cosh - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn probe_reads_the_projected_field() {
        let (m4, mode) = small_case(0.0);
        let d = project_initial(&mode, &m4, Excitation::Stationary, PROJECTION_POINTS).unwrap();
        let curl = sparse::to_f64(&m4.mesh3.curl());
        let s = State::start(d.b0, d.e_half, &curl, &m4.mesh3.boundary_edge, m4.dt).unwrap();
        let probe = Probe::nearest(&m4, [7.5e-3, 0.0, 1e-3]).unwrap();
        assert!((probe.position[0] - 7.5e-3).abs() < 1e-15);
        // e = −Δt ê on the z edges, so the sample is E_z averaged over the first step.
        let (e, _) = mode.amplitudes(7.5e-3, 0.0).unwrap();
        let expected = relative_z(&e) * (mode.omega * m4.dt).sin() / (mode.omega * m4.dt);
        let got = probe.sample(&s);
        assert!((got - expected).abs() < 1e-3 * expected.abs(), "{got} vs {expected}");
    }

    fn synthetic(delta: f64, carrier: f64, dt: f64, duration: f64) -> TimeSignal {
        let n = (duration / dt) as usize + 1;
        TimeSignal {
            t0: 0.0,
            dt,
            values: (0..n).map(|i| (delta * i as f64 * dt).cos() * (carrier * i as f64 * dt).cos()).collect(),
        }
    }

    #[test]
    fn synthetic_beat_is_recovered() {
        let sig = synthetic(0.01, 1.0, 0.05, 1.3 * PI / 0.02);
        for refine in [false, true] {
            let est = estimate_shift(&sig, 1.0, refine).unwrap();
            assert!((est.delta_omega() - 0.01).abs() < 1e-4, "{est:?}");
        }
    }

    #[test]
    fn unmodulated_signal_reports_short_horizon() {
        let sig = synthetic(0.0, 1.0, 0.05, 500.0);
        assert!(matches!(estimate_shift(&sig, 1.0, false), Err(ResonatorError::HorizonTooShort { .. })));
    }

    #[test]
    fn estimator_covers_the_ratio_range() {
        for ratio in [1e-4, 1e-3, 1e-2, 3e-2, 1e-1] {
            let carrier = 1.0;
            let delta = ratio * carrier;
            let sig = synthetic(delta, carrier, 0.05, 1.2 * PI / (2.0 * delta));
            let est = estimate_shift(&sig, carrier, true).unwrap();
            assert!((est.delta_omega() / delta - 1.0).abs() < 0.01, "ratio {ratio}: {est:?}");
        }
    }

    #[test]
    fn signal_csv_round_trip() {
        let sig = synthetic(0.01, 1.0, 0.05, 10.0);
        let mut out = Vec::new();
        sig.write_csv(&mut out, 1.0).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("t,E_z,envelope\n"));
        let back = TimeSignal::read_csv(&text).unwrap();
        assert_eq!(back.values, sig.values);
        assert!((back.dt - sig.dt).abs() < 1e-15);
    }

    #[test]
    fn rim_speed_conversion_and_null_rows() {
        assert!((omega_from_rim_speed(0.5, 2.0) - 0.5f64.atanh() / 2.0).abs() < 1e-16);
        let base = ExperimentConfig::desk(1, 0.0, Method::Fit);
        let table = error_table(&base, &[0], &[0.0031, 0.0314], false);
        assert_eq!(table.cells, vec![vec![TableCell::Null, TableCell::Null]]);
        assert!(table.to_text().contains("Null"));
    }

    #[test]
    fn default_horizon_covers_the_probe_beat() {
        let omega = omega_from_rim_speed(0.0314, 10e-3);
        let c = ExperimentConfig::desk(2, omega, Method::Fit);
        let r0 = 7.5e-3;
        let t0 = PI / (2.0 * 2.0 * (r0 * omega).tanh() / r0);
        assert!(c.steps() as f64 * c.time_step() >= 1.3 * t0 - c.time_step());
    }
}

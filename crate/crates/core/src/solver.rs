//! Time marching on the block-decomposed space-time grid equations.
//!
//! Primal law: b^{n+1} = b^n + C e^{n+½}. Dual law: d^{n+½} = d^{n−½} + Cᵀ h^n, with h and d
//! given by the material blocks. Edges flagged PEC keep e = 0; their rows and columns are
//! removed from every solved system, b stays on all faces.
//!
//! The state at step n holds (b^{n−1}, e^{n−½}, b^n). A run starts from (b⁰, e^{½}) by one
//! primal update, so the first stored state is n = 1.

use crate::material::MaterialBlocks;
use crate::sparse::{self, Csr, SparseError, SparseLu};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("linear solver: {0}")]
    Sparse(#[from] SparseError),
    #[error("leapfrog needs vanishing coupling blocks, largest coupling entry is {max:e}")]
    CrossBlocks { max: f64 },
    #[error("extrapolation order must be 0, 1 or 2, got {0}")]
    Order(u8),
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("non-finite value produced at step {step}")]
    NonFinite { step: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Time-marching scheme selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Implicit,
    Leapfrog,
    /// Explicit stepping with polynomial extrapolation of e^{n+½} and b^{n+1}.
    Extrapolated(u8),
}

/// Fields at step n. `e_older` holds e^{n−3/2}, e^{n−5/2} and `b_older` holds b^{n−2}, b^{n−3}
/// when available (newest first); only extrapolated stepping reads them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub step: usize,
    pub dt: f64,
    pub b_prev: Vec<f64>,
    pub e_half: Vec<f64>,
    pub b_curr: Vec<f64>,
    #[serde(default)]
    pub e_older: Vec<Vec<f64>>,
    #[serde(default)]
    pub b_older: Vec<Vec<f64>>,
}

const HISTORY: usize = 2;

impl State {
    /// State n = 1 from b⁰ and e^{½}: b¹ = b⁰ + C e^{½}. PEC entries of e^{½} are zeroed.
    pub fn start(b0: Vec<f64>, mut e_half: Vec<f64>, curl: &Csr, pec: &[bool], dt: f64) -> Result<Self, SolverError> {
        check_len("b⁰", curl.rows(), b0.len())?;
        check_len("e^{1/2}", curl.cols(), e_half.len())?;
        check_len("PEC flags", curl.cols(), pec.len())?;
        for (v, &wall) in e_half.iter_mut().zip(pec) {
            if wall {
                *v = 0.0;
            }
        }
        let mut b_curr = b0.clone();
        sparse::spmv_add(curl, &e_half, &mut b_curr);
        Ok(Self { step: 1, dt, b_prev: b0, e_half, b_curr, e_older: Vec::new(), b_older: Vec::new() })
    }

    pub fn zeros(n_faces: usize, n_edges: usize, dt: f64) -> Self {
        Self {
            step: 1,
            dt,
            b_prev: vec![0.0; n_faces],
            e_half: vec![0.0; n_edges],
            b_curr: vec![0.0; n_faces],
            e_older: Vec::new(),
            b_older: Vec::new(),
        }
    }

    /// Reference time of b^n.
    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    /// Next state from e^{n+½}; b^{n+1} = b^n + C e^{n+½}.
    fn advance(&self, e_next: Vec<f64>, curl: &Csr) -> Result<Self, SolverError> {
        let mut b_next = self.b_curr.clone();
        sparse::spmv_add(curl, &e_next, &mut b_next);
        if !(e_next.iter().all(|v| v.is_finite()) && b_next.iter().all(|v| v.is_finite())) {
            return Err(SolverError::NonFinite { step: self.step + 1 });
        }
        let mut e_older = Vec::with_capacity(HISTORY);
        e_older.push(self.e_half.clone());
        e_older.extend(self.e_older.iter().take(HISTORY - 1).cloned());
        let mut b_older = Vec::with_capacity(HISTORY);
        b_older.push(self.b_prev.clone());
        b_older.extend(self.b_older.iter().take(HISTORY - 1).cloned());
        Ok(Self {
            step: self.step + 1,
            dt: self.dt,
            b_prev: self.b_curr.clone(),
            e_half: e_next,
            b_curr: b_next,
            e_older,
            b_older,
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), SolverError> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, SolverError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), SolverError> {
    if expected == got {
        Ok(())
    } else {
        Err(SolverError::Dimension { what, expected, got })
    }
}

/// LU of a square edge-by-edge matrix restricted to non-PEC edges.
#[derive(Debug)]
struct InteriorSolve {
    interior: Vec<usize>,
    n: usize,
    lu: SparseLu,
}

impl InteriorSolve {
    fn new(m: &Csr, pec: &[bool]) -> Result<Self, SolverError> {
        check_len("PEC flags", m.rows(), pec.len())?;
        let interior: Vec<usize> = (0..pec.len()).filter(|&i| !pec[i]).collect();
        let lu = SparseLu::new(&sparse::select(m, &interior, &interior))?;
        Ok(Self { interior, n: m.rows(), lu })
    }

    /// Solves on interior rows; PEC entries of the result are zero.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let reduced: Vec<f64> = self.interior.iter().map(|&i| rhs[i]).collect();
        let x = self.lu.solve(&reduced);
        let mut full = vec![0.0; self.n];
        for (&i, v) in self.interior.iter().zip(x) {
            full[i] = v;
        }
        full
    }
}

/// Matrices of the implicit update
/// M e^{n+½} = γ b^n + β e^{n−½} + α b^{n−1}.
#[derive(Debug)]
pub struct SchemeMatrices {
    pub m: Csr,
    pub alpha: Csr,
    pub beta: Csr,
    pub gamma: Csr,
    pub curl: Csr,
    pub curl_t: Csr,
    pub pec: Vec<bool>,
    solve: InteriorSolve,
}

/// Forms M, α, β, γ from the blocks and factorizes M on the non-PEC edges once.
pub fn build_implicit(blocks: &MaterialBlocks, curl: &Csr, pec: &[bool]) -> Result<SchemeMatrices, SolverError> {
    check_len("curl rows", blocks.n_faces(), curl.rows())?;
    check_len("curl columns", blocks.n_edges(), curl.cols())?;
    let curl_t = sparse::transpose(curl);
    let ct = |m: &Csr| sparse::mul(&curl_t, m);
    let m = sparse::sub(
        &sparse::add(&blocks.eps_e, &sparse::mul(&blocks.eps_b_plus, curl)),
        &sparse::add(&ct(&blocks.nu_e_plus), &sparse::mul(&ct(&blocks.nu_b_plus), curl)),
    );
    let alpha = sparse::add(&blocks.eps_b_minus, &ct(&blocks.nu_b_minus));
    let beta = sparse::add(&blocks.eps_e, &ct(&blocks.nu_e_minus));
    let gamma = sparse::sub(&sparse::add(&ct(&blocks.nu_b), &ct(&blocks.nu_b_plus)), &blocks.eps_b_minus);
    let solve = InteriorSolve::new(&m, pec)?;
    Ok(SchemeMatrices { m, alpha, beta, gamma, curl: curl.clone(), curl_t, pec: pec.to_vec(), solve })
}

impl SchemeMatrices {
    /// Solves M x = rhs on the non-PEC edges.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.solve.solve(rhs)
    }
}

/// One implicit step n → n+1.
pub fn step_implicit(s: &State, sm: &SchemeMatrices) -> Result<State, SolverError> {
    let mut rhs = sparse::spmv(&sm.gamma, &s.b_curr);
    sparse::spmv_add(&sm.beta, &s.e_half, &mut rhs);
    sparse::spmv_add(&sm.alpha, &s.b_prev, &mut rhs);
    s.advance(sm.solve(&rhs), &sm.curl)
}

/// Classic leapfrog operators; valid only when the coupling blocks vanish.
#[derive(Debug)]
pub struct Leapfrog {
    nu_b: Csr,
    eps_e: Csr,
    curl: Csr,
    curl_t: Csr,
    solve: InteriorSolve,
}

impl Leapfrog {
    /// Rejects blocks whose coupling entries exceed `1e-12` times the largest block entry.
    pub fn new(blocks: &MaterialBlocks, curl: &Csr, pec: &[bool]) -> Result<Self, SolverError> {
        check_len("curl rows", blocks.n_faces(), curl.rows())?;
        check_len("curl columns", blocks.n_edges(), curl.cols())?;
        let coupling = [
            &blocks.nu_e_minus,
            &blocks.nu_e_plus,
            &blocks.nu_b_minus,
            &blocks.nu_b_plus,
            &blocks.eps_b_minus,
            &blocks.eps_b_plus,
        ]
        .iter()
        .map(|m| sparse::max_abs(m))
        .fold(0.0, f64::max);
        if coupling > 1e-12 * blocks.max_abs() {
            return Err(SolverError::CrossBlocks { max: coupling });
        }
        Ok(Self {
            nu_b: blocks.nu_b.clone(),
            eps_e: blocks.eps_e.clone(),
            curl: curl.clone(),
            curl_t: sparse::transpose(curl),
            solve: InteriorSolve::new(&blocks.eps_e, pec)?,
        })
    }
}

/// h^n = M_νb b^n; d^{n+½} = d^{n−½} + Cᵀh^n; e^{n+½} = M_εe⁻¹ d^{n+½}; b^{n+1} = b^n + C e^{n+½}.
pub fn step_leapfrog(s: &State, lf: &Leapfrog) -> Result<State, SolverError> {
    let h = sparse::spmv(&lf.nu_b, &s.b_curr);
    let mut d = sparse::spmv(&lf.eps_e, &s.e_half);
    sparse::spmv_add(&lf.curl_t, &h, &mut d);
    s.advance(lf.solve.solve(&d), &lf.curl)
}

/// Explicit stepping of the full grid equations with extrapolated future values.
#[derive(Debug)]
pub struct Extrapolated {
    blocks: MaterialBlocks,
    curl: Csr,
    curl_t: Csr,
    solve: InteriorSolve,
}

impl Extrapolated {
    pub fn new(blocks: &MaterialBlocks, curl: &Csr, pec: &[bool]) -> Result<Self, SolverError> {
        check_len("curl rows", blocks.n_faces(), curl.rows())?;
        check_len("curl columns", blocks.n_edges(), curl.cols())?;
        Ok(Self {
            blocks: blocks.clone(),
            curl: curl.clone(),
            curl_t: sparse::transpose(curl),
            solve: InteriorSolve::new(&blocks.eps_e, pec)?,
        })
    }
}

/// Polynomial extrapolation one step ahead from `newest` and older samples (newest first).
/// The order drops while the history is shorter than needed.
fn extrapolate(order: u8, newest: &[f64], older: &[Vec<f64>]) -> Vec<f64> {
    let usable = usize::from(order).min(older.len());
    let coefficients: &[f64] = match usable {
        0 => &[1.0],
        1 => &[2.0, -1.0],
        _ => &[3.0, -3.0, 1.0],
    };
    let mut out: Vec<f64> = newest.iter().map(|v| coefficients[0] * v).collect();
    for (c, sample) in coefficients[1..].iter().zip(older) {
        for (o, v) in out.iter_mut().zip(sample) {
            *o += c * v;
        }
    }
    out
}

/// One extrapolated step: e^{n+½} and b^{n+1} inside h^n and d^{n+½} are replaced by
/// extrapolants of order 0 (previous value), 1 (linear) or 2 (quadratic).
pub fn step_extrapolated(s: &State, ex: &Extrapolated, order: u8) -> Result<State, SolverError> {
    if order > 2 {
        return Err(SolverError::Order(order));
    }
    let bl = &ex.blocks;
    let e_guess = extrapolate(order, &s.e_half, &s.e_older);
    let b_history: Vec<Vec<f64>> = std::iter::once(s.b_prev.clone()).chain(s.b_older.iter().cloned()).collect();
    let b_guess = extrapolate(order, &s.b_curr, &b_history);

    // d^{n−½} from the stored fields.
    let mut d = sparse::spmv(&bl.eps_b_minus, &s.b_prev);
    sparse::spmv_add(&bl.eps_e, &s.e_half, &mut d);
    sparse::spmv_add(&bl.eps_b_plus, &s.b_curr, &mut d);

    let mut h = sparse::spmv(&bl.nu_b_minus, &s.b_prev);
    sparse::spmv_add(&bl.nu_e_minus, &s.e_half, &mut h);
    sparse::spmv_add(&bl.nu_b, &s.b_curr, &mut h);
    sparse::spmv_add(&bl.nu_e_plus, &e_guess, &mut h);
    sparse::spmv_add(&bl.nu_b_plus, &b_guess, &mut h);
    sparse::spmv_add(&ex.curl_t, &h, &mut d);

    let known = {
        let mut k = sparse::spmv(&bl.eps_b_minus, &s.b_curr);
        sparse::spmv_add(&bl.eps_b_plus, &b_guess, &mut k);
        k
    };
    let rhs: Vec<f64> = d.iter().zip(&known).map(|(p, q)| p - q).collect();
    s.advance(ex.solve.solve(&rhs), &ex.curl)
}

/// Any of the three schemes, built once and stepped uniformly.
#[derive(Debug)]
pub enum Stepper {
    Implicit(SchemeMatrices),
    Leapfrog(Leapfrog),
    Extrapolated(Extrapolated, u8),
}

impl Stepper {
    pub fn new(scheme: Scheme, blocks: &MaterialBlocks, curl: &Csr, pec: &[bool]) -> Result<Self, SolverError> {
        Ok(match scheme {
            Scheme::Implicit => Self::Implicit(build_implicit(blocks, curl, pec)?),
            Scheme::Leapfrog => Self::Leapfrog(Leapfrog::new(blocks, curl, pec)?),
            Scheme::Extrapolated(order) if order <= 2 => {
                Self::Extrapolated(Extrapolated::new(blocks, curl, pec)?, order)
            }
            Scheme::Extrapolated(order) => return Err(SolverError::Order(order)),
        })
    }

    pub fn step(&self, s: &State) -> Result<State, SolverError> {
        match self {
            Self::Implicit(sm) => step_implicit(s, sm),
            Self::Leapfrog(lf) => step_leapfrog(s, lf),
            Self::Extrapolated(ex, order) => step_extrapolated(s, ex, *order),
        }
    }
}

/// Discrete energy U^n = ½ e^{n−½}ᵀ M e^{n−½} − ½ b^{n−1}ᵀ N b^n with M the implicit matrix
/// and N = M_νb⁻ + M_νb + M_νb⁺.
///
/// This is the quadratic invariant of the implicit recurrence whenever the blocks obey the
/// transpose relations of a time-invariant symmetric 4D mass matrix (exactly the Ω = 0 case);
/// under shear the relations hold only between neighbouring layers, so the drift measures the
/// real defect. For static FIT blocks it is the staggered leapfrog energy. M_νb is negative
/// definite in this sign convention.
#[derive(Clone, Debug)]
pub struct EnergyForm {
    electric: Csr,
    magnetic: Csr,
}

impl EnergyForm {
    pub fn new(blocks: &MaterialBlocks, curl: &Csr) -> Result<Self, SolverError> {
        check_len("curl rows", blocks.n_faces(), curl.rows())?;
        check_len("curl columns", blocks.n_edges(), curl.cols())?;
        let curl_t = sparse::transpose(curl);
        let electric = sparse::sub(
            &sparse::add(&blocks.eps_e, &sparse::mul(&blocks.eps_b_plus, curl)),
            &sparse::mul(&curl_t, &sparse::add(&blocks.nu_e_plus, &sparse::mul(&blocks.nu_b_plus, curl))),
        );
        let magnetic = sparse::add(&sparse::add(&blocks.nu_b_minus, &blocks.nu_b), &blocks.nu_b_plus);
        Ok(Self { electric, magnetic })
    }

    pub fn evaluate(&self, s: &State) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let electric = dot(&s.e_half, &sparse::spmv(&self.electric, &s.e_half));
        let magnetic = dot(&s.b_prev, &sparse::spmv(&self.magnetic, &s.b_curr));
        0.5 * electric - 0.5 * magnetic
    }
}

/// Per-step energy log with divergence detection against the first recorded value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyMonitor {
    /// (step, time, U).
    pub samples: Vec<(usize, f64, f64)>,
    /// Divergence when |U| exceeds this multiple of |U⁰|.
    pub growth_limit: f64,
    pub diverged_at: Option<usize>,
}

impl Default for EnergyMonitor {
    fn default() -> Self {
        Self::new(10.0)
    }
}

impl EnergyMonitor {
    pub fn new(growth_limit: f64) -> Self {
        Self { samples: Vec::new(), growth_limit, diverged_at: None }
    }

    /// Records U; returns true once divergence (growth beyond the limit or a non-finite
    /// value) has been detected.
    pub fn record(&mut self, step: usize, time: f64, u: f64) -> bool {
        self.samples.push((step, time, u));
        let reference = self.samples[0].2.abs();
        if self.diverged_at.is_none() && (!u.is_finite() || u.abs() > self.growth_limit * reference) {
            self.diverged_at = Some(step);
        }
        self.diverged_at.is_some()
    }

    /// max |U − U⁰| / |U⁰| over the log.
    pub fn relative_drift(&self) -> f64 {
        let Some(&(_, _, first)) = self.samples.first() else { return 0.0 };
        self.samples.iter().map(|&(_, _, u)| (u - first).abs()).fold(0.0, f64::max) / first.abs()
    }

    /// CSV with header `step,time,U`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,time,U")?;
        for (step, time, u) in &self.samples {
            writeln!(w, "{step},{time:.17e},{u:.17e}")?;
        }
        Ok(())
    }
}

//! Geometric algebra of Minkowski space-time, Cl(1,3), signature (+,−,−,−).
//!
//! Multivector coefficients are stored in this fixed blade order:
//!
//! | index | blade  | index | blade  | index | blade   |
//! |-------|--------|-------|--------|-------|---------|
//! | 0     | 1      | 6     | γtγy   | 12    | γtγxγz  |
//! | 1     | γt     | 7     | γtγz   | 13    | γtγyγz  |
//! | 2     | γx     | 8     | γxγy   | 14    | γxγyγz  |
//! | 3     | γy     | 9     | γxγz   | 15    | γtγxγyγz|
//! | 4     | γz     | 10    | γyγz   |       |         |
//! | 5     | γtγx   | 11    | γtγxγy |       |         |
//!
//! Products go through a 16×16 sign/index table built at compile time.
//! Natural units: c = 1.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StaError {
    #[error("observer velocity is not timelike (u² = {0})")]
    NotTimelike(f64),
    #[error("observer velocity is not normalized (u² = {0})")]
    NotNormalized(f64),
    #[error("input is not a vector or 2-blade")]
    NotABlade,
    #[error("inner product is defined only for vector·vector, bivector·bivector and 2-blade into I")]
    UnsupportedInner,
    #[error("grade {0} is outside 0..=4")]
    GradeOutOfRange(usize),
}

/// Bit masks of the basis blades in storage order (bit 0 = t, 1 = x, 2 = y, 3 = z).
pub const BLADE_MASKS: [u8; 16] = [
    0b0000, 0b0001, 0b0010, 0b0100, 0b1000, 0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100, 0b0111, 0b1011, 0b1101,
    0b1110, 0b1111,
];

/// Human-readable blade names in storage order.
pub const BLADE_NAMES: [&str; 16] = [
    "1",
    "γt",
    "γx",
    "γy",
    "γz",
    "γtγx",
    "γtγy",
    "γtγz",
    "γxγy",
    "γxγz",
    "γyγz",
    "γtγxγy",
    "γtγxγz",
    "γtγyγz",
    "γxγyγz",
    "γtγxγyγz",
];

const fn index_of_mask(mask: u8) -> usize {
    let mut i = 0;
    while i < 16 {
        if BLADE_MASKS[i] == mask {
            return i;
        }
        i += 1;
    }
    panic!("unknown blade mask")
}

/// Sign of the product of two basis blades given as masks.
const fn blade_sign(a: u8, b: u8) -> f64 {
    let mut swaps = 0u32;
    let mut j = 0;
    while j < 4 {
        if b & (1 << j) != 0 {
            swaps += (a >> (j + 1)).count_ones();
        }
        j += 1;
    }
    let mut sign = if swaps.is_multiple_of(2) { 1.0 } else { -1.0 };
    let common = a & b;
    // γt² = +1, spatial squares are −1.
    let mut k = 1;
    while k < 4 {
        if common & (1 << k) != 0 {
            sign = -sign;
        }
        k += 1;
    }
    sign
}

const fn build_table() -> [[(u8, f64); 16]; 16] {
    let mut t = [[(0u8, 0.0f64); 16]; 16];
    let mut i = 0;
    while i < 16 {
        let mut j = 0;
        while j < 16 {
            let (a, b) = (BLADE_MASKS[i], BLADE_MASKS[j]);
            t[i][j] = (index_of_mask(a ^ b) as u8, blade_sign(a, b));
            j += 1;
        }
        i += 1;
    }
    t
}

/// `PRODUCT[i][j] = (k, s)` means `e_i e_j = s e_k`.
pub const PRODUCT: [[(u8, f64); 16]; 16] = build_table();

/// Grade of each stored blade.
pub const GRADE: [usize; 16] = [0, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 4];

/// A general element of Cl(1,3).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Multivector(pub [f64; 16]);

impl Multivector {
    pub const ZERO: Self = Self([0.0; 16]);

    pub fn scalar(s: f64) -> Self {
        let mut m = Self::ZERO;
        m.0[0] = s;
        m
    }

    /// The unit blade stored at `index`.
    pub fn basis(index: usize) -> Self {
        let mut m = Self::ZERO;
        m.0[index] = 1.0;
        m
    }

    /// Unit pseudoscalar I = γtγxγyγz.
    pub fn pseudoscalar() -> Self {
        Self::basis(15)
    }

    pub fn gt() -> Self {
        Self::basis(1)
    }
    pub fn gx() -> Self {
        Self::basis(2)
    }
    pub fn gy() -> Self {
        Self::basis(3)
    }
    pub fn gz() -> Self {
        Self::basis(4)
    }

    pub fn geometric_product(&self, other: &Self) -> Self {
        let mut out = [0.0; 16];
        for (i, &a) in self.0.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.0.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                let (k, s) = PRODUCT[i][j];
                out[k as usize] += s * a * b;
            }
        }
        Self(out)
    }

    /// Exterior product: keeps blade pairs with disjoint support.
    pub fn outer(&self, other: &Self) -> Self {
        let mut out = [0.0; 16];
        for (i, &a) in self.0.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.0.iter().enumerate() {
                if b == 0.0 || BLADE_MASKS[i] & BLADE_MASKS[j] != 0 {
                    continue;
                }
                let (k, s) = PRODUCT[i][j];
                out[k as usize] += s * a * b;
            }
        }
        Self(out)
    }

    /// Inner product for the supported operand pairs.
    pub fn inner(&self, other: &Self) -> Result<Self, StaError> {
        let ga = self.homogeneous_grade();
        let gb = other.homogeneous_grade();
        match (ga, gb) {
            (Some(1), Some(1)) | (Some(2), Some(2)) => Ok(Self::scalar(self.geometric_product(other).0[0])),
            // Contraction of a 2-blade into a pseudoscalar: A ⌟ I = A I.
            (Some(2), Some(4)) => Ok(self.geometric_product(other)),
            _ => Err(StaError::UnsupportedInner),
        }
    }

    /// Grade of a multivector whose nonzero coefficients share one grade; zero maps to `None`.
    pub fn homogeneous_grade(&self) -> Option<usize> {
        let mut grade = None;
        for (i, &c) in self.0.iter().enumerate() {
            if c != 0.0 {
                match grade {
                    None => grade = Some(GRADE[i]),
                    Some(g) if g != GRADE[i] => return None,
                    _ => {}
                }
            }
        }
        grade
    }

    pub fn grade_project(&self, k: usize) -> Result<Self, StaError> {
        if k > 4 {
            return Err(StaError::GradeOutOfRange(k));
        }
        let mut out = Self::ZERO;
        for i in 0..16 {
            if GRADE[i] == k {
                out.0[i] = self.0[i];
            }
        }
        Ok(out)
    }

    /// Reversion: flips the sign of grades 2 and 3.
    pub fn reverse(&self) -> Self {
        let mut out = *self;
        for i in 0..16 {
            if GRADE[i] == 2 || GRADE[i] == 3 {
                out.0[i] = -out.0[i];
            }
        }
        out
    }

    /// I⁻¹ a, with I⁻¹ = −I.
    pub fn dual(&self) -> Self {
        -(Self::pseudoscalar().geometric_product(self))
    }

    pub fn scalar_part(&self) -> f64 {
        self.0[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        out.0.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// Causal class of a vector or 2-blade from the sign of its square.
    pub fn classify(&self) -> Result<CausalClass, StaError> {
        match self.homogeneous_grade() {
            Some(1) => {}
            Some(2) => {
                // A bivector is a blade iff B∧B = 0.
                let bb = self.outer(self);
                let scale = self.max_abs().powi(2);
                if bb.max_abs() > 1e-12 * scale {
                    return Err(StaError::NotABlade);
                }
            }
            _ => return Err(StaError::NotABlade),
        }
        let square = self.geometric_product(self).0[0];
        let tol = 1e-12 * self.max_abs().powi(2);
        Ok(if square > tol {
            CausalClass::Timelike
        } else if square < -tol {
            CausalClass::Spacelike
        } else {
            CausalClass::Lightlike
        })
    }
}

impl Index<usize> for Multivector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for Multivector {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.0.iter_mut().zip(rhs.0).for_each(|(a, b)| *a += b);
        self
    }
}

impl AddAssign for Multivector {
    fn add_assign(&mut self, rhs: Self) {
        self.0.iter_mut().zip(rhs.0).for_each(|(a, b)| *a += b);
    }
}

impl Sub for Multivector {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self.0.iter_mut().zip(rhs.0).for_each(|(a, b)| *a -= b);
        self
    }
}

impl Neg for Multivector {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul for Multivector {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.geometric_product(&rhs)
    }
}

impl Mul<f64> for Multivector {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CausalClass {
    Timelike,
    Lightlike,
    Spacelike,
}

/// Grade-1 element, components on (γt, γx, γy, γz).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FourVector(pub [f64; 4]);

impl FourVector {
    pub fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        Self([t, x, y, z])
    }

    /// Minkowski square (a^t)² − |a_space|².
    pub fn square(&self) -> f64 {
        self.dot(self)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0[0] * other.0[0] - self.0[1] * other.0[1] - self.0[2] * other.0[2] - self.0[3] * other.0[3]
    }

    /// Exterior product of two vectors as a bivector.
    pub fn wedge(&self, other: &Self) -> Bivector {
        let (a, b) = (&self.0, &other.0);
        let w = |i: usize, j: usize| a[i] * b[j] - a[j] * b[i];
        Bivector([w(0, 1), w(0, 2), w(0, 3), w(1, 2), w(1, 3), w(2, 3)])
    }

    pub fn to_multivector(&self) -> Multivector {
        let mut m = Multivector::ZERO;
        m.0[1..5].copy_from_slice(&self.0);
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|c| c * s))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self([self.0[0] - other.0[0], self.0[1] - other.0[1], self.0[2] - other.0[2], self.0[3] - other.0[3]])
    }

    pub fn add(&self, other: &Self) -> Self {
        Self([self.0[0] + other.0[0], self.0[1] + other.0[1], self.0[2] + other.0[2], self.0[3] + other.0[3]])
    }
}

/// Grade-2 element, components on (γtγx, γtγy, γtγz, γxγy, γxγz, γyγz).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bivector(pub [f64; 6]);

/// Square of each unit bivector blade: timelike blades square to +1, spatial ones to −1.
pub const BIVECTOR_SQUARES: [f64; 6] = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0];

impl Bivector {
    pub const ZERO: Self = Self([0.0; 6]);

    pub fn to_multivector(&self) -> Multivector {
        let mut m = Multivector::ZERO;
        m.0[5..11].copy_from_slice(&self.0);
        m
    }

    /// Grade-2 part of a multivector.
    pub fn from_multivector(m: &Multivector) -> Self {
        let mut b = Self::ZERO;
        b.0.copy_from_slice(&m.0[5..11]);
        b
    }

    /// Scalar part of the product of two bivectors.
    pub fn dot(&self, other: &Self) -> f64 {
        (0..6).map(|k| BIVECTOR_SQUARES[k] * self.0[k] * other.0[k]).sum()
    }

    /// Coefficient c of A∧B = c·I.
    pub fn wedge_pseudoscalar(&self, other: &Self) -> f64 {
        let (a, b) = (&self.0, &other.0);
        // tx∧yz + ty∧zx-type pairings; signs from the blade table.
        a[0] * b[5] + a[5] * b[0] - a[1] * b[4] - a[4] * b[1] + a[2] * b[3] + a[3] * b[2]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|c| c * s))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = *self;
        out.0.iter_mut().zip(other.0).for_each(|(a, b)| *a += b);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// I⁻¹ B, which stays a bivector.
    pub fn dual(&self) -> Self {
        Self::from_multivector(&self.to_multivector().dual())
    }
}

/// Splits F relative to observer `u` into E = ½(F − uFu) and B = I⁻¹·½(F + uFu).
pub fn split_field(f: &Bivector, u: &FourVector) -> Result<(Bivector, Bivector), StaError> {
    let u2 = u.square();
    if u2 <= 0.0 || u.0[0] <= 0.0 {
        return Err(StaError::NotTimelike(u2));
    }
    if (u2 - 1.0).abs() > 1e-10 {
        return Err(StaError::NotNormalized(u2));
    }
    let fm = f.to_multivector();
    let um = u.to_multivector();
    let ufu = um * fm * um;
    let e = (fm - ufu).scale(0.5);
    let b = (fm + ufu).scale(0.5).dual();
    Ok((Bivector::from_multivector(&e), Bivector::from_multivector(&b)))
}

/// F = E + I·B.
pub fn recombine_field(e: &Bivector, b: &Bivector) -> Bivector {
    let ib = Multivector::pseudoscalar() * b.to_multivector();
    e.add(&Bivector::from_multivector(&ib))
}

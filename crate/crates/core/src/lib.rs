//! Maxwell's equations discretized directly on a 4D space-time mesh, for fields observed
//! from a uniformly rotating frame.
//!
//! Pipeline: [`mesh`] builds an annular reference mesh and extrudes it through the rotation
//! placement map; [`whitney`] supplies the 2-form basis on the reference tesseract;
//! [`material`] assembles the constitutive matrix (one-point FIT rule or Galerkin FEM) and
//! splits it into per-step blocks; [`solver`] marches the grid equations; [`resonator`]
//! runs the ring-resonator experiment and measures the rotation-induced beat.

pub mod material;
pub mod mesh;
pub mod quadrature;
pub mod resonator;
pub mod solver;
pub mod sparse;
pub mod sta;
pub mod whitney;

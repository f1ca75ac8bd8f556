//! Optimal trade and industrial policies in a multi-country, multi-sector
//! general-equilibrium trade model.
//!
//! The equilibrium is computed in proportional changes relative to a
//! calibrated baseline. Policies are optimised by a nested fixed-point
//! scheme: an inner contraction solves the equilibrium, the outer loop runs
//! projected ADAM on welfare using gradients obtained by implicit
//! differentiation through the fixed point. Nash policies come from
//! best-response dynamics with a shuffled playing order.

pub mod autodiff;
pub mod economy;
pub mod equilibrium;
pub mod game;
pub mod linalg;
pub mod optimizer;
pub mod par;
pub mod sensitivity;

pub use economy::{Calibration, PolicyWedges};
pub use equilibrium::{HatEquilibrium, SolverOptions};

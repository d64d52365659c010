//! Kinetic Fokker-Planck toolkit: Sinc-collocation discretization of the
//! Langevin generator, hypocoercive structure verification, and a
//! Riccati-based bilinear feedback law with closed-loop simulation.
//!
//! The pipeline, in dependency order: [`model`] defines potentials, control
//! shapes, and the invariant weight; [`discretize`] assembles the generator
//! in direct and symmetrized coordinates plus the control operators;
//! [`deflate`] removes the conserved mass direction; [`analyze`] reports the
//! spectrum and stabilizability; [`riccati`] solves the shifted algebraic
//! Riccati equation by Kleinman–Newton iteration; [`simulate`] integrates
//! the bilinear closed loop. [`config`], [`container`], and [`verify`] back
//! the `kfpctl` command-line tool.

pub mod analyze;
pub mod config;
pub mod container;
pub mod deflate;
pub mod discretize;
pub mod error;
pub mod grid;
pub mod model;
pub mod riccati;
pub mod simulate;
pub mod verify;

pub use error::{KfpError, Result};
pub use grid::PhaseGrid;

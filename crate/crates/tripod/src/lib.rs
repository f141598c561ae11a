//! Simulation and analytic toolkit for tripod-scheme cold-atom wavepackets
//! driven by displaced laser beams.
//!
//! A four-level atom illuminated by three plane-wave beams carries a
//! two-dimensional dark subspace. Rigidly displacing the beams along a path
//! d(t) imprints matrix-valued (non-Abelian) phases on the dark amplitudes,
//! splitting a wavepacket into sub-packets with group velocities ±ħκ/m along
//! the instantaneous displacement direction. This crate provides
//!
//! * [`model`] — the tripod internal physics: Rabi fields, RWA Hamiltonian,
//!   dark states, and the exact per-point potential substep;
//! * [`grid`] — 2D spectral grid, four-component spinor fields, observables,
//!   and snapshot / CSV export;
//! * [`paths`] — piecewise line/arc beam-displacement trajectories;
//! * [`propagator`] — split-operator evolution of the full four-component
//!   Schrödinger equation with moving beams;
//! * [`oracle`] — dark-subspace analytics: 2×2 gauge evolution, branch-tree
//!   lattice prediction, adiabatic circle ODE, Berry phase, and frame
//!   identities;
//! * [`analysis`] — cluster detection, relative phases, circle fits, and
//!   quantitative comparison of simulation against oracle.
//!
//! Everything works in natural units ħ = m = κ = 1: lengths in 1/κ, times in
//! m/(ħκ²), velocities in ħκ/m, energies in ħ²κ²/m. [`model::si`] converts
//! for display.

pub mod analysis;
pub mod grid;
pub mod model;
pub mod oracle;
pub mod paths;
pub mod propagator;
mod vec2;

pub use vec2::Vec2;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("packet rejected: {0}")]
    Packet(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("dark frame is degenerate: Rabi magnitude is zero")]
    DegenerateFrame,
    #[error("time {t} outside path domain [0, {total}]")]
    PathRange { t: f64, total: f64 },
    #[error("degenerate circle fit: {0}")]
    DegenerateFit(String),
    #[error("zero-norm field")]
    ZeroNorm,
    #[error("snapshot mismatch: {0}")]
    ResumeMismatch(String),
    #[error("numerical failure: {0}")]
    Numerics(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

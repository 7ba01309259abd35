//! Center-fed pinching-antenna system (C-PASS) simulation and optimization.
//!
//! A single dielectric waveguide is fed at its center through `M` input
//! ports. Each port splits its signal into a forward and a backward
//! propagation direction, each radiated by `N` pinching antennas (PAs). Two
//! users are served: FU (forward side) and BU (backward side).
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: configuration, geometry, channels and exact rate expressions.
//! - [`wmmse`]: auxiliary-variable updates and closed-form precoders.
//! - [`manifold`]: Riemannian descent on the positive unit sphere and the
//!   unit-modulus torus, plus the radiation and phase subproblems.
//! - [`splitting`]: power-splitting angles (continuous and penalized binary).
//! - [`placement`]: PA displacement fitting by grid search.
//! - [`solver`]: the alternating-optimization drivers for PS/DS and TS.
//! - [`baselines`]: end-fed PASS, random precoding and uniform pinching.
//! - [`oracle`]: brute-force checks kept independent of the main paths.
//! - [`experiment`]: experiment specs, sweeps and CSV/JSON emission.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod manifold;
pub mod model;
pub mod oracle;
pub mod placement;
pub mod solver;
pub mod splitting;
pub mod wmmse;

pub use error::{Error, Result};
pub use model::{
    ChannelSet, DesignVariables, Direction, Geometry, PrecoderState, Protocol, RadiationState,
    Scenario, SplittingState, SystemConfig, TimeAllocation, User,
};

pub use num_complex::Complex64;

/// Complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
/// Complex dense matrix.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Real column vector.
pub type RVector = nalgebra::DVector<f64>;

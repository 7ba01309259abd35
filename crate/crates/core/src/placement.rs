//! PA displacement fitting.
//!
//! The phase subproblem returns unconstrained unit-modulus targets for every
//! (user, direction, PA). Each PA's displacement is then chosen on a uniform
//! grid over `[-max_displacement, max_displacement]` to best reproduce the
//! targets of all users it serves, using the exact phase
//! `exp(-j (k0 r(d) + kg offset(d)))` with `r(d)` recomputed per candidate.

use crate::error::Result;
use crate::model::{build_geometry, cis_neg, Direction, Geometry, Point, Scenario, User};
use crate::{CVector, Complex64};

/// Uniform grid with inclusive endpoints.
pub fn displacement_grid(max_displacement: f64, points: usize) -> Vec<f64> {
    if points < 2 || max_displacement == 0.0 {
        return vec![0.0];
    }
    let step = 2.0 * max_displacement / (points - 1) as f64;
    (0..points)
        .map(|i| (-max_displacement + i as f64 * step).clamp(-max_displacement, max_displacement))
        .collect()
}

fn user_position(scenario: &Scenario, user: User) -> Point {
    match user {
        User::Fu => scenario.config.user_fu_position.into(),
        User::Bu => scenario.config.user_bu_position.into(),
    }
}

/// Phase realized by PA `n` on side `dir` toward `user` at displacement `d`.
pub fn realized_phase(scenario: &Scenario, geometry: &Geometry, user: User, dir: Direction, n: usize, d: f64) -> Complex64 {
    let pa = Point::new(geometry.pa_x(dir, n, d), 0.0);
    let r = pa.distance(&user_position(scenario, user));
    let k = &scenario.consts;
    cis_neg(k.wavenumber * r + k.guided_wavenumber * geometry.waveguide_offset(dir, n, d))
}

/// Squared phase mismatch summed over the users with a target for `(dir, n)`.
pub fn fit_residual(
    scenario: &Scenario,
    geometry: &Geometry,
    targets: &[(User, Direction, CVector)],
    dir: Direction,
    n: usize,
    d: f64,
) -> f64 {
    targets
        .iter()
        .filter(|(_, td, _)| *td == dir)
        .map(|(u, _, phi)| (phi[n] - realized_phase(scenario, geometry, *u, dir, n, d)).norm_sqr())
        .sum()
}

/// Grid-search fit of every PA displacement. Directions without any target
/// keep their current displacements. Ties resolve to the lowest grid index.
pub fn fit_displacements(
    scenario: &Scenario,
    geometry: &Geometry,
    targets: &[(User, Direction, CVector)],
) -> (Vec<f64>, Vec<f64>) {
    let grid = displacement_grid(scenario.config.max_displacement, scenario.config.displacement_grid_points);
    let fit = |dir: Direction| -> Vec<f64> {
        let current = geometry.displacements(dir);
        if !targets.iter().any(|(_, d, _)| *d == dir) {
            return current.to_vec();
        }
        (0..geometry.num_pas())
            .map(|n| {
                let mut best = (f64::INFINITY, current[n]);
                for &d in &grid {
                    let r = fit_residual(scenario, geometry, targets, dir, n, d);
                    if r < best.0 {
                        best = (r, d);
                    }
                }
                best.1
            })
            .collect()
    };
    (fit(Direction::Forward), fit(Direction::Backward))
}

/// Joint two-user fit for PS/DS targets.
pub fn fit_displacement_psds(
    scenario: &Scenario,
    geometry: &Geometry,
    targets: &[(User, Direction, CVector)],
) -> (Vec<f64>, Vec<f64>) {
    fit_displacements(scenario, geometry, targets)
}

/// Single-user fit for TS targets (FU on the forward side, BU on the
/// backward side).
pub fn fit_displacement_ts(
    scenario: &Scenario,
    geometry: &Geometry,
    targets: &[(User, Direction, CVector)],
) -> (Vec<f64>, Vec<f64>) {
    let own: Vec<_> = targets
        .iter()
        .filter(|(u, d, _)| u.home_direction() == *d)
        .cloned()
        .collect();
    fit_displacements(scenario, geometry, &own)
}

/// Rebuild the geometry at new displacements; channels must be rebuilt by
/// the caller.
pub fn apply_displacements(scenario: &Scenario, d_f: &[f64], d_b: &[f64]) -> Result<Geometry> {
    build_geometry(scenario, d_f, d_b)
}

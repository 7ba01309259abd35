//! Phase subproblems on the unit-modulus torus.
//!
//! Each PA's contribution to a user's effective channel factors as
//! `eta * b[m] * xi_n / r_n * phi_n`, where `b` holds the splitting amplitude
//! and in-waveguide phase of port `m` relative to the edge port, and
//! `phi_n = exp(-j (k0 r_n + kg * offset_n))` collects every
//! displacement-dependent phase. Freezing the `1/r` amplitudes and treating
//! each user's phases as free variables gives a quadratic in `phi` per user.

use super::{armijo_descend, ArmijoOptions, DescentReport, Torus};
use crate::error::Result;
use crate::model::{
    c64, cis_neg, unit_port_phases, ChannelSet, DesignVariables, Direction, Geometry, Protocol,
    Scenario, User,
};
use crate::wmmse::{AuxPsds, AuxTs};
use crate::{CMatrix, CVector};

/// Stacked phases of all blocks.
pub type PhaseVector = CVector;

/// One user's phases over one or two directions, with quadratic
/// `phi^H R phi - 2 Re(k^H phi)`.
#[derive(Debug, Clone)]
pub struct PhaseBlock {
    pub user: User,
    pub directions: Vec<Direction>,
    /// Maps the block's phases to the user's effective channel.
    pub k_mat: CMatrix,
    /// `k_mat` as if every PA radiated with unit amplitude. Steers the
    /// phases of PAs whose amplitude is zero, which `k_mat` cannot see.
    pub probe: CMatrix,
    pub r: CMatrix,
    pub k: CVector,
}

#[derive(Debug, Clone)]
pub struct PhaseProblem {
    pub blocks: Vec<PhaseBlock>,
    pub num_pas: usize,
}

/// `eta * b (xi ./ r)^T` for one user and direction (`xi = 1` when
/// `unit_radiation`).
#[allow(clippy::too_many_arguments)]
fn k_slab(
    scenario: &Scenario,
    geometry: &Geometry,
    channels: &ChannelSet,
    vars: &DesignVariables,
    user: User,
    dir: Direction,
    amplitudes: bool,
    unit_radiation: bool,
) -> CMatrix {
    let c = unit_port_phases(geometry, dir, scenario.consts.guided_wavenumber);
    let b = if amplitudes {
        let amp = vars.splitting.amplitudes(dir);
        c.zip_map(&amp, |z, a| z * a)
    } else {
        c
    };
    let xi = vars.radiation.get(dir);
    let r = channels.r(user, dir);
    let row = CVector::from_fn(xi.len(), |n, _| {
        let x = if unit_radiation { 1.0 } else { xi[n] };
        c64(scenario.consts.path_gain * x / r[n], 0.0)
    });
    b * row.transpose()
}

fn hstack(parts: &[CMatrix]) -> CMatrix {
    let rows = parts[0].nrows();
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut off = 0;
    for p in parts {
        out.view_mut((0, off), (rows, p.ncols())).copy_from(p);
        off += p.ncols();
    }
    out
}

impl PhaseProblem {
    /// PS/DS problem; phase order `[FU-F, FU-B, BU-F, BU-B]`.
    pub fn psds(
        scenario: &Scenario,
        geometry: &Geometry,
        channels: &ChannelSet,
        vars: &DesignVariables,
        aux: &AuxPsds,
    ) -> Self {
        let w_sum_conj = vars.precoder.w_sum().conjugate();
        let blocks = User::BOTH
            .iter()
            .map(|&user| {
                let dirs = Direction::BOTH.to_vec();
                let slabs = |unit: bool| {
                    let parts: Vec<CMatrix> = dirs
                        .iter()
                        .map(|&d| k_slab(scenario, geometry, channels, vars, user, d, true, unit))
                        .collect();
                    hstack(&parts)
                };
                let k_mat = slabs(false);
                let probe = slabs(true);
                let x = aux.get(user);
                let kh = k_mat.adjoint();
                let r = &kh * &w_sum_conj * &k_mat * c64(x.kappa * x.t.norm_sqr(), 0.0);
                let k = kh * vars.precoder.w(user).conjugate() * (x.t * x.kappa);
                PhaseBlock {
                    user,
                    directions: dirs,
                    k_mat,
                    probe,
                    r,
                    k,
                }
            })
            .collect();
        Self {
            blocks,
            num_pas: scenario.num_pas(),
        }
    }

    /// TS problem; FU owns the forward phases, BU the backward ones.
    pub fn ts(
        scenario: &Scenario,
        geometry: &Geometry,
        channels: &ChannelSet,
        vars: &DesignVariables,
        aux: &AuxTs,
    ) -> Self {
        let blocks = User::BOTH
            .iter()
            .map(|&user| {
                let dir = user.home_direction();
                let k_mat = k_slab(scenario, geometry, channels, vars, user, dir, false, false);
                let probe = k_slab(scenario, geometry, channels, vars, user, dir, false, true);
                let t = &aux.get(user).t;
                let k = k_mat.adjoint() * t;
                let r = &k * k.adjoint();
                PhaseBlock {
                    user,
                    directions: vec![dir],
                    k_mat,
                    probe,
                    r,
                    k,
                }
            })
            .collect();
        Self {
            blocks,
            num_pas: scenario.num_pas(),
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.directions.len()).sum::<usize>() * self.num_pas
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn ranges(&self) -> impl Iterator<Item = (&PhaseBlock, usize, usize)> {
        let mut off = 0;
        self.blocks.iter().map(move |b| {
            let len = b.directions.len() * self.num_pas;
            let start = off;
            off += len;
            (b, start, len)
        })
    }

    pub fn value(&self, phi: &PhaseVector) -> f64 {
        self.ranges()
            .map(|(b, start, len)| {
                let p = phi.rows(start, len);
                (p.adjoint() * &b.r * p)[(0, 0)].re - 2.0 * b.k.dotc(&p).re
            })
            .sum()
    }

    /// Effective channel of `user` implied by the phases (frozen amplitudes).
    pub fn effective_channel(&self, phi: &PhaseVector, user: User) -> Option<CVector> {
        self.ranges()
            .find(|(b, _, _)| b.user == user)
            .map(|(b, start, len)| &b.k_mat * phi.rows(start, len))
    }

    /// Per-(user, direction) target phases.
    pub fn targets(&self, phi: &PhaseVector) -> Vec<(User, Direction, CVector)> {
        let mut out = Vec::new();
        for (b, start, _) in self.ranges() {
            for (i, &d) in b.directions.iter().enumerate() {
                let s = start + i * self.num_pas;
                out.push((b.user, d, phi.rows(s, self.num_pas).into_owned()));
            }
        }
        out
    }
}

/// Euclidean gradient `2 (R phi - k)` per block.
pub fn phase_gradient(problem: &PhaseProblem, phi: &PhaseVector) -> PhaseVector {
    let mut g = CVector::zeros(phi.len());
    for (b, start, len) in problem.ranges() {
        let p = phi.rows(start, len);
        let gb = (&b.r * p - &b.k) * c64(2.0, 0.0);
        g.rows_mut(start, len).copy_from(&gb);
    }
    g
}

/// Phases realized by the current geometry, in the problem's layout.
pub fn current_phases(
    problem: &PhaseProblem,
    scenario: &Scenario,
    geometry: &Geometry,
    channels: &ChannelSet,
) -> PhaseVector {
    let (k0, kg) = (scenario.consts.wavenumber, scenario.consts.guided_wavenumber);
    let mut parts = Vec::new();
    for b in &problem.blocks {
        for &dir in &b.directions {
            let r = channels.r(b.user, dir);
            let d = geometry.displacements(dir);
            for n in 0..problem.num_pas {
                parts.push(cis_neg(k0 * r[n] + kg * geometry.waveguide_offset(dir, n, d[n])));
            }
        }
    }
    CVector::from_vec(parts)
}

/// Armijo descent on each block separately, so one user's data never
/// influences another block's iterates (step sizes included).
pub fn minimize_phases(
    problem: &PhaseProblem,
    start: PhaseVector,
    opts: &ArmijoOptions,
) -> Result<(PhaseVector, Vec<DescentReport>)> {
    let mut phi = start;
    let mut reports = Vec::with_capacity(problem.blocks.len());
    let spans: Vec<(usize, usize)> = problem.ranges().map(|(_, s, l)| (s, l)).collect();
    for (b, (start, len)) in problem.blocks.iter().zip(spans) {
        let value = |p: &CVector| (p.adjoint() * &b.r * p)[(0, 0)].re - 2.0 * b.k.dotc(p).re;
        let grad = |p: &CVector| (&b.r * p - &b.k) * c64(2.0, 0.0);
        let (out, rep) = armijo_descend(&Torus, value, grad, phi.rows(start, len).into_owned(), opts)?;
        phi.rows_mut(start, len).copy_from(&out);
        reports.push(rep);
    }
    Ok((phi, reports))
}

impl PhaseProblem {
    /// Dispatch on protocol; `aux_ts` is required for TS.
    pub fn for_protocol(
        protocol: Protocol,
        scenario: &Scenario,
        geometry: &Geometry,
        channels: &ChannelSet,
        vars: &DesignVariables,
        aux_psds: Option<&AuxPsds>,
        aux_ts: Option<&AuxTs>,
    ) -> Option<Self> {
        match protocol {
            Protocol::TimeSwitching => aux_ts.map(|a| Self::ts(scenario, geometry, channels, vars, a)),
            _ => aux_psds.map(|a| Self::psds(scenario, geometry, channels, vars, a)),
        }
    }
}

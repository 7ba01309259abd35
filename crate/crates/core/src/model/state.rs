use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Direction, Scenario, User};
use crate::error::{Error, Result};
use crate::{CMatrix, CVector, Complex64, RVector};

/// Operating protocol of the center-fed waveguide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    /// Continuous per-port power splitting.
    #[serde(rename = "PS")]
    PowerSplitting,
    /// Binary per-port direction switching.
    #[serde(rename = "DS")]
    DirectionSwitching,
    /// Whole-waveguide direction switching in time.
    #[serde(rename = "TS")]
    TimeSwitching,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::PowerSplitting, Protocol::DirectionSwitching, Protocol::TimeSwitching];

    pub fn label(self) -> &'static str {
        match self {
            Protocol::PowerSplitting => "PS",
            Protocol::DirectionSwitching => "DS",
            Protocol::TimeSwitching => "TS",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PS" => Ok(Protocol::PowerSplitting),
            "DS" => Ok(Protocol::DirectionSwitching),
            "TS" => Ok(Protocol::TimeSwitching),
            _ => Err(Error::config("protocol", format!("unknown protocol {s:?}"))),
        }
    }
}

/// Forward amplitude `cos(theta)`, exactly zero at `theta = pi/2`.
pub fn forward_amplitude(theta: f64) -> f64 {
    if theta == FRAC_PI_2 {
        0.0
    } else {
        theta.cos()
    }
}

/// Backward amplitude `sin(theta)`.
pub fn backward_amplitude(theta: f64) -> f64 {
    if theta == FRAC_PI_2 {
        1.0
    } else {
        theta.sin()
    }
}

/// Per-port splitting angles; port `m` sends `cos^2` of its power forward
/// and `sin^2` backward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingState {
    pub angles: Vec<f64>,
}

impl SplittingState {
    pub fn uniform(num_ports: usize, angle: f64) -> Self {
        Self {
            angles: vec![angle; num_ports],
        }
    }

    pub fn amplitudes(&self, dir: Direction) -> RVector {
        RVector::from_iterator(
            self.angles.len(),
            self.angles.iter().map(|&t| match dir {
                Direction::Forward => forward_amplitude(t),
                Direction::Backward => backward_amplitude(t),
            }),
        )
    }

    /// True when every angle is exactly 0 or pi/2.
    pub fn is_binary(&self) -> bool {
        self.angles.iter().all(|&t| t == 0.0 || t == FRAC_PI_2)
    }

    pub fn in_box(&self) -> bool {
        self.angles.iter().all(|&t| (0.0..=FRAC_PI_2).contains(&t))
    }
}

/// Radiation amplitude vectors (square roots of the per-PA radiation ratios).
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationState {
    pub xi_f: RVector,
    pub xi_b: RVector,
}

impl RadiationState {
    pub fn uniform(num_pas: usize) -> Self {
        let v = RVector::from_element(num_pas, 1.0 / (num_pas as f64).sqrt());
        Self {
            xi_f: v.clone(),
            xi_b: v,
        }
    }

    pub fn get(&self, dir: Direction) -> &RVector {
        match dir {
            Direction::Forward => &self.xi_f,
            Direction::Backward => &self.xi_b,
        }
    }

    pub fn get_mut(&mut self, dir: Direction) -> &mut RVector {
        match dir {
            Direction::Forward => &mut self.xi_f,
            Direction::Backward => &mut self.xi_b,
        }
    }
}

/// Baseband precoders, one column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderState {
    pub w_fu: CVector,
    pub w_bu: CVector,
    pub lagrange_multiplier: f64,
}

impl PrecoderState {
    pub fn zeros(num_ports: usize) -> Self {
        Self {
            w_fu: CVector::zeros(num_ports),
            w_bu: CVector::zeros(num_ports),
            lagrange_multiplier: 0.0,
        }
    }

    pub fn w(&self, user: User) -> &CVector {
        match user {
            User::Fu => &self.w_fu,
            User::Bu => &self.w_bu,
        }
    }

    /// Total transmit power `||w_fu||^2 + ||w_bu||^2`.
    pub fn power(&self) -> f64 {
        self.w_fu.norm_squared() + self.w_bu.norm_squared()
    }

    /// `w_fu w_fu^H + w_bu w_bu^H`.
    pub fn w_sum(&self) -> CMatrix {
        &self.w_fu * self.w_fu.adjoint() + &self.w_bu * self.w_bu.adjoint()
    }
}

/// Time-switching shares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAllocation {
    pub mu_fu: f64,
    pub mu_bu: f64,
}

impl TimeAllocation {
    pub fn new(mu_fu: f64) -> Self {
        let mu_fu = mu_fu.clamp(0.0, 1.0);
        Self {
            mu_fu,
            mu_bu: 1.0 - mu_fu,
        }
    }

    pub fn get(&self, user: User) -> f64 {
        match user {
            User::Fu => self.mu_fu,
            User::Bu => self.mu_bu,
        }
    }
}

impl Default for TimeAllocation {
    fn default() -> Self {
        Self::new(0.5)
    }
}

/// Complete optimization state for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVariables {
    pub splitting: SplittingState,
    pub radiation: RadiationState,
    pub precoder: PrecoderState,
    pub d_f: Vec<f64>,
    pub d_b: Vec<f64>,
    pub time: TimeAllocation,
}

impl DesignVariables {
    /// Even split, uniform radiation, nominal positions, zero precoder and
    /// equal time shares. Callers normally follow with an MRT precoder.
    pub fn nominal(scenario: &Scenario) -> Self {
        let (m, n) = (scenario.num_ports(), scenario.num_pas());
        Self {
            splitting: SplittingState::uniform(m, std::f64::consts::FRAC_PI_4),
            radiation: RadiationState::uniform(n),
            precoder: PrecoderState::zeros(m),
            d_f: vec![0.0; n],
            d_b: vec![0.0; n],
            time: TimeAllocation::default(),
        }
    }

    pub fn displacements(&self, dir: Direction) -> &[f64] {
        match dir {
            Direction::Forward => &self.d_f,
            Direction::Backward => &self.d_b,
        }
    }
}

pub(crate) fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn protocol_parses_case_insensitively() {
        assert_eq!("ps".parse::<Protocol>().unwrap(), Protocol::PowerSplitting);
        assert_eq!("TS".parse::<Protocol>().unwrap(), Protocol::TimeSwitching);
        assert!("XS".parse::<Protocol>().is_err());
    }

    #[test]
    fn binary_angles_have_exact_amplitudes() {
        let s = SplittingState {
            angles: vec![0.0, FRAC_PI_2],
        };
        assert!(s.is_binary());
        assert_eq!(s.amplitudes(Direction::Forward).as_slice(), &[1.0, 0.0]);
        assert_eq!(s.amplitudes(Direction::Backward).as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn time_allocation_sums_to_one() {
        let t = TimeAllocation::new(1.7);
        assert_eq!((t.mu_fu, t.mu_bu), (1.0, 0.0));
        let t = TimeAllocation::new(0.3);
        assert_eq!(t.mu_fu + t.mu_bu, 1.0);
    }

    proptest! {
        #[test]
        fn splitting_conserves_energy(angles in proptest::collection::vec(0.0..=FRAC_PI_2, 1..8)) {
            let s = SplittingState { angles };
            let f = s.amplitudes(Direction::Forward);
            let b = s.amplitudes(Direction::Backward);
            for m in 0..f.len() {
                prop_assert!((f[m] * f[m] + b[m] * b[m] - 1.0).abs() < 1e-12);
            }
        }
    }
}

use super::state::{backward_amplitude, forward_amplitude};
use super::{build_geometry, DesignVariables, Direction, Geometry, Point, Protocol, Scenario, SplittingState, User};
use crate::error::{Error, Result};
use crate::{CMatrix, CVector, Complex64, RVector};

/// `exp(-j * phase)`.
pub(crate) fn cis_neg(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, -phase)
}

/// Port-to-PA matrices `(G_F, G_B)`, each `M x N`.
///
/// Entry `(m, n)` is the splitting amplitude of port `m` in that direction
/// times the in-waveguide phase over the port-to-PA distance. Under time
/// switching both matrices carry unit amplitude.
pub fn build_waveguide_channel(
    protocol: Protocol,
    geometry: &Geometry,
    splitting: &SplittingState,
    guided_wavenumber: f64,
) -> (CMatrix, CMatrix) {
    let m_ports = geometry.port_positions.len();
    let build = |dir: Direction| {
        let pas = geometry.pa_positions(dir);
        CMatrix::from_fn(m_ports, pas.len(), |m, n| {
            let amp = match (protocol, dir) {
                (Protocol::TimeSwitching, _) => 1.0,
                (_, Direction::Forward) => forward_amplitude(splitting.angles[m]),
                (_, Direction::Backward) => backward_amplitude(splitting.angles[m]),
            };
            let dist = pas[n].distance(&geometry.port_positions[m]);
            cis_neg(guided_wavenumber * dist) * amp
        })
    };
    (build(Direction::Forward), build(Direction::Backward))
}

/// Free-space channels from every PA on both sides to one user.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeSpaceChannel {
    pub h_f: CVector,
    pub h_b: CVector,
    pub r_f: RVector,
    pub r_b: RVector,
}

/// Line-of-sight channel `eta * exp(-j k0 r) / r` from each PA to `user`.
pub fn build_freespace_channel(
    geometry: &Geometry,
    user: Point,
    wavenumber: f64,
    path_gain: f64,
) -> Result<FreeSpaceChannel> {
    let side = |dir: Direction| -> Result<(CVector, RVector)> {
        let pas = geometry.pa_positions(dir);
        let r = RVector::from_iterator(pas.len(), pas.iter().map(|p| p.distance(&user)));
        if r.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Singularity {
                x: user.x,
                y: user.y,
            });
        }
        let h = CVector::from_iterator(
            r.len(),
            r.iter().map(|&rn| cis_neg(wavenumber * rn) * (path_gain / rn)),
        );
        Ok((h, r))
    };
    let (h_f, r_f) = side(Direction::Forward)?;
    let (h_b, r_b) = side(Direction::Backward)?;
    Ok(FreeSpaceChannel { h_f, h_b, r_f, r_b })
}

/// In-waveguide phases of each port relative to the outermost port on the
/// `dir` side: `exp(-j k_g |x_edge - x_m|)`.
pub fn unit_port_phases(geometry: &Geometry, dir: Direction, guided_wavenumber: f64) -> CVector {
    let ports = &geometry.port_positions;
    let edge = match dir {
        Direction::Forward => ports[ports.len() - 1],
        Direction::Backward => ports[0],
    };
    CVector::from_iterator(
        ports.len(),
        ports.iter().map(|p| cis_neg(guided_wavenumber * p.distance(&edge))),
    )
}

/// All channel quantities for one design state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub protocol: Protocol,
    pub g_f: CMatrix,
    pub g_b: CMatrix,
    /// Per user, per direction free-space channel.
    pub h: [[CVector; 2]; 2],
    /// Per user, per direction PA distances.
    pub r: [[RVector; 2]; 2],
    /// Per user effective channel seen from the input ports. Under time
    /// switching each user's channel uses only its own direction.
    pub h_eff: [CVector; 2],
}

impl ChannelSet {
    pub fn build(
        scenario: &Scenario,
        protocol: Protocol,
        geometry: &Geometry,
        vars: &DesignVariables,
    ) -> Result<Self> {
        let k = &scenario.consts;
        let (g_f, g_b) =
            build_waveguide_channel(protocol, geometry, &vars.splitting, k.guided_wavenumber);
        let fu = build_freespace_channel(
            geometry,
            scenario.config.user_fu_position.into(),
            k.wavenumber,
            k.path_gain,
        )?;
        let bu = build_freespace_channel(
            geometry,
            scenario.config.user_bu_position.into(),
            k.wavenumber,
            k.path_gain,
        )?;
        let mut set = ChannelSet {
            protocol,
            g_f,
            g_b,
            h: [[fu.h_f, fu.h_b], [bu.h_f, bu.h_b]],
            r: [[fu.r_f, fu.r_b], [bu.r_f, bu.r_b]],
            h_eff: [CVector::zeros(0), CVector::zeros(0)],
        };
        set.refresh_effective(&vars.radiation);
        Ok(set)
    }

    /// Geometry and channels for `vars` from scratch.
    pub fn for_state(
        scenario: &Scenario,
        protocol: Protocol,
        vars: &DesignVariables,
    ) -> Result<(Geometry, Self)> {
        let geometry = build_geometry(scenario, &vars.d_f, &vars.d_b)?;
        let channels = Self::build(scenario, protocol, &geometry, vars)?;
        Ok((geometry, channels))
    }

    pub fn g(&self, dir: Direction) -> &CMatrix {
        match dir {
            Direction::Forward => &self.g_f,
            Direction::Backward => &self.g_b,
        }
    }

    pub fn h(&self, user: User, dir: Direction) -> &CVector {
        &self.h[user.index()][dir.index()]
    }

    pub fn r(&self, user: User, dir: Direction) -> &RVector {
        &self.r[user.index()][dir.index()]
    }

    pub fn h_eff(&self, user: User) -> &CVector {
        &self.h_eff[user.index()]
    }

    /// `G_dir * diag(xi) * h_user^dir`.
    pub fn one_way(&self, user: User, dir: Direction, xi: &RVector) -> CVector {
        let weighted = self.h(user, dir).zip_map(xi, |h, x| h * x);
        self.g(dir) * weighted
    }

    /// Recompute `h_eff` after the radiation amplitudes changed.
    pub fn refresh_effective(&mut self, radiation: &super::RadiationState) {
        for user in User::BOTH {
            let eff = match self.protocol {
                Protocol::TimeSwitching => {
                    let dir = user.home_direction();
                    self.one_way(user, dir, radiation.get(dir))
                }
                _ => {
                    self.one_way(user, Direction::Forward, &radiation.xi_f)
                        + self.one_way(user, Direction::Backward, &radiation.xi_b)
                }
            };
            self.h_eff[user.index()] = eff;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RadiationState, SystemConfig};
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn reference() -> (Scenario, DesignVariables) {
        let s = Scenario::new(SystemConfig::default()).unwrap();
        let v = DesignVariables::nominal(&s);
        (s, v)
    }

    #[test]
    fn full_forward_split_zeroes_backward_matrix() {
        let (s, mut v) = reference();
        v.splitting.angles = vec![0.0; 2];
        let (g, ch) = ChannelSet::for_state(&s, Protocol::PowerSplitting, &v).unwrap();
        assert!(ch.g_f.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        assert!(ch.g_b.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        assert_eq!(g.num_pas(), 10);
    }

    #[test]
    fn time_switching_matrices_are_unit_modulus() {
        let (s, v) = reference();
        let (_, ch) = ChannelSet::for_state(&s, Protocol::TimeSwitching, &v).unwrap();
        for z in ch.g_f.iter().chain(ch.g_b.iter()) {
            assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn splitting_amplitudes_appear_in_matrices() {
        let (s, mut v) = reference();
        v.splitting.angles = vec![0.3, 1.2];
        let (_, ch) = ChannelSet::for_state(&s, Protocol::PowerSplitting, &v).unwrap();
        for m in 0..2 {
            for n in 0..10 {
                assert_relative_eq!(ch.g_f[(m, n)].norm(), v.splitting.angles[m].cos(), epsilon = 1e-14);
                assert_relative_eq!(ch.g_b[(m, n)].norm(), v.splitting.angles[m].sin(), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn full_wavelength_phase_wraps() {
        let lambda_g = 0.25;
        let z = cis_neg(2.0 * PI / lambda_g * lambda_g);
        assert_relative_eq!(z.re, 1.0, epsilon = 1e-15);
        assert!(z.im.abs() < 1e-15);
    }

    #[test]
    fn freespace_at_one_wavelength() {
        let (s, _) = reference();
        let k = s.consts;
        let g = build_geometry(&s, &[0.0; 10], &[0.0; 10]).unwrap();
        let p = g.fpa_positions[0];
        let user = Point::new(p.x, k.wavelength);
        let ch = build_freespace_channel(&g, user, k.wavenumber, k.path_gain).unwrap();
        let h0 = ch.h_f[0];
        assert_relative_eq!(h0.re, 1.0 / (4.0 * PI), epsilon = 1e-12);
        assert!(h0.im.abs() < 1e-12);
        assert_relative_eq!(1.0 / (4.0 * PI), 7.9577e-2, epsilon = 1e-5);
    }

    #[test]
    fn freespace_distance_matches_reference_geometry() {
        let (s, v) = reference();
        let (_, ch) = ChannelSet::for_state(&s, Protocol::PowerSplitting, &v).unwrap();
        let x = s.config.port_spacing / 2.0 + 1.0;
        assert_relative_eq!(ch.r(User::Fu, Direction::Forward)[0], ((5.0 - x).powi(2) + 900.0).sqrt(), epsilon = 1e-12);
        for user in User::BOTH {
            for dir in Direction::BOTH {
                for (h, r) in ch.h(user, dir).iter().zip(ch.r(user, dir).iter()) {
                    assert_relative_eq!(h.norm(), s.consts.path_gain / r, max_relative = 1e-14);
                }
            }
        }
    }

    #[test]
    fn doubling_distance_halves_gain() {
        let (s, _) = reference();
        let k = s.consts;
        let g = build_geometry(&s, &[0.0; 10], &[0.0; 10]).unwrap();
        let p = g.fpa_positions[3];
        let a = build_freespace_channel(&g, Point::new(p.x, 2.0), k.wavenumber, k.path_gain).unwrap();
        let b = build_freespace_channel(&g, Point::new(p.x, 4.0), k.wavenumber, k.path_gain).unwrap();
        assert_relative_eq!(a.h_f[3].norm(), 2.0 * b.h_f[3].norm(), max_relative = 1e-14);
    }

    #[test]
    fn user_on_a_pa_is_singular() {
        let (s, _) = reference();
        let k = s.consts;
        let g = build_geometry(&s, &[0.0; 10], &[0.0; 10]).unwrap();
        let err = build_freespace_channel(&g, g.bpa_positions[2], k.wavenumber, k.path_gain);
        assert!(matches!(err, Err(Error::Singularity { .. })));
    }

    #[test]
    fn effective_channel_factorizes() {
        let (s, mut v) = reference();
        v.splitting.angles = vec![0.2, FRAC_PI_2 - 0.1];
        v.radiation = RadiationState {
            xi_f: RVector::from_fn(10, |i, _| (i + 1) as f64).normalize(),
            xi_b: RVector::from_fn(10, |i, _| (10 - i) as f64).normalize(),
        };
        let (_, ch) = ChannelSet::for_state(&s, Protocol::PowerSplitting, &v).unwrap();
        for user in User::BOTH {
            let mut expect = CVector::zeros(2);
            for dir in Direction::BOTH {
                let xi = v.radiation.get(dir);
                let xi_c = CMatrix::from_diagonal(&xi.map(|x| Complex64::new(x, 0.0)));
                expect += ch.g(dir) * xi_c * ch.h(user, dir);
            }
            assert!((ch.h_eff(user) - expect).norm() <= 1e-12 * ch.h_eff(user).norm());
        }
    }

    #[test]
    fn displacement_changes_amplitude_negligibly() {
        let (s, _) = reference();
        let k = s.consts;
        let g0 = build_geometry(&s, &[0.0; 10], &[0.0; 10]).unwrap();
        let g1 = build_geometry(&s, &[0.01; 10], &[-0.01; 10]).unwrap();
        for pos in [s.config.user_fu_position, s.config.user_bu_position] {
            let a = build_freespace_channel(&g0, pos.into(), k.wavenumber, k.path_gain).unwrap();
            let b = build_freespace_channel(&g1, pos.into(), k.wavenumber, k.path_gain).unwrap();
            for (x, y) in a.h_f.iter().chain(a.h_b.iter()).zip(b.h_f.iter().chain(b.h_b.iter())) {
                assert!(((x.norm() - y.norm()) / x.norm()).abs() < 1e-3);
            }
        }
    }
}

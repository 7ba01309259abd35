use serde::{Deserialize, Serialize};

use super::{ChannelSet, PrecoderState, Protocol, TimeAllocation, User};

/// Per-user achievable rates in bits/s/Hz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UserRates {
    pub fu: f64,
    pub bu: f64,
}

impl UserRates {
    pub fn get(&self, user: User) -> f64 {
        match user {
            User::Fu => self.fu,
            User::Bu => self.bu,
        }
    }

    pub fn sum(&self) -> f64 {
        self.fu + self.bu
    }
}

/// Exact rates when both users are served simultaneously and interfere.
pub fn sum_rate_psds(channels: &ChannelSet, precoder: &PrecoderState, noise: f64) -> UserRates {
    let rate = |user: User| {
        let h = channels.h_eff(user);
        let signal = h.dot(precoder.w(user)).norm_sqr();
        let interference = h.dot(precoder.w(user.other())).norm_sqr();
        (signal / (interference + noise)).ln_1p() / std::f64::consts::LN_2
    };
    UserRates {
        fu: rate(User::Fu),
        bu: rate(User::Bu),
    }
}

/// Exact time-switching rates; a user with a zero time share gets rate 0.
pub fn sum_rate_ts(
    channels: &ChannelSet,
    precoder: &PrecoderState,
    time: &TimeAllocation,
    noise: f64,
) -> UserRates {
    let rate = |user: User| {
        let mu = time.get(user);
        if mu <= 0.0 {
            return 0.0;
        }
        let signal = channels.h_eff(user).dot(precoder.w(user)).norm_sqr();
        mu * (signal / (mu * noise)).ln_1p() / std::f64::consts::LN_2
    };
    UserRates {
        fu: rate(User::Fu),
        bu: rate(User::Bu),
    }
}

/// Dispatch on the channel set's protocol.
pub fn sum_rate(
    channels: &ChannelSet,
    precoder: &PrecoderState,
    time: &TimeAllocation,
    noise: f64,
) -> UserRates {
    match channels.protocol {
        Protocol::TimeSwitching => sum_rate_ts(channels, precoder, time, noise),
        _ => sum_rate_psds(channels, precoder, noise),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DesignVariables, Scenario, SystemConfig};
    use crate::CVector;
    use approx::assert_relative_eq;

    fn setup(protocol: Protocol) -> (Scenario, ChannelSet) {
        let s = Scenario::new(SystemConfig::default()).unwrap();
        let v = DesignVariables::nominal(&s);
        let (_, ch) = ChannelSet::for_state(&s, protocol, &v).unwrap();
        (s, ch)
    }

    fn mrt(h: &CVector, power: f64) -> CVector {
        h.map(|z| z.conj()) * crate::Complex64::new(power.sqrt() / h.norm(), 0.0)
    }

    #[test]
    fn single_user_has_no_interference() {
        let (s, ch) = setup(Protocol::PowerSplitting);
        let mut p = PrecoderState::zeros(2);
        p.w_fu = mrt(ch.h_eff(User::Fu), 100.0);
        let r = sum_rate_psds(&ch, &p, s.noise_power());
        let snr = ch.h_eff(User::Fu).dot(&p.w_fu).norm_sqr() / s.noise_power();
        assert_relative_eq!(r.fu, (1.0 + snr).log2(), max_relative = 1e-14);
        assert_eq!(r.bu, 0.0);
    }

    #[test]
    fn huge_noise_kills_rates() {
        let (_, ch) = setup(Protocol::PowerSplitting);
        let mut p = PrecoderState::zeros(2);
        p.w_fu = mrt(ch.h_eff(User::Fu), 1.0);
        p.w_bu = mrt(ch.h_eff(User::Bu), 1.0);
        let r = sum_rate_psds(&ch, &p, 1e30);
        assert!(r.sum() < 1e-20);
    }

    #[test]
    fn time_shares_at_the_ends() {
        let (s, ch) = setup(Protocol::TimeSwitching);
        let mut p = PrecoderState::zeros(2);
        p.w_fu = mrt(ch.h_eff(User::Fu), 100.0);
        p.w_bu = mrt(ch.h_eff(User::Bu), 100.0);
        let r = sum_rate_ts(&ch, &p, &TimeAllocation::new(1.0), s.noise_power());
        assert_eq!(r.bu, 0.0);
        assert!(r.fu > 0.0);
        let r = sum_rate_ts(&ch, &p, &TimeAllocation::new(0.0), s.noise_power());
        assert_eq!(r.fu, 0.0);
        assert!(r.bu.is_finite() && r.bu > 0.0);
    }

    #[test]
    fn mrt_half_share_closed_form() {
        let (s, ch) = setup(Protocol::TimeSwitching);
        let pt = s.transmit_power();
        let mut p = PrecoderState::zeros(2);
        p.w_fu = mrt(ch.h_eff(User::Fu), pt);
        p.w_bu = mrt(ch.h_eff(User::Bu), pt);
        let r = sum_rate_ts(&ch, &p, &TimeAllocation::new(0.5), s.noise_power());
        let g = ch.h_eff(User::Fu).norm_squared();
        assert_relative_eq!(r.fu, 0.5 * (1.0 + 2.0 * pt * g / s.noise_power()).log2(), max_relative = 1e-12);
    }
}

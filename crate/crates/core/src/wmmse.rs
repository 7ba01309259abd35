//! Weighted-MMSE auxiliary variables and closed-form precoders.
//!
//! For the simultaneous protocols (PS/DS) each user has a scalar receive
//! coefficient `t`, MSE `eps` and weight `kappa`; the receiver estimate is
//! `conj(t) * y`. Under time switching the per-user auxiliary is a vector
//! `t_hat` acting on the port-domain channel, which makes the MMSE identity
//! `mu * log2(kappa_hat) = R` hold for the MRT precoder.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::model::{c64, ChannelSet, PrecoderState, TimeAllocation, User};
use crate::{CMatrix, CVector, Complex64, RVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarAux {
    pub t: Complex64,
    pub kappa: f64,
    pub epsilon: f64,
}

/// Auxiliary state for PS/DS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxPsds {
    pub fu: ScalarAux,
    pub bu: ScalarAux,
}

impl AuxPsds {
    pub fn get(&self, user: User) -> &ScalarAux {
        match user {
            User::Fu => &self.fu,
            User::Bu => &self.bu,
        }
    }

    /// `sum_k log2(kappa_k)`; equals the exact sum rate right after an update.
    pub fn log_weight_sum(&self) -> f64 {
        (self.fu.kappa.ln() + self.bu.kappa.ln()) / LN_2
    }
}

/// Optimal receive coefficient, MSE and weight of one user whose effective
/// channel is `h`.
pub fn scalar_aux(h: &CVector, w_own: &CVector, w_other: &CVector, noise: f64) -> Result<ScalarAux> {
    let s = h.dot(w_own);
    let i = h.dot(w_other);
    let total = s.norm_sqr() + i.norm_sqr() + noise;
    let epsilon = (i.norm_sqr() + noise) / total;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Internal(format!("MSE is {epsilon}; noise power must be positive")));
    }
    Ok(ScalarAux {
        t: s / total,
        kappa: 1.0 / epsilon,
        epsilon,
    })
}

/// Optimal receive coefficients, MSEs and weights for the current precoder.
pub fn update_aux_psds(channels: &ChannelSet, precoder: &PrecoderState, noise: f64) -> Result<AuxPsds> {
    let aux = |user: User| scalar_aux(channels.h_eff(user), precoder.w(user), precoder.w(user.other()), noise);
    Ok(AuxPsds {
        fu: aux(User::Fu)?,
        bu: aux(User::Bu)?,
    })
}

/// MSE of each user for fixed receive coefficients.
pub fn mse_psds(channels: &ChannelSet, precoder: &PrecoderState, aux: &AuxPsds, noise: f64) -> [f64; 2] {
    User::BOTH.map(|user| {
        let h = channels.h_eff(user);
        let t = aux.get(user).t;
        let s = h.dot(precoder.w(user));
        let i = h.dot(precoder.w(user.other()));
        (Complex64::new(1.0, 0.0) - t.conj() * s).norm_sqr() + t.norm_sqr() * (i.norm_sqr() + noise)
    })
}

/// Weighted-MSE surrogate `sum_k kappa_k e_k - ln kappa_k` (to be minimized).
pub fn surrogate_objective_psds(
    channels: &ChannelSet,
    precoder: &PrecoderState,
    aux: &AuxPsds,
    noise: f64,
) -> f64 {
    let e = mse_psds(channels, precoder, aux, noise);
    User::BOTH
        .iter()
        .map(|&u| {
            let k = aux.get(u).kappa;
            k * e[u.index()] - k.ln()
        })
        .sum()
}

/// Spectral form of the precoder normal equations: `W(lambda)` is
/// `U diag(1/(s + lambda)) U^H B`.
struct PrecoderSystem {
    vectors: CMatrix,
    values: RVector,
    proj: CMatrix,
}

impl PrecoderSystem {
    fn new(channels: &ChannelSet, aux: &AuxPsds) -> Self {
        let m = channels.h_eff(User::Fu).len();
        let mut a = CMatrix::zeros(m, m);
        let mut b = CMatrix::zeros(m, 2);
        for user in User::BOTH {
            let h = channels.h_eff(user);
            let x = aux.get(user);
            let hc = h.conjugate();
            a += &hc * h.transpose() * c64(x.kappa * x.t.norm_sqr(), 0.0);
            b.set_column(user.index(), &(hc * (x.t * x.kappa)));
        }
        let eig = a.symmetric_eigen();
        let proj = eig.eigenvectors.adjoint() * b;
        Self {
            values: eig.eigenvalues.map(|s| s.max(0.0)),
            vectors: eig.eigenvectors,
            proj,
        }
    }

    fn power(&self, lambda: f64) -> f64 {
        let mut p = 0.0;
        for (i, s) in self.values.iter().enumerate() {
            let d = (s + lambda) * (s + lambda);
            p += (self.proj[(i, 0)].norm_sqr() + self.proj[(i, 1)].norm_sqr()) / d;
        }
        p
    }

    fn solve(&self, lambda: f64) -> (CVector, CVector) {
        let scaled = CMatrix::from_fn(self.proj.nrows(), 2, |i, k| {
            self.proj[(i, k)] / (self.values[i] + lambda)
        });
        let w = &self.vectors * scaled;
        (w.column(0).into_owned(), w.column(1).into_owned())
    }

    /// Smallest multiplier that keeps the matrix invertible.
    fn floor(&self) -> f64 {
        let m = self.values.len() as f64;
        let reg = 1e-12 * self.values.sum() / m;
        if self.values.iter().any(|&s| s <= reg) {
            reg
        } else {
            0.0
        }
    }
}

const BISECTION_MAX_ITER: usize = 200;
const BISECTION_REL_TOL: f64 = 1e-8;

/// Transmit power of the closed-form precoder at multiplier `lambda`.
pub fn precoder_power_at(channels: &ChannelSet, aux: &AuxPsds, lambda: f64) -> f64 {
    let sys = PrecoderSystem::new(channels, aux);
    sys.power(lambda.max(sys.floor()))
}

/// Closed-form WMMSE precoder under the total power budget.
///
/// The multiplier is zero when the unconstrained solution is feasible;
/// otherwise it is found by bisection on the strictly decreasing power curve
/// and the feasible end of the final bracket is returned.
pub fn update_precoder_psds(channels: &ChannelSet, aux: &AuxPsds, power: f64) -> Result<PrecoderState> {
    let sys = PrecoderSystem::new(channels, aux);
    let floor = sys.floor();
    let lambda = if sys.power(floor) <= power {
        floor
    } else {
        let (mut lo, mut hi) = (floor, floor.max(1.0));
        let mut doublings = 0;
        while sys.power(hi) > power {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 2000 || !hi.is_finite() {
                return Err(Error::NonFinite("precoder multiplier bracket"));
            }
        }
        for _ in 0..BISECTION_MAX_ITER {
            if (power - sys.power(hi)) <= BISECTION_REL_TOL * power {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sys.power(mid) > power {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let (w_fu, w_bu) = sys.solve(lambda);
    if w_fu.iter().chain(w_bu.iter()).any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("precoder"));
    }
    Ok(PrecoderState {
        w_fu,
        w_bu,
        lagrange_multiplier: lambda,
    })
}

/// Per-user vector auxiliary for time switching.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorAux {
    pub t: CVector,
    pub kappa: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxTs {
    pub fu: VectorAux,
    pub bu: VectorAux,
}

impl AuxTs {
    pub fn get(&self, user: User) -> &VectorAux {
        match user {
            User::Fu => &self.fu,
            User::Bu => &self.bu,
        }
    }

    /// `sum_k mu_k log2(kappa_hat_k)`.
    pub fn log_weight_sum(&self, time: &TimeAllocation) -> f64 {
        User::BOTH
            .iter()
            .map(|&u| {
                let mu = time.get(u);
                if mu > 0.0 {
                    mu * self.get(u).kappa.ln() / LN_2
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// Vector MSE `|1 - t^H h|^2 + sigma ||t||^2`.
pub fn mse_ts(h: &CVector, t: &CVector, sigma: f64) -> f64 {
    (Complex64::new(1.0, 0.0) - t.dotc(h)).norm_sqr() + sigma * t.norm_squared()
}

/// Single-user MMSE receiver `h / (sigma + ||h||^2)` with its MSE and weight.
pub fn vector_aux(h: &CVector, sigma: f64) -> Result<VectorAux> {
    let t = h / c64(sigma + h.norm_squared(), 0.0);
    let epsilon = mse_ts(h, &t, sigma);
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Internal(format!("TS MSE is {epsilon}")));
    }
    Ok(VectorAux {
        t,
        kappa: 1.0 / epsilon,
        epsilon,
    })
}

/// MMSE update of the time-switching auxiliaries.
///
/// `t_hat = (h h^H + sigma I)^-1 h` with `sigma = mu N0 / P`, which by
/// Sherman-Morrison is `h / (sigma + ||h||^2)`. A user with a zero time share
/// keeps its `previous` auxiliary (it contributes nothing to the rate).
pub fn update_aux_ts(
    channels: &ChannelSet,
    time: &TimeAllocation,
    power: f64,
    noise: f64,
    previous: Option<&AuxTs>,
) -> Result<AuxTs> {
    let aux = |user: User| -> Result<VectorAux> {
        let mu = time.get(user);
        if mu <= 0.0 {
            return previous.map(|p| p.get(user).clone()).ok_or_else(|| {
                Error::Domain(format!("{} has zero time share and no prior auxiliary", user.name()))
            });
        }
        vector_aux(channels.h_eff(user), mu * noise / power)
    };
    Ok(AuxTs {
        fu: aux(User::Fu)?,
        bu: aux(User::Bu)?,
    })
}

/// Time-switching surrogate `sum_k mu_k (kappa_k e_k(mu_k) - ln kappa_k)`.
pub fn surrogate_objective_ts(
    channels: &ChannelSet,
    aux: &AuxTs,
    time: &TimeAllocation,
    power: f64,
    noise: f64,
) -> f64 {
    User::BOTH
        .iter()
        .map(|&u| {
            let mu = time.get(u);
            let a = aux.get(u);
            let e = mse_ts(channels.h_eff(u), &a.t, mu * noise / power);
            mu * (a.kappa * e - a.kappa.ln())
        })
        .sum()
}

/// Maximum-ratio precoders; each user gets the full budget since the users
/// are served in disjoint time slots.
pub fn mrt_precoder(channels: &ChannelSet, power: f64) -> Result<PrecoderState> {
    let w = |user: User| -> Result<CVector> {
        let h = channels.h_eff(user);
        let norm = h.norm();
        if !(norm > 0.0) {
            return Err(Error::ZeroChannel(user.name()));
        }
        Ok(h.conjugate() * c64(power.sqrt() / norm, 0.0))
    };
    Ok(PrecoderState {
        w_fu: w(User::Fu)?,
        w_bu: w(User::Bu)?,
        lagrange_multiplier: 0.0,
    })
}

/// Equal-power MRT toward both users, scaled to the full budget; the
/// starting precoder for PS/DS.
pub fn split_mrt_precoder(channels: &ChannelSet, power: f64) -> Result<PrecoderState> {
    mrt_precoder(channels, power / 2.0)
}

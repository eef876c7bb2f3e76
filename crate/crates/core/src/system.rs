//! Signal model: power normalization, relay and destination covariances,
//! effective channels, Wiener receiver, MSE matrix and achievable rate.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{check_antennas, ChannelSet};
use crate::error::{Error, Result};
use crate::linalg::{
    ensure_finite, identity, identity_plus_gram, inv_hermitian_pd, inv_hermitian_pd_unchecked, logdet_hermitian_pd,
    whiten,
    scale, trace_re, CMatrix,
};

/// Power budgets and noise levels. All variances are per-entry noise powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub m: usize,
    pub p_s: f64,
    pub p_r: f64,
    pub sigma_relay: [f64; 3],
    pub sigma_dest: f64,
}

/// How the nominal power `P = rho * sigma^2` is split between source and relays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerConvention {
    /// `P_S = P_R = P`
    Equal,
    /// `P_S = 2P`, `P_R = 3P`
    TwoSlot,
}

impl NodeConfig {
    /// Unit noise everywhere and `P = 10^(snr_db / 10)`.
    pub fn from_snr(m: usize, snr_db: f64, convention: PowerConvention) -> Self {
        let p = 10f64.powf(snr_db / 10.0);
        let (p_s, p_r) = match convention {
            PowerConvention::Equal => (p, p),
            PowerConvention::TwoSlot => (2.0 * p, 3.0 * p),
        };
        NodeConfig {
            m,
            p_s,
            p_r,
            sigma_relay: [1.0; 3],
            sigma_dest: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_antennas("system_model::NodeConfig", self.m)?;
        let positive = [self.p_s, self.p_r, self.sigma_dest]
            .iter()
            .chain(self.sigma_relay.iter())
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive {
            return Err(Error::degenerate(
                "system_model::NodeConfig",
                "powers and noise variances must be positive and finite",
            ));
        }
        Ok(())
    }
}

/// Which relays carry a data stream to the destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    /// `M/2` streams precoded by `T_o`, received by relay 3 on an odd slot and
    /// delivered on the following even slot.
    Relay3,
    /// `M` streams precoded by `T_e`, received by relays 1 and 2 on an even
    /// slot and delivered on the following odd slot.
    Relays12,
}

impl Route {
    pub fn relays(&self) -> &'static [usize] {
        match self {
            Route::Relay3 => &[2],
            Route::Relays12 => &[0, 1],
        }
    }

    pub fn streams(&self, m: usize) -> usize {
        match self {
            Route::Relay3 => m / 2,
            Route::Relays12 => m,
        }
    }
}

/// `p_t = P_S / tr(T T^H)`.
pub fn source_power_factor(t: &CMatrix, p_s: f64) -> Result<f64> {
    let energy = t.norm_squared();
    if !(energy > f64::MIN_POSITIVE) {
        return Err(Error::degenerate(
            "system_model::source_power_factor",
            "precoder has zero energy",
        ));
    }
    Ok(p_s / energy)
}

/// `Sigma_i = p_t H_iS T T^H H_iS^H + sigma_i^2 I`.
pub fn relay_input_covariance(h_is: &CMatrix, t: &CMatrix, p_t: f64, sigma2: f64) -> CMatrix {
    let ht = h_is * t;
    scale(&(&ht * ht.adjoint()), p_t) + scale(&identity(h_is.nrows()), sigma2)
}

/// `p_i = P_R / tr(F Sigma_i F^H)`.
pub fn relay_power_factor(f: &CMatrix, sigma_in: &CMatrix, p_r: f64) -> Result<f64> {
    let load = trace_re(&(f * sigma_in * f.adjoint()));
    if !(load > f64::MIN_POSITIVE) {
        return Err(Error::degenerate(
            "system_model::relay_power_factor",
            "relay amplifier has zero output power",
        ));
    }
    Ok(p_r / load)
}

/// One relay path of a hop: source to relay channel, relay amplifier, relay
/// to destination channel.
#[derive(Debug, Clone, Copy)]
pub struct Branch<'a> {
    pub backward: &'a CMatrix,
    pub amp: &'a CMatrix,
    pub forward: &'a CMatrix,
    pub sigma2: f64,
}

/// Everything the rate and its gradients need about one source-to-destination
/// hop.
#[derive(Debug, Clone)]
pub struct HopEval {
    pub p_t: f64,
    /// `Sigma_i` per branch.
    pub relay_cov: Vec<CMatrix>,
    /// `p_i` per branch; zero for a silent relay.
    pub p_relay: Vec<f64>,
    pub h_eff: CMatrix,
    pub noise_cov: CMatrix,
    pub noise_cov_inv: CMatrix,
    pub mse: CMatrix,
    /// Achievable rate in nats.
    pub rate_nats: f64,
}

impl HopEval {
    pub fn rate_bits(&self) -> f64 {
        self.rate_nats / LN_2
    }
}

/// Evaluates a hop with precoder `t`. A relay whose amplifier is exactly
/// zero transmits nothing and gets `p_i = 0`.
pub fn evaluate_hop(
    t: &CMatrix,
    branches: &[Branch<'_>],
    p_s: f64,
    p_r: f64,
    sigma_dest: f64,
) -> Result<HopEval> {
    const OP: &str = "system_model::evaluate_hop";
    let m = t.nrows();
    ensure_finite(t, OP)?;
    let p_t = source_power_factor(t, p_s)?;
    let mut relay_cov = Vec::with_capacity(branches.len());
    let mut p_relay = Vec::with_capacity(branches.len());
    let mut h_eff = CMatrix::zeros(m, t.ncols());
    let mut noise_cov = scale(&identity(m), sigma_dest);
    for b in branches {
        ensure_finite(b.amp, OP)?;
        let cov = relay_input_covariance(b.backward, t, p_t, b.sigma2);
        let p = if b.amp.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
            0.0
        } else {
            relay_power_factor(b.amp, &cov, p_r)?
        };
        let hf = b.forward * b.amp;
        h_eff += scale(&(&hf * b.backward * t), p.sqrt());
        noise_cov += scale(&(&hf * hf.adjoint()), b.sigma2 * p);
        relay_cov.push(cov);
        p_relay.push(p);
    }
    let noise_cov_inv = inv_hermitian_pd(&noise_cov, OP)?;
    // I + p_t H^H Sigma^-1 H, factored without forming it
    let info = identity_plus_gram(&scale(&whiten(&noise_cov, &h_eff, OP)?, p_t.sqrt()), OP)?;
    let (rate_nats, mse) = (info.logdet, info.inverse);
    Ok(HopEval {
        p_t,
        relay_cov,
        p_relay,
        h_eff,
        noise_cov,
        noise_cov_inv,
        mse,
        rate_nats,
    })
}

/// Source precoders and relay amplifiers for one time-invariant design.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub t_e: CMatrix,
    pub t_o: CMatrix,
    pub amps: [CMatrix; 3],
}

impl FilterBank {
    fn precoder(&self, route: Route) -> &CMatrix {
        match route {
            Route::Relay3 => &self.t_o,
            Route::Relays12 => &self.t_e,
        }
    }

    /// Power normalizers `(p_e, p_o, [p_1, p_2, p_3])` and relay input
    /// covariances for this bank on `ch`.
    pub fn powers(&self, ch: &ChannelSet, cfg: &NodeConfig) -> Result<BankPowers> {
        let e = route_eval(self, ch, Route::Relays12, cfg)?;
        let o = route_eval(self, ch, Route::Relay3, cfg)?;
        Ok(BankPowers {
            p_e: e.p_t,
            p_o: o.p_t,
            p_relay: [e.p_relay[0], e.p_relay[1], o.p_relay[0]],
            relay_cov: [e.relay_cov[0].clone(), e.relay_cov[1].clone(), o.relay_cov[0].clone()],
        })
    }
}

#[derive(Debug, Clone)]
pub struct BankPowers {
    pub p_e: f64,
    pub p_o: f64,
    pub p_relay: [f64; 3],
    pub relay_cov: [CMatrix; 3],
}

fn route_branches<'a>(
    amps: &'a [CMatrix; 3],
    back: &'a ChannelSet,
    fwd: &'a ChannelSet,
    route: Route,
    cfg: &NodeConfig,
) -> Vec<Branch<'a>> {
    route
        .relays()
        .iter()
        .map(|&i| Branch {
            backward: &back.backward[i],
            amp: &amps[i],
            forward: &fwd.forward[i],
            sigma2: cfg.sigma_relay[i],
        })
        .collect()
}

/// Hop evaluation of `route` for a time-invariant bank on a single channel set.
pub fn route_eval(bank: &FilterBank, ch: &ChannelSet, route: Route, cfg: &NodeConfig) -> Result<HopEval> {
    let branches = route_branches(&bank.amps, ch, ch, route, cfg);
    evaluate_hop(bank.precoder(route), &branches, cfg.p_s, cfg.p_r, cfg.sigma_dest)
}

/// `H_o = sqrt(p_3) H_D3 F_3 H_3S T_o` or `H_e = sum_i sqrt(p_i) H_Di F_i H_iS T_e`.
pub fn effective_channel(bank: &FilterBank, ch: &ChannelSet, route: Route, cfg: &NodeConfig) -> Result<CMatrix> {
    route_eval(bank, ch, route, cfg).map(|h| h.h_eff)
}

/// Destination noise covariance `sum_i sigma_i^2 p_i H_Di F_i F_i^H H_Di^H + sigma_D^2 I`.
pub fn noise_covariance(bank: &FilterBank, ch: &ChannelSet, route: Route, cfg: &NodeConfig) -> Result<CMatrix> {
    route_eval(bank, ch, route, cfg).map(|h| h.noise_cov)
}

/// `E = (I + p_t H^H Sigma^-1 H)^-1`.
pub fn mse_matrix(h: &CMatrix, noise_cov: &CMatrix, p_t: f64) -> Result<CMatrix> {
    const OP: &str = "system_model::mse_matrix";
    let sinv = inv_hermitian_pd(noise_cov, OP)?;
    let info = identity(h.ncols()) + scale(&(h.adjoint() * sinv * h), p_t);
    inv_hermitian_pd_unchecked(&info, OP)
}

/// `W_D = (p_t H H^H + Sigma)^-1 sqrt(p_t) H`.
pub fn wiener_filter(h: &CMatrix, noise_cov: &CMatrix, p_t: f64) -> Result<CMatrix> {
    const OP: &str = "system_model::wiener_filter";
    let rx = scale(&(h * h.adjoint()), p_t) + noise_cov;
    let inv = inv_hermitian_pd(&rx, OP)?;
    Ok(scale(&(inv * h), p_t.sqrt()))
}

/// Error covariance of an arbitrary linear receiver `W` applied to
/// `y = sqrt(p_t) H s + z`, with unit-power streams and noise covariance
/// `Sigma`: `(sqrt(p_t) W^H H - I)(...)^H + W^H Sigma W`.
pub fn mse_of_filter(w: &CMatrix, h: &CMatrix, noise_cov: &CMatrix, p_t: f64) -> CMatrix {
    let bias = scale(&(w.adjoint() * h), p_t.sqrt()) - identity(h.ncols());
    &bias * bias.adjoint() + w.adjoint() * noise_cov * w
}

/// `log2 det E^-1` in bits.
pub fn sum_rate(mse: &CMatrix) -> Result<f64> {
    Ok(-logdet_hermitian_pd(mse)? / LN_2)
}

/// `||A H B||_F / (||A||_F ||H||_F ||B||_F)`, or zero when either filter is zero.
pub fn leakage(a: &CMatrix, h: &CMatrix, b: &CMatrix) -> f64 {
    let denom = a.norm() * h.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        (a * h * b).norm() / denom
    }
}

/// Largest normalized inter-relay leakage of a time-invariant bank: relay 3
/// hearing relays 1 and 2, and relays 1 and 2 hearing relay 3.
pub fn interference_residual(bank: &FilterBank, ch: &ChannelSet) -> f64 {
    let [f1, f2, f3] = &bank.amps;
    [
        leakage(f3, &ch.h31, f1),
        leakage(f3, &ch.h32, f2),
        leakage(f1, &ch.h13, f3),
        leakage(f2, &ch.h23, f3),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Residual above which a bank is not treated as interference-free.
pub const RESIDUAL_GATE: f64 = 1e-8;

/// `(I_o + I_e) / 2` in bits for a time-invariant bank.
pub fn two_slot_rate(bank: &FilterBank, ch: &ChannelSet, cfg: &NodeConfig) -> Result<f64> {
    let residual = interference_residual(bank, ch);
    if !(residual < RESIDUAL_GATE) {
        return Err(Error::InterferenceNotCancelled {
            op: "system_model::two_slot_rate",
            residual,
        });
    }
    let o = route_eval(bank, ch, Route::Relay3, cfg)?;
    let e = route_eval(bank, ch, Route::Relays12, cfg)?;
    Ok(0.5 * (o.rate_bits() + e.rate_bits()))
}

/// Filters in force during one slot of a time-varying schedule. On even slots
/// the source sends with `T_e` and only `amps[2]` (relay 3) forwards; on odd
/// slots the source sends with `T_o` and `amps[0]`, `amps[1]` forward. The
/// idle entries are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotFilters {
    pub precoder: CMatrix,
    pub amps: [CMatrix; 3],
}

/// Rate in bits delivered to the destination at slot `n >= 1`: data sent by
/// the source at `n - 1` and forwarded at `n`.
pub fn delivered_rate(
    channels: &[ChannelSet],
    filters: &[SlotFilters],
    n: usize,
    cfg: &NodeConfig,
) -> Result<f64> {
    delivered_eval(channels, filters, n, cfg).map(|h| h.rate_bits())
}

pub fn delivered_eval(
    channels: &[ChannelSet],
    filters: &[SlotFilters],
    n: usize,
    cfg: &NodeConfig,
) -> Result<HopEval> {
    if n == 0 || n >= channels.len() || n >= filters.len() {
        return Err(Error::dim(
            "system_model::delivered_rate",
            format!("slot {n} has no delivery in a schedule of {} slots", filters.len()),
        ));
    }
    let route = if n % 2 == 0 { Route::Relay3 } else { Route::Relays12 };
    let branches = route_branches(&filters[n].amps, &channels[n - 1], &channels[n], route, cfg);
    evaluate_hop(&filters[n - 1].precoder, &branches, cfg.p_s, cfg.p_r, cfg.sigma_dest)
}

/// Leakage caused at slot `n` by the forwarding relays into the receiving
/// relays, measured through the receivers' amplifiers of slot `n + 1`.
pub fn schedule_residual(channels: &[ChannelSet], filters: &[SlotFilters], n: usize) -> f64 {
    let (now, next, ch) = (&filters[n].amps, &filters[n + 1].amps, &channels[n]);
    if n % 2 == 0 {
        leakage(&next[0], &ch.h13, &now[2]).max(leakage(&next[1], &ch.h23, &now[2]))
    } else {
        leakage(&next[2], &ch.h31, &now[0]).max(leakage(&next[2], &ch.h32, &now[1]))
    }
}

/// Conventional half-duplex AF through relay `relay` alone: full-rank source
/// transmission with `T = I_M`, relay amplifier `F = I` scaled to power, and
/// half the resulting rate since the exchange occupies two slots.
pub fn conventional_af_rate(
    back: &ChannelSet,
    fwd: &ChannelSet,
    relay: usize,
    cfg: &NodeConfig,
) -> Result<f64> {
    let m = cfg.m;
    let t = identity(m);
    let f = identity(m);
    let branch = Branch {
        backward: &back.backward[relay],
        amp: &f,
        forward: &fwd.forward[relay],
        sigma2: cfg.sigma_relay[relay],
    };
    let hop = evaluate_hop(&t, &[branch], cfg.p_s, cfg.p_r, cfg.sigma_dest)?;
    Ok(0.5 * hop.rate_bits())
}

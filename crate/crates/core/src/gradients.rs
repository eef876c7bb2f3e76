//! Closed-form conjugate (Wirtinger) gradients of every design objective and
//! a finite-difference oracle to check them.
//!
//! Convention: for a real objective `f` of a complex matrix `Z`, the
//! gradient `g = df/dZ^*` satisfies `f(Z + t D) - f(Z) ~ 2 t Re tr(g^H D)`.
//! For `f = ||Z||_F^2` this gives `g = Z`.
//!
//! Two kernels carry all the calculus:
//!
//! * [`kernel_fz`] differentiates `ln det(I + p_t H^H Sigma^-1 H)` of an
//!   amplify-and-forward hop with respect to each relay amplifier and the
//!   source precoder, including the coupling through the power normalizers.
//! * [`kernel_gz`] differentiates `ln det(I + sum_i (p_t / s_i) Y^H Hb_i^H
//!   P(X_i) Hb_i Y)`, the rate a relay collects behind a receive combiner
//!   `X_i`, with respect to the combiners and the precoder `Y`.
//!
//! Each objective then chains these through its own parameterization.

use std::f64::consts::LN_2;

use crate::channel::ChannelSet;
use crate::error::Result;
use crate::ia::{
    build_even, build_odd, build_slow_cached, lower_half_columns, InterRelayInverses, PerSlotParamsEven, PerSlotParamsOdd, SlowFadingParams,
    ToEven, ToOdd,
};
use crate::linalg::{c, identity, identity_plus_gram, inv_general, scale, whiten, CMatrix, Complement};
use crate::system::{evaluate_hop, Branch, HopEval, NodeConfig};

/// Named gradient components, in the variable order of the owning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    entries: Vec<(&'static str, CMatrix)>,
}

impl GradientSet {
    pub fn new(entries: Vec<(&'static str, CMatrix)>) -> Self {
        GradientSet { entries }
    }

    pub fn get(&self, name: &str) -> Option<&CMatrix> {
        self.entries.iter().find(|(n, _)| *n == name).map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &CMatrix)> {
        self.entries.iter().map(|(n, g)| (*n, g))
    }

    pub fn into_matrices(self) -> Vec<CMatrix> {
        self.entries.into_iter().map(|(_, g)| g).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Output of [`kernel_fz`]: the hop evaluation plus `Omega_i` and `Psi_i`
/// per branch, with `d f_z / d X_i^* = p_t Psi_i` (nats).
#[derive(Debug, Clone)]
pub struct FzKernel {
    pub hop: HopEval,
    pub omega: Vec<CMatrix>,
    pub psi: Vec<CMatrix>,
}

impl FzKernel {
    /// `d f_z / d X_i^*` in nats.
    pub fn amp_grad(&self, i: usize) -> CMatrix {
        scale(&self.psi[i], self.hop.p_t)
    }
}

/// Gradient kernel of `f_z = ln det(I + p_t H^H Sigma^-1 H)` with respect to
/// each relay amplifier `X_i` of the hop.
///
/// `Omega_i = Hf_i^H Sigma^-1 H E ((Hb_i T)^H - s_i sqrt(p_i) H^H Sigma^-1 Hf_i X_i)`
/// `Psi_i = sqrt(p_i) (Omega_i - (p_i / P_R) Re tr(X_i^H Omega_i) X_i Sigma_i)`
pub fn kernel_fz(
    t: &CMatrix,
    branches: &[Branch<'_>],
    p_s: f64,
    p_r: f64,
    sigma_dest: f64,
) -> Result<FzKernel> {
    let hop = evaluate_hop(t, branches, p_s, p_r, sigma_dest)?;
    let shared = &hop.noise_cov_inv * &hop.h_eff * &hop.mse;
    let h_sinv = hop.h_eff.adjoint() * &hop.noise_cov_inv;
    let mut omega = Vec::with_capacity(branches.len());
    let mut psi = Vec::with_capacity(branches.len());
    for (k, b) in branches.iter().enumerate() {
        let p = hop.p_relay[k];
        let sq = p.sqrt();
        let hbt = b.backward * t;
        let inner = hbt.adjoint() - scale(&(&h_sinv * b.forward * b.amp), b.sigma2 * sq);
        let om = b.forward.adjoint() * &shared * inner;
        let coupling = (b.amp.adjoint() * &om).trace().re * p / p_r;
        let ps = scale(&(&om - scale(&(b.amp * &hop.relay_cov[k]), coupling)), sq);
        omega.push(om);
        psi.push(ps);
    }
    Ok(FzKernel { hop, omega, psi })
}

/// `d f_z / d T^*` (nats) for the hop evaluated by `kernel`, including the
/// dependence of `p_t` and of every relay normalizer on the precoder.
pub fn precoder_grad_fz(t: &CMatrix, branches: &[Branch<'_>], kernel: &FzKernel, p_s: f64, p_r: f64) -> CMatrix {
    let hop = &kernel.hop;
    let pt = hop.p_t;
    let m = t.nrows();
    let sinv_h_e = &hop.noise_cov_inv * &hop.h_eff * &hop.mse;
    let mut a = CMatrix::zeros(m, m);
    for (k, b) in branches.iter().enumerate() {
        a += scale(&(b.forward * b.amp * b.backward), hop.p_relay[k].sqrt());
    }
    let trace_term = (hop.h_eff.adjoint() * &sinv_h_e).trace().re;
    let mut g = scale(&(a.adjoint() * &sinv_h_e), pt) - scale(t, pt * pt / p_s * trace_term);
    for (k, b) in branches.iter().enumerate() {
        let p = hop.p_relay[k];
        if p == 0.0 {
            continue;
        }
        let fh = b.amp * b.backward;
        let phi = fh.adjoint() * &fh;
        let tr_phi = (t.adjoint() * &phi * t).trace().re;
        let weight = pt * pt * p * p.sqrt() / p_r * (b.amp.adjoint() * &kernel.omega[k]).trace().re;
        let dir = (phi - scale(&identity(m), pt / p_s * tr_phi)) * t;
        g -= scale(&dir, weight);
    }
    g
}

/// One receive-combiner term of the `g_z` objective.
#[derive(Debug, Clone, Copy)]
pub struct GzTerm<'a> {
    pub backward: &'a CMatrix,
    pub combiner: &'a CMatrix,
    pub sigma2: f64,
}

/// Value and gradients of
/// `g_z = ln det(I + sum_i (p_t / s_i) Y^H Hb_i^H P(X_i) Hb_i Y)` with
/// `p_t = P_S / tr(Y Y^H)` and `P(X)` the orthogonal projector onto span(X).
#[derive(Debug, Clone)]
pub struct GzKernel {
    pub value_nats: f64,
    pub p_t: f64,
    pub mse: CMatrix,
    /// `Upsilon_i = Hb_i Y E Y^H Hb_i^H`
    pub upsilon: Vec<CMatrix>,
    /// `d g_z / d X_i^* = (p_t / s_i) X_i^perp Upsilon_i X_i^dagger`
    pub grad_x: Vec<CMatrix>,
    /// `d g_z / d Y^*`
    pub grad_y: CMatrix,
}

pub fn kernel_gz(y: &CMatrix, terms: &[GzTerm<'_>], p_s: f64) -> Result<GzKernel> {
    const OP: &str = "gradients::kernel_gz";
    let d = y.ncols();
    let mut comps = Vec::with_capacity(terms.len());
    for term in terms {
        comps.push(Complement::of(term.combiner)?);
    }
    let energy = y.norm_squared();
    if energy == 0.0 {
        // silent source: nothing is collected and the objective is flat
        return Ok(GzKernel {
            value_nats: 0.0,
            p_t: 0.0,
            mse: identity(d),
            upsilon: terms.iter().map(|t| CMatrix::zeros(t.backward.nrows(), t.backward.nrows())).collect(),
            grad_x: terms.iter().map(|t| CMatrix::zeros(t.combiner.nrows(), t.combiner.ncols())).collect(),
            grad_y: CMatrix::zeros(y.nrows(), d),
        });
    }
    let pt = p_s / energy;
    let projectors: Vec<CMatrix> = comps
        .iter()
        .map(|c| identity(c.perp.nrows()) - &c.perp)
        .collect();
    let mut q = CMatrix::zeros(y.nrows(), y.nrows());
    for (term, proj) in terms.iter().zip(&projectors) {
        q += scale(&(term.backward.adjoint() * proj * term.backward), 1.0 / term.sigma2);
    }
    // I + p_t Y^H Q Y as I + A^H A with A stacking the whitened projections
    // X_i^H Hb_i Y, which keeps it positive definite at extreme SNR
    let rows: usize = terms.iter().map(|t| t.combiner.ncols()).sum();
    let mut a = CMatrix::zeros(rows, d);
    let mut at = 0;
    for term in terms {
        let x = term.combiner;
        let block = whiten(&(x.adjoint() * x), &(x.adjoint() * term.backward * y), OP)?;
        a.view_mut((at, 0), (x.ncols(), d))
            .copy_from(&scale(&block, (pt / term.sigma2).sqrt()));
        at += x.ncols();
    }
    let info = identity_plus_gram(&a, OP)?;
    let (value_nats, mse) = (info.logdet, info.inverse);
    let mut upsilon = Vec::with_capacity(terms.len());
    let mut grad_x = Vec::with_capacity(terms.len());
    let mut trace_sum = 0.0;
    for ((term, proj), comp) in terms.iter().zip(&projectors).zip(&comps) {
        let hy = term.backward * y;
        let ups = &hy * &mse * hy.adjoint();
        trace_sum += (&ups * proj).trace().re / term.sigma2;
        grad_x.push(scale(&(&comp.perp * &ups * &comp.dagger), pt / term.sigma2));
        upsilon.push(ups);
    }
    let grad_y = scale(&(&q * y * &mse), pt) - scale(y, pt * pt / p_s * trace_sum);
    Ok(GzKernel {
        value_nats,
        p_t: pt,
        mse,
        upsilon,
        grad_x,
        grad_y,
    })
}

/// `d/dU^*` of `X = L U^perp R` given `G = d/dX^*`:
/// `-U^perp (R G^H L + L^H G R^H) U^dagger`.
fn complement_chain(comp: &Complement, l: &CMatrix, r: &CMatrix, g: &CMatrix) -> CMatrix {
    -(&comp.perp * (r * g.adjoint() * l + l.adjoint() * g * r.adjoint()) * &comp.dagger)
}

fn to_bits_half(z: CMatrix) -> CMatrix {
    scale(&z, 0.5 / LN_2)
}

/// Slow fading: `f_1 = (I_o + I_e) / 2` over all seven variables.
#[derive(Debug, Clone)]
pub struct SlowProblem {
    pub ch: ChannelSet,
    pub cfg: NodeConfig,
    inv: InterRelayInverses,
}

impl SlowProblem {
    pub fn new(ch: &ChannelSet, cfg: &NodeConfig) -> Result<Self> {
        Ok(SlowProblem {
            ch: ch.clone(),
            cfg: cfg.clone(),
            inv: InterRelayInverses::new(ch)?,
        })
    }

    fn branches<'a>(&'a self, amps: &'a [CMatrix; 3], relays: &[usize]) -> Vec<Branch<'a>> {
        relays
            .iter()
            .map(|&i| Branch {
                backward: &self.ch.backward[i],
                amp: &amps[i],
                forward: &self.ch.forward[i],
                sigma2: self.cfg.sigma_relay[i],
            })
            .collect()
    }

    pub fn bank(&self, params: &SlowFadingParams) -> Result<crate::system::FilterBank> {
        build_slow_cached(params, &self.inv)
    }

    /// `f_1` in bits.
    pub fn objective(&self, params: &SlowFadingParams) -> Result<f64> {
        let bank = self.bank(params)?;
        let c = &self.cfg;
        let e = evaluate_hop(&bank.t_e, &self.branches(&bank.amps, &[0, 1]), c.p_s, c.p_r, c.sigma_dest)?;
        let o = evaluate_hop(&bank.t_o, &self.branches(&bank.amps, &[2]), c.p_s, c.p_r, c.sigma_dest)?;
        Ok(0.5 * (e.rate_bits() + o.rate_bits()))
    }

    /// Gradients of `f_1` (bits) over `U_b, U_w, G_1, G_2, G_3, T_e, T_o`.
    pub fn gradient(&self, params: &SlowFadingParams) -> Result<GradientSet> {
        let bank = self.bank(params)?;
        let c = &self.cfg;
        let be = self.branches(&bank.amps, &[0, 1]);
        let bo = self.branches(&bank.amps, &[2]);
        let ke = kernel_fz(&bank.t_e, &be, c.p_s, c.p_r, c.sigma_dest)?;
        let ko = kernel_fz(&bank.t_o, &bo, c.p_s, c.p_r, c.sigma_dest)?;
        let k = [ke.amp_grad(0), ke.amp_grad(1), ko.amp_grad(0)];
        let ub = Complement::of(&params.u_b)?;
        let uw = Complement::of(&params.u_w)?;
        let (h3i, hi3) = (&self.inv.to_r3_inv, &self.inv.from_r3_inv);

        let g_i = |i: usize| params.u_b.adjoint() * h3i[i].adjoint() * &k[i] * hi3[i].adjoint() * &params.u_w;
        let g_3 = &uw.perp * &k[2] * &ub.perp;

        let mut u_b = complement_chain(&ub, &(&uw.perp * &params.g_3), &identity(ub.perp.nrows()), &k[2]);
        let mut u_w = complement_chain(&uw, &identity(uw.perp.nrows()), &(&params.g_3 * &ub.perp), &k[2]);
        for i in 0..2 {
            u_b += h3i[i].adjoint() * &k[i] * hi3[i].adjoint() * &params.u_w * params.g[i].adjoint();
            u_w += &hi3[i] * k[i].adjoint() * &h3i[i] * &params.u_b * &params.g[i];
        }
        let t_e = precoder_grad_fz(&bank.t_e, &be, &ke, c.p_s, c.p_r);
        let t_o = precoder_grad_fz(&bank.t_o, &bo, &ko, c.p_s, c.p_r);
        Ok(GradientSet::new(
            SlowFadingParams::NAMES
                .iter()
                .copied()
                .zip([u_b, u_w, g_i(0), g_i(1), g_3, t_e, t_o].into_iter().map(to_bits_half))
                .collect(),
        ))
    }
}

/// Even slot `n` of the per-slot design: relay 3 forwards the data the
/// source sent at `n - 1`, while relays 1 and 2 collect the new `T_e`
/// transmission. Objective `f_2 = (I_o + I_c) / 2`, where `I_c` is the rate
/// collected behind the combiners `W_i = H_i3^-H U_w`.
#[derive(Debug, Clone)]
pub struct EvenSlotProblem {
    /// Channels of slot `n - 1`.
    pub ch_prev: ChannelSet,
    /// Channels of slot `n`.
    pub ch: ChannelSet,
    pub prev: ToEven,
    pub cfg: NodeConfig,
    from_r3_inv: [CMatrix; 2],
}

impl EvenSlotProblem {
    pub fn new(ch_prev: &ChannelSet, ch: &ChannelSet, prev: &ToEven, cfg: &NodeConfig) -> Result<Self> {
        const OP: &str = "gradients::EvenSlotProblem";
        Ok(EvenSlotProblem {
            ch_prev: ch_prev.clone(),
            ch: ch.clone(),
            prev: prev.clone(),
            cfg: cfg.clone(),
            from_r3_inv: [inv_general(&ch.h13, OP)?, inv_general(&ch.h23, OP)?],
        })
    }

    fn relay3_branch<'a>(&'a self, f_3: &'a CMatrix) -> [Branch<'a>; 1] {
        [Branch {
            backward: &self.ch_prev.backward[2],
            amp: f_3,
            forward: &self.ch.forward[2],
            sigma2: self.cfg.sigma_relay[2],
        }]
    }

    fn terms<'a>(&'a self, w: &'a [CMatrix; 2]) -> [GzTerm<'a>; 2] {
        [0, 1].map(|i| GzTerm {
            backward: &self.ch.backward[i],
            combiner: &w[i],
            sigma2: self.cfg.sigma_relay[i],
        })
    }

    pub fn objective(&self, params: &PerSlotParamsEven) -> Result<f64> {
        let out = build_even(params, &self.ch, &self.prev)?;
        let c = &self.cfg;
        let o = evaluate_hop(&self.prev.t_o, &self.relay3_branch(&out.f_3), c.p_s, c.p_r, c.sigma_dest)?;
        let g = kernel_gz(&params.t_e, &self.terms(&out.next.w), c.p_s)?;
        Ok(0.5 * (o.rate_nats + g.value_nats) / LN_2)
    }

    /// Gradients of `f_2` (bits) over `U_w, phi_3, T_e`.
    pub fn gradient(&self, params: &PerSlotParamsEven) -> Result<GradientSet> {
        let out = build_even(params, &self.ch, &self.prev)?;
        let c = &self.cfg;
        let ko = kernel_fz(&self.prev.t_o, &self.relay3_branch(&out.f_3), c.p_s, c.p_r, c.sigma_dest)?;
        let kg = kernel_gz(&params.t_e, &self.terms(&out.next.w), c.p_s)?;
        let k3 = ko.amp_grad(0);
        let uw = Complement::of(&params.u_w)?;
        let w_3 = &self.prev.w_3;
        let phi_3 = &uw.perp * &k3 * w_3;
        let mut u_w = complement_chain(&uw, &identity(uw.perp.nrows()), &(&params.phi_3 * w_3.adjoint()), &k3);
        for i in 0..2 {
            u_w += &self.from_r3_inv[i] * &kg.grad_x[i];
        }
        Ok(GradientSet::new(
            PerSlotParamsEven::NAMES
                .iter()
                .copied()
                .zip([u_w, phi_3, kg.grad_y].into_iter().map(to_bits_half))
                .collect(),
        ))
    }
}

/// Odd slot `n` of the per-slot design: relays 1 and 2 forward the data the
/// source sent at `n - 1`, while relay 3 collects the new `T_o` transmission
/// behind `W_3 = U_b^perp psi_3`. Objective `f_3 = (I_e + I_p) / 2`.
#[derive(Debug, Clone)]
pub struct OddSlotProblem {
    pub ch_prev: ChannelSet,
    pub ch: ChannelSet,
    pub prev: ToOdd,
    pub cfg: NodeConfig,
    to_r3_inv: [CMatrix; 2],
}

impl OddSlotProblem {
    pub fn new(ch_prev: &ChannelSet, ch: &ChannelSet, prev: &ToOdd, cfg: &NodeConfig) -> Result<Self> {
        const OP: &str = "gradients::OddSlotProblem";
        Ok(OddSlotProblem {
            ch_prev: ch_prev.clone(),
            ch: ch.clone(),
            prev: prev.clone(),
            cfg: cfg.clone(),
            to_r3_inv: [inv_general(&ch.h31, OP)?, inv_general(&ch.h32, OP)?],
        })
    }

    fn branches<'a>(&'a self, f: &'a [CMatrix; 2]) -> [Branch<'a>; 2] {
        [0, 1].map(|i| Branch {
            backward: &self.ch_prev.backward[i],
            amp: &f[i],
            forward: &self.ch.forward[i],
            sigma2: self.cfg.sigma_relay[i],
        })
    }

    fn term<'a>(&'a self, w_3: &'a CMatrix) -> [GzTerm<'a>; 1] {
        [GzTerm {
            backward: &self.ch.backward[2],
            combiner: w_3,
            sigma2: self.cfg.sigma_relay[2],
        }]
    }

    pub fn objective(&self, params: &PerSlotParamsOdd) -> Result<f64> {
        let out = build_odd(params, &self.ch, &self.prev)?;
        let c = &self.cfg;
        let e = evaluate_hop(&self.prev.t_e, &self.branches(&out.f), c.p_s, c.p_r, c.sigma_dest)?;
        let g = kernel_gz(&params.t_o, &self.term(&out.next.w_3), c.p_s)?;
        Ok(0.5 * (e.rate_nats + g.value_nats) / LN_2)
    }

    /// Gradients of `f_3` (bits) over `U_b, phi_1, phi_2, T_o`.
    pub fn gradient(&self, params: &PerSlotParamsOdd) -> Result<GradientSet> {
        let out = build_odd(params, &self.ch, &self.prev)?;
        let c = &self.cfg;
        let branches = self.branches(&out.f);
        let ke = kernel_fz(&self.prev.t_e, &branches, c.p_s, c.p_r, c.sigma_dest)?;
        let kg = kernel_gz(&params.t_o, &self.term(&out.next.w_3), c.p_s)?;
        let ub = Complement::of(&params.u_b)?;
        let psi_3 = lower_half_columns(ub.perp.nrows());
        let mut u_b = complement_chain(&ub, &identity(ub.perp.nrows()), &psi_3, &kg.grad_x[0]);
        let mut phi = Vec::with_capacity(2);
        for i in 0..2 {
            let k = ke.amp_grad(i);
            let left = self.to_r3_inv[i].adjoint() * &k * &self.prev.w[i];
            u_b += &left * params.phi[i].adjoint();
            phi.push(params.u_b.adjoint() * left);
        }
        let [phi_1, phi_2]: [CMatrix; 2] = phi.try_into().expect("two relays");
        Ok(GradientSet::new(
            PerSlotParamsOdd::NAMES
                .iter()
                .copied()
                .zip([u_b, phi_1, phi_2, kg.grad_y].into_iter().map(to_bits_half))
                .collect(),
        ))
    }
}

/// Relay 3's problem on an even slot `e` of the distributed design:
/// `f_4 = (I_o + I_p) / 2` over `B_3`, where `I_o` is the rate relay 3
/// delivers now with `F_3 = B_3 W_3^H` and `I_p` the rate it will collect on
/// slot `e + 1` behind the combiner `conj(B_3)`.
#[derive(Debug, Clone)]
pub struct RelayThreeProblem {
    /// Combiner in force now, `conj(B_3)` of the previous pair.
    pub w_3: CMatrix,
    /// Precoder and relay-3 backward channel of slot `e - 1`.
    pub t_o_prev: CMatrix,
    pub h_3s_prev: CMatrix,
    /// Relay-3 forward channel of slot `e`.
    pub h_d3: CMatrix,
    /// Precoder and relay-3 backward channel of slot `e + 1`.
    pub t_o_next: CMatrix,
    pub h_3s_next: CMatrix,
    pub cfg: NodeConfig,
}

impl RelayThreeProblem {
    fn branch<'a>(&'a self, f_3: &'a CMatrix) -> [Branch<'a>; 1] {
        [Branch {
            backward: &self.h_3s_prev,
            amp: f_3,
            forward: &self.h_d3,
            sigma2: self.cfg.sigma_relay[2],
        }]
    }

    fn term<'a>(&'a self, x: &'a CMatrix) -> [GzTerm<'a>; 1] {
        [GzTerm {
            backward: &self.h_3s_next,
            combiner: x,
            sigma2: self.cfg.sigma_relay[2],
        }]
    }

    pub fn objective(&self, b_3: &CMatrix) -> Result<f64> {
        let c = &self.cfg;
        let f_3 = b_3 * self.w_3.adjoint();
        let o = evaluate_hop(&self.t_o_prev, &self.branch(&f_3), c.p_s, c.p_r, c.sigma_dest)?;
        let x = b_3.conjugate();
        let g = kernel_gz(&self.t_o_next, &self.term(&x), c.p_s)?;
        Ok(0.5 * (o.rate_nats + g.value_nats) / LN_2)
    }

    /// `d f_4 / d B_3^*` in bits.
    pub fn gradient(&self, b_3: &CMatrix) -> Result<CMatrix> {
        let c = &self.cfg;
        let f_3 = b_3 * self.w_3.adjoint();
        let ko = kernel_fz(&self.t_o_prev, &self.branch(&f_3), c.p_s, c.p_r, c.sigma_dest)?;
        let x = b_3.conjugate();
        let kg = kernel_gz(&self.t_o_next, &self.term(&x), c.p_s)?;
        Ok(to_bits_half(ko.amp_grad(0) * &self.w_3 + kg.grad_x[0].conjugate()))
    }
}

/// What one of relays 1, 2 knows on an odd slot of the distributed design:
/// its own backward and forward channels, the source precoder, and its
/// receive basis `Ubar_i`, already orthogonal to the interference it sees
/// from relay 3. Nothing about the other relays is reachable from here.
#[derive(Debug, Clone)]
pub struct RelayLocalProblem {
    pub h_s: CMatrix,
    pub h_d: CMatrix,
    pub t_e: CMatrix,
    pub u_bar: CMatrix,
    pub sigma2: f64,
    pub p_s: f64,
    pub p_r: f64,
    pub sigma_dest: f64,
}

impl RelayLocalProblem {
    pub fn amplifier(&self, xi: &CMatrix) -> CMatrix {
        self.u_bar.conjugate() * xi * self.u_bar.adjoint()
    }

    fn kernel(&self, f: &CMatrix) -> Result<FzKernel> {
        let b = [Branch {
            backward: &self.h_s,
            amp: f,
            forward: &self.h_d,
            sigma2: self.sigma2,
        }];
        kernel_fz(&self.t_e, &b, self.p_s, self.p_r, self.sigma_dest)
    }

    /// `f_ei = log2 det E_ei^-1`, the single-relay rate.
    pub fn objective(&self, xi: &CMatrix) -> Result<f64> {
        let f = self.amplifier(xi);
        let b = [Branch {
            backward: &self.h_s,
            amp: &f,
            forward: &self.h_d,
            sigma2: self.sigma2,
        }];
        Ok(evaluate_hop(&self.t_e, &b, self.p_s, self.p_r, self.sigma_dest)?.rate_bits())
    }

    /// `d f_ei / d xi^* = Ubar^T (p_e Psi) Ubar / ln 2`.
    pub fn gradient(&self, xi: &CMatrix) -> Result<CMatrix> {
        let k = self.kernel(&self.amplifier(xi))?;
        Ok(scale(&(self.u_bar.transpose() * k.amp_grad(0) * &self.u_bar), 1.0 / LN_2))
    }
}

/// Default finite-difference step for a variable `z`.
pub fn default_fd_step(z: &CMatrix) -> f64 {
    1e-5 * (1.0 + z.norm() / z.len() as f64)
}

/// Step used by [`gradient_check_suite`]. A hundred times the default: at high SNR
/// the rounding noise of the objective divided by the default step is
/// comparable to the smaller gradient components. The suite removes the
/// larger truncation error with [`fd_gradient_richardson`].
pub fn suite_fd_step(z: &CMatrix) -> f64 {
    100.0 * default_fd_step(z)
}

/// Richardson-extrapolated central differences, `(4 D(h/2) - D(h)) / 3`,
/// accurate to fourth order in the step.
pub fn fd_gradient_richardson<F>(f: F, z: &CMatrix, step: f64) -> CMatrix
where
    F: Fn(&CMatrix) -> f64,
{
    let coarse = fd_gradient(&f, z, Some(step));
    let fine = fd_gradient(&f, z, Some(0.5 * step));
    (fine * c(4.0, 0.0) - coarse) * c(1.0 / 3.0, 0.0)
}

/// Central-difference estimate of `df/dZ^* = (df/dRe Z + i df/dIm Z) / 2`,
/// entry by entry.
pub fn fd_gradient<F>(f: F, z: &CMatrix, step: Option<f64>) -> CMatrix
where
    F: Fn(&CMatrix) -> f64,
{
    let h = step.unwrap_or_else(|| default_fd_step(z));
    let mut out = CMatrix::zeros(z.nrows(), z.ncols());
    let mut probe = z.clone();
    for idx in 0..z.len() {
        let orig = probe[idx];
        let mut diff = |delta| {
            probe[idx] = orig + delta;
            let up = f(&probe);
            probe[idx] = orig - delta;
            let down = f(&probe);
            probe[idx] = orig;
            (up - down) / (2.0 * h)
        };
        let dx = diff(c(h, 0.0));
        let dy = diff(c(0.0, h));
        out[idx] = c(0.5 * dx, 0.5 * dy);
    }
    out
}

/// Absolute scale (bits per unit of the variable) under which gradient
/// differences are not resolved. Some components vanish exactly because the
/// rate ignores the scale and phase of an amplifier (e.g. `G_3`, `phi_3`,
/// `xi_i` at `M = 2`), and others can be arbitrarily small at particular
/// points; there the finite-difference rounding noise, around `1e-10`, would
/// otherwise be compared against itself.
pub const GRADIENT_FLOOR: f64 = 1e-4;

/// `||a - b||_F / max(||a||_F, ||b||_F, GRADIENT_FLOOR)`.
pub fn relative_error(analytic: &CMatrix, reference: &CMatrix) -> f64 {
    let scale = analytic.norm().max(reference.norm()).max(GRADIENT_FLOOR);
    (analytic - reference).norm() / scale
}

/// Wraps a fallible objective for [`fd_gradient`]; failures become NaN so
/// that any comparison against them fails loudly.
pub fn or_nan(r: Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

/// Largest relative error of one gradient component over a batch of points.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub component: String,
    pub max_rel_error: f64,
    pub points: usize,
}

fn gaussian(rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng) -> CMatrix {
    crate::linalg::complex_gaussian(rows, cols, rng)
}

/// Compares every analytic gradient against [`fd_gradient`] at `points`
/// random points (random channels and random variables) for one antenna
/// count and SNR. Component names are `objective:variable`.
pub fn gradient_check_suite(
    m: usize,
    snr_db: f64,
    points: usize,
    stream: &crate::rng::RngStream,
) -> Result<Vec<GradcheckRow>> {
    use crate::channel::{draw_channel_sequence, FadingScenario};
    use crate::system::PowerConvention;

    let cfg = NodeConfig::from_snr(m, snr_db, PowerConvention::Equal);
    let h = m / 2;
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut record = |name: String, err: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(entry) => entry.1 = entry.1.max(if err.is_nan() { f64::INFINITY } else { err }),
        None => worst.push((name, if err.is_nan() { f64::INFINITY } else { err })),
    };

    for point in 0..points {
        let trial = stream.fork(point as u64);
        let seq = draw_channel_sequence(FadingScenario::BlockPerSlot, m, 3, &trial)?;
        let mut rng = trial.fork(1).generator();

        // hop kernels on their own
        {
            let t = gaussian(m, m, &mut rng);
            let x = [gaussian(m, m, &mut rng), gaussian(m, m, &mut rng)];
            let hop_value = |x0: &CMatrix, t: &CMatrix| -> Result<f64> {
                let xs = [x0.clone(), x[1].clone()];
                let b: Vec<Branch> = (0..2)
                    .map(|i| Branch {
                        backward: &seq[0].backward[i],
                        amp: &xs[i],
                        forward: &seq[1].forward[i],
                        sigma2: cfg.sigma_relay[i],
                    })
                    .collect();
                Ok(evaluate_hop(t, &b, cfg.p_s, cfg.p_r, cfg.sigma_dest)?.rate_nats)
            };
            let b: Vec<Branch> = (0..2)
                .map(|i| Branch {
                    backward: &seq[0].backward[i],
                    amp: &x[i],
                    forward: &seq[1].forward[i],
                    sigma2: cfg.sigma_relay[i],
                })
                .collect();
            let k = kernel_fz(&t, &b, cfg.p_s, cfg.p_r, cfg.sigma_dest)?;
            let fd = fd_gradient_richardson(|z| or_nan(hop_value(z, &t)), &x[0], suite_fd_step(&x[0]));
            record("kernel_fz:X".into(), relative_error(&k.amp_grad(0), &fd));
            let fd = fd_gradient_richardson(|z| or_nan(hop_value(&x[0], z)), &t, suite_fd_step(&t));
            let g = precoder_grad_fz(&t, &b, &k, cfg.p_s, cfg.p_r);
            record("kernel_fz:T".into(), relative_error(&g, &fd));

            let y = gaussian(m, h, &mut rng);
            let xs = [gaussian(m, h, &mut rng), gaussian(m, h, &mut rng)];
            let gz_value = |x0: &CMatrix, y: &CMatrix| -> Result<f64> {
                let terms = [
                    GzTerm { backward: &seq[0].backward[0], combiner: x0, sigma2: cfg.sigma_relay[0] },
                    GzTerm { backward: &seq[0].backward[1], combiner: &xs[1], sigma2: cfg.sigma_relay[1] },
                ];
                Ok(kernel_gz(y, &terms, cfg.p_s)?.value_nats)
            };
            let terms = [
                GzTerm { backward: &seq[0].backward[0], combiner: &xs[0], sigma2: cfg.sigma_relay[0] },
                GzTerm { backward: &seq[0].backward[1], combiner: &xs[1], sigma2: cfg.sigma_relay[1] },
            ];
            let kg = kernel_gz(&y, &terms, cfg.p_s)?;
            let fd = fd_gradient_richardson(|z| or_nan(gz_value(z, &y)), &xs[0], suite_fd_step(&xs[0]));
            record("kernel_gz:X".into(), relative_error(&kg.grad_x[0], &fd));
            let fd = fd_gradient_richardson(|z| or_nan(gz_value(&xs[0], z)), &y, suite_fd_step(&y));
            record("kernel_gz:Y".into(), relative_error(&kg.grad_y, &fd));
        }

        // slow fading
        {
            let problem = SlowProblem::new(&seq[0], &cfg)?;
            let params = SlowFadingParams {
                u_b: gaussian(m, h, &mut rng),
                u_w: gaussian(m, h, &mut rng),
                g: [gaussian(h, h, &mut rng), gaussian(h, h, &mut rng)],
                g_3: gaussian(m, m, &mut rng),
                t_e: gaussian(m, m, &mut rng),
                t_o: gaussian(m, h, &mut rng),
            };
            let vars = params.to_vec();
            let grads = problem.gradient(&params)?;
            for (j, (name, g)) in grads.iter().enumerate() {
                let fd = fd_gradient_richardson(
                    |z| {
                        let mut v = vars.clone();
                        v[j] = z.clone();
                        or_nan(problem.objective(&SlowFadingParams::from_slice(&v)))
                    },
                    &vars[j],
                    suite_fd_step(&vars[j]),
                );
                record(format!("f1:{name}"), relative_error(g, &fd));
            }
        }

        // per-slot even and odd
        {
            let prev = ToEven { t_o: gaussian(m, h, &mut rng), w_3: gaussian(m, h, &mut rng) };
            let problem = EvenSlotProblem::new(&seq[1], &seq[2], &prev, &cfg)?;
            let params = PerSlotParamsEven {
                u_w: gaussian(m, h, &mut rng),
                phi_3: gaussian(m, h, &mut rng),
                t_e: gaussian(m, m, &mut rng),
            };
            let vars = params.to_vec();
            for (j, (name, g)) in problem.gradient(&params)?.iter().enumerate() {
                let fd = fd_gradient_richardson(
                    |z| {
                        let mut v = vars.clone();
                        v[j] = z.clone();
                        or_nan(problem.objective(&PerSlotParamsEven::from_slice(&v)))
                    },
                    &vars[j],
                    suite_fd_step(&vars[j]),
                );
                record(format!("f2:{name}"), relative_error(g, &fd));
            }

            let prev = ToOdd { t_e: gaussian(m, m, &mut rng), w: [gaussian(m, h, &mut rng), gaussian(m, h, &mut rng)] };
            let problem = OddSlotProblem::new(&seq[0], &seq[1], &prev, &cfg)?;
            let params = PerSlotParamsOdd {
                u_b: gaussian(m, h, &mut rng),
                phi: [gaussian(h, h, &mut rng), gaussian(h, h, &mut rng)],
                t_o: gaussian(m, h, &mut rng),
            };
            let vars = params.to_vec();
            for (j, (name, g)) in problem.gradient(&params)?.iter().enumerate() {
                let fd = fd_gradient_richardson(
                    |z| {
                        let mut v = vars.clone();
                        v[j] = z.clone();
                        or_nan(problem.objective(&PerSlotParamsOdd::from_slice(&v)))
                    },
                    &vars[j],
                    suite_fd_step(&vars[j]),
                );
                record(format!("f3:{name}"), relative_error(g, &fd));
            }
        }

        // distributed
        {
            let problem = RelayThreeProblem {
                w_3: gaussian(m, h, &mut rng),
                t_o_prev: gaussian(m, h, &mut rng),
                h_3s_prev: seq[0].backward[2].clone(),
                h_d3: seq[1].forward[2].clone(),
                t_o_next: gaussian(m, h, &mut rng),
                h_3s_next: seq[2].backward[2].clone(),
                cfg: cfg.clone(),
            };
            let b_3 = gaussian(m, h, &mut rng);
            let fd = fd_gradient_richardson(|z| or_nan(problem.objective(z)), &b_3, suite_fd_step(&b_3));
            record("f4:B_3".into(), relative_error(&problem.gradient(&b_3)?, &fd));

            let u_bar = crate::linalg::random_orthonormal(m, h, &mut rng);
            let local = RelayLocalProblem {
                h_s: seq[0].backward[0].clone(),
                h_d: seq[1].forward[0].clone(),
                t_e: gaussian(m, m, &mut rng),
                u_bar,
                sigma2: cfg.sigma_relay[0],
                p_s: cfg.p_s,
                p_r: cfg.p_r,
                sigma_dest: cfg.sigma_dest,
            };
            let xi = gaussian(h, h, &mut rng);
            let fd = fd_gradient_richardson(|z| or_nan(local.objective(z)), &xi, suite_fd_step(&xi));
            record("fei:xi".into(), relative_error(&local.gradient(&xi)?, &fd));
        }
    }
    Ok(worst
        .into_iter()
        .map(|(component, max_rel_error)| GradcheckRow { component, max_rel_error, points })
        .collect())
}

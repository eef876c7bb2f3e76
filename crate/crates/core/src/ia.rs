//! Parameterizations that map optimization variables to relay amplifiers
//! cancelling inter-relay interference by construction.

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{
    identity, identity_columns, inv_general, orthonormal_null_basis, principal_angles, CMatrix,
    Complement,
};
use crate::system::{leakage, FilterBank};

/// Largest elementwise deviation from `H_3i = H_i3^T` tolerated by the
/// distributed construction.
pub const RECIPROCITY_TOL: f64 = 1e-12;

/// Slow-fading variables. `G_3` is a free `M x M` matrix sandwiched between
/// the two complement projectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowFadingParams {
    pub u_b: CMatrix,
    pub u_w: CMatrix,
    pub g: [CMatrix; 2],
    pub g_3: CMatrix,
    pub t_e: CMatrix,
    pub t_o: CMatrix,
}

impl SlowFadingParams {
    pub const NAMES: [&'static str; 7] = ["U_b", "U_w", "G_1", "G_2", "G_3", "T_e", "T_o"];

    pub fn to_vec(&self) -> Vec<CMatrix> {
        vec![
            self.u_b.clone(),
            self.u_w.clone(),
            self.g[0].clone(),
            self.g[1].clone(),
            self.g_3.clone(),
            self.t_e.clone(),
            self.t_o.clone(),
        ]
    }

    pub fn from_slice(v: &[CMatrix]) -> Self {
        SlowFadingParams {
            u_b: v[0].clone(),
            u_w: v[1].clone(),
            g: [v[2].clone(), v[3].clone()],
            g_3: v[4].clone(),
            t_e: v[5].clone(),
            t_o: v[6].clone(),
        }
    }
}

/// Columns `M/2..M` of `I_M`; the fixed relay-3 receive combiner used by the
/// naive and per-slot designs.
pub fn lower_half_columns(m: usize) -> CMatrix {
    identity_columns(m, m / 2..m)
}

/// Identity-based starting point: `T_e = I`, `T_o = U_b = U_w` = first `M/2`
/// columns of `I`, `G_1 = G_2 = I`, and relay 3 passing the lower half of its
/// coordinates (`G_3 = diag(0, I)`), which keeps `F_3` at rank `M/2`.
pub fn naive_params(m: usize) -> SlowFadingParams {
    let h = m / 2;
    let upper = identity_columns(m, 0..h);
    let lower = lower_half_columns(m);
    SlowFadingParams {
        u_b: upper.clone(),
        u_w: upper.clone(),
        g: [identity(h), identity(h)],
        g_3: &lower * lower.adjoint(),
        t_e: identity(m),
        t_o: upper,
    }
}

/// Inverses of the four relay-to-relay channels of one coherence block.
#[derive(Debug, Clone)]
pub struct InterRelayInverses {
    /// `H_31^-1`, `H_32^-1`
    pub to_r3_inv: [CMatrix; 2],
    /// `H_13^-1`, `H_23^-1`
    pub from_r3_inv: [CMatrix; 2],
}

impl InterRelayInverses {
    pub fn new(ch: &ChannelSet) -> Result<Self> {
        const OP: &str = "ia_parameterization::inter_relay_inverse";
        Ok(InterRelayInverses {
            to_r3_inv: [inv_general(&ch.h31, OP)?, inv_general(&ch.h32, OP)?],
            from_r3_inv: [inv_general(&ch.h13, OP)?, inv_general(&ch.h23, OP)?],
        })
    }
}

fn check_shape(op: &'static str, what: &str, z: &CMatrix, rows: usize, cols: usize) -> Result<()> {
    if z.shape() != (rows, cols) {
        return Err(Error::dim(
            op,
            format!("{what} is {}x{}, expected {rows}x{cols}", z.nrows(), z.ncols()),
        ));
    }
    Ok(())
}

/// `F_i = H_3i^-1 U_b G_i U_w^H H_i3^-1` for relays 1, 2 and
/// `F_3 = U_w^perp G_3 U_b^perp`.
pub fn build_slow(params: &SlowFadingParams, ch: &ChannelSet) -> Result<FilterBank> {
    build_slow_cached(params, &InterRelayInverses::new(ch)?)
}

pub fn build_slow_cached(params: &SlowFadingParams, inv: &InterRelayInverses) -> Result<FilterBank> {
    const OP: &str = "ia_parameterization::build_slow";
    let m = params.t_e.nrows();
    let h = m / 2;
    check_shape(OP, "U_b", &params.u_b, m, h)?;
    check_shape(OP, "U_w", &params.u_w, m, h)?;
    check_shape(OP, "G_3", &params.g_3, m, m)?;
    check_shape(OP, "T_o", &params.t_o, m, h)?;
    for g in &params.g {
        check_shape(OP, "G_i", g, h, h)?;
    }
    let ub = Complement::of(&params.u_b)?;
    let uw = Complement::of(&params.u_w)?;
    let amp = |i: usize| {
        &inv.to_r3_inv[i] * &params.u_b * &params.g[i] * params.u_w.adjoint() * &inv.from_r3_inv[i]
    };
    Ok(FilterBank {
        t_e: params.t_e.clone(),
        t_o: params.t_o.clone(),
        amps: [amp(0), amp(1), &uw.perp * &params.g_3 * &ub.perp],
    })
}

/// Variables of an even slot: relay 3 forwards, relays 1 and 2 receive.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSlotParamsEven {
    pub u_w: CMatrix,
    pub phi_3: CMatrix,
    pub t_e: CMatrix,
}

impl PerSlotParamsEven {
    pub const NAMES: [&'static str; 3] = ["U_w", "phi_3", "T_e"];

    pub fn naive(m: usize) -> Self {
        PerSlotParamsEven {
            u_w: identity_columns(m, 0..m / 2),
            phi_3: lower_half_columns(m),
            t_e: identity(m),
        }
    }

    pub fn to_vec(&self) -> Vec<CMatrix> {
        vec![self.u_w.clone(), self.phi_3.clone(), self.t_e.clone()]
    }

    pub fn from_slice(v: &[CMatrix]) -> Self {
        PerSlotParamsEven {
            u_w: v[0].clone(),
            phi_3: v[1].clone(),
            t_e: v[2].clone(),
        }
    }
}

/// Variables of an odd slot: relays 1 and 2 forward, relay 3 receives.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSlotParamsOdd {
    pub u_b: CMatrix,
    pub phi: [CMatrix; 2],
    pub t_o: CMatrix,
}

impl PerSlotParamsOdd {
    pub const NAMES: [&'static str; 4] = ["U_b", "phi_1", "phi_2", "T_o"];

    pub fn naive(m: usize) -> Self {
        PerSlotParamsOdd {
            u_b: identity_columns(m, 0..m / 2),
            phi: [identity(m / 2), identity(m / 2)],
            t_o: identity_columns(m, 0..m / 2),
        }
    }

    pub fn to_vec(&self) -> Vec<CMatrix> {
        vec![self.u_b.clone(), self.phi[0].clone(), self.phi[1].clone(), self.t_o.clone()]
    }

    pub fn from_slice(v: &[CMatrix]) -> Self {
        PerSlotParamsOdd {
            u_b: v[0].clone(),
            phi: [v[1].clone(), v[2].clone()],
            t_o: v[3].clone(),
        }
    }
}

/// State an odd slot hands to the following even slot: the precoder the
/// source used (its data is delivered by relay 3 next) and relay 3's receive
/// combiner `W_3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToEven {
    pub t_o: CMatrix,
    pub w_3: CMatrix,
}

/// State an even slot hands to the following odd slot: the precoder `T_e` and
/// the receive combiners `W_1`, `W_2` of relays 1 and 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ToOdd {
    pub t_e: CMatrix,
    pub w: [CMatrix; 2],
}

#[derive(Debug, Clone)]
pub struct EvenBuild {
    pub b_3: CMatrix,
    pub f_3: CMatrix,
    pub next: ToOdd,
}

#[derive(Debug, Clone)]
pub struct OddBuild {
    pub b: [CMatrix; 2],
    pub f: [CMatrix; 2],
    pub next: ToEven,
}

/// Even slot: `B_3 = U_w^perp phi_3`, `F_3 = B_3 W_3^H`, and
/// `W_i = H_i3^-H U_w` for the relays receiving now.
pub fn build_even(params: &PerSlotParamsEven, ch: &ChannelSet, prev: &ToEven) -> Result<EvenBuild> {
    const OP: &str = "ia_parameterization::build_even";
    let m = ch.m();
    check_shape(OP, "U_w", &params.u_w, m, m / 2)?;
    check_shape(OP, "phi_3", &params.phi_3, m, m / 2)?;
    check_shape(OP, "T_e", &params.t_e, m, m)?;
    check_shape(OP, "W_3", &prev.w_3, m, m / 2)?;
    let uw = Complement::of(&params.u_w)?;
    let b_3 = &uw.perp * &params.phi_3;
    let f_3 = &b_3 * prev.w_3.adjoint();
    let w = |i: usize| -> Result<CMatrix> {
        Ok(inv_general(ch.from_r3(i), OP)?.adjoint() * &params.u_w)
    };
    Ok(EvenBuild {
        b_3,
        f_3,
        next: ToOdd {
            t_e: params.t_e.clone(),
            w: [w(0)?, w(1)?],
        },
    })
}

/// Odd slot: `B_i = H_3i^-1 U_b phi_i`, `F_i = B_i W_i^H`, and relay 3's
/// combiner `W_3 = U_b^perp psi_3` with `psi_3` fixed to the lower identity
/// columns.
pub fn build_odd(params: &PerSlotParamsOdd, ch: &ChannelSet, prev: &ToOdd) -> Result<OddBuild> {
    const OP: &str = "ia_parameterization::build_odd";
    let m = ch.m();
    check_shape(OP, "U_b", &params.u_b, m, m / 2)?;
    check_shape(OP, "T_o", &params.t_o, m, m / 2)?;
    for i in 0..2 {
        check_shape(OP, "phi_i", &params.phi[i], m / 2, m / 2)?;
        check_shape(OP, "W_i", &prev.w[i], m, m / 2)?;
    }
    let ub = Complement::of(&params.u_b)?;
    let b = |i: usize| -> Result<CMatrix> {
        Ok(inv_general(ch.to_r3(i), OP)? * &params.u_b * &params.phi[i])
    };
    let b = [b(0)?, b(1)?];
    let f = [&b[0] * prev.w[0].adjoint(), &b[1] * prev.w[1].adjoint()];
    Ok(OddBuild {
        b,
        f,
        next: ToEven {
            t_o: params.t_o.clone(),
            w_3: &ub.perp * lower_half_columns(m),
        },
    })
}

/// Variables of the distributed design for one coherence pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedState {
    /// Relay 3 transmit matrix on the even slot.
    pub b_3: CMatrix,
    /// Relay 3 receive combiner on the even slot, `conj(B_3)` of the
    /// previous pair.
    pub w_3: CMatrix,
    /// Orthonormal bases orthogonal to `H_i3 B_3`.
    pub u_bar: [CMatrix; 2],
    pub xi: [CMatrix; 2],
}

/// `Ubar_i` with `Ubar_i^H H_i3 B_3 = 0`.
pub fn relay_null_basis(h_i3: &CMatrix, b_3: &CMatrix) -> Result<CMatrix> {
    orthonormal_null_basis(&(h_i3 * b_3), h_i3.nrows() / 2)
}

/// Amplifiers of the distributed design: `F_i = Ubar_i^* xi_i Ubar_i^H` for
/// relays 1, 2 and `F_3 = B_3 W_3^H`. The channel pair must be reciprocal
/// between the relays.
pub fn build_distributed(state: &DistributedState, ch: &ChannelSet) -> Result<[CMatrix; 3]> {
    const OP: &str = "ia_parameterization::build_distributed";
    let deviation = ch.reciprocity_deviation();
    if !(deviation <= RECIPROCITY_TOL) {
        return Err(Error::ReciprocityViolation { op: OP, deviation });
    }
    let amp = |i: usize| state.u_bar[i].conjugate() * &state.xi[i] * state.u_bar[i].adjoint();
    Ok([amp(0), amp(1), &state.b_3 * state.w_3.adjoint()])
}

/// Principal angles between the interference subspaces `span(H_31 X_1)` and
/// `span(H_32 X_2)` seen by relay 3.
pub fn alignment_angles(ch: &ChannelSet, x1: &CMatrix, x2: &CMatrix) -> Vec<f64> {
    principal_angles(&(&ch.h31 * x1), &(&ch.h32 * x2), ch.m() / 2)
}

/// Leakage of relays 1, 2 forwarding with `f` into relay 3 receiving with
/// combiner `w_3`, i.e. `max_i ||W_3^H H_3i F_i||` normalized.
pub fn leakage_into_r3(ch: &ChannelSet, w_3: &CMatrix, f: &[CMatrix; 2]) -> f64 {
    let w = w_3.adjoint();
    leakage(&w, &ch.h31, &f[0]).max(leakage(&w, &ch.h32, &f[1]))
}

/// Leakage of relay 3 forwarding with `f_3` into relays 1, 2 receiving with
/// combiners `w`.
pub fn leakage_from_r3(ch: &ChannelSet, w: &[CMatrix; 2], f_3: &CMatrix) -> f64 {
    leakage(&w[0].adjoint(), &ch.h13, f_3).max(leakage(&w[1].adjoint(), &ch.h23, f_3))
}

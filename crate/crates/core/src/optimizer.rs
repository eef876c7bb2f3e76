//! Filter design by Armijo gradient ascent.
//!
//! All three procedures share [`block_ascent`]: an outer loop that visits the
//! variables in a fixed order, takes one Armijo step on each with a freshly
//! computed gradient, and stops once a full sweep gains at most `epsilon`
//! bits.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::gradients::{EvenSlotProblem, OddSlotProblem, RelayLocalProblem, RelayThreeProblem, SlowProblem};
use crate::ia::{
    build_even, build_odd, lower_half_columns, naive_params, relay_null_basis, PerSlotParamsEven, PerSlotParamsOdd,
    SlowFadingParams, ToEven,
};
use crate::linalg::{
    c, complex_gaussian, cond_hermitian, identity, identity_columns, random_orthonormal, zeros, CMatrix, COND_LIMIT,
};
use crate::rng::RngStream;
use crate::system::{interference_residual, schedule_residual, FilterBank, NodeConfig, SlotFilters};

/// Residual every emitted bank or schedule must stay under.
pub const VALIDITY_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmijoConfig {
    pub zeta: f64,
    pub nu: f64,
    /// Stop once one outer iteration gains at most this many bits.
    pub epsilon: f64,
    pub max_outer_iters: usize,
    pub max_backtracks: usize,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        ArmijoConfig {
            zeta: 0.2,
            nu: 0.5,
            epsilon: 1e-2,
            max_outer_iters: 100,
            max_backtracks: 40,
        }
    }
}

impl ArmijoConfig {
    /// Range problems, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            out.push(format!("zeta must lie in (0, 1), got {}", self.zeta));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            out.push(format!("nu must lie in (0, 1), got {}", self.nu));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            out.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_outer_iters == 0 {
            out.push("max_outer_iters must be at least 1".into());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ArmijoStep {
    pub z: CMatrix,
    /// Accepted step `nu^m`, or 0 when nothing qualified.
    pub mu: f64,
    pub accepted: bool,
    /// Objective at the returned point.
    pub value: f64,
}

/// One Armijo ascent step from `z` whose objective is `f0`: the largest
/// `nu^m`, `m = 0..=max_backtracks`, with
/// `f(z + nu^m g) >= f0 + zeta nu^m ||g||^2`. Objectives that fail or are
/// not finite at a trial point count as rejections.
pub fn armijo_step_from<F>(objective: F, z: &CMatrix, f0: f64, grad: &CMatrix, cfg: &ArmijoConfig) -> ArmijoStep
where
    F: Fn(&CMatrix) -> Result<f64>,
{
    let g2 = grad.norm_squared();
    let rejected = ArmijoStep {
        z: z.clone(),
        mu: 0.0,
        accepted: false,
        value: f0,
    };
    if !(g2 > 0.0) || !g2.is_finite() {
        return rejected;
    }
    let mut mu = 1.0;
    for _ in 0..=cfg.max_backtracks {
        let trial = z + grad * c(mu, 0.0);
        if let Ok(v) = objective(&trial) {
            if v.is_finite() && v >= f0 + cfg.zeta * mu * g2 {
                return ArmijoStep {
                    z: trial,
                    mu,
                    accepted: true,
                    value: v,
                };
            }
        }
        mu *= cfg.nu;
    }
    rejected
}

/// [`armijo_step_from`] evaluating the starting objective itself.
pub fn armijo_step<F>(objective: F, z: &CMatrix, grad: &CMatrix, cfg: &ArmijoConfig) -> Result<ArmijoStep>
where
    F: Fn(&CMatrix) -> Result<f64>,
{
    let f0 = objective(z)?;
    Ok(armijo_step_from(objective, z, f0, grad, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    BacktrackFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub variables: Vec<String>,
    /// Objective in bits; entry 0 is the starting point, entry `k` the value
    /// after outer iteration `k`.
    pub objective: Vec<f64>,
    /// Accepted step per outer iteration and variable (0 when the variable
    /// did not move).
    pub steps: Vec<Vec<f64>>,
    pub termination: Termination,
}

impl OptimizerTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective.last().expect("trace holds the starting value")
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.objective.windows(2).all(|w| w[1] >= w[0])
    }

    /// CSV with columns `iter,objective_bits,step_<var>...`; row 0 is the
    /// starting point and carries empty step cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,objective_bits");
        for v in &self.variables {
            out.push_str(&format!(",step_{v}"));
        }
        out.push('\n');
        for (k, f) in self.objective.iter().enumerate() {
            out.push_str(&format!("{k},{f:.12e}"));
            for j in 0..self.variables.len() {
                match k.checked_sub(1).and_then(|i| self.steps.get(i)) {
                    Some(row) => out.push_str(&format!(",{:e}", row[j])),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Cyclic Armijo ascent over a list of matrix variables.
///
/// `gradient(vars, k)` returns the gradient for variable `k` at `vars`, and
/// `admissible(k, z)` may veto an accepted step (it is then rolled back). The
/// starting point must evaluate.
pub fn block_ascent<F, G, A>(
    names: &[&str],
    mut vars: Vec<CMatrix>,
    objective: F,
    gradient: G,
    admissible: A,
    cfg: &ArmijoConfig,
) -> Result<(Vec<CMatrix>, OptimizerTrace)>
where
    F: Fn(&[CMatrix]) -> Result<f64>,
    G: Fn(&[CMatrix], usize) -> Result<CMatrix>,
    A: Fn(usize, &CMatrix) -> bool,
{
    let mut current = objective(&vars)?;
    let mut trace = OptimizerTrace {
        variables: names.iter().map(|s| s.to_string()).collect(),
        objective: vec![current],
        steps: Vec::new(),
        termination: Termination::MaxIters,
    };
    for _ in 0..cfg.max_outer_iters {
        let start = current;
        let mut row = vec![0.0; vars.len()];
        for k in 0..vars.len() {
            let g = gradient(&vars, k)?;
            let step = {
                let probe = |z: &CMatrix| {
                    let mut trial = vars.clone();
                    trial[k] = z.clone();
                    objective(&trial)
                };
                armijo_step_from(probe, &vars[k], current, &g, cfg)
            };
            if step.accepted && admissible(k, &step.z) {
                vars[k] = step.z;
                current = step.value;
                row[k] = step.mu;
            }
        }
        let moved = row.iter().any(|&mu| mu > 0.0);
        trace.steps.push(row);
        trace.objective.push(current);
        if !moved {
            trace.termination = Termination::BacktrackFailure;
            break;
        }
        if current - start <= cfg.epsilon {
            trace.termination = Termination::Converged;
            break;
        }
    }
    Ok((vars, trace))
}

/// Basis variables (`U_b`, `U_w`) must stay well conditioned.
fn well_conditioned_basis(u: &CMatrix) -> bool {
    cond_hermitian(&(u.adjoint() * u)) <= COND_LIMIT
}

/// Perturbs `base` by `scale` times complex Gaussian noise.
pub fn perturb(base: &CMatrix, scale: f64, stream: &RngStream) -> CMatrix {
    let mut rng = stream.generator();
    base + complex_gaussian(base.nrows(), base.ncols(), &mut rng) * c(scale, 0.0)
}

fn perturb_all(base: Vec<CMatrix>, scale: f64, stream: &RngStream) -> Vec<CMatrix> {
    base.into_iter()
        .enumerate()
        .map(|(k, z)| perturb(&z, scale, &stream.fork(k as u64)))
        .collect()
}

/// Starting point of an optimization run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitStrategy {
    /// Naive parameters plus `scale` times complex Gaussian noise.
    PerturbedNaive { scale: f64 },
    /// Complex Gaussian entries.
    Random,
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::PerturbedNaive { scale: 0.01 }
    }
}

impl InitStrategy {
    fn apply(&self, naive: Vec<CMatrix>, stream: &RngStream) -> Vec<CMatrix> {
        match *self {
            InitStrategy::PerturbedNaive { scale } => perturb_all(naive, scale, stream),
            InitStrategy::Random => perturb_all(naive.iter().map(|z| zeros(z.nrows(), z.ncols())).collect(), 1.0, stream),
        }
    }

    pub fn slow(&self, m: usize, stream: &RngStream) -> SlowFadingParams {
        SlowFadingParams::from_slice(&self.apply(naive_params(m).to_vec(), stream))
    }

    pub fn even(&self, m: usize, stream: &RngStream) -> PerSlotParamsEven {
        PerSlotParamsEven::from_slice(&self.apply(PerSlotParamsEven::naive(m).to_vec(), stream))
    }

    pub fn odd(&self, m: usize, stream: &RngStream) -> PerSlotParamsOdd {
        PerSlotParamsOdd::from_slice(&self.apply(PerSlotParamsOdd::naive(m).to_vec(), stream))
    }
}

#[derive(Debug, Clone)]
pub struct SlowRun {
    pub params: SlowFadingParams,
    pub bank: FilterBank,
    pub trace: OptimizerTrace,
}

fn check_residual(op: &'static str, residual: f64) -> Result<()> {
    if residual < VALIDITY_RESIDUAL {
        Ok(())
    } else {
        Err(Error::InterferenceNotCancelled { op, residual })
    }
}

/// Iterative Algorithm I: joint ascent of `f_1` over
/// `U_b, U_w, G_1, G_2, G_3, T_e, T_o` for one slow-fading channel.
pub fn iterative_algorithm_i(
    ch: &ChannelSet,
    cfg: &NodeConfig,
    init: &SlowFadingParams,
    armijo: &ArmijoConfig,
) -> Result<SlowRun> {
    let problem = SlowProblem::new(ch, cfg)?;
    let objective = |v: &[CMatrix]| problem.objective(&SlowFadingParams::from_slice(v));
    let gradient = |v: &[CMatrix], k: usize| -> Result<CMatrix> {
        let g = problem.gradient(&SlowFadingParams::from_slice(v))?;
        Ok(g.into_matrices().swap_remove(k))
    };
    let (vars, trace) = block_ascent(
        &SlowFadingParams::NAMES,
        init.to_vec(),
        objective,
        gradient,
        |k, z| k > 1 || well_conditioned_basis(z),
        armijo,
    )?;
    let params = SlowFadingParams::from_slice(&vars);
    let bank = problem.bank(&params)?;
    check_residual("optimizer::iterative_algorithm_I", interference_residual(&bank, ch))?;
    Ok(SlowRun { params, bank, trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotCase {
    /// Even slot: relay 3 forwards, relays 1 and 2 receive.
    Even,
    /// Odd slot: relays 1 and 2 forward, relay 3 receives.
    Odd,
}

#[derive(Debug, Clone)]
pub struct SlotTrace {
    pub slot: usize,
    pub case: SlotCase,
    /// For the distributed design the odd slots hold one trace per relay.
    pub traces: Vec<OptimizerTrace>,
}

/// A designed schedule: the filters of every slot and the optimizer traces
/// of the slots that were optimized.
#[derive(Debug, Clone)]
pub struct ScheduleRun {
    pub filters: Vec<SlotFilters>,
    pub traces: Vec<SlotTrace>,
}

impl ScheduleRun {
    /// Largest inter-relay leakage over the schedule.
    pub fn max_residual(&self, channels: &[ChannelSet]) -> f64 {
        (0..self.filters.len().saturating_sub(1))
            .map(|n| schedule_residual(channels, &self.filters, n))
            .fold(0.0, f64::max)
    }
}

fn bootstrap_to_even(m: usize) -> ToEven {
    let naive = PerSlotParamsOdd::naive(m);
    ToEven {
        t_o: naive.t_o,
        w_3: lower_half_columns(m),
    }
}

fn even_filters(t_e: &CMatrix, f_3: CMatrix) -> SlotFilters {
    let m = t_e.nrows();
    SlotFilters {
        precoder: t_e.clone(),
        amps: [zeros(m, m), zeros(m, m), f_3],
    }
}

fn odd_filters(t_o: &CMatrix, f: [CMatrix; 2]) -> SlotFilters {
    let m = t_o.nrows();
    let [f_1, f_2] = f;
    SlotFilters {
        precoder: t_o.clone(),
        amps: [f_1, f_2, zeros(m, m)],
    }
}

/// Per-slot interference-aligned schedule with fixed parameters on every
/// slot (no optimization); with `naive` parameters this is the naive
/// baseline of the time-varying scenarios.
pub fn fixed_schedule(
    channels: &[ChannelSet],
    even: &PerSlotParamsEven,
    odd: &PerSlotParamsOdd,
) -> Result<ScheduleRun> {
    let m = channels[0].m();
    let mut to_even = bootstrap_to_even(m);
    let mut to_odd = None;
    let mut filters = Vec::with_capacity(channels.len());
    for (n, ch) in channels.iter().enumerate() {
        if n % 2 == 0 {
            let out = build_even(even, ch, &to_even)?;
            let f_3 = if n == 0 { zeros(m, m) } else { out.f_3 };
            filters.push(even_filters(&even.t_e, f_3));
            to_odd = Some(out.next);
        } else {
            let out = build_odd(odd, ch, to_odd.as_ref().expect("odd slot follows an even one"))?;
            filters.push(odd_filters(&odd.t_o, out.f));
            to_even = out.next;
        }
    }
    Ok(ScheduleRun {
        filters,
        traces: Vec::new(),
    })
}

/// Iterative Algorithm II over a channel sequence. Slot 0 has nothing to
/// forward and uses its starting parameters as they are; from slot 1 on,
/// odd slots ascend `f_3` over `U_b, phi_1, phi_2, T_o` and even slots ascend
/// `f_2` over `U_w, phi_3, T_e`, each given what the previous slot handed
/// over. Starting points come from `init`, seeded per slot from `stream`.
pub fn iterative_algorithm_ii(
    channels: &[ChannelSet],
    cfg: &NodeConfig,
    init: &InitStrategy,
    stream: &RngStream,
    armijo: &ArmijoConfig,
) -> Result<ScheduleRun> {
    const OP: &str = "optimizer::iterative_algorithm_II";
    let m = cfg.m;
    let mut filters = Vec::with_capacity(channels.len());
    let mut traces = Vec::new();

    let first = init.even(m, &stream.fork(0));
    let out = build_even(&first, &channels[0], &bootstrap_to_even(m))?;
    filters.push(even_filters(&first.t_e, zeros(m, m)));
    let mut to_odd = out.next;
    let mut to_even = bootstrap_to_even(m);

    for n in 1..channels.len() {
        let slot_stream = stream.fork(n as u64);
        if n % 2 == 1 {
            let problem = OddSlotProblem::new(&channels[n - 1], &channels[n], &to_odd, cfg)?;
            let (vars, trace) = block_ascent(
                &PerSlotParamsOdd::NAMES,
                init.odd(m, &slot_stream).to_vec(),
                |v| problem.objective(&PerSlotParamsOdd::from_slice(v)),
                |v, k| Ok(problem.gradient(&PerSlotParamsOdd::from_slice(v))?.into_matrices().swap_remove(k)),
                |k, z| k != 0 || well_conditioned_basis(z),
                armijo,
            )?;
            let params = PerSlotParamsOdd::from_slice(&vars);
            let out = build_odd(&params, &channels[n], &to_odd)?;
            filters.push(odd_filters(&params.t_o, out.f));
            to_even = out.next;
            traces.push(SlotTrace {
                slot: n,
                case: SlotCase::Odd,
                traces: vec![trace],
            });
        } else {
            let problem = EvenSlotProblem::new(&channels[n - 1], &channels[n], &to_even, cfg)?;
            let (vars, trace) = block_ascent(
                &PerSlotParamsEven::NAMES,
                init.even(m, &slot_stream).to_vec(),
                |v| problem.objective(&PerSlotParamsEven::from_slice(v)),
                |v, k| Ok(problem.gradient(&PerSlotParamsEven::from_slice(v))?.into_matrices().swap_remove(k)),
                |k, z| k != 0 || well_conditioned_basis(z),
                armijo,
            )?;
            let params = PerSlotParamsEven::from_slice(&vars);
            let out = build_even(&params, &channels[n], &to_even)?;
            filters.push(even_filters(&params.t_e, out.f_3));
            to_odd = out.next;
            traces.push(SlotTrace {
                slot: n,
                case: SlotCase::Even,
                traces: vec![trace],
            });
        }
    }
    let run = ScheduleRun { filters, traces };
    check_residual(OP, run.max_residual(channels))?;
    Ok(run)
}

/// Fixed source precoders of the distributed design.
pub fn distributed_precoders(m: usize) -> (CMatrix, CMatrix) {
    (identity(m), identity_columns(m, 0..m / 2))
}

/// Distributed Algorithm over a channel sequence whose inter-relay channels
/// are reciprocal within each slot pair `(2p, 2p + 1)`.
///
/// Slot 0 draws a random orthonormal `B_3` and forwards nothing. Each later
/// even slot `e` ascends `f_4` over `B_3` with the combiner
/// `W_3 = conj(B_3)` of slot `e - 2`. Each odd slot lets relays 1 and 2
/// independently ascend their single-relay rate over `xi_i`, after fixing a
/// receive basis orthogonal to relay 3's interference of the previous slot.
pub fn distributed_algorithm(
    channels: &[ChannelSet],
    cfg: &NodeConfig,
    init_scale: f64,
    stream: &RngStream,
    armijo: &ArmijoConfig,
) -> Result<ScheduleRun> {
    const OP: &str = "optimizer::distributed_algorithm";
    let m = cfg.m;
    let h = m / 2;
    let (t_e, t_o) = distributed_precoders(m);
    let mut filters = Vec::with_capacity(channels.len());
    let mut traces = Vec::new();
    for ch in channels.iter().step_by(2) {
        let deviation = ch.reciprocity_deviation();
        if !(deviation <= crate::ia::RECIPROCITY_TOL) {
            return Err(Error::ReciprocityViolation { op: OP, deviation });
        }
    }

    let mut b_3 = random_orthonormal(m, h, &mut stream.fork(0).generator());
    let mut w_3 = b_3.conjugate();
    filters.push(even_filters(&t_e, zeros(m, m)));

    for n in 1..channels.len() {
        let slot_stream = stream.fork(n as u64);
        if n % 2 == 1 {
            let mut amps = Vec::with_capacity(2);
            let mut relay_traces = Vec::with_capacity(2);
            for i in 0..2 {
                let local = RelayLocalProblem {
                    h_s: channels[n - 1].backward[i].clone(),
                    h_d: channels[n].forward[i].clone(),
                    t_e: t_e.clone(),
                    u_bar: relay_null_basis(channels[n - 1].from_r3(i), &b_3)?,
                    sigma2: cfg.sigma_relay[i],
                    p_s: cfg.p_s,
                    p_r: cfg.p_r,
                    sigma_dest: cfg.sigma_dest,
                };
                let (xi, trace) = relay_ascent(&local, perturb(&identity(h), init_scale, &slot_stream.fork(i as u64)), armijo)?;
                amps.push(local.amplifier(&xi));
                relay_traces.push(trace);
            }
            let f: [CMatrix; 2] = amps.try_into().expect("two relays");
            filters.push(odd_filters(&t_o, f));
            traces.push(SlotTrace {
                slot: n,
                case: SlotCase::Odd,
                traces: relay_traces,
            });
        } else {
            let problem = RelayThreeProblem {
                w_3: w_3.clone(),
                t_o_prev: t_o.clone(),
                h_3s_prev: channels[n - 1].backward[2].clone(),
                h_d3: channels[n].forward[2].clone(),
                t_o_next: t_o.clone(),
                // Within a pair the odd slot repeats the even slot's channels,
                // so the last even slot can stand in for its missing partner.
                h_3s_next: channels.get(n + 1).unwrap_or(&channels[n]).backward[2].clone(),
                cfg: cfg.clone(),
            };
            let start = perturb(&identity_columns(m, 0..h), init_scale, &slot_stream);
            let (vars, trace) = block_ascent(
                &["B_3"],
                vec![start],
                |v| problem.objective(&v[0]),
                |v, _| problem.gradient(&v[0]),
                |_, _| true,
                armijo,
            )?;
            b_3 = vars.into_iter().next().expect("one variable");
            filters.push(even_filters(&t_e, &b_3 * w_3.adjoint()));
            w_3 = b_3.conjugate();
            traces.push(SlotTrace {
                slot: n,
                case: SlotCase::Even,
                traces: vec![trace],
            });
        }
    }
    let run = ScheduleRun { filters, traces };
    check_residual(OP, run.max_residual(channels))?;
    Ok(run)
}

/// One relay's ascent on its local problem; the interface only carries that
/// relay's own channels.
pub fn relay_ascent(local: &RelayLocalProblem, start: CMatrix, armijo: &ArmijoConfig) -> Result<(CMatrix, OptimizerTrace)> {
    let (vars, trace) = block_ascent(
        &["xi"],
        vec![start],
        |v| local.objective(&v[0]),
        |v, _| local.gradient(&v[0]),
        |_, _| true,
        armijo,
    )?;
    Ok((vars.into_iter().next().expect("one variable"), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel_sequence, FadingScenario};
    use crate::gradients::EvenSlotProblem;
    use crate::ia::build_slow;
    use crate::linalg::inv_general;
    use crate::system::{two_slot_rate, PowerConvention};
    use proptest::prelude::*;

    fn neg_dist(a: &CMatrix) -> impl Fn(&CMatrix) -> Result<f64> + '_ {
        move |z: &CMatrix| Ok(-(z - a).norm_squared())
    }

    #[test]
    fn armijo_moves_uphill_on_quadratic() {
        let mut rng = RngStream::new(1, 0).generator();
        let a = complex_gaussian(3, 2, &mut rng);
        let z = &a + complex_gaussian(3, 2, &mut rng) * c(10.0, 0.0);
        // d/dZ^* of -||Z - A||^2
        let grad = -(&z - &a);
        let step = armijo_step(neg_dist(&a), &z, &grad, &ArmijoConfig::default()).unwrap();
        assert!(step.accepted);
        assert!(step.value > -(&z - &a).norm_squared());
    }

    #[test]
    fn zero_gradient_is_not_accepted() {
        let z = identity(2);
        let step = armijo_step(neg_dist(&z), &z, &zeros(2, 2), &ArmijoConfig::default()).unwrap();
        assert!(!step.accepted);
        assert_eq!(step.z, z);
        assert_eq!(step.mu, 0.0);
    }

    #[test]
    fn failing_objective_is_a_rejection() {
        let z = identity(2);
        let cfg = ArmijoConfig {
            max_backtracks: 5,
            ..Default::default()
        };
        let step = armijo_step_from(|_| Err(Error::NonFinite { op: "test" }), &z, 0.0, &identity(2), &cfg);
        assert!(!step.accepted);
    }

    proptest! {
        // 1-D concave objective f(x) = -a (x - x0)^2 along a real direction.
        // Enumerate m directly and compare with the stepper.
        #[test]
        fn armijo_picks_first_qualifying_power(a in 0.05f64..20.0, x0 in -5.0f64..5.0, x in -5.0f64..5.0) {
            prop_assume!((x - x0).abs() > 1e-3);
            let cfg = ArmijoConfig::default();
            let f = |v: f64| -a * (v - x0).powi(2);
            // Wirtinger gradient of f(Re z) for real z is f'(x) / 2.
            let g = -a * (x - x0);
            let oracle = (0..=cfg.max_backtracks)
                .map(|m| cfg.nu.powi(m as i32))
                .find(|&mu| f(x + mu * g) >= f(x) + cfg.zeta * mu * g * g);
            let z = CMatrix::from_element(1, 1, c(x, 0.0));
            let step = armijo_step(|z: &CMatrix| Ok(f(z[(0, 0)].re)), &z, &CMatrix::from_element(1, 1, c(g, 0.0)), &cfg).unwrap();
            match oracle {
                Some(mu) => {
                    prop_assert!(step.accepted);
                    prop_assert_eq!(step.mu, mu);
                }
                None => prop_assert!(!step.accepted),
            }
        }
    }

    #[test]
    fn block_ascent_on_separable_quadratic() {
        let mut rng = RngStream::new(2, 0).generator();
        let targets = [complex_gaussian(2, 2, &mut rng), complex_gaussian(2, 1, &mut rng)];
        let objective = |v: &[CMatrix]| Ok(-(&v[0] - &targets[0]).norm_squared() - (&v[1] - &targets[1]).norm_squared());
        let gradient = |v: &[CMatrix], k: usize| Ok(-(&v[k] - &targets[k]));
        let cfg = ArmijoConfig {
            epsilon: 1e-12,
            ..Default::default()
        };
        let (vars, trace) =
            block_ascent(&["a", "b"], vec![zeros(2, 2), zeros(2, 1)], objective, gradient, |_, _| true, &cfg).unwrap();
        assert!(trace.is_nondecreasing());
        assert!((&vars[0] - &targets[0]).norm() < 1e-5);
        assert_ne!(trace.termination, Termination::MaxIters);
        let csv = trace.to_csv();
        assert!(csv.starts_with("iter,objective_bits,step_a,step_b\n0,"));
        assert_eq!(csv.lines().count(), trace.objective.len() + 1);
    }

    #[test]
    fn vetoed_steps_are_rolled_back() {
        let objective = |v: &[CMatrix]| Ok(-(&v[0] - identity(2)).norm_squared());
        let gradient = |v: &[CMatrix], _| Ok(identity(2) - &v[0]);
        let (vars, trace) =
            block_ascent(&["a"], vec![zeros(2, 2)], objective, gradient, |_, _| false, &ArmijoConfig::default()).unwrap();
        assert_eq!(vars[0], zeros(2, 2));
        assert_eq!(trace.termination, Termination::BacktrackFailure);
        assert_eq!(trace.objective, vec![-2.0, -2.0]);
    }

    fn slow_channel(m: usize, seed: u64) -> ChannelSet {
        draw_channel_sequence(FadingScenario::SlowFading, m, 2, &RngStream::new(seed, 0))
            .unwrap()
            .swap_remove(0)
    }

    #[test]
    fn algorithm_i_improves_on_naive_and_is_valid() {
        let m = 4;
        let ch = slow_channel(m, 3);
        let cfg = NodeConfig::from_snr(m, 20.0, PowerConvention::Equal);
        let run = iterative_algorithm_i(&ch, &cfg, &naive_params(m), &ArmijoConfig::default()).unwrap();
        let naive = two_slot_rate(&build_slow(&naive_params(m), &ch).unwrap(), &ch, &cfg).unwrap();
        assert!(run.trace.is_nondecreasing());
        assert!((run.trace.objective[0] - naive).abs() < 1e-9);
        assert!(run.trace.final_objective() >= naive);
        assert!(interference_residual(&run.bank, &ch) < VALIDITY_RESIDUAL);
        let powers = run.bank.powers(&ch, &cfg).unwrap();
        for i in 0..3 {
            let used = powers.p_relay[i] * (&run.bank.amps[i] * &powers.relay_cov[i] * run.bank.amps[i].adjoint()).trace().re;
            assert!((used - cfg.p_r).abs() < 1e-9 * cfg.p_r);
        }
    }

    #[test]
    fn algorithm_i_reentry_stops_at_once() {
        let m = 2;
        let ch = slow_channel(m, 4);
        let cfg = NodeConfig::from_snr(m, 10.0, PowerConvention::Equal);
        let armijo = ArmijoConfig::default();
        let first = iterative_algorithm_i(&ch, &cfg, &InitStrategy::default().slow(m, &RngStream::new(4, 1)), &armijo).unwrap();
        if first.trace.termination != Termination::Converged {
            return;
        }
        let again = iterative_algorithm_i(&ch, &cfg, &first.params, &armijo).unwrap();
        assert!(again.trace.iterations() <= 1);
        assert!(again.trace.final_objective() - again.trace.objective[0] <= armijo.epsilon);
    }

    #[test]
    fn init_strategies_have_parameter_shapes() {
        let s = RngStream::new(5, 0);
        for init in [InitStrategy::default(), InitStrategy::Random] {
            let p = init.slow(4, &s);
            assert_eq!(p.to_vec().iter().map(|z| z.shape()).collect::<Vec<_>>(),
                       naive_params(4).to_vec().iter().map(|z| z.shape()).collect::<Vec<_>>());
        }
        let near = InitStrategy::default().slow(4, &s);
        assert!((&near.u_b - naive_params(4).u_b).norm() < 0.1);
    }

    #[test]
    fn algorithm_ii_two_slots() {
        let m = 2;
        let ch = draw_channel_sequence(FadingScenario::BlockPerSlot, m, 3, &RngStream::new(6, 0)).unwrap();
        let cfg = NodeConfig::from_snr(m, 10.0, PowerConvention::Equal);
        let run = iterative_algorithm_ii(&ch, &cfg, &InitStrategy::default(), &RngStream::new(6, 1), &ArmijoConfig::default()).unwrap();
        assert_eq!(run.filters.len(), 3);
        assert_eq!(run.traces.len(), 2);
        for n in 1..3 {
            assert!(crate::system::delivered_rate(&ch, &run.filters, n, &cfg).unwrap().is_finite());
        }
        assert!(run.max_residual(&ch) < VALIDITY_RESIDUAL);
        assert!(run.traces.iter().all(|t| t.traces[0].is_nondecreasing()));
    }

    #[test]
    fn case_one_from_silent_relay3_climbs() {
        let m = 4;
        let ch = draw_channel_sequence(FadingScenario::BlockPerSlot, m, 2, &RngStream::new(7, 0)).unwrap();
        let cfg = NodeConfig::from_snr(m, 10.0, PowerConvention::Equal);
        let prev = bootstrap_to_even(m);
        let problem = EvenSlotProblem::new(&ch[0], &ch[1], &prev, &cfg).unwrap();
        let start = PerSlotParamsEven {
            phi_3: zeros(m, m / 2),
            ..PerSlotParamsEven::naive(m)
        };
        let cfg1 = ArmijoConfig {
            max_outer_iters: 1,
            ..Default::default()
        };
        let (_, trace) = block_ascent(
            &PerSlotParamsEven::NAMES,
            start.to_vec(),
            |v| problem.objective(&PerSlotParamsEven::from_slice(v)),
            |v, k| Ok(problem.gradient(&PerSlotParamsEven::from_slice(v))?.into_matrices().swap_remove(k)),
            |_, _| true,
            &cfg1,
        )
        .unwrap();
        assert!(trace.steps[0].iter().any(|&mu| mu > 0.0));
        assert!(trace.objective[1] > trace.objective[0]);
    }

    #[test]
    fn even_handoff_combiners_are_inverse_channel_times_basis() {
        let m = 4;
        let ch = slow_channel(m, 8);
        let p = InitStrategy::Random.even(m, &RngStream::new(8, 1));
        let out = build_even(&p, &ch, &bootstrap_to_even(m)).unwrap();
        for i in 0..2 {
            let expect = inv_general(ch.from_r3(i), "test").unwrap().adjoint() * &p.u_w;
            assert_eq!(out.next.w[i], expect);
        }
    }

    #[test]
    fn distributed_is_valid_from_bootstrap() {
        for m in [2, 4] {
            let ch = draw_channel_sequence(FadingScenario::BlockPerTwoSlots, m, 8, &RngStream::new(9, 0)).unwrap();
            let cfg = NodeConfig::from_snr(m, 20.0, PowerConvention::Equal);
            let run = distributed_algorithm(&ch, &cfg, 0.01, &RngStream::new(9, 1), &ArmijoConfig::default()).unwrap();
            assert!(run.max_residual(&ch) < VALIDITY_RESIDUAL);
            for st in &run.traces {
                let expected = if st.case == SlotCase::Odd { 2 } else { 1 };
                assert_eq!(st.traces.len(), expected);
                assert!(st.traces.iter().all(OptimizerTrace::is_nondecreasing));
            }
        }
    }

    #[test]
    fn distributed_rejects_nonreciprocal_channels() {
        let ch = draw_channel_sequence(FadingScenario::BlockPerSlot, 2, 4, &RngStream::new(10, 0)).unwrap();
        let cfg = NodeConfig::from_snr(2, 10.0, PowerConvention::Equal);
        let err = distributed_algorithm(&ch, &cfg, 0.01, &RngStream::new(10, 1), &ArmijoConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ReciprocityViolation { .. }));
    }

    #[test]
    fn relay_xi_ascent_is_monotone_m2() {
        for seed in 0..50 {
            let mut rng = RngStream::new(seed, 0).generator();
            let h_3i = complex_gaussian(2, 2, &mut rng);
            let b_3 = random_orthonormal(2, 1, &mut rng);
            let local = RelayLocalProblem {
                h_s: complex_gaussian(2, 2, &mut rng),
                h_d: complex_gaussian(2, 2, &mut rng),
                t_e: identity(2),
                u_bar: relay_null_basis(&h_3i, &b_3).unwrap(),
                sigma2: 0.1,
                p_s: 1.0,
                p_r: 1.0,
                sigma_dest: 0.1,
            };
            let start = perturb(&identity(1), 0.01, &RngStream::new(seed, 1));
            let (_, trace) = relay_ascent(&local, start, &ArmijoConfig::default()).unwrap();
            assert!(trace.is_nondecreasing());
        }
    }

    #[test]
    fn fixed_naive_schedule_is_interference_free() {
        for scenario in [FadingScenario::BlockPerSlot, FadingScenario::BlockPerTwoSlots, FadingScenario::SlowFading] {
            let ch = draw_channel_sequence(scenario, 4, 6, &RngStream::new(11, 0)).unwrap();
            let run = fixed_schedule(&ch, &PerSlotParamsEven::naive(4), &PerSlotParamsOdd::naive(4)).unwrap();
            assert!(run.max_residual(&ch) < VALIDITY_RESIDUAL);
        }
    }
}

//! Monte Carlo harness: per-trial rates for every scheme, and the metrics
//! computed from them (ergodic rate, outage, epsilon-outage rate, high-SNR
//! slope, convergence bands).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel_sequence, ChannelSet, FadingScenario};
use crate::config::{ExperimentConfig, Scheme};
use crate::error::{Error, Result};
use crate::ia::{build_slow, naive_params, PerSlotParamsEven, PerSlotParamsOdd};
use crate::optimizer::{
    distributed_algorithm, fixed_schedule, iterative_algorithm_i, iterative_algorithm_ii, OptimizerTrace, ScheduleRun,
    SlotCase,
};
use crate::rng::RngStream;
use crate::system::{conventional_af_rate, delivered_rate, two_slot_rate, NodeConfig};

/// Relay used by the single-relay conventional baseline.
pub const CONVENTIONAL_RELAY: usize = 0;

/// Stream ids of redraws sit above all trial indices.
const RESAMPLE_STRIDE: u64 = 1 << 32;

/// A trace with a label saying where in the run it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledTrace {
    pub slot: usize,
    /// `None` for slow fading; otherwise the slot case.
    pub case: Option<SlotCase>,
    /// Relay index for per-relay ascents of the distributed design.
    pub relay: Option<usize>,
    pub trace: OptimizerTrace,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub rate_bits: f64,
    pub traces: Vec<LabeledTrace>,
}

/// Slots drawn per trial.
pub fn slots_per_trial(exp: &ExperimentConfig) -> usize {
    match exp.scenario {
        FadingScenario::SlowFading => 2,
        _ => 2 * exp.window_pairs + 2,
    }
}

/// Mean delivered rate over slots `2..len`, i.e. every pair but the
/// bootstrap one.
pub fn window_rate(channels: &[ChannelSet], run: &ScheduleRun, cfg: &NodeConfig) -> Result<f64> {
    let n = channels.len();
    let mut sum = 0.0;
    for k in 2..n {
        sum += delivered_rate(channels, &run.filters, k, cfg)?;
    }
    Ok(sum / (n - 2) as f64)
}

fn schedule_traces(run: &ScheduleRun) -> Vec<LabeledTrace> {
    run.traces
        .iter()
        .flat_map(|st| {
            let per_relay = st.traces.len() > 1;
            st.traces.iter().enumerate().map(move |(i, t)| LabeledTrace {
                slot: st.slot,
                case: Some(st.case),
                relay: per_relay.then_some(i),
                trace: t.clone(),
            })
        })
        .collect()
}

/// Mean over slot pairs `1..=W` of the conventional two-slot rate, the
/// source sending on slot `2p` and the relay forwarding on `2p + 1`. With
/// `best` the relay is chosen per pair.
fn baseline_rate(channels: &[ChannelSet], exp: &ExperimentConfig, cfg: &NodeConfig, best: bool) -> Result<f64> {
    let pairs: Vec<(usize, usize)> = match exp.scenario {
        FadingScenario::SlowFading => vec![(0, 0)],
        _ => (1..=exp.window_pairs).map(|p| (2 * p, 2 * p + 1)).collect(),
    };
    let mut sum = 0.0;
    for &(s, d) in &pairs {
        sum += if best {
            let mut r = f64::NEG_INFINITY;
            for relay in 0..3 {
                r = r.max(conventional_af_rate(&channels[s], &channels[d], relay, cfg)?);
            }
            r
        } else {
            conventional_af_rate(&channels[s], &channels[d], CONVENTIONAL_RELAY, cfg)?
        };
    }
    Ok(sum / pairs.len() as f64)
}

/// One trial of `exp.scheme` at `snr_db` on the channels and initial points
/// drawn from `stream`.
pub fn run_trial(exp: &ExperimentConfig, snr_db: f64, stream: &RngStream) -> Result<TrialOutcome> {
    let cfg = NodeConfig::from_snr(exp.m, snr_db, exp.power_convention);
    let channels = draw_channel_sequence(exp.scenario, exp.m, slots_per_trial(exp), &stream.fork(0))?;
    let init_stream = stream.fork(1);
    let slow = exp.scenario == FadingScenario::SlowFading;
    let (rate_bits, traces) = match exp.scheme {
        Scheme::ProposedIterI => {
            let init = exp.init.slow(exp.m, &init_stream);
            let run = iterative_algorithm_i(&channels[0], &cfg, &init, &exp.armijo)?;
            let rate = two_slot_rate(&run.bank, &channels[0], &cfg)?;
            let trace = LabeledTrace {
                slot: 0,
                case: None,
                relay: None,
                trace: run.trace,
            };
            (rate, vec![trace])
        }
        Scheme::ProposedNaive if slow => {
            let bank = build_slow(&naive_params(exp.m), &channels[0])?;
            (two_slot_rate(&bank, &channels[0], &cfg)?, Vec::new())
        }
        Scheme::ProposedNaive => {
            let run = fixed_schedule(&channels, &PerSlotParamsEven::naive(exp.m), &PerSlotParamsOdd::naive(exp.m))?;
            (window_rate(&channels, &run, &cfg)?, Vec::new())
        }
        Scheme::ProposedIterII => {
            let run = iterative_algorithm_ii(&channels, &cfg, &exp.init, &init_stream, &exp.armijo)?;
            (window_rate(&channels, &run, &cfg)?, schedule_traces(&run))
        }
        Scheme::ProposedDistributed => {
            let scale = match exp.init {
                crate::optimizer::InitStrategy::PerturbedNaive { scale } => scale,
                crate::optimizer::InitStrategy::Random => 1.0,
            };
            let run = distributed_algorithm(&channels, &cfg, scale, &init_stream, &exp.armijo)?;
            (window_rate(&channels, &run, &cfg)?, schedule_traces(&run))
        }
        Scheme::BestRelayNaive => (baseline_rate(&channels, exp, &cfg, true)?, Vec::new()),
        Scheme::ConventionalAfNaive => (baseline_rate(&channels, exp, &cfg, false)?, Vec::new()),
    };
    Ok(TrialOutcome { rate_bits, traces })
}

/// Trials at one SNR, in trial order.
#[derive(Debug, Clone)]
pub struct TrialBatch {
    pub snr_db: f64,
    pub outcomes: Vec<TrialOutcome>,
    /// Numerical failures that were redrawn.
    pub resampled: usize,
}

impl TrialBatch {
    pub fn rates(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.rate_bits).collect()
    }
}

fn resample_cap(exp: &ExperimentConfig) -> usize {
    (exp.max_resample_fraction * exp.trials as f64).floor() as usize
}

/// Runs `exp.trials` independent trials at `snr_db` on the current rayon
/// pool. Trial `t` uses stream id `t`; a trial hitting a numerical failure is
/// redrawn from stream `t + k 2^32`, and more than the configured fraction of
/// such redraws aborts the batch. The result does not depend on the number
/// of worker threads.
pub fn run_trials(exp: &ExperimentConfig, snr_db: f64) -> Result<TrialBatch> {
    const OP: &str = "simulate::run_trials";
    let cap = resample_cap(exp);
    let results: Vec<(Result<TrialOutcome>, usize)> = (0..exp.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut failures = 0;
            loop {
                let stream = RngStream::new(exp.seed, t + failures as u64 * RESAMPLE_STRIDE);
                match run_trial(exp, snr_db, &stream) {
                    Err(e) if e.is_numerical() && failures < cap => failures += 1,
                    Err(e) if e.is_numerical() => return (Err(e), failures + 1),
                    other => return (other, failures),
                }
            }
        })
        .collect();
    let resampled: usize = results.iter().map(|(_, f)| f).sum();
    if resampled > cap {
        return Err(Error::ResampleCapExceeded {
            op: OP,
            failed: resampled,
            trials: exp.trials,
            cap,
        });
    }
    let outcomes = results.into_iter().map(|(r, _)| r).collect::<Result<Vec<_>>>()?;
    Ok(TrialBatch {
        snr_db,
        outcomes,
        resampled,
    })
}

/// `Pr[rate <= I_out]` over the samples.
pub fn outage_probability(samples: &[f64], i_out: f64) -> f64 {
    assert!(!samples.is_empty(), "outage_probability needs samples");
    samples.iter().filter(|&&r| r <= i_out).count() as f64 / samples.len() as f64
}

/// 95% normal-approximation half-width of a binomial proportion.
pub fn binomial_half_width(p: f64, n: usize) -> f64 {
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Largest threshold with at most `floor(eps n)` samples at or below it,
/// taken as the `max(floor(eps n), 1)`-th smallest sample.
pub fn epsilon_outage_rate(samples: &[f64], eps: f64) -> f64 {
    assert!(!samples.is_empty(), "epsilon_outage_rate needs samples");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((eps * sorted.len() as f64).floor() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Standard error of the mean; 0 for a single sample.
pub fn std_err(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(samples);
    let var = samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub snr_db: f64,
    pub ergodic_rate_bits: f64,
    pub outage_prob: f64,
    pub outage_ci_half_width: f64,
    pub epsilon_outage_rate_bits: f64,
    pub n_trials: usize,
    pub rate_std_err: f64,
    pub resampled: usize,
}

impl MetricRecord {
    pub fn from_samples(snr_db: f64, samples: &[f64], i_out: f64, eps: f64, resampled: usize) -> Self {
        let p = outage_probability(samples, i_out);
        MetricRecord {
            snr_db,
            ergodic_rate_bits: mean(samples),
            outage_prob: p,
            outage_ci_half_width: binomial_half_width(p, samples.len()),
            epsilon_outage_rate_bits: epsilon_outage_rate(samples, eps),
            n_trials: samples.len(),
            rate_std_err: std_err(samples),
            resampled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub scheme: Scheme,
    pub m: usize,
    pub records: Vec<MetricRecord>,
}

pub const METRIC_CSV_HEADER: &str = "scheme,M,snr_db,ergodic_rate_bits,outage_prob,outage_ci_half_width,epsilon_outage_rate_bits,n_trials,rate_std_err,resampled";

impl MetricSeries {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{METRIC_CSV_HEADER}\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{:.12e},{},{:.12e},{:.12e},{},{:.12e},{}\n",
                self.scheme,
                self.m,
                r.snr_db,
                r.ergodic_rate_bits,
                r.outage_prob,
                r.outage_ci_half_width,
                r.epsilon_outage_rate_bits,
                r.n_trials,
                r.rate_std_err,
                r.resampled
            ));
        }
        out
    }
}

/// Runs the configured scheme over an SNR grid.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub series: MetricSeries,
    pub batches: Vec<TrialBatch>,
}

impl ExperimentResult {
    /// Per-trial rates, one row per (snr, trial).
    pub fn trials_csv(&self) -> String {
        let mut out = String::from("snr_db,trial,rate_bits\n");
        for b in &self.batches {
            for (t, o) in b.outcomes.iter().enumerate() {
                out.push_str(&format!("{},{t},{:.12e}\n", b.snr_db, o.rate_bits));
            }
        }
        out
    }
}

pub fn run_experiment(exp: &ExperimentConfig, snr_grid_db: &[f64]) -> Result<ExperimentResult> {
    exp.validate()?;
    let mut batches = Vec::with_capacity(snr_grid_db.len());
    let mut records = Vec::with_capacity(snr_grid_db.len());
    for &snr in snr_grid_db {
        let batch = run_trials(exp, snr)?;
        records.push(MetricRecord::from_samples(
            snr,
            &batch.rates(),
            exp.outage_threshold_bits,
            exp.epsilon_outage,
            batch.resampled,
        ));
        batches.push(batch);
    }
    Ok(ExperimentResult {
        series: MetricSeries {
            scheme: exp.scheme,
            m: exp.m,
            records,
        },
        batches,
    })
}

/// High-SNR slope `(I(rho_2) - I(rho_1)) / (log2 rho_2 - log2 rho_1)`.
pub fn dof_estimate(rate_1: f64, rate_2: f64, snr_1_db: f64, snr_2_db: f64) -> f64 {
    let log2_rho = |db: f64| db / 10.0 * 10f64.log2();
    (rate_2 - rate_1) / (log2_rho(snr_2_db) - log2_rho(snr_1_db))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DofResult {
    pub scheme: Scheme,
    pub m: usize,
    pub snr_db: [f64; 2],
    pub rate_bits: [f64; 2],
    pub rate_std_err: [f64; 2],
    pub dof: f64,
}

pub const DOF_CSV_HEADER: &str = "scheme,M,snr1_db,snr2_db,rate1_bits,rate2_bits,rate1_std_err,rate2_std_err,dof_estimate";

impl DofResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.6}\n",
            self.scheme,
            self.m,
            self.snr_db[0],
            self.snr_db[1],
            self.rate_bits[0],
            self.rate_bits[1],
            self.rate_std_err[0],
            self.rate_std_err[1],
            self.dof
        )
    }
}

/// Slope estimate from the ergodic rates at the two configured SNRs. Both
/// points use the same channel draws.
pub fn run_dof(exp: &ExperimentConfig) -> Result<(DofResult, ExperimentResult)> {
    let result = run_experiment(exp, &exp.dof_snr_db)?;
    let r = &result.series.records;
    let dof = DofResult {
        scheme: exp.scheme,
        m: exp.m,
        snr_db: exp.dof_snr_db,
        rate_bits: [r[0].ergodic_rate_bits, r[1].ergodic_rate_bits],
        rate_std_err: [r[0].rate_std_err, r[1].rate_std_err],
        dof: dof_estimate(r[0].ergodic_rate_bits, r[1].ergodic_rate_bits, exp.dof_snr_db[0], exp.dof_snr_db[1]),
    };
    Ok((dof, result))
}

/// Per-iteration mean and deciles of a set of objective sequences; shorter
/// sequences are padded with their final value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceAggregate {
    pub mean: Vec<f64>,
    /// 10%, 20%, ..., 90% points per iteration.
    pub deciles: Vec<[f64; 9]>,
}

fn padded(trace: &[f64], k: usize) -> f64 {
    trace[k.min(trace.len() - 1)]
}

pub fn convergence_aggregate(traces: &[Vec<f64>]) -> ConvergenceAggregate {
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    let mut mean_out = Vec::with_capacity(len);
    let mut deciles = Vec::with_capacity(len);
    for k in 0..len {
        let mut col: Vec<f64> = traces.iter().map(|t| padded(t, k)).collect();
        mean_out.push(mean(&col));
        col.sort_by(f64::total_cmp);
        let n = col.len();
        deciles.push(std::array::from_fn(|d| {
            // Linear interpolation between order statistics.
            let pos = (d + 1) as f64 / 10.0 * (n - 1) as f64;
            let (lo, frac) = (pos.floor() as usize, pos.fract());
            let hi = (lo + 1).min(n - 1);
            col[lo] + frac * (col[hi] - col[lo])
        }));
    }
    ConvergenceAggregate {
        mean: mean_out,
        deciles,
    }
}

impl ConvergenceAggregate {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,mean_bits,d10,d20,d30,d40,d50,d60,d70,d80,d90\n");
        for (k, (m, d)) in self.mean.iter().zip(&self.deciles).enumerate() {
            out.push_str(&format!("{k},{m:.12e}"));
            for v in d {
                out.push_str(&format!(",{v:.12e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Whether the sequence is within `tol` (relative) of its own final value at
/// iteration `k`.
pub fn settled_by(trace: &[f64], k: usize, tol: f64) -> bool {
    let last = *trace.last().expect("nonempty trace");
    (last - padded(trace, k)).abs() <= tol * last.abs()
}

/// Fraction of sequences settled by iteration `k`.
pub fn settled_fraction(traces: &[Vec<f64>], k: usize, tol: f64) -> f64 {
    traces.iter().filter(|t| settled_by(t, k, tol)).count() as f64 / traces.len() as f64
}

/// Objective traces of `exp.trials` trials at one SNR, in trial order.
pub fn collect_traces(exp: &ExperimentConfig, snr_db: f64) -> Result<Vec<(usize, LabeledTrace)>> {
    let batch = run_trials(exp, snr_db)?;
    Ok(batch
        .outcomes
        .into_iter()
        .enumerate()
        .flat_map(|(t, o)| o.traces.into_iter().map(move |tr| (t, tr)))
        .collect())
}

/// Long-format trace dump: one row per (trial, slot, relay, iteration).
pub fn traces_csv(traces: &[(usize, LabeledTrace)]) -> String {
    let mut out = String::from("trial,slot,case,relay,iter,objective_bits\n");
    for (t, lt) in traces {
        let case = match lt.case {
            None => "slow",
            Some(SlotCase::Even) => "even",
            Some(SlotCase::Odd) => "odd",
        };
        let relay = lt.relay.map(|r| (r + 1).to_string()).unwrap_or_default();
        for (k, f) in lt.trace.objective.iter().enumerate() {
            out.push_str(&format!("{t},{},{case},{relay},{k},{f:.12e}\n", lt.slot));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn outage_examples() {
        assert_eq!(outage_probability(&[1.0, 3.0], 2.0), 0.5);
        assert_eq!(outage_probability(&[2.5, 3.0, 9.0], 2.0), 0.0);
        assert_eq!(outage_probability(&[2.0], 2.0), 1.0);
    }

    #[test]
    fn half_width_closed_form() {
        let (p, n) = (0.3, 200);
        let expect = 1.96 * (0.3f64 * 0.7 / 200.0).sqrt();
        assert!((binomial_half_width(p, n) - expect).abs() < 1e-12);
        assert_eq!(binomial_half_width(0.0, 10), 0.0);
    }

    /// Direct reading of the definition: the largest sample value `x` such
    /// that at most `floor(eps n)` samples are `<= x`, or the minimum when no
    /// sample qualifies.
    fn epsilon_oracle(samples: &[f64], eps: f64) -> f64 {
        let allowed = (eps * samples.len() as f64).floor() as usize;
        let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
        samples
            .iter()
            .copied()
            .filter(|&x| samples.iter().filter(|&&y| y <= x).count() <= allowed)
            .fold(min, f64::max)
    }

    #[test]
    fn epsilon_examples() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(epsilon_outage_rate(&s, 0.1), 1.0);
        assert_eq!(epsilon_outage_rate(&s, 0.0), 1.0);
        assert_eq!(epsilon_outage_rate(&s, 0.35), 3.0);
        assert_eq!(epsilon_outage_rate(&s, 1.0), 10.0);
    }

    proptest! {
        #[test]
        fn epsilon_rate_matches_oracle(s in prop::collection::vec(0.0f64..50.0, 1..60), eps in 0.0f64..1.0) {
            prop_assert_eq!(epsilon_outage_rate(&s, eps), epsilon_oracle(&s, eps));
        }

        #[test]
        fn epsilon_rate_monotone(s in prop::collection::vec(-5.0f64..50.0, 1..60), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(epsilon_outage_rate(&s, hi) >= epsilon_outage_rate(&s, lo));
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(epsilon_outage_rate(&s, hi) <= max);
        }

        #[test]
        fn outage_is_a_probability(s in prop::collection::vec(0.0f64..50.0, 1..60), t in -1.0f64..60.0) {
            let p = outage_probability(&s, t);
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn outage_monotone_in_threshold(s in prop::collection::vec(0.0f64..50.0, 1..60), a in 0.0f64..60.0, b in 0.0f64..60.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(outage_probability(&s, lo) <= outage_probability(&s, hi));
        }

        #[test]
        fn aggregate_of_one_trace_is_the_trace(t in prop::collection::vec(-10.0f64..10.0, 1..30)) {
            let agg = convergence_aggregate(&[t.clone()]);
            prop_assert_eq!(&agg.mean, &t);
            for (d, v) in agg.deciles.iter().zip(&t) {
                prop_assert!(d.iter().all(|x| x == v));
            }
        }
    }

    #[test]
    fn aggregate_pads_and_handles_constants() {
        let agg = convergence_aggregate(&[vec![1.0, 2.0, 3.0], vec![5.0]]);
        assert_eq!(agg.mean, vec![3.0, 3.5, 4.0]);
        let flat = convergence_aggregate(&[vec![2.0; 4], vec![2.0; 2]]);
        assert!(flat.mean.iter().all(|&v| v == 2.0));
        assert!(flat.deciles.iter().flatten().all(|&v| v == 2.0));
    }

    #[test]
    fn settled_checks() {
        let t = vec![0.0, 5.0, 9.6, 10.0];
        assert!(!settled_by(&t, 1, 0.05));
        assert!(settled_by(&t, 2, 0.05));
        assert!(settled_by(&t, 50, 0.0));
        assert_eq!(settled_fraction(&[t.clone(), vec![10.0]], 1, 0.05), 0.5);
    }

    #[test]
    fn dof_of_exact_log_law() {
        // rate = eta log2(rho) exactly
        let eta = 3.0;
        let r = |db: f64| eta * db / 10.0 * 10f64.log2();
        assert!((dof_estimate(r(40.0), r(60.0), 40.0, 60.0) - eta).abs() < 1e-12);
    }

    fn small(scheme: Scheme, scenario: FadingScenario, m: usize) -> ExperimentConfig {
        ExperimentConfig {
            scheme,
            scenario,
            m,
            trials: 6,
            window_pairs: 2,
            ..Default::default()
        }
    }

    fn every_scheme(m: usize) -> Vec<ExperimentConfig> {
        Scheme::ALL
            .iter()
            .map(|&s| {
                let scenario = s.required_scenario().unwrap_or(FadingScenario::BlockPerSlot);
                small(s, scenario, m)
            })
            .collect()
    }

    #[test]
    fn same_seed_same_series() {
        for exp in every_scheme(2) {
            let a = run_experiment(&exp, &[10.0]).unwrap();
            let b = run_experiment(&exp, &[10.0]).unwrap();
            assert_eq!(a.series, b.series, "{}", exp.scheme);
            assert!(a.series.records[0].ergodic_rate_bits > 0.0);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let exp = small(Scheme::ProposedIterII, FadingScenario::BlockPerSlot, 2);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| run_experiment(&exp, &[5.0])).unwrap();
        let b = three.install(|| run_experiment(&exp, &[5.0])).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.trials_csv(), b.trials_csv());
    }

    #[test]
    fn extreme_snr_limits() {
        for exp in every_scheme(2) {
            let hi = run_experiment(&exp, &[200.0]).unwrap();
            let lo = run_experiment(&exp, &[-200.0]).unwrap();
            assert_eq!(hi.series.records[0].outage_prob, 0.0, "{}", exp.scheme);
            assert_eq!(lo.series.records[0].outage_prob, 1.0, "{}", exp.scheme);
            assert!(lo.series.records[0].ergodic_rate_bits < 1e-6);
        }
    }

    #[test]
    fn slow_fading_baselines_and_naive() {
        for scheme in [Scheme::ProposedNaive, Scheme::BestRelayNaive, Scheme::ConventionalAfNaive] {
            let exp = small(scheme, FadingScenario::SlowFading, 4);
            let r = run_experiment(&exp, &[20.0]).unwrap();
            assert!(r.series.records[0].ergodic_rate_bits.is_finite());
        }
        let best = run_experiment(&small(Scheme::BestRelayNaive, FadingScenario::BlockPerSlot, 2), &[10.0]).unwrap();
        let one = run_experiment(&small(Scheme::ConventionalAfNaive, FadingScenario::BlockPerSlot, 2), &[10.0]).unwrap();
        for (b, o) in best.batches[0].rates().iter().zip(one.batches[0].rates()) {
            assert!(*b >= o);
        }
    }

    #[test]
    fn traces_are_labelled() {
        let exp = small(Scheme::ProposedDistributed, FadingScenario::BlockPerTwoSlots, 2);
        let traces = collect_traces(&exp, 10.0).unwrap();
        assert!(traces.iter().any(|(_, t)| t.relay == Some(1)));
        assert!(traces.iter().any(|(_, t)| t.case == Some(SlotCase::Even) && t.relay.is_none()));
        let csv = traces_csv(&traces);
        assert!(csv.starts_with("trial,slot,case,relay,iter,objective_bits\n"));
    }

    #[test]
    fn series_csv_has_one_row_per_snr() {
        let exp = small(Scheme::ProposedNaive, FadingScenario::SlowFading, 2);
        let r = run_experiment(&exp, &[0.0, 10.0]).unwrap();
        let csv = r.series.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], METRIC_CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("proposed_naive,2,0,"));
    }

    #[test]
    fn invalid_experiment_is_rejected_before_running() {
        let exp = ExperimentConfig {
            m: 3,
            ..Default::default()
        };
        assert!(matches!(run_experiment(&exp, &[0.0]), Err(Error::Config(_))));
    }
}

//! Quenched trajectory averages for the bond-dimension sweep (experiment 1)
//! and the time sweep (experiment 2), plus deviations from saturation,
//! exponential fits and saturation times.
//!
//! Every trajectory draws its gates from `(master_seed, key, gate_index)`
//! streams where `key` depends on the chain length and trajectory index only,
//! so runs with different bond caps see the same circuits.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::haar::{sample_haar_u4, BrickworkSchedule, SeedTree};
use crate::magic::estimate_sre;
use crate::mps::{BondCap, MpsState};
use crate::oracle::m2_haar;
use crate::stats::{mean, ols, sem};

/// Everything recorded from one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Measurement {
    pub m1: f64,
    pub m2: f64,
    pub se1: f64,
    pub se2: f64,
    /// Largest entanglement entropy over all cuts, in bits.
    pub s_max: f64,
    pub max_bond: usize,
    /// Largest bond the truncation tolerance asked for since the previous
    /// measurement, before the cap was applied.
    pub required_bond: usize,
    pub redraws: usize,
}

/// Parameters shared by all trajectories of one `(N, cap)` run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSpec {
    pub n_sites: usize,
    pub cap: BondCap,
    pub depth: usize,
    pub n_samples: usize,
    pub master_seed: u64,
    pub svd_tol: f64,
}

/// Stream key of trajectory `traj` for an `n`-site chain.
pub fn trajectory_key(n_sites: usize, traj: usize) -> u64 {
    ((n_sites as u64) << 32) | traj as u64
}

/// Moves the center to site 0, then measures entanglement and SRE.
pub fn measure_state<R: Rng + ?Sized>(
    state: &mut MpsState,
    n_samples: usize,
    rng: &mut R,
) -> Result<Measurement> {
    state.move_center(0);
    let profile = state.entanglement_profile();
    let est = estimate_sre(state, n_samples, rng)?;
    Ok(Measurement {
        m1: est.m1,
        m2: est.m2,
        se1: est.se1,
        se2: est.se2,
        s_max: profile.max_cut_value,
        max_bond: state.max_required_bond(),
        required_bond: 1,
        redraws: est.redraws,
    })
}

fn apply_layer(
    state: &mut MpsState,
    schedule: &BrickworkSchedule,
    layer: usize,
    spec: &RunSpec,
    key: u64,
) -> Result<usize> {
    let mut required = 1;
    for slot in schedule.layer_slots(layer) {
        let mut rng = SeedTree::gate(spec.master_seed, key, slot.gate_index).derive_stream();
        let gate = sample_haar_u4(&mut rng);
        let report = state.apply_two_qubit_gate(&gate, slot.left_site)?;
        required = required.max(report.required_bond);
    }
    Ok(required)
}

fn initial_state(spec: &RunSpec) -> Result<MpsState> {
    Ok(MpsState::zeros(spec.n_sites)?.with_bond_cap(spec.cap).with_svd_tol(spec.svd_tol))
}

/// State of trajectory `traj` after `spec.depth` layers.
pub fn evolve_trajectory(spec: &RunSpec, traj: usize) -> Result<MpsState> {
    let schedule = BrickworkSchedule::new(spec.n_sites, spec.depth)?;
    let key = trajectory_key(spec.n_sites, traj);
    let mut state = initial_state(spec)?;
    for layer in 0..spec.depth {
        apply_layer(&mut state, &schedule, layer, spec, key)?;
    }
    Ok(state)
}

/// Final-state measurement of one trajectory after `spec.depth` layers.
pub fn trajectory_final(spec: &RunSpec, traj: usize) -> Result<Measurement> {
    let schedule = BrickworkSchedule::new(spec.n_sites, spec.depth)?;
    let key = trajectory_key(spec.n_sites, traj);
    let mut state = initial_state(spec)?;
    let mut required = 1;
    for layer in 0..spec.depth {
        required = required.max(apply_layer(&mut state, &schedule, layer, spec, key)?);
    }
    let mut rng = SeedTree::sampling(spec.master_seed, key, spec.depth as u64).derive_stream();
    let mut m = measure_state(&mut state, spec.n_samples, &mut rng)?;
    m.required_bond = required;
    Ok(m)
}

/// Measurements after every layer `t = 0..=spec.depth` of one trajectory.
pub fn trajectory_series(spec: &RunSpec, traj: usize) -> Result<Vec<Measurement>> {
    let schedule = BrickworkSchedule::new(spec.n_sites, spec.depth)?;
    let key = trajectory_key(spec.n_sites, traj);
    let mut state = initial_state(spec)?;
    let mut out = Vec::with_capacity(spec.depth + 1);
    for t in 0..=spec.depth {
        let required = if t == 0 { 1 } else { apply_layer(&mut state, &schedule, t - 1, spec, key)? };
        let mut rng = SeedTree::sampling(spec.master_seed, key, t as u64).derive_stream();
        let mut m = measure_state(&mut state, spec.n_samples, &mut rng)?;
        m.required_bond = required;
        out.push(m);
    }
    Ok(out)
}

/// Quenched average over trajectories at one `(N, chi[, t])`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AveragedPoint {
    pub n: usize,
    pub chi: BondCap,
    pub t: Option<usize>,
    pub m1_bar: f64,
    pub sem1: f64,
    pub m2_bar: f64,
    pub sem2: f64,
    pub s_bar: f64,
    pub sem_s: f64,
    pub max_bond_mean: f64,
    pub required_bond_mean: f64,
    /// Mean per-trajectory estimator error of `M2`.
    pub se2_mean: f64,
    pub n_traj: usize,
    pub redraws: usize,
}

/// Averages measurements given in trajectory order.
pub fn aggregate(n: usize, chi: BondCap, t: Option<usize>, ms: &[Measurement]) -> AveragedPoint {
    let col = |f: fn(&Measurement) -> f64| ms.iter().map(f).collect::<Vec<_>>();
    let (m1, m2, s) = (col(|m| m.m1), col(|m| m.m2), col(|m| m.s_max));
    AveragedPoint {
        n,
        chi,
        t,
        m1_bar: mean(&m1),
        sem1: sem(&m1),
        m2_bar: mean(&m2),
        sem2: sem(&m2),
        s_bar: mean(&s),
        sem_s: sem(&s),
        max_bond_mean: mean(&col(|m| m.max_bond as f64)),
        required_bond_mean: mean(&col(|m| m.required_bond as f64)),
        se2_mean: mean(&col(|m| m.se2)),
        n_traj: ms.len(),
        redraws: ms.iter().map(|m| m.redraws).sum(),
    }
}

fn check_cap(n: usize, cap: BondCap, hard_cap: usize) -> Result<()> {
    let needed = match cap {
        BondCap::Finite(chi) => chi,
        BondCap::Infinite => 1usize.checked_shl((n / 2) as u32).unwrap_or(usize::MAX),
    };
    if needed > hard_cap {
        return Err(Error::ChiAboveHardCap { chi: needed, hard_cap });
    }
    Ok(())
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn spec_for(cfg: &ExperimentConfig, n: usize, cap: BondCap) -> RunSpec {
    RunSpec {
        n_sites: n,
        cap,
        depth: cfg.depth,
        n_samples: cfg.samples_for(n),
        master_seed: cfg.master_seed,
        svd_tol: cfg.svd_tol,
    }
}

/// Final-state averages for every `(N, chi)` of the sweep, in config order.
pub fn run_experiment1(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<AveragedPoint>> {
    if cfg.experiment != ExperimentKind::One {
        return Err(Error::InvalidInput("run_experiment1 needs an [exp1] config".into()));
    }
    cfg.validate()?;
    let mut runs = Vec::new();
    for &n in &cfg.n_list {
        for &chi in &cfg.chi_list {
            let cap = BondCap::Finite(chi);
            check_cap(n, cap, cfg.chi_hard_cap)?;
            runs.push(spec_for(cfg, n, cap));
        }
    }
    let tasks: Vec<(usize, usize)> =
        (0..runs.len()).flat_map(|r| (0..cfg.n_trajectories).map(move |k| (r, k))).collect();
    let results = with_pool(threads, || {
        tasks.par_iter().map(|&(r, k)| trajectory_final(&runs[r], k)).collect::<Result<Vec<_>>>()
    })??;
    Ok(results
        .chunks(cfg.n_trajectories)
        .zip(&runs)
        .map(|(ms, spec)| {
            let p = aggregate(spec.n_sites, spec.cap, None, ms);
            log::info!("N={} chi={} m2_bar={:.4} s_bar={:.3}", p.n, p.chi, p.m2_bar, p.s_bar);
            p
        })
        .collect())
}

/// Per-layer averages for every `N` and each of its caps, ordered by
/// `(N, cap, t)`.
pub fn run_experiment2(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<AveragedPoint>> {
    if cfg.experiment != ExperimentKind::Two {
        return Err(Error::InvalidInput("run_experiment2 needs an [exp2] config".into()));
    }
    cfg.validate()?;
    let mut runs = Vec::new();
    for &n in &cfg.n_list {
        for cap in cfg.caps_for(n) {
            check_cap(n, cap, cfg.chi_hard_cap)?;
            runs.push(spec_for(cfg, n, cap));
        }
    }
    let tasks: Vec<(usize, usize)> =
        (0..runs.len()).flat_map(|r| (0..cfg.n_trajectories).map(move |k| (r, k))).collect();
    let results = with_pool(threads, || {
        tasks.par_iter().map(|&(r, k)| trajectory_series(&runs[r], k)).collect::<Result<Vec<_>>>()
    })??;
    let mut out = Vec::new();
    for (series, spec) in results.chunks(cfg.n_trajectories).zip(&runs) {
        for t in 0..=spec.depth {
            let at_t: Vec<Measurement> = series.iter().map(|s| s[t]).collect();
            out.push(aggregate(spec.n_sites, spec.cap, Some(t), &at_t));
        }
        log::info!("N={} chi={} time series done", spec.n_sites, spec.cap);
    }
    Ok(out)
}

/// Which coordinate deviations are tabulated against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    Chi,
    Time,
}

/// `|M_n^Sat - M_n|` at one point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeviationPoint {
    pub n: usize,
    pub chi: BondCap,
    /// The bond dimension or the time, depending on the axis.
    pub x: f64,
    pub delta_m1: f64,
    pub delta_m2: f64,
    pub sat_m1: f64,
    pub sat_m2: f64,
    pub sem1: f64,
    pub sem2: f64,
}

impl DeviationPoint {
    pub fn delta(&self, order: u32) -> f64 {
        if order == 1 { self.delta_m1 } else { self.delta_m2 }
    }

    pub fn sem(&self, order: u32) -> f64 {
        if order == 1 { self.sem1 } else { self.sem2 }
    }
}

fn group_key(p: &AveragedPoint, axis: SweepAxis) -> (usize, Option<BondCap>) {
    match axis {
        SweepAxis::Chi => (p.n, None),
        SweepAxis::Time => (p.n, Some(p.chi)),
    }
}

/// Groups `points` per chain length (per `(N, cap)` along time) and measures
/// each point against the Haar value of `M2` and the largest `M1` of its
/// group.
///
/// A time series needs at least two times; a bond sweep may hold a single
/// point since its `M2` reference is analytic.
pub fn compute_deviations(points: &[AveragedPoint], axis: SweepAxis) -> Result<Vec<DeviationPoint>> {
    let mut groups: BTreeMap<(usize, Option<BondCap>), Vec<&AveragedPoint>> = BTreeMap::new();
    for p in points {
        groups.entry(group_key(p, axis)).or_default().push(p);
    }
    if groups.is_empty() {
        return Err(Error::SinglePointTable { n: 0 });
    }
    let mut out = Vec::with_capacity(points.len());
    for ((n, _), group) in groups {
        if axis == SweepAxis::Time && group.len() < 2 {
            return Err(Error::SinglePointTable { n });
        }
        let sat_m2 = m2_haar(n);
        let sat_m1 = group.iter().map(|p| p.m1_bar).fold(f64::NEG_INFINITY, f64::max);
        for p in group {
            let x = match axis {
                SweepAxis::Chi => p.chi.limit() as f64,
                SweepAxis::Time => p.t.unwrap_or(0) as f64,
            };
            out.push(DeviationPoint {
                n,
                chi: p.chi,
                x,
                delta_m1: (sat_m1 - p.m1_bar).abs(),
                delta_m2: (sat_m2 - p.m2_bar).abs(),
                sat_m1,
                sat_m2,
                sem1: p.sem1,
                sem2: p.sem2,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FitModel {
    /// `ln y = slope * chi + intercept`
    LogLinearChi,
    /// `ln y = slope * t + intercept`
    LogLinearTime,
    /// `y = slope * N + intercept`
    LinearN,
}

impl FitModel {
    pub fn tag(self) -> &'static str {
        match self {
            FitModel::LogLinearChi => "log-linear-chi",
            FitModel::LogLinearTime => "log-linear-t",
            FitModel::LinearN => "linear-N",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub model: FitModel,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

impl FitResult {
    /// `exp(intercept)`, the amplitude of an exponential fit.
    pub fn amplitude(&self) -> f64 {
        self.intercept.exp()
    }
}

fn fit_line(xs: &[f64], ys: &[f64], model: FitModel) -> Result<FitResult> {
    if xs.len() < 3 {
        return Err(Error::TooFewPoints { usable: xs.len() });
    }
    let line = ols(xs, ys).ok_or(Error::TooFewPoints { usable: xs.len() })?;
    Ok(FitResult {
        model,
        slope: line.slope,
        intercept: line.intercept,
        r_squared: line.r_squared,
        points_used: xs.len(),
    })
}

/// Least squares of `ln y` on `x` over the points with `y > noise_floor`.
pub fn fit_log_linear(points: &[(f64, f64)], noise_floor: f64, model: FitModel) -> Result<FitResult> {
    let floor = noise_floor.max(0.0);
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        points.iter().filter(|(_, y)| *y > floor).map(|&(x, y)| (x, y.ln())).unzip();
    fit_line(&xs, &ys, model)
}

/// Deviations of order `order` that clear three standard errors.
pub fn usable_deviations(devs: &[&DeviationPoint], order: u32) -> Vec<(f64, f64)> {
    devs.iter()
        .filter(|d| d.delta(order) > 3.0 * d.sem(order))
        .map(|d| (d.x, d.delta(order)))
        .collect()
}

/// Log-linear fit of one group of deviations above its noise floor.
pub fn fit_deviations(devs: &[&DeviationPoint], order: u32, model: FitModel) -> Result<FitResult> {
    fit_log_linear(&usable_deviations(devs, order), 0.0, model)
}

/// Linear fit of amplitudes against chain length.
pub fn fit_beta_vs_n(betas: &[(usize, f64)]) -> Result<FitResult> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = betas.iter().map(|&(n, b)| (n as f64, b)).unzip();
    fit_line(&xs, &ys, FitModel::LinearN)
}

/// Smallest recorded `t` from which every later value lies within `epsilon`
/// of `target`.
pub fn saturation_time(series: &[(usize, f64)], target: f64, epsilon: f64) -> Result<usize> {
    if series.is_empty() {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let mut t_sat = None;
    for &(t, v) in series.iter().rev() {
        if (v - target).abs() > epsilon {
            break;
        }
        t_sat = Some(t);
    }
    t_sat.ok_or(Error::NotSaturated { target, epsilon })
}

/// Difference of two time series at equal `(N, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurveComparison {
    pub n: usize,
    pub t: usize,
    pub chi_a: BondCap,
    pub chi_b: BondCap,
    pub diff_m2: f64,
    /// Combined standard error of `diff_m2`.
    pub err_m2: f64,
    pub diff_s: f64,
    pub err_s: f64,
}

/// Pairs the time series of caps `a` and `b` for chain length `n`.
///
/// Errors combine the trajectory standard errors of both curves with the
/// mean estimator error per trajectory, all in quadrature.
pub fn compare_curves(points: &[AveragedPoint], n: usize, a: BondCap, b: BondCap) -> Vec<CurveComparison> {
    let series = |cap: BondCap| -> BTreeMap<usize, &AveragedPoint> {
        points
            .iter()
            .filter(|p| p.n == n && p.chi == cap)
            .filter_map(|p| p.t.map(|t| (t, p)))
            .collect()
    };
    let (sa, sb) = (series(a), series(b));
    sa.iter()
        .filter_map(|(t, pa)| sb.get(t).map(|pb| (*t, *pa, *pb)))
        .map(|(t, pa, pb)| {
            let est = |p: &AveragedPoint| p.se2_mean * p.se2_mean / p.n_traj.max(1) as f64;
            CurveComparison {
                n,
                t,
                chi_a: a,
                chi_b: b,
                diff_m2: pa.m2_bar - pb.m2_bar,
                err_m2: (pa.sem2.powi(2) + pb.sem2.powi(2) + est(pa) + est(pb)).sqrt(),
                diff_s: pa.s_bar - pb.s_bar,
                err_s: (pa.sem_s.powi(2) + pb.sem_s.powi(2)).sqrt(),
            }
        })
        .collect()
}

/// One row of a fit table; rejected fits keep their reason.
#[derive(Clone, Debug, PartialEq)]
pub struct FitRow {
    /// `None` for fits across chain lengths.
    pub n: Option<usize>,
    pub chi: Option<BondCap>,
    pub order: u32,
    pub fit: std::result::Result<FitResult, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Exp1Analysis {
    pub deviations: Vec<DeviationPoint>,
    pub fits: Vec<FitRow>,
}

/// Deviations against the bond cap, the exponential fit per `N` and order,
/// and the linear fit of the amplitudes against `N`.
pub fn analyze_exp1(points: &[AveragedPoint]) -> Result<Exp1Analysis> {
    let deviations = compute_deviations(points, SweepAxis::Chi)?;
    let mut by_n: BTreeMap<usize, Vec<&DeviationPoint>> = BTreeMap::new();
    for d in &deviations {
        by_n.entry(d.n).or_default().push(d);
    }
    let mut fits = Vec::new();
    for order in [1, 2] {
        let mut betas = Vec::new();
        for (&n, devs) in &by_n {
            let fit = fit_deviations(devs, order, FitModel::LogLinearChi);
            if let Ok(f) = &fit {
                betas.push((n, f.amplitude()));
            }
            fits.push(FitRow { n: Some(n), chi: None, order, fit: fit.map_err(|e| e.to_string()) });
        }
        let fit = fit_beta_vs_n(&betas).map_err(|e| e.to_string());
        fits.push(FitRow { n: None, chi: None, order, fit });
    }
    Ok(Exp1Analysis { deviations, fits })
}

/// Saturation time of one quantity of one `(N, cap)` series.
#[derive(Clone, Debug, PartialEq)]
pub struct SaturationRow {
    pub n: usize,
    pub chi: BondCap,
    /// `m1`, `m2` or `s`.
    pub quantity: &'static str,
    pub target: f64,
    pub epsilon: f64,
    pub t_sat: std::result::Result<usize, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Exp2Analysis {
    pub deviations: Vec<DeviationPoint>,
    pub fits: Vec<FitRow>,
    pub saturation: Vec<SaturationRow>,
    pub comparison: Vec<CurveComparison>,
}

/// First time included in the exponential fits of a time series.
pub const TIME_FIT_START: usize = 1;

/// Deviations against time, exponential fits per `(N, cap)` from
/// [`TIME_FIT_START`] on, saturation times, and the comparison of each
/// primary cap with its comparison cap.
pub fn analyze_exp2(cfg: &ExperimentConfig, points: &[AveragedPoint]) -> Result<Exp2Analysis> {
    let deviations = compute_deviations(points, SweepAxis::Time)?;
    let mut groups: BTreeMap<(usize, BondCap), Vec<&DeviationPoint>> = BTreeMap::new();
    for d in &deviations {
        groups.entry((d.n, d.chi)).or_default().push(d);
    }
    let mut fits = Vec::new();
    let mut saturation = Vec::new();
    for (&(n, chi), devs) in &groups {
        let window: Vec<&DeviationPoint> =
            devs.iter().copied().filter(|d| d.x >= TIME_FIT_START as f64).collect();
        for order in [1, 2] {
            let fit = fit_deviations(&window, order, FitModel::LogLinearTime).map_err(|e| e.to_string());
            fits.push(FitRow { n: Some(n), chi: Some(chi), order, fit });
        }
        let series: Vec<&AveragedPoint> =
            points.iter().filter(|p| p.n == n && p.chi == chi && p.t.is_some()).collect();
        let col = |f: fn(&AveragedPoint) -> f64| -> Vec<(usize, f64)> {
            series.iter().map(|p| (p.t.unwrap_or(0), f(p))).collect()
        };
        let s_final = series.last().map(|p| p.s_bar).unwrap_or(0.0);
        let targets = [
            ("m1", col(|p| p.m1_bar), devs[0].sat_m1, cfg.sat_epsilon_sre),
            ("m2", col(|p| p.m2_bar), devs[0].sat_m2, cfg.sat_epsilon_sre),
            ("s", col(|p| p.s_bar), s_final, cfg.sat_epsilon_ent),
        ];
        for (quantity, values, target, epsilon) in targets {
            let t_sat = saturation_time(&values, target, epsilon).map_err(|e| e.to_string());
            saturation.push(SaturationRow { n, chi, quantity, target, epsilon, t_sat });
        }
    }
    let mut comparison = Vec::new();
    for &n in &cfg.n_list {
        if let [a, b] = cfg.caps_for(n)[..] {
            comparison.extend(compare_curves(points, n, a, b));
        }
    }
    Ok(Exp2Analysis { deviations, fits, saturation, comparison })
}

/// Statevector cross-check of one infinite-mode trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub n_sites: usize,
    pub depth: usize,
    pub master_seed: u64,
    pub fidelity: f64,
    pub m1_exact: f64,
    pub m2_exact: f64,
    pub m1_sampled: f64,
    pub m2_sampled: f64,
    pub se1: f64,
    pub se2: f64,
    /// Largest entropy difference over all cuts, in bits.
    pub max_entropy_error: f64,
    pub pass: bool,
}

/// Largest chain accepted by [`oracle_check`].
pub const ORACLE_CHECK_MAX_SITES: usize = crate::oracle::MAX_SRE_SITES;

/// Runs trajectory 0 of `(N, depth, seed)` through the MPS in infinite mode
/// and through the statevector oracle.
pub fn oracle_check(n: usize, depth: usize, master_seed: u64, n_samples: usize) -> Result<OracleReport> {
    use crate::oracle::{evolve_exact, exact_entropy, exact_sre, SreRank};
    if n > ORACLE_CHECK_MAX_SITES {
        return Err(Error::TooManySites { what: "oracle check", len: n, max: ORACLE_CHECK_MAX_SITES });
    }
    let spec = RunSpec { n_sites: n, cap: BondCap::Infinite, depth, n_samples, master_seed, svd_tol: 0.0 };
    let schedule = BrickworkSchedule::new(n, depth)?;
    let key = trajectory_key(n, 0);
    let mut state = initial_state(&spec)?;
    for layer in 0..depth {
        apply_layer(&mut state, &schedule, layer, &spec, key)?;
    }
    let gates = crate::haar::trajectory_gates(&schedule, master_seed, key);
    let sv = evolve_exact(n, &schedule, &gates)?;

    let mut rng = SeedTree::sampling(master_seed, key, depth as u64).derive_stream();
    let m = measure_state(&mut state, n_samples, &mut rng)?;
    let fidelity = sv.fidelity(&state.to_statevector()?);
    let profile = state.entanglement_profile();
    let mut max_entropy_error: f64 = 0.0;
    for (cut, s) in profile.per_cut.iter().enumerate() {
        max_entropy_error = max_entropy_error.max((exact_entropy(&sv, cut + 1)? - s).abs());
    }
    let m1_exact = exact_sre(&sv, SreRank::One)?;
    let m2_exact = exact_sre(&sv, SreRank::Two)?;
    let within = |exact: f64, est: f64, se: f64| (exact - est).abs() <= (3.0 * se).max(1e-10);
    let pass = fidelity >= 1.0 - 1e-8 && max_entropy_error <= 1e-8 && within(m2_exact, m.m2, m.se2);
    Ok(OracleReport {
        n_sites: n,
        depth,
        master_seed,
        fidelity,
        m1_exact,
        m2_exact,
        m1_sampled: m.m1,
        m2_sampled: m.m2,
        se1: m.se1,
        se2: m.se2,
        max_entropy_error,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Defaults;

    fn spec(n: usize, chi: usize, depth: usize) -> RunSpec {
        RunSpec {
            n_sites: n,
            cap: BondCap::Finite(chi),
            depth,
            n_samples: 200,
            master_seed: 11,
            svd_tol: 1e-8,
        }
    }

    #[test]
    fn synthetic_exponential_fit_is_exact() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|x| (x as f64, 5.0 * (-0.3 * x as f64).exp())).collect();
        let fit = fit_log_linear(&pts, 0.0, FitModel::LogLinearChi).unwrap();
        assert!((fit.slope + 0.3).abs() < 1e-10);
        assert!((fit.intercept - 5f64.ln()).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
        assert_eq!(fit.points_used, 10);
    }

    #[test]
    fn synthetic_beta_fit_is_exact() {
        let betas: Vec<(usize, f64)> = [8, 12, 16, 20].iter().map(|&n| (n, 0.29 * n as f64 + 0.1)).collect();
        let fit = fit_beta_vs_n(&betas).unwrap();
        assert!((fit.slope - 0.29).abs() < 1e-12);
        assert!((fit.intercept - 0.1).abs() < 1e-12);
        assert!(matches!(fit_beta_vs_n(&betas[..2]), Err(Error::TooFewPoints { usable: 2 })));
    }

    #[test]
    fn noise_floor_drops_points() {
        let pts = [(1.0, 1.0), (2.0, 0.5), (3.0, 1e-3), (4.0, 0.0)];
        assert!(matches!(
            fit_log_linear(&pts, 0.01, FitModel::LogLinearTime),
            Err(Error::TooFewPoints { usable: 2 })
        ));
    }

    #[test]
    fn saturation_time_rules() {
        let flat: Vec<(usize, f64)> = (3..8).map(|t| (t, 2.0)).collect();
        assert_eq!(saturation_time(&flat, 2.0, 0.01).unwrap(), 3);
        let rising = [(0, 0.0), (1, 1.0), (2, 1.95), (3, 1.7), (4, 2.02), (5, 1.99)];
        assert_eq!(saturation_time(&rising, 2.0, 0.05).unwrap(), 4);
        assert!(matches!(saturation_time(&rising, 3.0, 0.05), Err(Error::NotSaturated { .. })));
        assert!(saturation_time(&[], 1.0, 0.1).is_err());
    }

    #[test]
    fn product_cap_gives_zero_entanglement() {
        let ms: Vec<Measurement> = (0..4).map(|k| trajectory_final(&spec(6, 1, 6), k).unwrap()).collect();
        let p = aggregate(6, BondCap::Finite(1), None, &ms);
        assert!(p.s_bar.abs() < 1e-12);
        assert!((p.max_bond_mean - 1.0).abs() < 1e-12);
        assert!(ms.iter().all(|m| m.required_bond > 1));
    }

    #[test]
    fn series_starts_at_zero_and_respects_cap() {
        let series = trajectory_series(&spec(8, 4, 6), 0).unwrap();
        assert_eq!(series.len(), 7);
        assert_eq!(series[0].m2, 0.0);
        assert_eq!(series[0].s_max, 0.0);
        assert!(series.iter().all(|m| m.s_max <= 2.0 + 1e-12 && m.max_bond <= 4));
    }

    #[test]
    fn final_matches_last_series_entry() {
        let s = spec(6, 8, 5);
        let last = *trajectory_series(&s, 3).unwrap().last().unwrap();
        let fin = trajectory_final(&s, 3).unwrap();
        assert!((last.s_max - fin.s_max).abs() < 1e-8);
        assert!((last.m2 - fin.m2).abs() < 1e-8);
    }

    #[test]
    fn deviations_use_haar_and_max_m1() {
        let mk = |chi: usize, m1: f64, m2: f64| AveragedPoint {
            n: 4,
            chi: BondCap::Finite(chi),
            t: None,
            m1_bar: m1,
            sem1: 0.01,
            m2_bar: m2,
            sem2: 0.01,
            s_bar: 0.0,
            sem_s: 0.0,
            max_bond_mean: 1.0,
            required_bond_mean: 1.0,
            se2_mean: 0.0,
            n_traj: 10,
            redraws: 0,
        };
        let pts = [mk(1, 1.0, 1.0), mk(2, 2.0, m2_haar(4))];
        let devs = compute_deviations(&pts, SweepAxis::Chi).unwrap();
        assert_eq!(devs[1].delta_m2, 0.0);
        assert_eq!(devs[1].delta_m1, 0.0);
        assert!((devs[0].delta_m1 - 1.0).abs() < 1e-15);
        assert!(devs.iter().all(|d| d.sat_m1 == 2.0));

        let single = [AveragedPoint { t: Some(0), ..pts[0] }];
        assert!(matches!(compute_deviations(&single, SweepAxis::Time), Err(Error::SinglePointTable { n: 4 })));
        assert_eq!(compute_deviations(&pts[..1], SweepAxis::Chi).unwrap().len(), 1);
    }

    #[test]
    fn experiment1_is_thread_independent() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::One, Defaults::Desk);
        cfg.n_list = vec![6];
        cfg.chi_list = vec![1, 2, 4];
        cfg.depth = 4;
        cfg.n_trajectories = 3;
        cfg.n_samples = Some(100);
        let one = run_experiment1(&cfg, 1).unwrap();
        let three = run_experiment1(&cfg, 3).unwrap();
        assert_eq!(one, three);
        assert_eq!(one.len(), 3);
    }

    #[test]
    fn oracle_check_trivial_and_small() {
        let r = oracle_check(2, 0, 5, 50).unwrap();
        assert!(r.pass);
        assert_eq!((r.m1_exact, r.m2_exact, r.m1_sampled, r.m2_sampled), (0.0, 0.0, 0.0, 0.0));
        assert!(r.max_entropy_error < 1e-12);
        let r = oracle_check(5, 6, 5, 500).unwrap();
        assert!(r.fidelity > 1.0 - 1e-10 && r.max_entropy_error < 1e-8);
        assert!(oracle_check(9, 1, 5, 10).is_err());
    }

    #[test]
    fn hard_cap_rejected() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::One, Defaults::Desk);
        cfg.n_list = vec![6];
        cfg.chi_list = vec![512];
        assert!(matches!(run_experiment1(&cfg, 1), Err(Error::ChiAboveHardCap { .. })));
        let mut cfg2 = ExperimentConfig::new(ExperimentKind::Two, Defaults::Desk);
        cfg2.n_list = vec![20];
        cfg2.chi_sre_map.insert(20, BondCap::Infinite);
        assert!(matches!(run_experiment2(&cfg2, 1), Err(Error::ChiAboveHardCap { .. })));
    }
}

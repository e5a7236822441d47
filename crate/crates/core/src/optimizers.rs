//! SPSA for continuous search and steepest-descent hill climbing on the
//! duration lattice.
//!
//! Costs are `Fn(params, seed) -> Result<f64>`; the optimizer derives every
//! evaluation seed from (run seed, iteration, evaluation index) so a run is
//! reproducible whatever the thread count.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Chemical accuracy, Hartree.
pub const CHEMICAL_ACCURACY: f64 = 0.0016;

/// Per-coordinate geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    /// Hill-climb step and SPSA normalization scale.
    pub step: f64,
    /// Lattice spacing evaluations are rounded to, if discrete.
    pub lattice: Option<f64>,
}

impl Coordinate {
    pub fn continuous(step: f64) -> Self {
        Coordinate { step, lattice: None }
    }

    pub fn lattice(step: f64, spacing: f64) -> Self {
        Coordinate {
            step,
            lattice: Some(spacing),
        }
    }

    /// `step` halved and snapped to the lattice, if it is still coarser
    /// than one spacing.
    fn refined(&self, step: f64) -> Option<f64> {
        let s = self.lattice.filter(|s| *s > 0.0)?;
        (step > s).then(|| ((0.5 * step / s).round() * s).max(s))
    }

    fn project(&self, x: f64) -> f64 {
        match self.lattice {
            Some(s) if s > 0.0 => (x / s).round() * s,
            _ => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpsaConfig {
    /// Step gain; calibrated from pilot gradients when absent.
    pub a: Option<f64>,
    /// Perturbation size in units of each coordinate's step.
    pub c: Option<f64>,
    /// Stability constant; `0.1·max_iters` when absent.
    #[serde(rename = "A")]
    pub big_a: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub max_iters: usize,
    /// Pilot gradient estimates used to calibrate `a`.
    pub pilot_samples: usize,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        SpsaConfig {
            a: None,
            c: None,
            big_a: None,
            alpha: 0.602,
            gamma: 0.101,
            max_iters: 100,
            pilot_samples: 5,
        }
    }
}

/// Hill-climb settings. The two step sizes are turned into per-coordinate
/// steps by the caller (see [`crate::vqe::pansatz_coordinates`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillClimbConfig {
    /// Single-qubit duration step in lattice units.
    pub duration_step: u64,
    /// CR step in lattice units per echo half (the total moves by twice this).
    #[serde(default = "default_cr_step")]
    pub cr_step: u64,
    /// Phase step, radians.
    pub phase_step: f64,
    pub max_iters: usize,
    /// Re-estimate the incumbent with a fresh seed every iteration and
    /// compare neighbors against that, instead of against the (possibly
    /// lucky) sample that made it the incumbent.
    #[serde(default = "default_reestimate")]
    pub reestimate_incumbent: bool,
    /// When no neighbor improves, halve every lattice step that is still
    /// coarser than its lattice spacing and keep climbing; stop only once
    /// all steps are at their spacing.
    #[serde(default = "default_refine")]
    pub refine_steps: bool,
}

fn default_refine() -> bool {
    true
}

fn default_reestimate() -> bool {
    true
}

// Small CR moves from a zero-CR start change the energy only at second
// order, well below shot noise, so the climber needs a coarser CR step.
fn default_cr_step() -> u64 {
    8
}

impl Default for HillClimbConfig {
    fn default() -> Self {
        HillClimbConfig {
            duration_step: 1,
            cr_step: default_cr_step(),
            phase_step: DEFAULT_PHASE_STEP,
            max_iters: 30,
            reestimate_incumbent: default_reestimate(),
            refine_steps: default_refine(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Spsa(SpsaConfig),
    HillClimb(HillClimbConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub rng_seed: u64,
    /// Stop once a recorded cost is at or below this value.
    pub goal: Option<f64>,
}

impl OptimizerConfig {
    pub fn max_iters(&self) -> usize {
        match self.kind {
            OptimizerKind::Spsa(c) => c.max_iters,
            OptimizerKind::HillClimb(c) => c.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub params: Vec<f64>,
    pub cost: f64,
    pub evaluations_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Goal,
    NoImprovement,
    MaxIters,
    NonFiniteCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub best_params: Vec<f64>,
    pub best_cost: f64,
    pub trace: Vec<TraceEntry>,
    pub stop: StopReason,
    /// Every cost call, including ones not reflected in the trace.
    pub evaluations: usize,
}

impl OptimResult {
    /// Completed iterations (trace entries after the initial point).
    pub fn iterations(&self) -> usize {
        self.trace.last().map(|t| t.iteration).unwrap_or(0)
    }

    /// Error if the run was aborted by a non-finite cost.
    pub fn check_finite(&self) -> Result<()> {
        if self.stop == StopReason::NonFiniteCost {
            return Err(Error::NonFiniteCost {
                iteration: self.iterations() + 1,
            });
        }
        Ok(())
    }
}

fn check_setup(x0: &[f64], coords: &[Coordinate], max_iters: usize) -> Result<()> {
    if x0.len() != coords.len() {
        return Err(Error::Dimension {
            expected: coords.len(),
            found: x0.len(),
        });
    }
    if max_iters == 0 {
        return Err(Error::validation("max_iters", "must be at least 1"));
    }
    if coords.iter().any(|c| !(c.step > 0.0)) {
        return Err(Error::validation("step", "steps must be positive"));
    }
    Ok(())
}

/// Run the configured optimizer.
pub fn minimize<F>(cost: F, x0: &[f64], coords: &[Coordinate], config: &OptimizerConfig) -> Result<OptimResult>
where
    F: Fn(&[f64], u64) -> Result<f64> + Sync,
{
    match config.kind {
        OptimizerKind::Spsa(c) => spsa_minimize(cost, x0, coords, &c, config.rng_seed, config.goal),
        OptimizerKind::HillClimb(c) => hill_climb_minimize(cost, x0, coords, &c, config.rng_seed, config.goal),
    }
}

fn project_all(x: &[f64], coords: &[Coordinate]) -> Vec<f64> {
    x.iter().zip(coords).map(|(v, c)| c.project(*v)).collect()
}

/// Simultaneous-perturbation stochastic approximation.
///
/// Works in coordinates normalized by each step. Each iteration evaluates
/// `x ± c_k Δ` (Rademacher Δ) rounded to the lattice, records their mean as
/// the iterate's cost and moves by `-a_k ĝ`. Returns the best recorded iterate.
pub fn spsa_minimize<F>(
    cost: F,
    x0: &[f64],
    coords: &[Coordinate],
    config: &SpsaConfig,
    rng_seed: u64,
    goal: Option<f64>,
) -> Result<OptimResult>
where
    F: Fn(&[f64], u64) -> Result<f64> + Sync,
{
    check_setup(x0, coords, config.max_iters)?;
    let dim = x0.len();
    let scale: Vec<f64> = coords.iter().map(|c| c.step).collect();
    let to_real = |u: &[f64]| -> Vec<f64> { project_all(&u.iter().zip(&scale).map(|(a, s)| a * s).collect::<Vec<_>>(), coords) };
    let mut u: Vec<f64> = x0.iter().zip(&scale).map(|(x, s)| x / s).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(rng_seed, u64::MAX));
    let big_a = config.big_a.unwrap_or(0.1 * config.max_iters as f64);
    let c = config.c.unwrap_or(1.0);

    let mut evals = 0usize;
    let mut result_trace: Vec<TraceEntry> = Vec::new();

    // one two-sided estimate; returns (f+, f-, Δ)
    let probe = |u: &[f64], ck: f64, tag: u64, rng: &mut ChaCha8Rng| -> Result<(f64, f64, Vec<f64>)> {
        let delta: Vec<f64> = (0..dim).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let up: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + ck * d).collect();
        let dn: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a - ck * d).collect();
        let fp = cost(&to_real(&up), seed::derive_path(rng_seed, &[tag, 0]))?;
        let fm = cost(&to_real(&dn), seed::derive_path(rng_seed, &[tag, 1]))?;
        Ok((fp, fm, delta))
    };

    let a = match config.a {
        Some(a) => a,
        None => {
            let mut mags = 0.0;
            let mut count = 0usize;
            for p in 0..config.pilot_samples {
                let (fp, fm, _) = probe(&u, c, (1u64 << 40) + p as u64, &mut rng)?;
                evals += 2;
                if !(fp.is_finite() && fm.is_finite()) {
                    return Ok(OptimResult {
                        best_params: x0.to_vec(),
                        best_cost: f64::NAN,
                        trace: result_trace,
                        stop: StopReason::NonFiniteCost,
                        evaluations: evals,
                    });
                }
                mags += ((fp - fm) / (2.0 * c)).abs();
                count += 1;
            }
            let mean = if count > 0 { mags / count as f64 } else { 0.0 };
            // first move of about one step along each coordinate
            if mean > 1e-12 {
                (big_a + 1.0).powf(config.alpha) / mean
            } else {
                0.1 * (big_a + 1.0).powf(config.alpha)
            }
        }
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut stop = StopReason::MaxIters;
    for k in 0..config.max_iters {
        let ak = a / (big_a + k as f64 + 1.0).powf(config.alpha);
        let ck = c / (k as f64 + 1.0).powf(config.gamma);
        let (fp, fm, delta) = probe(&u, ck, k as u64, &mut rng)?;
        evals += 2;
        let here = to_real(&u);
        if !(fp.is_finite() && fm.is_finite()) {
            stop = StopReason::NonFiniteCost;
            break;
        }
        let f = 0.5 * (fp + fm);
        result_trace.push(TraceEntry {
            iteration: k + 1,
            params: here.clone(),
            cost: f,
            evaluations_used: evals,
        });
        if best.as_ref().is_none_or(|(_, b)| f < *b) {
            best = Some((here, f));
        }
        if goal.is_some_and(|g| f <= g) {
            stop = StopReason::Goal;
            break;
        }
        let diff = (fp - fm) / (2.0 * ck);
        for (ui, di) in u.iter_mut().zip(&delta) {
            *ui -= ak * diff / di;
        }
    }
    let (best_params, best_cost) = best.unwrap_or_else(|| (project_all(x0, coords), f64::NAN));
    Ok(OptimResult {
        best_params,
        best_cost,
        trace: result_trace,
        stop,
        evaluations: evals,
    })
}

/// Steepest-descent hill climbing over all `2·dim` axis neighbors.
///
/// Neighbors are ordered by coordinate, minus before plus; the first of
/// equally good neighbors wins. With a deterministic cost the
/// incumbent-cost sequence never increases; with a stochastic one the
/// incumbent may be re-estimated each iteration (neighbor index 0 of that
/// iteration's seed path). Coarse lattice steps may be refined before
/// stopping, see [`HillClimbConfig::refine_steps`].
pub fn hill_climb_minimize<F>(
    cost: F,
    x0: &[f64],
    coords: &[Coordinate],
    config: &HillClimbConfig,
    rng_seed: u64,
    goal: Option<f64>,
) -> Result<OptimResult>
where
    F: Fn(&[f64], u64) -> Result<f64> + Sync,
{
    check_setup(x0, coords, config.max_iters)?;
    let dim = x0.len();
    let mut x = project_all(x0, coords);
    let f0 = cost(&x, seed::derive_path(rng_seed, &[0, 0]))?;
    let mut evals = 1;
    let mut trace = vec![TraceEntry {
        iteration: 0,
        params: x.clone(),
        cost: f0,
        evaluations_used: evals,
    }];
    if !f0.is_finite() {
        return Ok(OptimResult {
            best_params: x,
            best_cost: f0,
            trace,
            stop: StopReason::NonFiniteCost,
            evaluations: evals,
        });
    }
    let mut fx = f0;
    let mut stop = StopReason::MaxIters;
    if goal.is_some_and(|g| fx <= g) {
        stop = StopReason::Goal;
    } else {
        let mut steps: Vec<f64> = coords.iter().map(|c| c.step).collect();
        for it in 1..=config.max_iters {
            let neighbors: Vec<Vec<f64>> = (0..2 * dim)
                .map(|k| {
                    let (i, sign) = (k / 2, if k % 2 == 0 { -1.0 } else { 1.0 });
                    let mut y = x.clone();
                    y[i] = coords[i].project(y[i] + sign * steps[i]);
                    y
                })
                .collect();
            let (fresh, costs) = rayon::join(
                || {
                    config
                        .reestimate_incumbent
                        .then(|| cost(&x, seed::derive_path(rng_seed, &[it as u64, 0])))
                        .transpose()
                },
                || {
                    neighbors
                        .par_iter()
                        .enumerate()
                        .map(|(k, y)| cost(y, seed::derive_path(rng_seed, &[it as u64, k as u64 + 1])))
                        .collect::<Result<Vec<f64>>>()
                },
            );
            let (fresh, costs) = (fresh?, costs?);
            evals += costs.len() + usize::from(fresh.is_some());
            if costs.iter().chain(fresh.iter()).any(|c| !c.is_finite()) {
                stop = StopReason::NonFiniteCost;
                break;
            }
            if let Some(f) = fresh {
                fx = f;
            }
            let (k_best, f_best) = costs
                .iter()
                .enumerate()
                .fold((usize::MAX, f64::INFINITY), |acc, (k, &c)| if c < acc.1 { (k, c) } else { acc });
            if !(f_best < fx) {
                let mut refined = false;
                if config.refine_steps {
                    for (st, c) in steps.iter_mut().zip(coords) {
                        if let Some(r) = c.refined(*st) {
                            *st = r;
                            refined = true;
                        }
                    }
                }
                if refined {
                    continue;
                }
                stop = StopReason::NoImprovement;
                break;
            }
            x = neighbors[k_best].clone();
            fx = f_best;
            trace.push(TraceEntry {
                iteration: it,
                params: x.clone(),
                cost: fx,
                evaluations_used: evals,
            });
            if goal.is_some_and(|g| fx <= g) {
                stop = StopReason::Goal;
                break;
            }
        }
    }
    Ok(OptimResult {
        best_params: x,
        best_cost: fx,
        trace,
        stop,
        evaluations: evals,
    })
}

/// Default phase step for hill climbing, radians.
pub const DEFAULT_PHASE_STEP: f64 = PI / 16.0;

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(x: &[f64], _seed: u64) -> Result<f64> {
        Ok(x.iter().map(|v| (v - 3.0) * (v - 3.0)).sum())
    }

    #[test]
    fn spsa_solves_quadratic() {
        let coords = vec![Coordinate::continuous(1.0); 5];
        let cfg = SpsaConfig {
            max_iters: 200,
            ..SpsaConfig::default()
        };
        let r = spsa_minimize(quad, &[0.0; 5], &coords, &cfg, 42, None).unwrap();
        for v in &r.best_params {
            assert!((v - 3.0).abs() < 0.1, "{:?}", r.best_params);
        }
    }

    #[test]
    fn spsa_constant_cost_stays_put() {
        let coords = vec![Coordinate::continuous(1.0); 3];
        let cfg = SpsaConfig {
            max_iters: 20,
            ..SpsaConfig::default()
        };
        let x0 = [0.5, -1.0, 2.0];
        let r = spsa_minimize(|_: &[f64], _| Ok(4.0), &x0, &coords, &cfg, 1, None).unwrap();
        assert_eq!(r.best_params, x0.to_vec());
        assert_eq!(r.best_cost, 4.0);
    }

    #[test]
    fn spsa_two_evaluations_per_iteration() {
        let coords = vec![Coordinate::continuous(1.0); 4];
        let cfg = SpsaConfig {
            max_iters: 15,
            ..SpsaConfig::default()
        };
        let r = spsa_minimize(quad, &[0.0; 4], &coords, &cfg, 9, None).unwrap();
        assert_eq!(r.trace.len(), 15);
        for w in r.trace.windows(2) {
            assert_eq!(w[1].evaluations_used - w[0].evaluations_used, 2);
            assert!(w[1].iteration > w[0].iteration);
        }
    }

    #[test]
    fn spsa_rounds_lattice_coordinates() {
        let coords = vec![Coordinate::lattice(16.0, 16.0); 2];
        let cfg = SpsaConfig {
            max_iters: 10,
            ..SpsaConfig::default()
        };
        let seen = std::sync::Mutex::new(Vec::new());
        let f = |x: &[f64], _| {
            seen.lock().unwrap().extend_from_slice(x);
            Ok(x.iter().map(|v| (v - 40.0).powi(2)).sum())
        };
        spsa_minimize(f, &[0.0, 0.0], &coords, &cfg, 3, None).unwrap();
        assert!(seen.lock().unwrap().iter().all(|v| v % 16.0 == 0.0));
    }

    #[test]
    fn hill_climb_descends_abs() {
        let coords = [Coordinate::lattice(1.0, 1.0)];
        let r = hill_climb_minimize(|x: &[f64], _| Ok(x[0].abs()), &[3.0], &coords, &HillClimbConfig::default(), 0, None)
            .unwrap();
        assert_eq!(r.best_params, vec![0.0]);
        assert_eq!(r.iterations(), 3);
        assert_eq!(r.stop, StopReason::NoImprovement);
    }

    #[test]
    fn hill_climb_local_minimum_has_single_entry() {
        let coords = [Coordinate::lattice(1.0, 1.0); 2];
        let r = hill_climb_minimize(
            |x: &[f64], _| Ok(x[0].abs() + x[1].abs()),
            &[0.0, 0.0],
            &coords,
            &HillClimbConfig::default(),
            0,
            None,
        )
        .unwrap();
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn hill_climb_respects_iteration_cap() {
        let coords = [Coordinate::lattice(1.0, 1.0)];
        let r = hill_climb_minimize(|x: &[f64], _| Ok(-x[0]), &[0.0], &coords, &HillClimbConfig::default(), 0, None)
            .unwrap();
        assert_eq!(r.trace.len(), 31);
        assert_eq!(r.stop, StopReason::MaxIters);
    }

    #[test]
    fn hill_climb_tie_prefers_minus_of_lowest_coordinate() {
        let coords = [Coordinate::lattice(1.0, 1.0); 2];
        let cfg = HillClimbConfig {
            max_iters: 1,
            ..HillClimbConfig::default()
        };
        let r = hill_climb_minimize(|x: &[f64], _| Ok(-(x[0].abs() + x[1].abs())), &[0.0, 0.0], &coords, &cfg, 0, None)
            .unwrap();
        assert_eq!(r.best_params, vec![-1.0, 0.0]);
    }

    #[test]
    fn hill_climb_stops_at_goal() {
        let coords = [Coordinate::lattice(1.0, 1.0)];
        let r = hill_climb_minimize(|x: &[f64], _| Ok(x[0].abs()), &[10.0], &coords, &HillClimbConfig::default(), 0, Some(7.5))
            .unwrap();
        assert_eq!(r.best_params, vec![7.0]);
        assert_eq!(r.stop, StopReason::Goal);
    }

    #[test]
    fn non_finite_cost_aborts() {
        let coords = [Coordinate::lattice(1.0, 1.0)];
        let r = hill_climb_minimize(
            |x: &[f64], _| Ok(if x[0] < 1.0 { f64::NAN } else { x[0] }),
            &[3.0],
            &coords,
            &HillClimbConfig::default(),
            0,
            None,
        )
        .unwrap();
        assert_eq!(r.stop, StopReason::NonFiniteCost);
        assert!(r.check_finite().is_err());
    }

    #[test]
    fn lucky_first_sample_is_reestimated() {
        // the start point reads low once (seed of the initial evaluation),
        // but its true cost is worse than the neighbor at x = 1
        let coords = [Coordinate::lattice(1.0, 1.0)];
        let first = seed::derive_path(9, &[0, 0]);
        let cost = move |x: &[f64], s: u64| Ok(if s == first { -10.0 } else { (x[0] - 1.0).abs() });
        let stale = HillClimbConfig {
            reestimate_incumbent: false,
            ..HillClimbConfig::default()
        };
        let r = hill_climb_minimize(cost, &[0.0], &coords, &stale, 9, None).unwrap();
        assert_eq!(r.best_params, vec![0.0]);
        assert_eq!(r.evaluations, 3);
        let r = hill_climb_minimize(cost, &[0.0], &coords, &HillClimbConfig::default(), 9, None).unwrap();
        assert_eq!(r.best_params, vec![1.0]);
        // 1 initial + 2 iterations of (incumbent + 2 neighbors)
        assert_eq!(r.evaluations, 7);
    }
}

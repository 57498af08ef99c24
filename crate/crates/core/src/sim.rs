//! Monte Carlo evaluation of online controllers against their
//! dynamic-programming values.
//!
//! Episodes are embarrassingly parallel: episode `i` draws from RNG stream
//! `i`, so results are independent of thread scheduling, and the final
//! reduction is a sequential compensated sum over the collected per-episode
//! returns.

use rayon::prelude::*;

use crate::model::{
    sample_trajectory_one, sample_trajectory_two, DeviceController, ModelParams, SingleController,
};
use crate::SolveError;

pub const DEFAULT_EPISODES: usize = 200_000;
/// With `beta = 0.9` this keeps the truncation tail below 1e-4 of the reward
/// scale.
pub const DEFAULT_HORIZON: usize = 88;

#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalReport {
    pub mean: f64,
    pub stderr: f64,
    pub episodes: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Bound on the discounted reward mass beyond the simulated horizon.
    pub tail_bound: f64,
    pub dp_reference: Option<f64>,
    pub abs_gap: Option<f64>,
    /// `|mean - dp_reference| <= 3 * stderr + tail_bound`.
    pub within_bound: Option<bool>,
}

impl EvalReport {
    pub fn with_reference(mut self, dp_reference: f64) -> EvalReport {
        let gap = (self.mean - dp_reference).abs();
        self.dp_reference = Some(dp_reference);
        self.abs_gap = Some(gap);
        self.within_bound = Some(gap <= 3.0 * self.stderr + self.tail_bound);
        self
    }
}

fn tail_bound(params: &ModelParams, horizon: usize) -> f64 {
    let per_step = params.r.max(2.0 * params.c);
    params.beta.powi(horizon as i32) * per_step / (1.0 - params.beta)
}

/// Neumaier-compensated sum, applied in fixed episode order.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn report(
    params: &ModelParams,
    returns: Vec<f64>,
    horizon: usize,
    seed: u64,
) -> EvalReport {
    let n = returns.len();
    let mean = compensated_sum(returns.iter().copied()) / n as f64;
    let ss = compensated_sum(returns.iter().map(|x| (x - mean) * (x - mean)));
    let stderr = if n > 1 { (ss / (n as f64 - 1.0) / n as f64).sqrt() } else { 0.0 };
    EvalReport {
        mean,
        stderr,
        episodes: n,
        horizon,
        seed,
        tail_bound: tail_bound(params, horizon),
        dp_reference: None,
        abs_gap: None,
        within_bound: None,
    }
}

/// Monte Carlo estimate of the expected discounted return of a two-device
/// controller pair. `factory` builds a fresh controller pair per episode.
pub fn evaluate_two<F>(
    params: &ModelParams,
    factory: F,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<EvalReport, SolveError>
where
    F: Fn() -> (Box<dyn DeviceController>, Box<dyn DeviceController>) + Sync,
{
    params.validate()?;
    assert!(episodes >= 2 && horizon >= 1);
    let returns = (0..episodes)
        .into_par_iter()
        .map(|episode| {
            let (mut c1, mut c2) = factory();
            let traj = sample_trajectory_two(
                params,
                c1.as_mut(),
                c2.as_mut(),
                horizon,
                seed,
                episode as u64,
            )?;
            Ok(traj.discounted_return(params.beta))
        })
        .collect::<Result<Vec<f64>, crate::model::ModelError>>()?;
    Ok(report(params, returns, horizon, seed))
}

/// Monte Carlo estimate for the single-device system.
pub fn evaluate_one<F>(
    params: &ModelParams,
    factory: F,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<EvalReport, SolveError>
where
    F: Fn() -> Box<dyn SingleController> + Sync,
{
    params.validate()?;
    assert!(episodes >= 2 && horizon >= 1);
    let returns = (0..episodes)
        .into_par_iter()
        .map(|episode| {
            let mut ctrl = factory();
            let traj =
                sample_trajectory_one(params, ctrl.as_mut(), horizon, seed, episode as u64)?;
            Ok(traj.discounted_return(params.beta))
        })
        .collect::<Result<Vec<f64>, crate::model::ModelError>>()?;
    Ok(report(params, returns, horizon, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centralized::{solve_centralized, CentralizedController};
    use crate::coordinated::{decentralize, solve_coordinated};
    use crate::model::{reference_params, NeverTransmit};
    use crate::RecursionMode;

    #[test]
    fn never_transmit_scores_zero() {
        let params = reference_params(0.3, 0.3, 0.3);
        let report = evaluate_two(
            &params,
            || (Box::new(NeverTransmit), Box::new(NeverTransmit)),
            100,
            20,
            1,
        )
        .unwrap();
        assert_eq!(report.mean, 0.0);
        assert_eq!(report.stderr, 0.0);
    }

    #[test]
    fn same_seed_reproduces_report() {
        let params = reference_params(0.3, 0.3, 0.2);
        let sol = solve_coordinated(&params, 20, 20, RecursionMode::AsPrinted, 1e-10).unwrap();
        let run = || {
            evaluate_two(
                &params,
                || {
                    let (a, b) = decentralize(&sol);
                    (Box::new(a) as _, Box::new(b) as _)
                },
                500,
                30,
                42,
            )
            .unwrap()
        };
        let (r1, r2) = (run(), run());
        assert_eq!(r1.mean, r2.mean);
        assert_eq!(r1.stderr, r2.stderr);
    }

    #[test]
    fn centralized_mc_matches_dp_reference() {
        let params = reference_params(0.2, 0.2, 0.2);
        let sol =
            solve_centralized(&params, 60, RecursionMode::BayesConsistent, 1e-10).unwrap();
        let report = evaluate_one(
            &params,
            || Box::new(CentralizedController::new(&sol)) as _,
            20_000,
            60,
            7,
        )
        .unwrap()
        .with_reference(sol.reference_value());
        assert!(
            report.within_bound.unwrap(),
            "gap {} vs 3*stderr {} + tail {}",
            report.abs_gap.unwrap(),
            3.0 * report.stderr,
            report.tail_bound
        );
    }

    #[test]
    fn tail_bound_shrinks_geometrically() {
        let params = reference_params(0.3, 0.3, 0.3);
        let short = tail_bound(&params, 10);
        let long = tail_bound(&params, 20);
        assert!((long / short - params.beta.powi(10)).abs() < 1e-12);
    }
}

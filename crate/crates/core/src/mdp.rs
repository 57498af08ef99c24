//! Generic exact solver for finite (truncated-countable) state, finite-action,
//! stationary discounted MDPs.
//!
//! States and actions are dense indices. Problem structure is supplied through
//! the [`Mdp`] trait so large solvers can generate transitions on the fly
//! instead of materializing them; [`TableMdp`] is the explicit representation
//! used by tests and small models.

use rayon::prelude::*;
use thiserror::Error;

/// Default sup-norm stopping tolerance for value iteration.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default sweep limit.
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Probability-sum validation tolerance.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("state {state}, action {action}: transition probabilities sum to {sum}, not 1")]
    BadProbabilitySum { state: usize, action: usize, sum: f64 },
    #[error("state {state}, action {action}: transition probability {prob} outside [0,1]")]
    BadProbability { state: usize, action: usize, prob: f64 },
    #[error("state {state}, action {action}: next state {next} out of range ({num_states} states)")]
    BadNextState { state: usize, action: usize, next: usize, num_states: usize },
    #[error("state {state} has no actions")]
    NoActions { state: usize },
    #[error("discount {0} outside (0,1)")]
    BadDiscount(f64),
    #[error("value iteration tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("policy assigns action {action} at state {state}, which has {num_actions} actions")]
    BadPolicyAction { state: usize, action: usize, num_actions: usize },
}

/// A stationary discounted MDP over dense state indices `0..num_states()`.
/// Actions at each state are `0..num_actions(state)`.
pub trait Mdp: Sync {
    fn num_states(&self) -> usize;
    fn num_actions(&self, state: usize) -> usize;
    /// Calls `visit(probability, next_state, reward)` for every transition
    /// branch of `(state, action)`. Probabilities must sum to 1.
    fn for_each_transition(
        &self,
        state: usize,
        action: usize,
        visit: &mut dyn FnMut(f64, usize, f64),
    );
    fn discount(&self) -> f64;
}

/// One value per enumerated state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable(pub Vec<f64>);

impl ValueTable {
    pub fn zeros(n: usize) -> Self {
        ValueTable(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_distance(&self, other: &ValueTable) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Debug dump as `state_id,value` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "state_id,value")?;
        for (i, v) in self.0.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        Ok(())
    }
}

/// One chosen action per enumerated state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable(pub Vec<usize>);

impl PolicyTable {
    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }
}

/// Result of an iterative solve. `converged` distinguishes hitting the
/// tolerance from hitting the sweep limit; callers must not treat a
/// non-converged table as a fixed point.
#[derive(Debug, Clone)]
pub struct IterativeSolve {
    pub values: ValueTable,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Sup-norm residual after each sweep, for contraction audits.
    pub residuals: Vec<f64>,
}

/// Checks the structural invariants of an MDP: nonempty action sets, in-range
/// successor states, probabilities in [0,1] summing to 1 within [`PROB_TOL`].
pub fn validate(mdp: &impl Mdp) -> Result<(), MdpError> {
    if !(mdp.discount() > 0.0 && mdp.discount() < 1.0) {
        return Err(MdpError::BadDiscount(mdp.discount()));
    }
    let n = mdp.num_states();
    for s in 0..n {
        let na = mdp.num_actions(s);
        if na == 0 {
            return Err(MdpError::NoActions { state: s });
        }
        for a in 0..na {
            let mut sum = 0.0;
            let mut err = None;
            mdp.for_each_transition(s, a, &mut |p, next, _r| {
                if !(0.0..=1.0 + PROB_TOL).contains(&p) {
                    err.get_or_insert(MdpError::BadProbability { state: s, action: a, prob: p });
                }
                if next >= n {
                    err.get_or_insert(MdpError::BadNextState {
                        state: s,
                        action: a,
                        next,
                        num_states: n,
                    });
                }
                sum += p;
            });
            if let Some(e) = err {
                return Err(e);
            }
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(MdpError::BadProbabilitySum { state: s, action: a, sum });
            }
        }
    }
    Ok(())
}

fn q_value(mdp: &impl Mdp, v: &[f64], state: usize, action: usize) -> f64 {
    let beta = mdp.discount();
    let mut q = 0.0;
    mdp.for_each_transition(state, action, &mut |p, next, r| {
        q += p * (r + beta * v[next]);
    });
    q
}

fn backup_state(mdp: &impl Mdp, v: &[f64], state: usize) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut best_a = 0;
    for a in 0..mdp.num_actions(state) {
        let q = q_value(mdp, v, state, a);
        if q > best {
            best = q;
            best_a = a;
        }
    }
    (best, best_a)
}

/// One Bellman backup: the maximized new value table plus all q-values.
pub fn bellman_backup(mdp: &impl Mdp, v: &ValueTable) -> (ValueTable, Vec<Vec<f64>>) {
    let out: Vec<(f64, Vec<f64>)> = (0..mdp.num_states())
        .into_par_iter()
        .map(|s| {
            let qs: Vec<f64> = (0..mdp.num_actions(s))
                .map(|a| q_value(mdp, &v.0, s, a))
                .collect();
            let best = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (best, qs)
        })
        .collect();
    let (values, q): (Vec<f64>, Vec<Vec<f64>>) = out.into_iter().unzip();
    (ValueTable(values), q)
}

/// Plain value iteration from `V = 0` to sup-norm residual `tol`.
pub fn value_iteration(
    mdp: &impl Mdp,
    tol: f64,
    max_iter: usize,
) -> Result<IterativeSolve, MdpError> {
    if !(tol > 0.0) {
        return Err(MdpError::BadTolerance(tol));
    }
    let mut v = vec![0.0; mdp.num_states()];
    let mut residuals = Vec::new();
    for iter in 1..=max_iter {
        let next: Vec<f64> = (0..mdp.num_states())
            .into_par_iter()
            .map(|s| backup_state(mdp, &v, s).0)
            .collect();
        let residual = sup_diff(&v, &next);
        residuals.push(residual);
        v = next;
        if residual <= tol {
            return Ok(IterativeSolve {
                values: ValueTable(v),
                iterations: iter,
                residual,
                converged: true,
                residuals,
            });
        }
    }
    let residual = residuals.last().copied().unwrap_or(f64::INFINITY);
    Ok(IterativeSolve {
        values: ValueTable(v),
        iterations: max_iter,
        residual,
        converged: false,
        residuals,
    })
}

/// Greedy policy with respect to `v`. Ties break toward the lowest action id.
pub fn extract_policy(mdp: &impl Mdp, v: &ValueTable) -> PolicyTable {
    let actions: Vec<usize> = (0..mdp.num_states())
        .into_par_iter()
        .map(|s| backup_state(mdp, &v.0, s).1)
        .collect();
    PolicyTable(actions)
}

/// Fixed point of the policy-restricted backup.
pub fn policy_evaluation(
    mdp: &impl Mdp,
    policy: &PolicyTable,
    tol: f64,
    max_iter: usize,
) -> Result<IterativeSolve, MdpError> {
    if !(tol > 0.0) {
        return Err(MdpError::BadTolerance(tol));
    }
    for s in 0..mdp.num_states() {
        let a = policy.action(s);
        if a >= mdp.num_actions(s) {
            return Err(MdpError::BadPolicyAction {
                state: s,
                action: a,
                num_actions: mdp.num_actions(s),
            });
        }
    }
    let mut v = vec![0.0; mdp.num_states()];
    let mut residuals = Vec::new();
    for iter in 1..=max_iter {
        let next: Vec<f64> = (0..mdp.num_states())
            .into_par_iter()
            .map(|s| q_value(mdp, &v, s, policy.action(s)))
            .collect();
        let residual = sup_diff(&v, &next);
        residuals.push(residual);
        v = next;
        if residual <= tol {
            return Ok(IterativeSolve {
                values: ValueTable(v),
                iterations: iter,
                residual,
                converged: true,
                residuals,
            });
        }
    }
    let residual = residuals.last().copied().unwrap_or(f64::INFINITY);
    Ok(IterativeSolve {
        values: ValueTable(v),
        iterations: max_iter,
        residual,
        converged: false,
        residuals,
    })
}

/// Backward induction: returns stage values `[V_1, ..., V_horizon]` where
/// `V_T` is the maximal expected discounted reward over `T` remaining steps
/// (terminal value zero).
pub fn finite_horizon_dp(mdp: &impl Mdp, horizon: usize) -> Vec<ValueTable> {
    assert!(horizon >= 1, "horizon must be at least 1");
    let mut stages = Vec::with_capacity(horizon);
    let mut v = ValueTable::zeros(mdp.num_states());
    for _ in 0..horizon {
        let next: Vec<f64> = (0..mdp.num_states())
            .into_par_iter()
            .map(|s| backup_state(mdp, &v.0, s).0)
            .collect();
        v = ValueTable(next);
        stages.push(v.clone());
    }
    stages
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Explicit tabular MDP.
#[derive(Debug, Clone)]
pub struct TableMdp {
    /// `transitions[state][action]` is a list of `(probability, next, reward)`.
    pub transitions: Vec<Vec<Vec<(f64, usize, f64)>>>,
    pub discount: f64,
}

impl TableMdp {
    /// Builds and validates. Probability sums within [`PROB_TOL`] of 1 are
    /// renormalized; anything worse is rejected.
    pub fn new(
        transitions: Vec<Vec<Vec<(f64, usize, f64)>>>,
        discount: f64,
    ) -> Result<Self, MdpError> {
        let mut mdp = TableMdp { transitions, discount };
        validate(&mdp)?;
        for actions in &mut mdp.transitions {
            for branches in actions {
                let sum: f64 = branches.iter().map(|t| t.0).sum();
                for t in branches {
                    t.0 /= sum;
                }
            }
        }
        Ok(mdp)
    }
}

impl Mdp for TableMdp {
    fn num_states(&self) -> usize {
        self.transitions.len()
    }

    fn num_actions(&self, state: usize) -> usize {
        self.transitions[state].len()
    }

    fn for_each_transition(
        &self,
        state: usize,
        action: usize,
        visit: &mut dyn FnMut(f64, usize, f64),
    ) {
        for &(p, next, r) in &self.transitions[state][action] {
            visit(p, next, r);
        }
    }

    fn discount(&self) -> f64 {
        self.discount
    }
}

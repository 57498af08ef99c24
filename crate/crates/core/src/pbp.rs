//! Person-by-person best-response iteration.
//!
//! Each device's strategy is kept in prescription form: a transmit bit per
//! common-information state `(k, l, (s, m))`. A best response pins the
//! partner's bit at every state and solves the resulting two-action MDP
//! exactly, so a round of iteration is two full value-iteration solves. The
//! coordinated optimum is a fixed point of this map; the iteration also
//! reports cycles, which can occur from arbitrary starting points.

use crate::coordinated::{build_coordinated_mdp, CoordinatedMdp, Prescription, PRESCRIPTIONS};
use crate::mdp::{self, Mdp, PolicyTable, ValueTable, DEFAULT_MAX_ITER};
use crate::model::ModelParams;
use crate::{RecursionMode, SolveError};

/// One device's strategy in prescription form: `d[state_id]` is the transmit
/// bit the device applies (when its buffer is nonempty) at that
/// common-information state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceStrategy {
    pub device: usize,
    pub d: Vec<u8>,
}

impl DeviceStrategy {
    pub fn silent(device: usize, num_states: usize) -> Self {
        DeviceStrategy { device, d: vec![0; num_states] }
    }

    /// Extract one device's component from a joint prescription policy.
    pub fn from_policy(device: usize, policy: &PolicyTable) -> Self {
        let d = policy
            .0
            .iter()
            .map(|&a| {
                let p = PRESCRIPTIONS[a];
                if device == 1 {
                    p.d1
                } else {
                    p.d2
                }
            })
            .collect();
        DeviceStrategy { device, d }
    }
}

/// Combine two device strategies into a joint prescription policy.
pub fn joint_policy(s1: &DeviceStrategy, s2: &DeviceStrategy) -> PolicyTable {
    assert_eq!(s1.device, 1);
    assert_eq!(s2.device, 2);
    assert_eq!(s1.d.len(), s2.d.len());
    let actions = s1
        .d
        .iter()
        .zip(&s2.d)
        .map(|(&d1, &d2)| {
            PRESCRIPTIONS.iter().position(|p| *p == Prescription { d1, d2 }).unwrap()
        })
        .collect();
    PolicyTable(actions)
}

/// The responder's decision problem: the partner's prescription bit is frozen
/// at every state, leaving two actions (stay silent / transmit).
pub struct BestResponseMdp<'a> {
    base: &'a CoordinatedMdp,
    partner: &'a DeviceStrategy,
}

impl BestResponseMdp<'_> {
    fn responder(&self) -> usize {
        3 - self.partner.device
    }

    fn joint_action(&self, state: usize, own_d: u8) -> usize {
        let partner_d = self.partner.d[state];
        let presc = if self.responder() == 1 {
            Prescription { d1: own_d, d2: partner_d }
        } else {
            Prescription { d1: partner_d, d2: own_d }
        };
        PRESCRIPTIONS.iter().position(|p| *p == presc).unwrap()
    }
}

impl Mdp for BestResponseMdp<'_> {
    fn num_states(&self) -> usize {
        self.base.num_states()
    }

    fn num_actions(&self, _state: usize) -> usize {
        2
    }

    fn for_each_transition(
        &self,
        state: usize,
        action: usize,
        visit: &mut dyn FnMut(f64, usize, f64),
    ) {
        self.base.for_each_transition(state, self.joint_action(state, action as u8), visit);
    }

    fn discount(&self) -> f64 {
        self.base.discount()
    }
}

#[derive(Debug, Clone)]
pub struct BestResponse {
    pub strategy: DeviceStrategy,
    pub values: ValueTable,
}

/// Exact best response of the remaining device against a fixed partner
/// strategy.
pub fn best_response(
    base: &CoordinatedMdp,
    partner: &DeviceStrategy,
    tol: f64,
) -> Result<BestResponse, SolveError> {
    let br = BestResponseMdp { base, partner };
    let solve = mdp::value_iteration(&br, tol, DEFAULT_MAX_ITER)?;
    if !solve.converged {
        return Err(SolveError::NotConverged {
            residual: solve.residual,
            iterations: solve.iterations,
        });
    }
    let policy = mdp::extract_policy(&br, &solve.values);
    let strategy = DeviceStrategy {
        device: br.responder(),
        d: policy.0.iter().map(|&a| a as u8).collect(),
    };
    Ok(BestResponse { strategy, values: solve.values })
}

/// Value of a joint strategy pair at every state.
pub fn evaluate_joint(
    base: &CoordinatedMdp,
    s1: &DeviceStrategy,
    s2: &DeviceStrategy,
) -> Result<ValueTable, SolveError> {
    let solve =
        mdp::policy_evaluation(base, &joint_policy(s1, s2), mdp::DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    Ok(solve.values)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PbpRound {
    pub round: usize,
    pub device: usize,
    /// States where the responder's bit changed.
    pub strategy_changes: usize,
    /// Sup-norm change of the joint value against the previous round.
    pub value_change: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PbpSummary {
    pub rounds: Vec<PbpRound>,
    pub converged: bool,
    pub cycle_detected: bool,
}

#[derive(Debug, Clone)]
pub struct PbpOutcome {
    pub summary: PbpSummary,
    pub strategy1: DeviceStrategy,
    pub strategy2: DeviceStrategy,
    pub values: ValueTable,
}

/// Alternate exact best responses until neither device changes its strategy.
///
/// Convergence yields a person-by-person optimal (equilibrium) pair, which
/// need not be globally optimal. Revisiting a previously seen strategy pair
/// without having converged is reported as a cycle.
pub fn pbp_iteration(
    params: &ModelParams,
    k_cap: u32,
    m_cap: u32,
    mode: RecursionMode,
    init: Option<(DeviceStrategy, DeviceStrategy)>,
    max_rounds: usize,
    tol: f64,
) -> Result<PbpOutcome, SolveError> {
    let base = build_coordinated_mdp(params, k_cap, m_cap, mode)?;
    let n = base.num_states();
    let (mut s1, mut s2) = init.unwrap_or_else(|| {
        (DeviceStrategy::silent(1, n), DeviceStrategy::silent(2, n))
    });
    assert_eq!(s1.device, 1);
    assert_eq!(s2.device, 2);
    let mut values = evaluate_joint(&base, &s1, &s2)?;
    let mut rounds = Vec::new();
    let mut seen = std::collections::HashSet::new();
    seen.insert((s1.d.clone(), s2.d.clone()));
    let mut converged = false;
    let mut cycle_detected = false;
    for round in 0..max_rounds {
        let mut changes_this_round = 0;
        for device in [1, 2] {
            let partner = if device == 1 { &s2 } else { &s1 };
            let br = best_response(&base, partner, tol)?;
            let old = if device == 1 { &s1 } else { &s2 };
            let strategy_changes =
                old.d.iter().zip(&br.strategy.d).filter(|(a, b)| a != b).count();
            changes_this_round += strategy_changes;
            if device == 1 {
                s1 = br.strategy;
            } else {
                s2 = br.strategy;
            }
            let new_values = evaluate_joint(&base, &s1, &s2)?;
            let value_change = values.sup_distance(&new_values);
            values = new_values;
            rounds.push(PbpRound { round, device, strategy_changes, value_change });
        }
        if changes_this_round == 0 {
            converged = true;
            break;
        }
        if !seen.insert((s1.d.clone(), s2.d.clone())) {
            cycle_detected = true;
            break;
        }
    }
    Ok(PbpOutcome {
        summary: PbpSummary { rounds, converged, cycle_detected },
        strategy1: s1,
        strategy2: s2,
        values,
    })
}

//! The single-device problem as a discounted MDP on the information state
//! `(buffer, channel belief index)`, truncated at staleness `M`.
//!
//! The transmit branch exists in two flavors (see [`RecursionMode`]): the
//! printed recursion keeps the pre-transmission channel index alive on the
//! failure branch, while the Bayes-consistent one resets the index to the
//! observed channel state in every branch, as the observation model implies.

use crate::belief::{q_table, ChannelBeliefIndex};
use crate::mdp::{self, IterativeSolve, Mdp, PolicyTable, ValueTable, DEFAULT_MAX_ITER};
use crate::model::{ChannelFeedback, ModelParams, SingleController};
use crate::{RecursionMode, SolveError};

/// Information state of the single-device problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CentralizedInfoState {
    pub n: u8,
    pub channel: ChannelBeliefIndex,
}

/// The single-device MDP over `{0,1} x {(s,m) : s in {0,1}, 1 <= m <= M}`.
/// Action 0 is "stay silent"; action 1 (present only when `n = 1`) is
/// "transmit".
#[derive(Debug, Clone)]
pub struct CentralizedMdp {
    params: ModelParams,
    m_cap: u32,
    mode: RecursionMode,
    q: [Vec<f64>; 2],
}

pub const ACTION_STAY: usize = 0;
pub const ACTION_TRANSMIT: usize = 1;

impl CentralizedMdp {
    pub fn m_cap(&self) -> u32 {
        self.m_cap
    }

    pub fn state_id(&self, state: CentralizedInfoState) -> usize {
        let m = self.m_cap as usize;
        state.n as usize * 2 * m + state.channel.s as usize * m + (state.channel.m as usize - 1)
    }

    pub fn state_of(&self, id: usize) -> CentralizedInfoState {
        let m = self.m_cap as usize;
        CentralizedInfoState {
            n: (id / (2 * m)) as u8,
            channel: ChannelBeliefIndex::new(((id / m) % 2) as u8, (id % m + 1) as u32),
        }
    }

    fn aged(&self, chan: ChannelBeliefIndex) -> usize {
        let m = chan.m.min(self.m_cap - 1) + 1;
        self.state_id(CentralizedInfoState { n: 1, channel: ChannelBeliefIndex::new(chan.s, m) })
    }

    /// Probability the channel is busy at the given belief index.
    pub fn busy_prob(&self, chan: ChannelBeliefIndex) -> f64 {
        self.q[chan.s as usize][chan.m as usize - 1]
    }
}

impl Mdp for CentralizedMdp {
    fn num_states(&self) -> usize {
        4 * self.m_cap as usize
    }

    fn num_actions(&self, state: usize) -> usize {
        if self.state_of(state).n == 1 {
            2
        } else {
            1
        }
    }

    fn for_each_transition(
        &self,
        state: usize,
        action: usize,
        visit: &mut dyn FnMut(f64, usize, f64),
    ) {
        let st = self.state_of(state);
        let p = self.params.p1;
        let aged_full = self.aged(st.channel);
        let aged_empty = aged_full - 2 * self.m_cap as usize;
        match (st.n, action) {
            (0, ACTION_STAY) => {
                visit(1.0 - p, aged_empty, 0.0);
                visit(p, aged_full, 0.0);
            }
            (1, ACTION_STAY) => {
                visit(1.0, aged_full, 0.0);
            }
            (1, ACTION_TRANSMIT) => {
                let q = self.busy_prob(st.channel);
                let reward = (1.0 - q) * self.params.r - self.params.c;
                let fresh = |s: u8, n: u8| {
                    self.state_id(CentralizedInfoState {
                        n,
                        channel: ChannelBeliefIndex::new(s, 1),
                    })
                };
                match self.mode {
                    RecursionMode::AsPrinted => {
                        visit((1.0 - p) * (1.0 - q), fresh(0, 0), reward);
                        visit(p * (1.0 - q) + q, aged_full, reward);
                    }
                    RecursionMode::BayesConsistent => {
                        visit((1.0 - p) * (1.0 - q), fresh(0, 0), reward);
                        visit(p * (1.0 - q), fresh(0, 1), reward);
                        visit(q, fresh(1, 1), reward);
                    }
                }
            }
            _ => unreachable!("no such action"),
        }
    }

    fn discount(&self) -> f64 {
        self.params.beta
    }
}

pub fn build_centralized_mdp(
    params: &ModelParams,
    m_cap: u32,
    mode: RecursionMode,
) -> Result<CentralizedMdp, SolveError> {
    params.validate()?;
    if m_cap < 2 {
        return Err(SolveError::BadCap { name: "M", value: m_cap });
    }
    Ok(CentralizedMdp { params: *params, m_cap, mode, q: q_table(params, m_cap) })
}

/// Smallest staleness at which the solved policy transmits, per last observed
/// channel state. `AtLeast(M)` means no transmit action appeared within the
/// truncated range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Threshold {
    At(u32),
    AtLeast(u32),
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::At(k) => write!(f, "{k}"),
            Threshold::AtLeast(m) => write!(f, ">={m}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CentralizedSolution {
    pub mdp: CentralizedMdp,
    pub values: ValueTable,
    pub policy: PolicyTable,
    /// `(k_0, k_1)`.
    pub thresholds: [Threshold; 2],
    pub solve: IterativeSolve,
}

impl CentralizedSolution {
    pub fn action(&self, state: CentralizedInfoState) -> usize {
        self.policy.action(self.mdp.state_id(state))
    }

    pub fn value(&self, state: CentralizedInfoState) -> f64 {
        self.values.0[self.mdp.state_id(state)]
    }

    /// Value at the synchronization-point start: channel drawn from the
    /// stationary distribution and revealed, buffer from one arrival draw.
    pub fn reference_value(&self) -> f64 {
        let params = &self.mdp.params;
        let pi1 = params.stationary_busy();
        let p = params.p1;
        let mut total = 0.0;
        for (s, w) in [(0u8, 1.0 - pi1), (1u8, pi1)] {
            for (n, wn) in [(0u8, 1.0 - p), (1u8, p)] {
                total += w
                    * wn
                    * self.value(CentralizedInfoState {
                        n,
                        channel: ChannelBeliefIndex::new(s, 1),
                    });
            }
        }
        total
    }
}

pub fn solve_centralized(
    params: &ModelParams,
    m_cap: u32,
    mode: RecursionMode,
    tol: f64,
) -> Result<CentralizedSolution, SolveError> {
    let mdp = build_centralized_mdp(params, m_cap, mode)?;
    let solve = mdp::value_iteration(&mdp, tol, DEFAULT_MAX_ITER)?;
    if !solve.converged {
        return Err(SolveError::NotConverged {
            residual: solve.residual,
            iterations: solve.iterations,
        });
    }
    let policy = mdp::extract_policy(&mdp, &solve.values);
    let mut thresholds = [Threshold::AtLeast(m_cap); 2];
    for s in 0..2u8 {
        for m in 1..=m_cap {
            let id = mdp.state_id(CentralizedInfoState {
                n: 1,
                channel: ChannelBeliefIndex::new(s, m),
            });
            if policy.action(id) == ACTION_TRANSMIT {
                thresholds[s as usize] = Threshold::At(m);
                break;
            }
        }
    }
    Ok(CentralizedSolution { mdp, values: solve.values.clone(), policy, thresholds, solve })
}

/// Online controller that replays a solved policy by maintaining the channel
/// belief index from its own feedback stream.
#[derive(Debug, Clone)]
pub struct CentralizedController {
    policy: std::sync::Arc<PolicyTable>,
    m_cap: u32,
    chan: ChannelBeliefIndex,
}

impl CentralizedController {
    pub fn new(solution: &CentralizedSolution) -> Self {
        CentralizedController {
            policy: std::sync::Arc::new(solution.policy.clone()),
            m_cap: solution.mdp.m_cap,
            chan: ChannelBeliefIndex::new(0, 1),
        }
    }

    fn state_id(&self, n: u8) -> usize {
        let m = self.m_cap as usize;
        n as usize * 2 * m + self.chan.s as usize * m + (self.chan.m as usize - 1)
    }
}

impl SingleController for CentralizedController {
    fn start(&mut self, observed_channel: u8) {
        self.chan = ChannelBeliefIndex::new(observed_channel, 1);
    }

    fn decide(&mut self, buffer: u8) -> u8 {
        if buffer == 0 {
            return 0;
        }
        u8::from(self.policy.action(self.state_id(1)) == ACTION_TRANSMIT)
    }

    fn observe(&mut self, u: u8, feedback: ChannelFeedback) {
        self.chan = match (u, feedback) {
            (1, ChannelFeedback::Observed(s)) => ChannelBeliefIndex::new(s, 1),
            (0, ChannelFeedback::NoObservation) => {
                ChannelBeliefIndex::new(self.chan.s, (self.chan.m + 1).min(self.m_cap))
            }
            (u, f) => panic!("inconsistent feedback: u={u}, feedback={f:?}"),
        };
    }
}

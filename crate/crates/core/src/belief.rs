//! Reachable-set posteriors and their brute-force validation.
//!
//! The common information of the two devices (shared feedback plus both
//! realized actions) compresses into three indices: how stale the last
//! channel observation is, and how long each buffer has gone without being
//! revealed empty. [`q_value`] and [`z_value`] give the posteriors those
//! indices claim; [`bayes_oracle`] recomputes the posterior by exhaustive
//! enumeration of hidden trajectories so the index arithmetic can be checked
//! rather than trusted.

use crate::model::ModelParams;
use thiserror::Error;

/// Channel belief coordinate: last observed state `s` and steps `m >= 1`
/// since the observation. The posterior it denotes is `q_{s,m}`, the m-step
/// transition probability into the busy state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChannelBeliefIndex {
    pub s: u8,
    pub m: u32,
}

impl ChannelBeliefIndex {
    pub fn new(s: u8, m: u32) -> Self {
        assert!(s <= 1, "channel state must be 0 or 1");
        assert!(m >= 1, "staleness index starts at 1");
        ChannelBeliefIndex { s, m }
    }
}

/// Buffer belief coordinate: `Finite(k)` denotes the posterior `z_k` after
/// `k` unobserved arrival steps from a known-empty buffer; `Inf` denotes a
/// buffer known to hold a packet (`z = 1` exactly).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BufferBeliefIndex {
    Finite(u32),
    Inf,
}

impl BufferBeliefIndex {
    pub fn new_finite(k: u32) -> Self {
        assert!(k >= 1, "buffer index starts at 1");
        BufferBeliefIndex::Finite(k)
    }

    /// `Inf` compares above every finite index.
    pub fn le(self, other: BufferBeliefIndex) -> bool {
        match (self, other) {
            (BufferBeliefIndex::Finite(a), BufferBeliefIndex::Finite(b)) => a <= b,
            (BufferBeliefIndex::Finite(_), BufferBeliefIndex::Inf) => true,
            (BufferBeliefIndex::Inf, BufferBeliefIndex::Finite(_)) => false,
            (BufferBeliefIndex::Inf, BufferBeliefIndex::Inf) => true,
        }
    }
}

impl std::fmt::Display for BufferBeliefIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BufferBeliefIndex::Finite(k) => write!(f, "{k}"),
            BufferBeliefIndex::Inf => write!(f, "inf"),
        }
    }
}

/// `q_{s,m}`: probability the channel is busy `m` steps after it was observed
/// in state `s`.
pub fn q_value(params: &ModelParams, idx: ChannelBeliefIndex) -> f64 {
    let mut q = params.busy_next(idx.s);
    for _ in 1..idx.m {
        q = q * params.alpha1 + (1.0 - q) * (1.0 - params.alpha0);
    }
    q
}

/// `q_{s,m}` for `s` in {0,1} and `m` in `1..=m_max`, as `table[s][m-1]`.
pub fn q_table(params: &ModelParams, m_max: u32) -> [Vec<f64>; 2] {
    let build = |s: u8| {
        let mut col = Vec::with_capacity(m_max as usize);
        let mut q = params.busy_next(s);
        col.push(q);
        for _ in 1..m_max {
            q = q * params.alpha1 + (1.0 - q) * (1.0 - params.alpha0);
            col.push(q);
        }
        col
    };
    [build(0), build(1)]
}

/// `z_k` for the given device: probability the buffer holds a packet after
/// `k` arrival steps from a known-empty buffer with no removals.
pub fn z_value(params: &ModelParams, device: usize, idx: BufferBeliefIndex) -> f64 {
    match idx {
        BufferBeliefIndex::Finite(k) => 1.0 - (1.0 - params.arrival(device)).powi(k as i32),
        BufferBeliefIndex::Inf => 1.0,
    }
}

/// Joint arrival law for the two devices. `Correlated` forces `w2 = w1` and
/// exists to demonstrate that the independence assumption is load-bearing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalModel {
    Independent,
    Correlated,
}

impl ArrivalModel {
    /// `(probability, w1, w2)` support points.
    fn support(self, params: &ModelParams) -> Vec<(f64, u8, u8)> {
        let (p1, p2) = (params.p1, params.p2);
        match self {
            ArrivalModel::Independent => vec![
                ((1.0 - p1) * (1.0 - p2), 0, 0),
                (p1 * (1.0 - p2), 1, 0),
                ((1.0 - p1) * p2, 0, 1),
                (p1 * p2, 1, 1),
            ],
            ArrivalModel::Correlated => vec![(1.0 - p1, 0, 0), (p1, 1, 1)],
        }
    }
}

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("history has zero probability at step {step}")]
    ImpossibleHistory { step: usize },
    #[error("malformed history step {step}: {reason}")]
    MalformedStep { step: usize, reason: String },
}

/// One step of common information: the prescriptions both devices were
/// following, the realized actions, and the shared channel feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryStep {
    pub d1: u8,
    pub d2: u8,
    pub u1: u8,
    pub u2: u8,
    /// `Some(s)` iff someone transmitted.
    pub feedback: Option<u8>,
}

impl HistoryStep {
    pub fn check(&self, step: usize) -> Result<(), BeliefError> {
        let bad = |reason: &str| BeliefError::MalformedStep { step, reason: reason.to_string() };
        if self.u1 > self.d1 || self.u2 > self.d2 {
            return Err(bad("action exceeds prescription"));
        }
        match (self.u1 + self.u2 > 0, self.feedback) {
            (true, None) => Err(bad("transmission without channel feedback")),
            (false, Some(_)) => Err(bad("channel feedback without transmission")),
            (true, Some(s)) if s > 1 => Err(bad("feedback must be 0 or 1")),
            _ => Ok(()),
        }
    }
}

/// Posterior over the hidden state `(n1, n2, s)`, indexed `n1*4 + n2*2 + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior(pub [f64; 8]);

impl Posterior {
    pub fn prob(&self, n1: u8, n2: u8, s: u8) -> f64 {
        self.0[(n1 * 4 + n2 * 2 + s) as usize]
    }

    pub fn buffer_marginal(&self, device: usize) -> f64 {
        let mut total = 0.0;
        for n1 in 0..2u8 {
            for n2 in 0..2u8 {
                for s in 0..2u8 {
                    let n = if device == 1 { n1 } else { n2 };
                    total += f64::from(n) * self.prob(n1, n2, s);
                }
            }
        }
        total
    }

    pub fn busy_marginal(&self) -> f64 {
        (0..4).map(|i| self.0[2 * i + 1]).sum()
    }

    /// Joint law of `(n1, n2)` with the channel marginalized out.
    pub fn buffer_joint(&self, n1: u8, n2: u8) -> f64 {
        self.prob(n1, n2, 0) + self.prob(n1, n2, 1)
    }

    /// Largest factorization defect `|P(n1,n2) - P(n1) P(n2)|`.
    pub fn factorization_gap(&self) -> f64 {
        let m1 = self.buffer_marginal(1);
        let m2 = self.buffer_marginal(2);
        let mut gap = 0.0f64;
        for n1 in 0..2u8 {
            for n2 in 0..2u8 {
                let p1 = if n1 == 1 { m1 } else { 1.0 - m1 };
                let p2 = if n2 == 1 { m2 } else { 1.0 - m2 };
                gap = gap.max((self.buffer_joint(n1, n2) - p1 * p2).abs());
            }
        }
        gap
    }
}

/// Unnormalized joint weight of hidden states consistent with the history so
/// far. Normalizing once at the end keeps this a literal path enumeration:
/// every weight is the summed probability of the hidden trajectories that end
/// in that state and produce the observed history.
fn initial_weights(params: &ModelParams) -> [f64; 8] {
    let mut w = [0.0; 8];
    let busy = params.stationary_busy();
    w[1] = busy; // (0,0,busy)
    w[0] = 1.0 - busy; // (0,0,idle)
    w
}

fn condition_and_step(
    params: &ModelParams,
    arrivals: ArrivalModel,
    weights: &[f64; 8],
    step: &HistoryStep,
) -> [f64; 8] {
    let arrival_support = arrivals.support(params);
    let mut next = [0.0; 8];
    for n1 in 0..2u8 {
        for n2 in 0..2u8 {
            for s in 0..2u8 {
                let w = weights[(n1 * 4 + n2 * 2 + s) as usize];
                if w == 0.0 {
                    continue;
                }
                // Consistency of the realized actions and feedback with this
                // hidden state.
                if n1 * step.d1 != step.u1 || n2 * step.d2 != step.u2 {
                    continue;
                }
                if let Some(h) = step.feedback {
                    if h != s {
                        continue;
                    }
                }
                let idle = 1 - s;
                let rem1 = step.u1 * (1 - step.u2) * idle;
                let rem2 = step.u2 * (1 - step.u1) * idle;
                for &(pa, w1, w2) in &arrival_support {
                    let n1_next = (n1 - rem1 + w1).min(1);
                    let n2_next = (n2 - rem2 + w2).min(1);
                    for s_next in 0..2u8 {
                        let ps = if s_next == 1 {
                            params.busy_next(s)
                        } else {
                            1.0 - params.busy_next(s)
                        };
                        next[(n1_next * 4 + n2_next * 2 + s_next) as usize] += w * pa * ps;
                    }
                }
            }
        }
    }
    next
}

/// Exact posterior over `(n1, n2, s)` after the given common-information
/// history, starting from empty buffers and a stationary channel.
pub fn bayes_oracle(
    params: &ModelParams,
    arrivals: ArrivalModel,
    history: &[HistoryStep],
) -> Result<Posterior, BeliefError> {
    let mut weights = initial_weights(params);
    for (i, step) in history.iter().enumerate() {
        step.check(i)?;
        weights = condition_and_step(params, arrivals, &weights, step);
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(BeliefError::ImpossibleHistory { step: i });
        }
    }
    let total: f64 = weights.iter().sum();
    let mut p = weights;
    for v in &mut p {
        *v /= total;
    }
    Ok(Posterior(p))
}

/// What the index arithmetic knows about one buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BufferKnowledge {
    /// `j` unobserved arrival steps since the buffer was last known empty;
    /// `j = 0` means known empty right now. Claimed posterior: `z_j` (0 at 0).
    StepsSinceEmpty(u32),
    /// Known to hold a packet.
    Full,
}

/// The index-arithmetic summary of a common-information history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndexTracker {
    pub dev1: BufferKnowledge,
    pub dev2: BufferKnowledge,
    /// `None` until the channel has been observed once.
    pub chan: Option<ChannelBeliefIndex>,
}

impl IndexTracker {
    pub fn initial() -> Self {
        IndexTracker {
            dev1: BufferKnowledge::StepsSinceEmpty(0),
            dev2: BufferKnowledge::StepsSinceEmpty(0),
            chan: None,
        }
    }

    pub fn update(&mut self, step: &HistoryStep) {
        self.dev1 = update_buffer(self.dev1, step.d1, step.u1, step.u2, step.feedback);
        self.dev2 = update_buffer(self.dev2, step.d2, step.u2, step.u1, step.feedback);
        self.chan = match step.feedback {
            Some(h) => Some(ChannelBeliefIndex::new(h, 1)),
            None => self.chan.map(|c| ChannelBeliefIndex::new(c.s, c.m + 1)),
        };
    }

    pub fn claimed_buffer(&self, params: &ModelParams, device: usize) -> f64 {
        let knowledge = if device == 1 { self.dev1 } else { self.dev2 };
        match knowledge {
            BufferKnowledge::StepsSinceEmpty(0) => 0.0,
            BufferKnowledge::StepsSinceEmpty(j) => {
                z_value(params, device, BufferBeliefIndex::Finite(j))
            }
            BufferKnowledge::Full => 1.0,
        }
    }

    pub fn claimed_busy(&self, params: &ModelParams) -> f64 {
        match self.chan {
            Some(idx) => q_value(params, idx),
            None => params.stationary_busy(),
        }
    }
}

fn update_buffer(
    knowledge: BufferKnowledge,
    d: u8,
    u: u8,
    u_other: u8,
    feedback: Option<u8>,
) -> BufferKnowledge {
    if d == 0 {
        return match knowledge {
            BufferKnowledge::StepsSinceEmpty(j) => BufferKnowledge::StepsSinceEmpty(j + 1),
            BufferKnowledge::Full => BufferKnowledge::Full,
        };
    }
    if u == 0 {
        // Prescribed to transmit but did not: buffer was empty.
        return BufferKnowledge::StepsSinceEmpty(1);
    }
    let success = u_other == 0 && feedback == Some(0);
    if success {
        BufferKnowledge::StepsSinceEmpty(1)
    } else {
        BufferKnowledge::Full
    }
}

/// A distinct reachable belief node: a representative history, its exact
/// posterior, and the index summary the arithmetic assigns to it.
#[derive(Debug, Clone)]
pub struct BeliefNode {
    pub history: Vec<HistoryStep>,
    pub posterior: Posterior,
    pub index: IndexTracker,
}

fn outcomes(d1: u8, d2: u8) -> Vec<(u8, u8, Option<u8>)> {
    let mut out = Vec::new();
    for u1 in 0..=d1 {
        for u2 in 0..=d2 {
            if u1 + u2 > 0 {
                out.push((u1, u2, Some(0)));
                out.push((u1, u2, Some(1)));
            } else {
                out.push((u1, u2, None));
            }
        }
    }
    out
}

fn quantize(p: &Posterior) -> [i64; 8] {
    let mut key = [0i64; 8];
    for (k, v) in key.iter_mut().zip(p.0) {
        *k = (v * 1e10).round() as i64;
    }
    key
}

/// Breadth-first enumeration of every common-information history up to
/// `horizon` steps. Nodes whose posterior and index summary both coincide
/// with an already-visited node are expanded only once; since the subtree of
/// a node depends on nothing else, this prunes losslessly.
pub fn enumerate_belief_nodes(
    params: &ModelParams,
    arrivals: ArrivalModel,
    horizon: usize,
) -> Vec<BeliefNode> {
    assert!(horizon <= 8, "enumeration cost is exponential in the horizon");
    let root_weights = initial_weights(params);
    let mut nodes = Vec::new();
    let mut seen = std::collections::HashSet::new();
    // Breadth-first so the first visit of a key happens at minimal depth;
    // pruning later duplicates then loses no reachable descendant key.
    let mut frontier = std::collections::VecDeque::new();
    frontier.push_back((0usize, Vec::new(), root_weights, IndexTracker::initial()));
    while let Some((depth, history, weights, tracker)) = frontier.pop_front() {
        let total: f64 = weights.iter().sum();
        let mut p = weights;
        for v in &mut p {
            *v /= total;
        }
        let posterior = Posterior(p);
        if !seen.insert((quantize(&posterior), tracker)) {
            continue;
        }
        nodes.push(BeliefNode { history: history.clone(), posterior, index: tracker });
        if depth == horizon {
            continue;
        }
        for d1 in 0..2u8 {
            for d2 in 0..2u8 {
                for (u1, u2, feedback) in outcomes(d1, d2) {
                    let step = HistoryStep { d1, d2, u1, u2, feedback };
                    let child = condition_and_step(params, arrivals, &weights, &step);
                    if child.iter().sum::<f64>() <= 0.0 {
                        continue;
                    }
                    let mut child_tracker = tracker;
                    child_tracker.update(&step);
                    let mut child_history = history.clone();
                    child_history.push(step);
                    frontier.push_back((depth + 1, child_history, child, child_tracker));
                }
            }
        }
    }
    nodes
}

/// Maximum factorization defect `|P(n1,n2|common) - P(n1|.)P(n2|.)|` over all
/// common-information histories up to the horizon.
pub fn check_conditional_independence(
    params: &ModelParams,
    arrivals: ArrivalModel,
    horizon: usize,
) -> f64 {
    enumerate_belief_nodes(params, arrivals, horizon)
        .iter()
        .map(|n| n.posterior.factorization_gap())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_params;

    fn params() -> ModelParams {
        reference_params(0.3, 0.3, 0.3)
    }

    #[test]
    fn q_one_step_rows() {
        let p = params();
        assert_eq!(q_value(&p, ChannelBeliefIndex::new(0, 1)), 0.25);
        assert_eq!(q_value(&p, ChannelBeliefIndex::new(1, 1)), 0.75);
    }

    #[test]
    fn q_converges_to_symmetric_stationary() {
        let p = params();
        for s in [0, 1] {
            let q = q_value(&p, ChannelBeliefIndex::new(s, 200));
            assert!((q - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn q_matches_matrix_power_oracle() {
        let p = params();
        // 3-step transition matrix by direct multiplication.
        let step = [[p.alpha0, 1.0 - p.alpha0], [1.0 - p.alpha1, p.alpha1]];
        let mut pow = step;
        for _ in 0..2 {
            let mut next = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        next[i][j] += pow[i][k] * step[k][j];
                    }
                }
            }
            pow = next;
        }
        for s in [0u8, 1u8] {
            let q = q_value(&p, ChannelBeliefIndex::new(s, 3));
            assert!((q - pow[s as usize][1]).abs() < 1e-15);
        }
        assert!((q_value(&p, ChannelBeliefIndex::new(0, 3)) - 0.4375).abs() < 1e-15);
    }

    #[test]
    fn q_geometric_convergence_ratio() {
        let p = reference_params(0.3, 0.3, 0.3);
        let stationary = p.stationary_busy();
        let ratio = (p.alpha0 + p.alpha1 - 1.0).abs();
        for m in 1..30 {
            let e0 = (q_value(&p, ChannelBeliefIndex::new(0, m)) - stationary).abs();
            let e1 = (q_value(&p, ChannelBeliefIndex::new(0, m + 1)) - stationary).abs();
            assert!(e1 <= ratio * e0 + 1e-15);
        }
    }

    #[test]
    fn z_values_and_monotonicity() {
        let p = params();
        assert!((z_value(&p, 1, BufferBeliefIndex::Finite(1)) - 0.3).abs() < 1e-15);
        assert!((z_value(&p, 1, BufferBeliefIndex::Finite(2)) - 0.51).abs() < 1e-15);
        assert_eq!(z_value(&p, 1, BufferBeliefIndex::Inf), 1.0);
        let mut prev = 0.0;
        for k in 1..80 {
            let z = z_value(&p, 1, BufferBeliefIndex::Finite(k));
            assert!(z > prev && z < 1.0);
            prev = z;
        }
    }

    #[test]
    fn z_two_steps_matches_arrival_enumeration() {
        let p = params();
        // Enumerate (w_1, w_2) outcomes directly.
        let mut prob_full = 0.0;
        for w1 in 0..2 {
            for w2 in 0..2 {
                let pw = (if w1 == 1 { p.p1 } else { 1.0 - p.p1 })
                    * (if w2 == 1 { p.p1 } else { 1.0 - p.p1 });
                if w1 + w2 > 0 {
                    prob_full += pw;
                }
            }
        }
        assert!((z_value(&p, 1, BufferBeliefIndex::Finite(2)) - prob_full).abs() < 1e-15);
    }

    #[test]
    fn oracle_empty_history() {
        let p = params();
        let post = bayes_oracle(&p, ArrivalModel::Independent, &[]).unwrap();
        assert_eq!(post.buffer_marginal(1), 0.0);
        assert_eq!(post.buffer_marginal(2), 0.0);
        assert!((post.busy_marginal() - p.stationary_busy()).abs() < 1e-15);
    }

    #[test]
    fn oracle_matches_z_after_idle_steps() {
        let p = params();
        for k in 1..=6 {
            let history = vec![
                HistoryStep { d1: 0, d2: 0, u1: 0, u2: 0, feedback: None };
                k
            ];
            let post = bayes_oracle(&p, ArrivalModel::Independent, &history).unwrap();
            let z = z_value(&p, 1, BufferBeliefIndex::Finite(k as u32));
            assert!((post.buffer_marginal(1) - z).abs() < 1e-13);
            assert!((post.buffer_marginal(2) - z).abs() < 1e-13);
        }
    }

    #[test]
    fn oracle_matches_q_after_observation() {
        let p = params();
        // One idle step so device 1 can hold a packet, one observed
        // transmission, then two idle steps.
        let mut history = vec![
            HistoryStep { d1: 0, d2: 0, u1: 0, u2: 0, feedback: None },
            HistoryStep { d1: 1, d2: 0, u1: 1, u2: 0, feedback: Some(0) },
        ];
        history.push(HistoryStep { d1: 0, d2: 0, u1: 0, u2: 0, feedback: None });
        history.push(HistoryStep { d1: 0, d2: 0, u1: 0, u2: 0, feedback: None });
        let post = bayes_oracle(&p, ArrivalModel::Independent, &history).unwrap();
        let q = q_value(&p, ChannelBeliefIndex::new(0, 3));
        assert!((post.busy_marginal() - q).abs() < 1e-13);
    }

    #[test]
    fn oracle_rejects_impossible_history() {
        let p = params();
        // Transmission at time 0 is impossible: buffers start empty.
        let history = vec![HistoryStep { d1: 1, d2: 0, u1: 1, u2: 0, feedback: Some(0) }];
        let err = bayes_oracle(&p, ArrivalModel::Independent, &history).unwrap_err();
        assert!(matches!(err, BeliefError::ImpossibleHistory { step: 0 }));
    }

    #[test]
    fn oracle_rejects_malformed_step() {
        let p = params();
        let history = vec![HistoryStep { d1: 0, d2: 0, u1: 1, u2: 0, feedback: Some(0) }];
        assert!(matches!(
            bayes_oracle(&p, ArrivalModel::Independent, &history),
            Err(BeliefError::MalformedStep { step: 0, .. })
        ));
    }

    /// Path-exhaustive oracle used only to validate the merged recursion: it
    /// literally walks every (s_0, arrivals, channel path) combination.
    fn path_enumeration_oracle(
        params: &ModelParams,
        arrivals: ArrivalModel,
        history: &[HistoryStep],
    ) -> Posterior {
        fn recurse(
            params: &ModelParams,
            arrivals: ArrivalModel,
            history: &[HistoryStep],
            t: usize,
            n1: u8,
            n2: u8,
            s: u8,
            weight: f64,
            acc: &mut [f64; 8],
        ) {
            if t == history.len() {
                acc[(n1 * 4 + n2 * 2 + s) as usize] += weight;
                return;
            }
            let step = &history[t];
            if n1 * step.d1 != step.u1 || n2 * step.d2 != step.u2 {
                return;
            }
            if let Some(h) = step.feedback {
                if h != s {
                    return;
                }
            }
            let idle = 1 - s;
            let rem1 = step.u1 * (1 - step.u2) * idle;
            let rem2 = step.u2 * (1 - step.u1) * idle;
            for (pa, w1, w2) in arrivals.support(params) {
                for s_next in 0..2u8 {
                    let ps = if s_next == 1 {
                        params.busy_next(s)
                    } else {
                        1.0 - params.busy_next(s)
                    };
                    recurse(
                        params,
                        arrivals,
                        history,
                        t + 1,
                        (n1 - rem1 + w1).min(1),
                        (n2 - rem2 + w2).min(1),
                        s_next,
                        weight * pa * ps,
                        acc,
                    );
                }
            }
        }

        let mut acc = [0.0; 8];
        let busy = params.stationary_busy();
        for (s0, w0) in [(0u8, 1.0 - busy), (1u8, busy)] {
            recurse(params, arrivals, history, 0, 0, 0, s0, w0, &mut acc);
        }
        let total: f64 = acc.iter().sum();
        for v in &mut acc {
            *v /= total;
        }
        Posterior(acc)
    }

    #[test]
    fn merged_oracle_equals_path_enumeration() {
        let p = params();
        let histories = vec![
            vec![
                HistoryStep { d1: 0, d2: 0, u1: 0, u2: 0, feedback: None },
                HistoryStep { d1: 1, d2: 1, u1: 1, u2: 0, feedback: Some(1) },
                HistoryStep { d1: 1, d2: 0, u1: 1, u2: 0, feedback: Some(1) },
            ],
            vec![
                HistoryStep { d1: 0, d2: 0, u1: 0, u2: 0, feedback: None },
                HistoryStep { d1: 0, d2: 0, u1: 0, u2: 0, feedback: None },
                HistoryStep { d1: 1, d2: 1, u1: 1, u2: 1, feedback: Some(0) },
            ],
        ];
        for arrivals in [ArrivalModel::Independent, ArrivalModel::Correlated] {
            for history in &histories {
                // The first history reveals one full and one empty buffer,
                // which perfectly correlated arrivals cannot produce.
                if arrivals == ArrivalModel::Correlated && history == &histories[0] {
                    continue;
                }
                let merged = bayes_oracle(&p, arrivals, history).unwrap();
                let paths = path_enumeration_oracle(&p, arrivals, history);
                for i in 0..8 {
                    assert!((merged.0[i] - paths.0[i]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn index_arithmetic_matches_oracle_on_all_short_histories() {
        let p = params();
        let nodes = enumerate_belief_nodes(&p, ArrivalModel::Independent, 4);
        assert!(nodes.len() > 50);
        for node in nodes {
            let oracle = bayes_oracle(&p, ArrivalModel::Independent, &node.history).unwrap();
            assert!(
                (oracle.buffer_marginal(1) - node.index.claimed_buffer(&p, 1)).abs() < 1e-12,
                "history {:?}",
                node.history
            );
            assert!((oracle.buffer_marginal(2) - node.index.claimed_buffer(&p, 2)).abs() < 1e-12);
            assert!((oracle.busy_marginal() - node.index.claimed_busy(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn independence_holds_under_assumption_a() {
        let p = params();
        assert_eq!(check_conditional_independence(&p, ArrivalModel::Independent, 1), 0.0);
        let gap = check_conditional_independence(&p, ArrivalModel::Independent, 4);
        assert!(gap <= 1e-12, "gap {gap}");
    }

    #[test]
    fn independence_fails_for_correlated_arrivals() {
        let p = params();
        let gap = check_conditional_independence(&p, ArrivalModel::Correlated, 3);
        assert!(gap > 0.01, "gap {gap}");
    }
}

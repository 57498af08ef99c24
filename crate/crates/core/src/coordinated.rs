//! The two-device problem via its fictitious coordinator: a discounted MDP
//! whose states are common-information belief indices `(k, l, (s, m))` and
//! whose actions are prescriptions `(d1, d2)` telling each device to transmit
//! iff its buffer is nonempty.
//!
//! `k` and `l` count decision epochs since each device's buffer was last known
//! empty (`Inf` once a transmission is known to have failed), truncated at
//! `K`; the channel index `(s, m)` is shared with [`crate::centralized`] and
//! truncated at `M`. Solutions can be pattern-matched against threshold-style
//! strategy descriptions and split back into two online device controllers.

use crate::belief::{q_table, BufferBeliefIndex, ChannelBeliefIndex};
use crate::mdp::{self, IterativeSolve, Mdp, PolicyTable, ValueTable, DEFAULT_MAX_ITER};
use crate::model::{ChannelFeedback, DeviceController, ModelParams};
use crate::{RecursionMode, SolveError};

/// A coordinator action: device `i` transmits iff `d_i = 1` and its buffer is
/// nonempty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Prescription {
    pub d1: u8,
    pub d2: u8,
}

impl Prescription {
    pub fn mirrored(self) -> Prescription {
        Prescription { d1: self.d2, d2: self.d1 }
    }
}

impl std::fmt::Display for Prescription {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.d1, self.d2)
    }
}

/// Action ordering used everywhere: ties in policy extraction resolve to the
/// earliest entry.
pub const PRESCRIPTIONS: [Prescription; 4] = [
    Prescription { d1: 0, d2: 0 },
    Prescription { d1: 1, d2: 0 },
    Prescription { d1: 0, d2: 1 },
    Prescription { d1: 1, d2: 1 },
];

/// Common-information state of the coordinated problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoordinatedState {
    pub k1: BufferBeliefIndex,
    pub k2: BufferBeliefIndex,
    pub channel: ChannelBeliefIndex,
}

#[derive(Debug, Clone)]
pub struct CoordinatedMdp {
    params: ModelParams,
    k_cap: u32,
    m_cap: u32,
    mode: RecursionMode,
    q: [Vec<f64>; 2],
    /// `z[i][b]` = probability device `i+1`'s buffer is full at buffer axis
    /// index `b`.
    z: [Vec<f64>; 2],
}

impl CoordinatedMdp {
    pub fn k_cap(&self) -> u32 {
        self.k_cap
    }

    pub fn m_cap(&self) -> u32 {
        self.m_cap
    }

    fn bidx(&self, b: BufferBeliefIndex) -> usize {
        match b {
            BufferBeliefIndex::Finite(k) => k as usize - 1,
            BufferBeliefIndex::Inf => self.k_cap as usize,
        }
    }

    fn bof(&self, idx: usize) -> BufferBeliefIndex {
        if idx == self.k_cap as usize {
            BufferBeliefIndex::Inf
        } else {
            BufferBeliefIndex::Finite(idx as u32 + 1)
        }
    }

    pub fn state_id(&self, state: CoordinatedState) -> usize {
        let kb = self.k_cap as usize + 1;
        let mb = self.m_cap as usize;
        ((self.bidx(state.k1) * kb + self.bidx(state.k2)) * 2 + state.channel.s as usize) * mb
            + (state.channel.m as usize - 1)
    }

    pub fn state_of(&self, id: usize) -> CoordinatedState {
        let kb = self.k_cap as usize + 1;
        let mb = self.m_cap as usize;
        let m = id % mb + 1;
        let rest = id / mb;
        let s = (rest % 2) as u8;
        let rest = rest / 2;
        CoordinatedState {
            k1: self.bof(rest / kb),
            k2: self.bof(rest % kb),
            channel: ChannelBeliefIndex::new(s, m as u32),
        }
    }

    fn aged_buffer(&self, b: BufferBeliefIndex) -> BufferBeliefIndex {
        match b {
            BufferBeliefIndex::Finite(k) => BufferBeliefIndex::Finite((k + 1).min(self.k_cap)),
            BufferBeliefIndex::Inf => BufferBeliefIndex::Inf,
        }
    }

    fn aged_channel(&self, chan: ChannelBeliefIndex) -> ChannelBeliefIndex {
        ChannelBeliefIndex::new(chan.s, (chan.m + 1).min(self.m_cap))
    }

    pub fn busy_prob(&self, chan: ChannelBeliefIndex) -> f64 {
        self.q[chan.s as usize][chan.m as usize - 1]
    }

    pub fn full_prob(&self, device: usize, b: BufferBeliefIndex) -> f64 {
        self.z[device - 1][self.bidx(b)]
    }
}

const FRESH: BufferBeliefIndex = BufferBeliefIndex::Finite(1);
const OBS_IDLE: ChannelBeliefIndex = ChannelBeliefIndex { s: 0, m: 1 };
const OBS_BUSY: ChannelBeliefIndex = ChannelBeliefIndex { s: 1, m: 1 };

impl Mdp for CoordinatedMdp {
    fn num_states(&self) -> usize {
        let kb = self.k_cap as usize + 1;
        kb * kb * 2 * self.m_cap as usize
    }

    fn num_actions(&self, _state: usize) -> usize {
        PRESCRIPTIONS.len()
    }

    fn for_each_transition(
        &self,
        state: usize,
        action: usize,
        visit: &mut dyn FnMut(f64, usize, f64),
    ) {
        let st = self.state_of(state);
        let presc = PRESCRIPTIONS[action];
        let q = self.busy_prob(st.channel);
        let (r, c) = (self.params.r, self.params.c);
        let aged1 = self.aged_buffer(st.k1);
        let aged2 = self.aged_buffer(st.k2);
        let aged_ch = self.aged_channel(st.channel);
        let mut go = |prob: f64, k1, k2, channel, reward| {
            if prob > 0.0 {
                visit(prob, self.state_id(CoordinatedState { k1, k2, channel }), reward);
            }
        };
        match (presc.d1, presc.d2) {
            (0, 0) => go(1.0, aged1, aged2, aged_ch, 0.0),
            (1, 0) => {
                let z = self.full_prob(1, st.k1);
                go(1.0 - z, FRESH, aged2, aged_ch, 0.0);
                go(z * (1.0 - q), FRESH, aged2, OBS_IDLE, r - c);
                go(z * q, BufferBeliefIndex::Inf, aged2, OBS_BUSY, -c);
            }
            (0, 1) => {
                let z = self.full_prob(2, st.k2);
                go(1.0 - z, aged1, FRESH, aged_ch, 0.0);
                go(z * (1.0 - q), aged1, FRESH, OBS_IDLE, r - c);
                go(z * q, aged1, BufferBeliefIndex::Inf, OBS_BUSY, -c);
            }
            (1, 1) => {
                let z1 = self.full_prob(1, st.k1);
                let z2 = self.full_prob(2, st.k2);
                go((1.0 - z1) * (1.0 - z2), FRESH, FRESH, aged_ch, 0.0);
                go(z1 * (1.0 - z2) * (1.0 - q), FRESH, FRESH, OBS_IDLE, r - c);
                go((1.0 - z1) * z2 * (1.0 - q), FRESH, FRESH, OBS_IDLE, r - c);
                go(
                    z1 * z2 * (1.0 - q),
                    BufferBeliefIndex::Inf,
                    BufferBeliefIndex::Inf,
                    OBS_IDLE,
                    -2.0 * c,
                );
                match self.mode {
                    RecursionMode::AsPrinted => {
                        // The printed recursion sends every busy-channel
                        // branch to (Inf, Inf) regardless of who transmitted.
                        go(
                            z1 * (1.0 - z2) * q,
                            BufferBeliefIndex::Inf,
                            BufferBeliefIndex::Inf,
                            OBS_BUSY,
                            -c,
                        );
                        go(
                            (1.0 - z1) * z2 * q,
                            BufferBeliefIndex::Inf,
                            BufferBeliefIndex::Inf,
                            OBS_BUSY,
                            -c,
                        );
                    }
                    RecursionMode::BayesConsistent => {
                        // A device that was told to transmit but did not is
                        // revealed empty even when the channel was busy.
                        go(z1 * (1.0 - z2) * q, BufferBeliefIndex::Inf, FRESH, OBS_BUSY, -c);
                        go((1.0 - z1) * z2 * q, FRESH, BufferBeliefIndex::Inf, OBS_BUSY, -c);
                    }
                }
                go(z1 * z2 * q, BufferBeliefIndex::Inf, BufferBeliefIndex::Inf, OBS_BUSY, -2.0 * c);
            }
            _ => unreachable!(),
        }
    }

    fn discount(&self) -> f64 {
        self.params.beta
    }
}

pub fn build_coordinated_mdp(
    params: &ModelParams,
    k_cap: u32,
    m_cap: u32,
    mode: RecursionMode,
) -> Result<CoordinatedMdp, SolveError> {
    params.validate()?;
    if k_cap < 2 {
        return Err(SolveError::BadCap { name: "K", value: k_cap });
    }
    if m_cap < 2 {
        return Err(SolveError::BadCap { name: "M", value: m_cap });
    }
    let z = |device: usize| {
        let p = params.arrival(device);
        let mut col: Vec<f64> =
            (1..=k_cap).map(|k| 1.0 - (1.0 - p).powi(k as i32)).collect();
        col.push(1.0);
        col
    };
    Ok(CoordinatedMdp { params: *params, k_cap, m_cap, mode, q: q_table(params, m_cap), z: [z(1), z(2)] })
}

#[derive(Debug, Clone)]
pub struct CoordinatedSolution {
    pub mdp: CoordinatedMdp,
    pub values: ValueTable,
    pub policy: PolicyTable,
    pub solve: IterativeSolve,
}

impl CoordinatedSolution {
    pub fn prescription(&self, state: CoordinatedState) -> Prescription {
        PRESCRIPTIONS[self.policy.action(self.mdp.state_id(state))]
    }

    pub fn value(&self, state: CoordinatedState) -> f64 {
        self.values.0[self.mdp.state_id(state)]
    }

    /// Value of the synchronization-point start state given the revealed
    /// channel state.
    pub fn initial_value(&self, s: u8) -> f64 {
        self.value(CoordinatedState { k1: FRESH, k2: FRESH, channel: ChannelBeliefIndex::new(s, 1) })
    }

    /// Start-state value averaged over the stationary channel distribution.
    pub fn reference_value(&self, params: &ModelParams) -> f64 {
        let pi1 = params.stationary_busy();
        (1.0 - pi1) * self.initial_value(0) + pi1 * self.initial_value(1)
    }
}

pub fn solve_coordinated(
    params: &ModelParams,
    k_cap: u32,
    m_cap: u32,
    mode: RecursionMode,
    tol: f64,
) -> Result<CoordinatedSolution, SolveError> {
    let mdp = build_coordinated_mdp(params, k_cap, m_cap, mode)?;
    let solve = mdp::value_iteration(&mdp, tol, DEFAULT_MAX_ITER)?;
    if !solve.converged {
        return Err(SolveError::NotConverged {
            residual: solve.residual,
            iterations: solve.iterations,
        });
    }
    let policy = mdp::extract_policy(&mdp, &solve.values);
    Ok(CoordinatedSolution { mdp, values: solve.values.clone(), policy, solve })
}

// ---------------------------------------------------------------------------
// Pattern-form strategy descriptions.

/// A buffer-index rule applied on some channel region.
///
/// `D` favors the device that has gone longer without a known-empty buffer:
/// `(1,0)` when `k1 > k2`, `(0,1)` when `k1 < k2`, either on ties. `DBar`
/// mirrors it. `H(n)` prescribes `(1,1)` on the hook
/// `{(k,1): k <= n} ∪ {(1,l): l <= n}` and falls back to `D` elsewhere;
/// `HHat(n)` prescribes `(0,0)` on the square `{max(k1,k2) <= n}` and falls
/// back to `D`. `Inf` compares above every finite index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PatternRule {
    Const(u8, u8),
    D,
    DBar,
    H(u32),
    HHat(u32),
}

impl PatternRule {
    /// Prescriptions the rule accepts at `(k1, k2)`.
    pub fn allowed(self, k1: BufferBeliefIndex, k2: BufferBeliefIndex) -> Vec<Prescription> {
        let d = || -> Vec<Prescription> {
            if k1.le(k2) && k2.le(k1) {
                vec![Prescription { d1: 1, d2: 0 }, Prescription { d1: 0, d2: 1 }]
            } else if k2.le(k1) {
                vec![Prescription { d1: 1, d2: 0 }]
            } else {
                vec![Prescription { d1: 0, d2: 1 }]
            }
        };
        let fin = |n: u32| BufferBeliefIndex::Finite(n);
        match self {
            PatternRule::Const(d1, d2) => vec![Prescription { d1, d2 }],
            PatternRule::D => d(),
            PatternRule::DBar => d().into_iter().map(Prescription::mirrored).collect(),
            PatternRule::H(n) => {
                let on_hook = (k2 == fin(1) && k1.le(fin(n))) || (k1 == fin(1) && k2.le(fin(n)));
                if on_hook {
                    vec![Prescription { d1: 1, d2: 1 }]
                } else {
                    d()
                }
            }
            PatternRule::HHat(n) => {
                if k1.le(fin(n)) && k2.le(fin(n)) {
                    vec![Prescription { d1: 0, d2: 0 }]
                } else {
                    d()
                }
            }
        }
    }
}

/// One channel-region clause of a pattern strategy: applies when the channel
/// index has `s == self.s` and `m_min <= m <= m_max` (`m_max = None` meaning
/// unbounded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PatternRegion {
    pub s: u8,
    pub m_min: u32,
    pub m_max: Option<u32>,
    pub rule: PatternRule,
}

/// A full strategy in pattern form: first matching region wins, `default`
/// covers the rest.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PatternSpec {
    pub name: String,
    pub regions: Vec<PatternRegion>,
    pub default: PatternRule,
}

impl PatternSpec {
    pub fn rule_at(&self, chan: ChannelBeliefIndex) -> PatternRule {
        for region in &self.regions {
            let upper_ok = region.m_max.map_or(true, |hi| chan.m <= hi);
            if region.s == chan.s && chan.m >= region.m_min && upper_ok {
                return region.rule;
            }
        }
        self.default
    }

    pub fn allowed(&self, state: CoordinatedState) -> Vec<Prescription> {
        self.rule_at(state.channel).allowed(state.k1, state.k2)
    }
}

#[derive(Debug, Clone)]
pub struct PatternMismatch {
    pub state: CoordinatedState,
    pub expected: Vec<Prescription>,
    pub got: Prescription,
}

impl std::fmt::Display for PatternMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let expect: Vec<String> = self.expected.iter().map(|p| p.to_string()).collect();
        write!(
            f,
            "at (k1={:?}, k2={:?}, s={}, m={}): expected one of {}, got {}",
            self.state.k1,
            self.state.k2,
            self.state.channel.s,
            self.state.channel.m,
            expect.join("/"),
            self.got
        )
    }
}

/// Compare a solved policy against a pattern over the sub-grid with finite
/// buffer indices up to `k_limit` (plus `Inf`) and channel staleness up to
/// `m_limit`, keeping clear of the truncation boundary where saturated
/// indices distort the policy. Returns every disagreement.
pub fn match_pattern(
    solution: &CoordinatedSolution,
    spec: &PatternSpec,
    k_limit: u32,
    m_limit: u32,
) -> Vec<PatternMismatch> {
    assert!(k_limit < solution.mdp.k_cap, "k_limit must stay below the truncation cap");
    assert!(m_limit < solution.mdp.m_cap, "m_limit must stay below the truncation cap");
    let mut axis: Vec<BufferBeliefIndex> =
        (1..=k_limit).map(BufferBeliefIndex::Finite).collect();
    axis.push(BufferBeliefIndex::Inf);
    let mut mismatches = Vec::new();
    for &k1 in &axis {
        for &k2 in &axis {
            for s in 0..2u8 {
                for m in 1..=m_limit {
                    let state =
                        CoordinatedState { k1, k2, channel: ChannelBeliefIndex::new(s, m) };
                    let expected = spec.allowed(state);
                    let got = solution.prescription(state);
                    if !expected.contains(&got) {
                        mismatches.push(PatternMismatch { state, expected, got });
                    }
                }
            }
        }
    }
    mismatches
}

// ---------------------------------------------------------------------------
// Decentralization: replay the coordinator's policy as two device controllers.

/// Online controller for one device. Both devices run identical copies of the
/// common-information recursion, so their prescriptions always agree; each
/// then applies its own buffer content.
#[derive(Debug, Clone)]
pub struct PrescriptionController {
    policy: std::sync::Arc<PolicyTable>,
    mdp: std::sync::Arc<CoordinatedMdp>,
    device: usize,
    state: CoordinatedState,
    last: Prescription,
}

impl PrescriptionController {
    pub fn common_state(&self) -> CoordinatedState {
        self.state
    }

    fn update_buffer(
        &self,
        b: BufferBeliefIndex,
        d: u8,
        u: u8,
        other_u: u8,
        feedback: ChannelFeedback,
    ) -> BufferBeliefIndex {
        match (d, u) {
            (0, _) => self.mdp.aged_buffer(b),
            (1, 0) => FRESH,
            (1, 1) => {
                let success = other_u == 0 && feedback == ChannelFeedback::Observed(0);
                if success {
                    FRESH
                } else {
                    BufferBeliefIndex::Inf
                }
            }
            _ => unreachable!(),
        }
    }
}

impl DeviceController for PrescriptionController {
    fn start(&mut self, observed_channel: u8) {
        self.state = CoordinatedState {
            k1: FRESH,
            k2: FRESH,
            channel: ChannelBeliefIndex::new(observed_channel, 1),
        };
    }

    fn decide(&mut self, own_buffer: u8) -> u8 {
        self.last = PRESCRIPTIONS[self.policy.action(self.mdp.state_id(self.state))];
        let d = if self.device == 1 { self.last.d1 } else { self.last.d2 };
        d & own_buffer
    }

    fn observe(&mut self, u1: u8, u2: u8, feedback: ChannelFeedback) {
        let presc = self.last;
        self.state = CoordinatedState {
            k1: self.update_buffer(self.state.k1, presc.d1, u1, u2, feedback),
            k2: self.update_buffer(self.state.k2, presc.d2, u2, u1, feedback),
            channel: match feedback {
                ChannelFeedback::Observed(h) => ChannelBeliefIndex::new(h, 1),
                ChannelFeedback::NoObservation => self.mdp.aged_channel(self.state.channel),
            },
        };
    }
}

/// Split a coordinated solution into the two device controllers that realize
/// it.
pub fn decentralize(
    solution: &CoordinatedSolution,
) -> (PrescriptionController, PrescriptionController) {
    let policy = std::sync::Arc::new(solution.policy.clone());
    let mdp = std::sync::Arc::new(solution.mdp.clone());
    let fresh = CoordinatedState { k1: FRESH, k2: FRESH, channel: ChannelBeliefIndex::new(0, 1) };
    let make = |device: usize| PrescriptionController {
        policy: policy.clone(),
        mdp: mdp.clone(),
        device,
        state: fresh,
        last: PRESCRIPTIONS[0],
    };
    (make(1), make(2))
}

/// Controller pair that plays a fixed pattern strategy instead of a solved
/// policy. Useful for evaluating published strategies directly.
pub fn pattern_policy(
    mdp: &CoordinatedMdp,
    spec: &PatternSpec,
) -> PolicyTable {
    let actions = (0..mdp.num_states())
        .map(|id| {
            let allowed = spec.allowed(mdp.state_of(id));
            PRESCRIPTIONS.iter().position(|p| *p == allowed[0]).unwrap()
        })
        .collect();
    PolicyTable(actions)
}

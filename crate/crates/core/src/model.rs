//! Ground-truth dynamics of the one- and two-device multiple-access-channel
//! systems: state transitions, rewards, feedback, and seeded trajectory
//! sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// All scalar problem constants.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    /// Arrival probability at device 1.
    pub p1: f64,
    /// Arrival probability at device 2.
    pub p2: f64,
    /// Probability the channel stays idle given it was idle.
    pub alpha0: f64,
    /// Probability the channel stays busy given it was busy.
    pub alpha1: f64,
    /// Per-transmission cost.
    pub c: f64,
    /// Reward for a successful transmission.
    pub r: f64,
    /// Discount factor.
    pub beta: f64,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter {name} = {value} outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
    #[error("step {step}: device {device} transmitted from an empty buffer")]
    TransmitFromEmpty { step: usize, device: usize },
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let open_unit = [
            ("p1", self.p1),
            ("p2", self.p2),
            ("alpha0", self.alpha0),
            ("alpha1", self.alpha1),
            ("beta", self.beta),
        ];
        for (name, value) in open_unit {
            if !(value > 0.0 && value < 1.0) {
                return Err(ModelError::OutOfRange { name, value, range: "(0,1)" });
            }
        }
        for (name, value) in [("c", self.c), ("r", self.r)] {
            if !(value >= 0.0) {
                return Err(ModelError::OutOfRange { name, value, range: "[0,inf)" });
            }
        }
        Ok(())
    }

    /// Arrival probability of the given device (1 or 2).
    pub fn arrival(&self, device: usize) -> f64 {
        match device {
            1 => self.p1,
            2 => self.p2,
            other => panic!("device must be 1 or 2, got {other}"),
        }
    }

    /// Stationary probability that the channel is busy.
    pub fn stationary_busy(&self) -> f64 {
        let to_busy = 1.0 - self.alpha0;
        let to_idle = 1.0 - self.alpha1;
        to_busy / (to_busy + to_idle)
    }

    /// One-step probability of the channel being busy next, given `s` now.
    pub fn busy_next(&self, s: u8) -> f64 {
        if s == 0 {
            1.0 - self.alpha0
        } else {
            self.alpha1
        }
    }
}

/// Joint system state: both buffers and the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemState {
    pub n1: u8,
    pub n2: u8,
    /// 0 = idle, 1 = busy.
    pub s: u8,
}

/// What the devices learn about the channel after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelFeedback {
    /// The channel state during the step; delivered only when someone
    /// transmitted.
    Observed(u8),
    NoObservation,
}

impl ChannelFeedback {
    pub fn symbol(self) -> String {
        match self {
            ChannelFeedback::Observed(s) => s.to_string(),
            ChannelFeedback::NoObservation => "E".to_string(),
        }
    }
}

/// Exogenous randomness for one step, as explicit Bernoulli/uniform draws so
/// the step functions stay pure.
#[derive(Debug, Clone, Copy)]
pub struct StepNoise {
    pub w1: u8,
    pub w2: u8,
    /// Uniform draw in [0,1) deciding the next channel state.
    pub channel: f64,
}

impl StepNoise {
    pub fn draw(params: &ModelParams, rng: &mut impl Rng) -> Self {
        StepNoise {
            w1: u8::from(rng.gen::<f64>() < params.p1),
            w2: u8::from(rng.gen::<f64>() < params.p2),
            channel: rng.gen::<f64>(),
        }
    }
}

fn next_channel(params: &ModelParams, s: u8, draw: f64) -> u8 {
    u8::from(draw < params.busy_next(s))
}

/// One step of the two-device system.
///
/// Buffers evolve as `n_i' = min(n_i - u_i(1-u_j)(1-s) + w_i, 1)`; the reward
/// is `-(u1+u2)c + (u1 XOR u2)(1-s)r`; the channel state is fed back iff
/// someone transmitted.
pub fn step_two_device(
    params: &ModelParams,
    state: SystemState,
    u1: u8,
    u2: u8,
    noise: StepNoise,
) -> Result<(SystemState, f64, ChannelFeedback), ModelError> {
    if u1 > state.n1 {
        return Err(ModelError::TransmitFromEmpty { step: 0, device: 1 });
    }
    if u2 > state.n2 {
        return Err(ModelError::TransmitFromEmpty { step: 0, device: 2 });
    }
    let idle = 1 - state.s;
    let removed1 = u1 * (1 - u2) * idle;
    let removed2 = u2 * (1 - u1) * idle;
    let next = SystemState {
        n1: (state.n1 - removed1 + noise.w1).min(1),
        n2: (state.n2 - removed2 + noise.w2).min(1),
        s: next_channel(params, state.s, noise.channel),
    };
    let reward = -f64::from(u1 + u2) * params.c + f64::from((u1 ^ u2) * idle) * params.r;
    let feedback = if u1 + u2 > 0 {
        ChannelFeedback::Observed(state.s)
    } else {
        ChannelFeedback::NoObservation
    };
    Ok((next, reward, feedback))
}

/// One step of the single-device system: `n' = min(n - u(1-s) + w, 1)`,
/// reward `u(-c + r(1-s))`, channel fed back iff the device transmitted.
pub fn step_one_device(
    params: &ModelParams,
    n: u8,
    s: u8,
    u: u8,
    noise: StepNoise,
) -> Result<((u8, u8), f64, ChannelFeedback), ModelError> {
    if u > n {
        return Err(ModelError::TransmitFromEmpty { step: 0, device: 1 });
    }
    let idle = 1 - s;
    let n_next = (n - u * idle + noise.w1).min(1);
    let s_next = next_channel(params, s, noise.channel);
    let reward = f64::from(u) * (-params.c + params.r * f64::from(idle));
    let feedback = if u == 1 {
        ChannelFeedback::Observed(s)
    } else {
        ChannelFeedback::NoObservation
    };
    Ok(((n_next, s_next), reward, feedback))
}

/// A device-side controller for the two-device system. It sees its own buffer
/// plus the shared feedback stream; everything else it must infer.
pub trait DeviceController {
    /// Called once with the channel state revealed at the synchronization
    /// point before the first decision.
    fn start(&mut self, observed_channel: u8);
    /// Decision for the current step given the device's own buffer.
    fn decide(&mut self, own_buffer: u8) -> u8;
    /// Shared feedback after the step: both realized actions and the channel
    /// observation (if any).
    fn observe(&mut self, u1: u8, u2: u8, feedback: ChannelFeedback);
}

/// Controller for the single-device system.
pub trait SingleController {
    fn start(&mut self, observed_channel: u8);
    fn decide(&mut self, buffer: u8) -> u8;
    fn observe(&mut self, u: u8, feedback: ChannelFeedback);
}

/// Never transmits. Valid as either kind of controller.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeverTransmit;

impl DeviceController for NeverTransmit {
    fn start(&mut self, _s: u8) {}
    fn decide(&mut self, _n: u8) -> u8 {
        0
    }
    fn observe(&mut self, _u1: u8, _u2: u8, _f: ChannelFeedback) {}
}

impl SingleController for NeverTransmit {
    fn start(&mut self, _s: u8) {}
    fn decide(&mut self, _n: u8) -> u8 {
        0
    }
    fn observe(&mut self, _u: u8, _f: ChannelFeedback) {}
}

/// Transmits whenever its buffer is nonempty.
#[derive(Debug, Default, Clone, Copy)]
pub struct AlwaysTransmit;

impl DeviceController for AlwaysTransmit {
    fn start(&mut self, _s: u8) {}
    fn decide(&mut self, n: u8) -> u8 {
        n
    }
    fn observe(&mut self, _u1: u8, _u2: u8, _f: ChannelFeedback) {}
}

impl SingleController for AlwaysTransmit {
    fn start(&mut self, _s: u8) {}
    fn decide(&mut self, n: u8) -> u8 {
        n
    }
    fn observe(&mut self, _u: u8, _f: ChannelFeedback) {}
}

/// One recorded step of a sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajStep {
    pub t: usize,
    pub state: SystemState,
    pub u1: u8,
    pub u2: u8,
    pub reward: f64,
    pub feedback: ChannelFeedback,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory(pub Vec<TrajStep>);

impl Trajectory {
    pub fn discounted_return(&self, beta: f64) -> f64 {
        let mut total = 0.0;
        let mut weight = 1.0;
        for step in &self.0 {
            total += weight * step.reward;
            weight *= beta;
        }
        total
    }

    /// `t,n1,n2,s,u1,u2,reward,feedback` rows; feedback is `0`, `1`, or `E`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,n1,n2,s,u1,u2,reward,feedback")?;
        for step in &self.0 {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                step.t,
                step.state.n1,
                step.state.n2,
                step.state.s,
                step.u1,
                step.u2,
                step.reward,
                step.feedback.symbol()
            )?;
        }
        Ok(())
    }
}

/// Deterministic stream-seeded generator: identical `(seed, stream)` pairs
/// yield identical draws, and distinct streams are independent.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulation start used throughout: the channel state at the synchronization
/// point is drawn from the stationary distribution and revealed to every
/// controller, buffers are empty and then receive one arrival draw, and the
/// channel takes one transition before the first decision.
fn initial_state(params: &ModelParams, rng: &mut impl Rng) -> (u8, SystemState) {
    let s_sync = u8::from(rng.gen::<f64>() < params.stationary_busy());
    let noise = StepNoise::draw(params, rng);
    let state = SystemState {
        n1: noise.w1,
        n2: noise.w2,
        s: next_channel(params, s_sync, noise.channel),
    };
    (s_sync, state)
}

/// Samples a seeded trajectory of the two-device system.
pub fn sample_trajectory_two(
    params: &ModelParams,
    ctrl1: &mut dyn DeviceController,
    ctrl2: &mut dyn DeviceController,
    horizon: usize,
    seed: u64,
    stream: u64,
) -> Result<Trajectory, ModelError> {
    assert!(horizon >= 1);
    let mut rng = seeded_rng(seed, stream);
    let (s_sync, mut state) = initial_state(params, &mut rng);
    ctrl1.start(s_sync);
    ctrl2.start(s_sync);
    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let u1 = ctrl1.decide(state.n1);
        let u2 = ctrl2.decide(state.n2);
        let noise = StepNoise::draw(params, &mut rng);
        let (next, reward, feedback) = step_two_device(params, state, u1, u2, noise)
            .map_err(|e| at_step(e, t))?;
        ctrl1.observe(u1, u2, feedback);
        ctrl2.observe(u1, u2, feedback);
        steps.push(TrajStep { t, state, u1, u2, reward, feedback });
        state = next;
    }
    Ok(Trajectory(steps))
}

/// Samples a seeded trajectory of the single-device system. Device 2 fields
/// of the trajectory are zero.
pub fn sample_trajectory_one(
    params: &ModelParams,
    ctrl: &mut dyn SingleController,
    horizon: usize,
    seed: u64,
    stream: u64,
) -> Result<Trajectory, ModelError> {
    assert!(horizon >= 1);
    let mut rng = seeded_rng(seed, stream);
    let (s_sync, state0) = initial_state(params, &mut rng);
    ctrl.start(s_sync);
    let (mut n, mut s) = (state0.n1, state0.s);
    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let u = ctrl.decide(n);
        let noise = StepNoise::draw(params, &mut rng);
        let state = SystemState { n1: n, n2: 0, s };
        let ((n_next, s_next), reward, feedback) =
            step_one_device(params, n, s, u, noise).map_err(|e| at_step(e, t))?;
        ctrl.observe(u, feedback);
        steps.push(TrajStep { t, state, u1: u, u2: 0, reward, feedback });
        n = n_next;
        s = s_next;
    }
    Ok(Trajectory(steps))
}

fn at_step(e: ModelError, t: usize) -> ModelError {
    match e {
        ModelError::TransmitFromEmpty { device, .. } => {
            ModelError::TransmitFromEmpty { step: t, device }
        }
        other => other,
    }
}

/// Parameter point shared by all reproduction runs: `beta = 0.9`,
/// `alpha0 = alpha1 = 0.75`, `r = 1`.
pub fn reference_params(p1: f64, p2: f64, c: f64) -> ModelParams {
    ModelParams { p1, p2, alpha0: 0.75, alpha1: 0.75, c, r: 1.0, beta: 0.9 }
}

//! Exact solvers for a stylized transmission-scheduling problem on a shared
//! multiple-access channel.
//!
//! Two devices with single-packet buffers share a two-state Markov channel.
//! Transmissions cost `c`; a lone transmission on an idle channel earns `r`.
//! The devices only see their own buffer plus shared delayed feedback, so the
//! problem is a decentralized stochastic control problem. This crate solves it
//! three ways and cross-checks the answers:
//!
//! * [`centralized`] — the single-device special case, solved as a discounted
//!   MDP on the countable reachable set of channel beliefs.
//! * [`coordinated`] — the two-device problem via a fictitious coordinator
//!   that maps common information to prescriptions, solved on the reachable
//!   set of (buffer, buffer, channel) beliefs.
//! * [`pbp`] — person-by-person best-response iteration between the two
//!   devices.
//!
//! [`belief`] holds the reachable-set index arithmetic together with
//! brute-force Bayes oracles, [`mdp`] the generic value-iteration machinery,
//! [`model`] the ground-truth simulator, and [`sim`] Monte Carlo evaluation of
//! solved strategies against their dynamic-programming values.

pub mod belief;
pub mod centralized;
pub mod coordinated;
pub mod embedded;
pub mod mdp;
pub mod model;
pub mod pbp;
pub mod sim;

/// Which belief-update convention a solver uses for the branches where the
/// printed recursion aggregates information that the feedback actually
/// distinguishes.
///
/// `AsPrinted` follows the published recursions literally. `BayesConsistent`
/// refines the affected branches with the exact posterior implied by the
/// observation model. Both are kept so reproduction runs and new studies can
/// be compared cell by cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum RecursionMode {
    AsPrinted,
    BayesConsistent,
}

impl RecursionMode {
    pub const ALL: [RecursionMode; 2] = [RecursionMode::AsPrinted, RecursionMode::BayesConsistent];

    pub fn as_str(self) -> &'static str {
        match self {
            RecursionMode::AsPrinted => "printed",
            RecursionMode::BayesConsistent => "bayes",
        }
    }
}

impl std::str::FromStr for RecursionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "printed" | "as-printed" => Ok(RecursionMode::AsPrinted),
            "bayes" | "bayes-consistent" => Ok(RecursionMode::BayesConsistent),
            other => Err(format!("unknown recursion mode `{other}` (expected `printed` or `bayes`)")),
        }
    }
}

impl std::fmt::Display for RecursionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Errors shared by the solver front ends.
#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Mdp(#[from] mdp::MdpError),
    #[error("truncation cap {name} = {value} must be at least 2")]
    BadCap { name: &'static str, value: u32 },
    #[error("value iteration did not converge: residual {residual} after {iterations} sweeps")]
    NotConverged { residual: f64, iterations: usize },
}

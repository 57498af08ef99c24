//! Acceptance gate: one test per release criterion, each printing a single
//! PASS/FAIL line (visible with `--nocapture`, or on failure) before
//! asserting.

use macsched::belief::{
    bayes_oracle, check_conditional_independence, enumerate_belief_nodes, ArrivalModel,
    BufferBeliefIndex, ChannelBeliefIndex,
};
use macsched::centralized::{solve_centralized, CentralizedController, Threshold};
use macsched::coordinated::{
    build_coordinated_mdp, decentralize, match_pattern, solve_coordinated, CoordinatedState,
    Prescription, PRESCRIPTIONS,
};
use macsched::embedded::{published_strategies, table1};
use macsched::mdp::{finite_horizon_dp, Mdp};
use macsched::model::{reference_params, ModelParams};
use macsched::pbp::{best_response, DeviceStrategy};
use macsched::sim::{evaluate_one, evaluate_two};
use macsched::RecursionMode;

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    println!("criterion {n} ({name}): {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn table1_matching_modes(m_cap: u32) -> Vec<RecursionMode> {
    RecursionMode::ALL
        .into_iter()
        .filter(|&mode| {
            table1().into_iter().all(|cell| {
                let sol =
                    solve_centralized(&reference_params(cell.p, cell.p, cell.c), m_cap, mode, 1e-10)
                        .unwrap();
                sol.thresholds == [Threshold::At(cell.k0), Threshold::At(cell.k1)]
            })
        })
        .collect()
}

#[test]
fn criterion_1_table1_reproduction() {
    let matching = table1_matching_modes(60);
    let detail = format!(
        "modes matching all 20 threshold cells at caps 60, tol 1e-10: [{}]",
        matching.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
    );
    report(1, "single-device threshold table", !matching.is_empty(), &detail);
}

#[test]
fn criterion_2_five_decentralized_strategies() {
    let mut mode_results = Vec::new();
    for mode in RecursionMode::ALL {
        let mut failures = Vec::new();
        for (c, spec) in published_strategies() {
            let sol =
                solve_coordinated(&reference_params(0.3, 0.3, c), 60, 60, mode, 1e-10).unwrap();
            let mismatches = match_pattern(&sol, &spec, 12, 12);
            if !mismatches.is_empty() {
                failures.push(format!(
                    "c={c}: {} mismatches, e.g. {}",
                    mismatches.len(),
                    mismatches[0]
                ));
            }
        }
        mode_results.push((mode, failures));
    }
    let pass = mode_results.iter().any(|(_, f)| f.is_empty());
    let detail = mode_results
        .iter()
        .map(|(mode, f)| {
            if f.is_empty() {
                format!("{mode}: all five match")
            } else {
                format!("{mode}: {}", f.join("; "))
            }
        })
        .collect::<Vec<_>>()
        .join(" | ");
    report(2, "five two-device reference strategies", pass, &detail);
}

#[test]
fn criterion_3_belief_oracle_equivalence() {
    let params = reference_params(0.3, 0.2, 0.3);
    let nodes = enumerate_belief_nodes(&params, ArrivalModel::Independent, 6);
    let mut max_dev = 0.0f64;
    for node in &nodes {
        let oracle = bayes_oracle(&params, ArrivalModel::Independent, &node.history).unwrap();
        max_dev = max_dev
            .max((oracle.buffer_marginal(1) - node.index.claimed_buffer(&params, 1)).abs())
            .max((oracle.buffer_marginal(2) - node.index.claimed_buffer(&params, 2)).abs())
            .max((oracle.busy_marginal() - node.index.claimed_busy(&params)).abs());
    }
    let detail = format!(
        "{} distinct belief nodes over all histories of length <= 6, max |index - oracle| = {max_dev:.2e}",
        nodes.len()
    );
    report(3, "index arithmetic vs brute-force Bayes", max_dev <= 1e-12, &detail);
}

#[test]
fn criterion_4_conditional_independence() {
    let params = reference_params(0.3, 0.2, 0.3);
    let gap_indep = check_conditional_independence(&params, ArrivalModel::Independent, 6);
    let gap_corr = check_conditional_independence(&params, ArrivalModel::Correlated, 3);
    let detail = format!(
        "independent arrivals: max factorization gap {gap_indep:.2e} (horizon 6); correlated counterexample: gap {gap_corr:.4} (horizon 3)"
    );
    report(4, "buffer-belief factorization", gap_indep <= 1e-12 && gap_corr > 0.01, &detail);
}

// --- criterion 5 helpers: exact two-step plan enumeration on the ground
// --- truth model, independent of the coordinated MDP's transition code.

type Obs = (u8, u8, Option<u8>);

/// Hidden-state distribution over (n1, n2, s), indexed n1*4 + n2*2 + s.
fn initial_hidden(params: &ModelParams, s_sync: u8) -> [f64; 8] {
    let busy = params.busy_next(s_sync);
    let mut w = [0.0; 8];
    for n1 in 0..2u8 {
        for n2 in 0..2u8 {
            for s in 0..2u8 {
                let pn1 = if n1 == 1 { params.p1 } else { 1.0 - params.p1 };
                let pn2 = if n2 == 1 { params.p2 } else { 1.0 - params.p2 };
                let ps = if s == 1 { busy } else { 1.0 - busy };
                w[(n1 * 4 + n2 * 2 + s) as usize] = pn1 * pn2 * ps;
            }
        }
    }
    w
}

fn step_reward(params: &ModelParams, u1: u8, u2: u8, s: u8) -> f64 {
    -f64::from(u1 + u2) * params.c
        + f64::from(u1 ^ u2) * f64::from(1 - s) * params.r
}

/// One exact model step from a weighted hidden state under prescription
/// `(d1, d2)`: returns expected immediate reward and, per observation, the
/// joint weights of the next hidden state.
fn exact_step(
    params: &ModelParams,
    weights: &[f64; 8],
    d1: u8,
    d2: u8,
) -> (f64, std::collections::BTreeMap<Obs, [f64; 8]>) {
    let mut reward = 0.0;
    let mut branches: std::collections::BTreeMap<Obs, [f64; 8]> = Default::default();
    for n1 in 0..2u8 {
        for n2 in 0..2u8 {
            for s in 0..2u8 {
                let w = weights[(n1 * 4 + n2 * 2 + s) as usize];
                if w == 0.0 {
                    continue;
                }
                let (u1, u2) = (n1 * d1, n2 * d2);
                reward += w * step_reward(params, u1, u2, s);
                let obs: Obs = (u1, u2, if u1 + u2 > 0 { Some(s) } else { None });
                let entry = branches.entry(obs).or_default();
                let idle = 1 - s;
                let n1_next = (n1 - u1 * (1 - u2) * idle).min(1);
                let n2_next = (n2 - u2 * (1 - u1) * idle).min(1);
                let busy = params.busy_next(s);
                for w1 in 0..2u8 {
                    for w2 in 0..2u8 {
                        for s_next in 0..2u8 {
                            let pw1 = if w1 == 1 { params.p1 } else { 1.0 - params.p1 };
                            let pw2 = if w2 == 1 { params.p2 } else { 1.0 - params.p2 };
                            let ps = if s_next == 1 { busy } else { 1.0 - busy };
                            let a = (n1_next + w1).min(1);
                            let b = (n2_next + w2).min(1);
                            entry[(a * 4 + b * 2 + s_next) as usize] += w * pw1 * pw2 * ps;
                        }
                    }
                }
            }
        }
    }
    (reward, branches)
}

/// Literal maximum over all depth-2 prescription plans: a first prescription
/// plus one prescription per realizable first-step observation.
fn best_two_step_plan(params: &ModelParams, s_sync: u8) -> f64 {
    let w0 = initial_hidden(params, s_sync);
    let mut best = f64::NEG_INFINITY;
    for g0 in PRESCRIPTIONS {
        let (r0, branches) = exact_step(params, &w0, g0.d1, g0.d2);
        let obs_list: Vec<&Obs> = branches.keys().collect();
        // Enumerate every assignment of a second-step prescription to every
        // observation (4^|obs| plans for this g0).
        let n_obs = obs_list.len();
        for assignment in 0..4usize.pow(n_obs as u32) {
            let mut value = r0;
            let mut code = assignment;
            for obs in &obs_list {
                let g1 = PRESCRIPTIONS[code % 4];
                code /= 4;
                let (r1, _) = exact_step(params, &branches[obs], g1.d1, g1.d2);
                value += params.beta * r1;
            }
            best = best.max(value);
        }
    }
    best
}

#[test]
fn criterion_5_coordinator_equivalence_small_horizon() {
    let params = reference_params(0.3, 0.2, 0.3);
    let mdp = build_coordinated_mdp(&params, 6, 6, RecursionMode::BayesConsistent).unwrap();
    let stages = finite_horizon_dp(&mdp, 2);
    let v2 = &stages[1];
    let mut max_dev = 0.0f64;
    for s_sync in 0..2u8 {
        let dp = v2.0[mdp.state_id(CoordinatedState {
            k1: BufferBeliefIndex::Finite(1),
            k2: BufferBeliefIndex::Finite(1),
            channel: ChannelBeliefIndex::new(s_sync, 1),
        })];
        let oracle = best_two_step_plan(&params, s_sync);
        max_dev = max_dev.max((dp - oracle).abs());
    }
    let detail = format!("T=2 backward induction vs exhaustive plan enumeration, max |diff| = {max_dev:.2e}");
    report(5, "coordinator equivalence at small horizon", max_dev <= 1e-10, &detail);
}

#[test]
fn criterion_6_dp_vs_monte_carlo() {
    let episodes = 200_000;
    let horizon = 88;
    let mut lines = Vec::new();
    let mut pass = true;

    let dec_params = reference_params(0.3, 0.3, 0.3);
    let sol = solve_coordinated(&dec_params, 60, 60, RecursionMode::BayesConsistent, 1e-10)
        .unwrap();
    let rep = evaluate_two(
        &dec_params,
        || {
            let (a, b) = decentralize(&sol);
            (Box::new(a) as _, Box::new(b) as _)
        },
        episodes,
        horizon,
        2024,
    )
    .unwrap()
    .with_reference(sol.reference_value(&dec_params));
    pass &= rep.within_bound.unwrap();
    lines.push(format!(
        "two-device c=0.3: mc {:.6} vs dp {:.6} (gap {:.2e} <= 3se {:.2e} + tail {:.2e}: {})",
        rep.mean,
        rep.dp_reference.unwrap(),
        rep.abs_gap.unwrap(),
        3.0 * rep.stderr,
        rep.tail_bound,
        rep.within_bound.unwrap()
    ));

    for (p, c) in [(0.1, 0.1), (0.3, 0.3), (0.4, 0.5)] {
        let params = reference_params(p, p, c);
        let csol =
            solve_centralized(&params, 60, RecursionMode::BayesConsistent, 1e-10).unwrap();
        let rep = evaluate_one(
            &params,
            || Box::new(CentralizedController::new(&csol)) as _,
            episodes,
            horizon,
            2024,
        )
        .unwrap()
        .with_reference(csol.reference_value());
        pass &= rep.within_bound.unwrap();
        lines.push(format!(
            "single-device p={p} c={c}: mc {:.6} vs dp {:.6} (gap {:.2e}, within: {})",
            rep.mean,
            rep.dp_reference.unwrap(),
            rep.abs_gap.unwrap(),
            rep.within_bound.unwrap()
        ));
    }
    report(6, "simulation agrees with dynamic program", pass, &lines.join("; "));
}

#[test]
fn criterion_7_person_by_person_fixed_point() {
    let params = reference_params(0.3, 0.3, 0.3);

    // (a) best response to each component of the coordinated optimum cannot
    // improve any state's value beyond numerical noise.
    let sol = solve_coordinated(&params, 30, 30, RecursionMode::BayesConsistent, 1e-12).unwrap();
    let mut max_improvement = f64::NEG_INFINITY;
    for device in [1, 2] {
        let partner = DeviceStrategy::from_policy(device, &sol.policy);
        let br = best_response(&sol.mdp, &partner, 1e-12).unwrap();
        for i in 0..sol.mdp.num_states() {
            max_improvement = max_improvement.max(br.values.0[i] - sol.values.0[i]);
        }
    }

    // (b) best response against a partner that never transmits collapses to
    // the single-device solution: the transmit decision depends only on the
    // channel index and switches at the same thresholds.
    let base = build_coordinated_mdp(&params, 20, 60, RecursionMode::BayesConsistent).unwrap();
    let silent = DeviceStrategy::silent(2, base.num_states());
    let br = best_response(&base, &silent, 1e-10).unwrap();
    let centralized =
        solve_centralized(&params, 60, RecursionMode::BayesConsistent, 1e-10).unwrap();
    let mut uniform_in_buffer_indices = true;
    let mut br_thresholds = [Threshold::AtLeast(60); 2];
    let mut axis: Vec<BufferBeliefIndex> = (1..=20).map(BufferBeliefIndex::Finite).collect();
    axis.push(BufferBeliefIndex::Inf);
    for s in 0..2u8 {
        for m in 1..=60u32 {
            let decisions: Vec<u8> = axis
                .iter()
                .map(|&k1| {
                    let st = CoordinatedState {
                        k1,
                        k2: BufferBeliefIndex::Finite(1),
                        channel: ChannelBeliefIndex::new(s, m),
                    };
                    br.strategy.d[base.state_id(st)]
                })
                .collect();
            uniform_in_buffer_indices &= decisions.windows(2).all(|w| w[0] == w[1]);
            if decisions[0] == 1 {
                if let Threshold::AtLeast(_) = br_thresholds[s as usize] {
                    br_thresholds[s as usize] = Threshold::At(m);
                }
            }
        }
    }
    let thresholds_match = br_thresholds == centralized.thresholds;
    let detail = format!(
        "max state-wise improvement of best response over coordinated optimum: {max_improvement:.2e}; \
         best response vs silent partner uniform across buffer indices: {uniform_in_buffer_indices}, \
         thresholds {}/{} vs centralized {}/{}",
        br_thresholds[0], br_thresholds[1], centralized.thresholds[0], centralized.thresholds[1]
    );
    report(
        7,
        "person-by-person fixed point and reduction",
        max_improvement <= 1e-9 && uniform_in_buffer_indices && thresholds_match,
        &detail,
    );
}

#[test]
fn criterion_8_numerical_hygiene() {
    let params = reference_params(0.3, 0.3, 0.3);

    // Contraction on every sweep of a representative solve.
    let sol = solve_coordinated(&params, 30, 30, RecursionMode::AsPrinted, 1e-10).unwrap();
    let residuals = &sol.solve.residuals;
    let contraction_ok = residuals
        .windows(2)
        .all(|w| w[1] <= params.beta * w[0] + 1e-13);

    // Doubling the truncation caps changes no reported threshold.
    let mut thresholds_stable = true;
    for cell in table1() {
        let cell_params = reference_params(cell.p, cell.p, cell.c);
        let a = solve_centralized(&cell_params, 60, RecursionMode::BayesConsistent, 1e-10)
            .unwrap();
        let b = solve_centralized(&cell_params, 120, RecursionMode::BayesConsistent, 1e-10)
            .unwrap();
        thresholds_stable &= a.thresholds == b.thresholds;
    }

    // ... nor the region-limited two-device policy.
    let small = solve_coordinated(&params, 60, 60, RecursionMode::AsPrinted, 1e-10).unwrap();
    let large = solve_coordinated(&params, 120, 120, RecursionMode::AsPrinted, 1e-10).unwrap();
    let mut axis: Vec<BufferBeliefIndex> = (1..=12).map(BufferBeliefIndex::Finite).collect();
    axis.push(BufferBeliefIndex::Inf);
    let mut policy_stable = true;
    let mut policy_diff: Option<(CoordinatedState, Prescription, Prescription)> = None;
    for &k1 in &axis {
        for &k2 in &axis {
            for s in 0..2u8 {
                for m in 1..=12u32 {
                    let st = CoordinatedState { k1, k2, channel: ChannelBeliefIndex::new(s, m) };
                    let (a, b) = (small.prescription(st), large.prescription(st));
                    if a != b {
                        policy_stable = false;
                        policy_diff.get_or_insert((st, a, b));
                    }
                }
            }
        }
    }
    let detail = format!(
        "contraction holds over {} sweeps: {contraction_ok}; 20 threshold cells stable under caps 60->120: {thresholds_stable}; region-limited policy stable: {policy_stable}{}",
        residuals.len(),
        policy_diff
            .map(|(st, a, b)| format!(" (first diff at {st:?}: {a} vs {b})"))
            .unwrap_or_default()
    );
    report(
        8,
        "contraction and truncation stability",
        contraction_ok && thresholds_stable && policy_stable,
        &detail,
    );
}

//! Property-based checks of the generic MDP machinery against brute force on
//! randomly generated small instances.

use macsched::mdp::{
    bellman_backup, extract_policy, policy_evaluation, value_iteration, Mdp, PolicyTable,
    TableMdp,
};
use proptest::prelude::*;

const MAX_STATES: usize = 6;
const MAX_ACTIONS: usize = 3;

fn arb_mdp() -> impl Strategy<Value = TableMdp> {
    (2..=MAX_STATES, 1..=MAX_ACTIONS, 0.1f64..0.95).prop_flat_map(|(n, a, discount)| {
        let branch = (0..n, -1.0f64..1.0, 0.05f64..1.0);
        let action = proptest::collection::vec(branch, 1..=3);
        let state = proptest::collection::vec(action, a);
        proptest::collection::vec(state, n).prop_map(move |raw| {
            let transitions = raw
                .into_iter()
                .map(|actions| {
                    actions
                        .into_iter()
                        .map(|branches| {
                            let total: f64 = branches.iter().map(|(_, _, w)| w).sum();
                            branches
                                .into_iter()
                                .map(|(next, reward, w)| (w / total, next, reward))
                                .collect()
                        })
                        .collect()
                })
                .collect();
            TableMdp::new(transitions, discount).unwrap()
        })
    })
}

/// Every deterministic stationary policy of a small MDP.
fn all_policies(mdp: &TableMdp) -> Vec<PolicyTable> {
    let mut out = vec![PolicyTable(Vec::new())];
    for s in 0..mdp.num_states() {
        let mut next = Vec::new();
        for p in &out {
            for a in 0..mdp.num_actions(s) {
                let mut q = p.0.clone();
                q.push(a);
                next.push(PolicyTable(q));
            }
        }
        out = next;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_iteration_reaches_bellman_fixed_point(mdp in arb_mdp()) {
        let solve = value_iteration(&mdp, 1e-12, 200_000).unwrap();
        prop_assert!(solve.converged);
        let (backed, _) = bellman_backup(&mdp, &solve.values);
        let residual = solve.values.sup_distance(&backed);
        // One more backup moves the iterate by at most tol/(1-beta).
        prop_assert!(residual <= 1e-12 / (1.0 - mdp.discount) + 1e-12);
    }

    #[test]
    fn optimal_value_dominates_every_policy(mdp in arb_mdp()) {
        let solve = value_iteration(&mdp, 1e-12, 200_000).unwrap();
        let slack = 1e-9;
        for policy in all_policies(&mdp) {
            let v = policy_evaluation(&mdp, &policy, 1e-12, 200_000).unwrap().values;
            for s in 0..mdp.num_states() {
                prop_assert!(
                    v.0[s] <= solve.values.0[s] + slack,
                    "policy {:?} beats VI at state {s}: {} > {}",
                    policy.0, v.0[s], solve.values.0[s]
                );
            }
        }
    }

    #[test]
    fn extracted_policy_attains_optimal_value(mdp in arb_mdp()) {
        let solve = value_iteration(&mdp, 1e-12, 200_000).unwrap();
        let policy = extract_policy(&mdp, &solve.values);
        let v = policy_evaluation(&mdp, &policy, 1e-12, 200_000).unwrap().values;
        prop_assert!(v.sup_distance(&solve.values) <= 1e-8);
    }

    #[test]
    fn residuals_contract_geometrically(mdp in arb_mdp()) {
        let solve = value_iteration(&mdp, 1e-12, 200_000).unwrap();
        for w in solve.residuals.windows(2) {
            prop_assert!(w[1] <= mdp.discount * w[0] + 1e-13);
        }
    }

    #[test]
    fn policy_improvement_is_monotone(mdp in arb_mdp()) {
        // Start from action 0 everywhere; one greedy step never hurts.
        let initial = PolicyTable(vec![0; mdp.num_states()]);
        let v0 = policy_evaluation(&mdp, &initial, 1e-12, 200_000).unwrap().values;
        let improved = extract_policy(&mdp, &v0);
        let v1 = policy_evaluation(&mdp, &improved, 1e-12, 200_000).unwrap().values;
        for s in 0..mdp.num_states() {
            prop_assert!(v1.0[s] >= v0.0[s] - 1e-9);
        }
    }
}

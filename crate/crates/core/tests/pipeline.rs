use cmlab_core::circuit::{decode, encode, encode_with_meta, Evaluator};
use cmlab_core::mdp::{sample_conditioned_spec, MajoritySpecFile};
use cmlab_core::solver::{backward_induction, optimal_policy};
use cmlab_core::{gadgets, BitString, Circuit, DeterministicMdp, MajorityMdpSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instances() -> Vec<MajorityMdpSpec> {
    let s: BitString = "0110100".parse().unwrap();
    vec![
        MajorityMdpSpec::unconditioned(7, s).unwrap(),
        sample_conditioned_spec(7, 3, 2, &mut ChaCha8Rng::seed_from_u64(17)).unwrap(),
        sample_conditioned_spec(3, 1, 1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap(),
    ]
}

/// Rolls the circuits forward under the optimal policy and compares the
/// collected reward with the solver's value at every start state.
#[test]
fn circuit_rollouts_collect_the_optimal_value() {
    for spec in instances() {
        let model = gadgets::majority_mdp_model_circuit(&spec);
        let reward = gadgets::majority_mdp_reward_circuit(&spec);
        let (mut m, mut r) = (Evaluator::new(&model).unwrap(), Evaluator::new(&reward).unwrap());
        let sol = backward_induction(&spec).unwrap();
        let policy = optimal_policy(&sol.q);
        for s0 in 0..1u64 << spec.state_width() {
            let mut s = s0;
            let mut total = 0u32;
            for h in 1..=spec.horizon() {
                let a = policy.action(h, s);
                let bit = r.eval_int(s) as u32;
                assert_eq!(bit, spec.reward(s, a));
                total += bit;
                s = m.eval_int((s << 1) | a as u64);
            }
            assert_eq!(total, sol.values.initial(s0), "start {s0:b}");
        }
    }
}

#[test]
fn built_circuits_survive_json() {
    let spec = &instances()[1];
    let circuits: Vec<Circuit> = vec![
        gadgets::majority_mdp_model_circuit(spec),
        gadgets::majority_mdp_reward_circuit(spec),
        gadgets::parity_mdp_model_circuit(5).unwrap(),
        gadgets::addition_circuit(4).unwrap(),
        gadgets::max_circuit(3).unwrap(),
        gadgets::delta_k(4, 9).unwrap(),
        gadgets::xor2(),
    ];
    for c in circuits {
        assert_eq!(decode(&encode(&c)).unwrap(), c);
        let tagged = encode_with_meta(&c, serde_json::json!({"family": "x"}));
        assert_eq!(decode(&tagged).unwrap(), c);
    }
}

#[test]
fn spec_files_round_trip() {
    for spec in instances() {
        let file = MajoritySpecFile::from_spec(&spec, Some(3));
        let text = serde_json::to_string(&file).unwrap();
        let back: MajoritySpecFile = serde_json::from_str(&text).unwrap();
        let rebuilt = back.to_spec().unwrap();
        assert_eq!(rebuilt.s_reward(), spec.s_reward());
        assert_eq!(rebuilt.control().table(), spec.control().table());
        assert_eq!(
            rebuilt.condition().map(ToString::to_string),
            spec.condition().map(ToString::to_string)
        );
        let (a, b) = (backward_induction(&spec).unwrap(), backward_induction(&rebuilt).unwrap());
        for s in 0..1u64 << spec.state_width() {
            assert_eq!(a.values.initial(s), b.values.initial(s));
        }
    }
}

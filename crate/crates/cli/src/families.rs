//! Circuit families and majority-spec resolution shared by the subcommands.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use cmlab_core::bits::bits_for;
use cmlab_core::mdp::{sample_conditioned_spec, MajoritySpecFile, ParityMdpSpec};
use cmlab_core::verify::{self, Oracle};
use cmlab_core::{gadgets, BitString, Circuit, MajorityMdpSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{require, usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    MajorityModel,
    MajorityReward,
    ParityModel,
    ParityReward,
    Addition,
    Max,
    Xor,
    Delta,
    Control,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::MajorityModel,
        Family::MajorityReward,
        Family::ParityModel,
        Family::ParityReward,
        Family::Addition,
        Family::Max,
        Family::Xor,
        Family::Delta,
        Family::Control,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::MajorityModel => "majority-model",
            Family::MajorityReward => "majority-reward",
            Family::ParityModel => "parity-model",
            Family::ParityReward => "parity-reward",
            Family::Addition => "addition",
            Family::Max => "max",
            Family::Xor => "xor",
            Family::Delta => "delta",
            Family::Control => "control",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|f| f.name()).collect();
            usage(format!("unknown family {name:?}; expected one of {}", names.join(", ")))
        })
    }

    pub fn needs_majority_spec(self) -> bool {
        matches!(self, Family::MajorityModel | Family::MajorityReward | Family::Control)
    }
}

/// Flags that pin down a majority MDP.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MajorityParams {
    pub n: Option<usize>,
    pub spec: Option<PathBuf>,
    pub s_reward: Option<String>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
}

/// `1010...` of width `n`.
pub fn default_s_reward(n: usize) -> BitString {
    BitString::new((0..n).map(|i| i % 2 == 0).collect())
}

pub fn read_spec_file(path: &PathBuf) -> Result<MajoritySpecFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading spec {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("spec {}: {e}", path.display())))
}

/// Spec from `--spec`, else a sampled conditioned spec when `--m/--k` are
/// given (needs `--seed`), else unconditioned with `--s-reward`, a
/// seed-drawn `s_reward`, or `1010...`.
pub fn resolve_majority(p: &MajorityParams) -> Result<MajorityMdpSpec> {
    if let Some(path) = &p.spec {
        let file = read_spec_file(path)?;
        if p.n.is_some_and(|n| n != file.n) {
            return Err(usage(format!("--n {} disagrees with spec n = {}", p.n.unwrap(), file.n)));
        }
        return file.to_spec().map_err(|e| usage(e.to_string()));
    }
    let n = require(p.n, "n")?;
    let b = bits_for(n as u64);
    if n == 0 || n != (1usize << b) - 1 || b > 6 {
        return Err(usage(format!("majority MDPs need n = 2^b - 1 <= 63, got {n}")));
    }
    if p.m.is_some() || p.k.is_some() {
        let m = require(p.m, "m")?;
        let k = require(p.k, "k")?;
        let seed = require(p.seed, "seed")?;
        return sample_conditioned_spec(n, m, k, &mut ChaCha8Rng::seed_from_u64(seed))
            .map_err(|e| usage(e.to_string()));
    }
    let s_reward = match (&p.s_reward, p.seed) {
        (Some(text), _) => text.parse::<BitString>().map_err(|e| usage(format!("--s-reward: {e}")))?,
        (None, Some(seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            BitString::new((0..n).map(|_| rng.gen_bool(0.5)).collect())
        }
        (None, None) => default_s_reward(n),
    };
    MajorityMdpSpec::unconditioned(n, s_reward).map_err(|e| usage(e.to_string()))
}

/// Builds `family` at size `n`; `index` is the `k` of `delta`.
pub fn build(family: Family, n: usize, index: Option<u64>, spec: Option<&MajorityMdpSpec>) -> Result<Circuit> {
    let bad = |e: &dyn std::fmt::Display| usage(format!("{}: {e}", family.name()));
    Ok(match family {
        Family::MajorityModel => gadgets::majority_mdp_model_circuit(spec.expect("resolved")),
        Family::MajorityReward => gadgets::majority_mdp_reward_circuit(spec.expect("resolved")),
        Family::Control => gadgets::control_circuit(spec.expect("resolved").control()),
        Family::ParityModel => gadgets::parity_mdp_model_circuit(n).map_err(|e| bad(&e))?,
        Family::ParityReward => gadgets::parity_mdp_reward_circuit(n).map_err(|e| bad(&e))?,
        Family::Addition => gadgets::addition_circuit(n).map_err(|e| bad(&e))?,
        Family::Max => gadgets::max_circuit(n).map_err(|e| bad(&e))?,
        Family::Xor => gadgets::xor2(),
        Family::Delta => gadgets::delta_k(n, require(index, "k")?).map_err(|e| bad(&e))?,
    })
}

/// Reference semantics the family's circuit must match.
pub fn oracle<'a>(
    family: Family,
    n: usize,
    index: Option<u64>,
    spec: Option<&'a MajorityMdpSpec>,
) -> Result<Box<Oracle<'a>>> {
    let parity = || ParityMdpSpec::new(n).map_err(|e| usage(e.to_string()));
    Ok(match family {
        Family::MajorityModel => verify::majority_model_oracle(spec.expect("resolved")),
        Family::MajorityReward => verify::majority_reward_oracle(spec.expect("resolved")),
        Family::Control => verify::control_oracle(spec.expect("resolved").control()),
        Family::ParityModel => verify::parity_model_oracle(parity()?),
        Family::ParityReward => verify::parity_reward_oracle(parity()?),
        Family::Addition => verify::addition_oracle(n),
        Family::Max => verify::max_oracle(n),
        Family::Xor => verify::xor_oracle(),
        Family::Delta => verify::delta_oracle(require(index, "k")?),
    })
}

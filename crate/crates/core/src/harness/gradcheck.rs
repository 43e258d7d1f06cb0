use std::collections::BTreeMap;

use crate::data::{Story, EOS};
use crate::error::Result;
use crate::model::{module_of, prepare, Architecture, Bound, ModelConfig, ModelParams, SelectionMode};
use crate::numerics::{analytic_gradient, compare, numeric_gradient, Rng, Tape, Tensor, Var};
use crate::training::{total_loss, TrainConfig};

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;

/// Worst finite-difference disagreement over one module's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModuleCheck {
    pub module: String,
    pub max_rel_err: f64,
    pub checked: usize,
    pub pass: bool,
}

/// A random n=2, k=4, |V|=7 instance: model, album and story.
pub fn gradcheck_instance(seed: u64, architecture: Architecture) -> Result<(ModelConfig, ModelParams, Tensor, Story)> {
    let mut rng = Rng::new(seed);
    let config = ModelConfig {
        architecture,
        ..ModelConfig::new(4, 3, 3, 3, 7)
    };
    let params = ModelParams::init(&config, &mut rng)?;
    let features = Tensor::new(vec![2, 4], (0..8).map(|_| rng.normal()).collect())?;
    let sentences = (0..config.steps)
        .map(|_| {
            let len = rng.below(3);
            let mut s: Vec<usize> = (0..len).map(|_| 3 + rng.below(4)).collect();
            s.push(EOS);
            s
        })
        .collect();
    Ok((config, params, features, Story::new(sentences, 7)?))
}

fn by_module(names: &[(String, usize)], analytic: &[f64], numeric: &[f64]) -> BTreeMap<String, (Vec<f64>, Vec<f64>)> {
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut at = 0;
    for (name, len) in names {
        let g = groups.entry(module_of(name).to_string()).or_default();
        g.0.extend_from_slice(&analytic[at..at + len]);
        g.1.extend_from_slice(&numeric[at..at + len]);
        at += len;
    }
    groups
}

fn check_loss(
    config: &ModelConfig,
    params: &ModelParams,
    loss: impl Fn(&mut Tape, &Bound<'_>) -> Result<Var>,
) -> Result<BTreeMap<String, (Vec<f64>, Vec<f64>)>> {
    let leaves: Vec<(String, Tensor)> = params.leaves().into_iter().map(|(n, t)| (n, t.clone())).collect();
    let names: Vec<(String, usize)> = leaves.iter().map(|(n, t)| (n.clone(), t.numel())).collect();
    let points: Vec<Tensor> = leaves.into_iter().map(|(_, t)| t).collect();
    let f = |tape: &mut Tape, vars: &[Var]| {
        let mut it = vars.iter().copied();
        let p = params.map(|_, _| it.next().expect("one var per leaf"));
        loss(tape, &Bound { config, p })
    };
    let analytic = analytic_gradient(&f, &points)?;
    let numeric = numeric_gradient(&f, &points, GRADCHECK_STEP)?;
    Ok(by_module(&names, &analytic, &numeric))
}

/// Central-difference check of every parameter gradient, grouped by module.
///
/// Encoder, selector and generator are checked through the full training
/// loss (λ = 1, one fixed shuffled negative); the baseline parameters
/// through the enc-dec and enc-attn-dec likelihoods.
pub fn gradcheck_modules(seed: u64) -> Result<Vec<ModuleCheck>> {
    let (config, params, features, story) = gradcheck_instance(seed, Architecture::HAttn)?;
    let cfg = TrainConfig { lambda: 1.0, ..TrainConfig::default() };
    let full = check_loss(&config, &params, |tape, m| {
        let prep = prepare(tape, m, &features, &SelectionMode::SoftTrain)?;
        let mut rng = Rng::new(seed).fork(2);
        Ok(total_loss(tape, m, &prep, &story, &cfg, &mut rng)?.total)
    })?;
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = full
        .into_iter()
        .filter(|(m, _)| m != "baseline")
        .collect();
    for arch in [Architecture::EncDec, Architecture::EncAttnDec] {
        let config = ModelConfig { architecture: arch, ..config.clone() };
        let base = check_loss(&config, &params, |tape, m| {
            let prep = prepare(tape, m, &features, &SelectionMode::SoftTrain)?;
            crate::model::log_prob(tape, m, &prep, &story)
        })?;
        if let Some((a, n)) = base.get("baseline") {
            let g = groups.entry("baseline".into()).or_default();
            g.0.extend_from_slice(a);
            g.1.extend_from_slice(n);
        }
    }
    let order = ["encoder", "selector", "generator", "baseline"];
    Ok(order
        .iter()
        .filter_map(|&m| {
            let (a, n) = groups.get(m)?;
            let r = compare(a, n, GRADCHECK_TOL);
            Some(ModuleCheck {
                module: m.to_string(),
                max_rel_err: r.max_rel_err,
                checked: r.checked,
                pass: r.pass,
            })
        })
        .collect())
}

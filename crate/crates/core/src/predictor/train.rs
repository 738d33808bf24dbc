use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{net::Mlp, DemoStep, DemoTrace, PredictError, ScorerWeights, CONTEXT_DIM, PARAM_DIMS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub margin: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { margin: 1.0, epochs: 200, learning_rate: 0.01, hidden: 32, seed: 0 }
    }
}

/// Mean hinge loss per step after each epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub epoch_loss: Vec<f64>,
}

/// Hinge loss of one step, `Σ max(0, margin + s_neg − s_chosen)` over the
/// other candidates, with its gradient added to `grad` (flat layout).
pub fn hinge_loss_and_grad(
    w: &ScorerWeights,
    step: &DemoStep,
    margin: f64,
    grad: &mut [f64],
) -> Result<f64, PredictError> {
    let x = &step.context;
    if x.len() != w.context_dim {
        return Err(PredictError::DimensionMismatch { expected: w.context_dim, got: x.len() });
    }
    let a_act = w.action_net.activations(x);
    let mut inputs = Vec::with_capacity(step.candidates.len());
    let mut scores = Vec::with_capacity(step.candidates.len());
    for c in &step.candidates {
        let k = c.action.action_type().index();
        if c.params.len() != w.param_dims[k] {
            return Err(PredictError::DimensionMismatch { expected: w.param_dims[k], got: c.params.len() });
        }
        let mut input = x.clone();
        input.extend_from_slice(&c.params);
        let act = w.param_nets[k].activations(&input);
        scores.push(a_act.out[k] + act.out[0]);
        inputs.push((k, input, act));
    }
    let best = scores[step.chosen];
    let mut coeff = vec![0.0; scores.len()];
    let mut loss = 0.0;
    for (j, s) in scores.iter().enumerate() {
        if j == step.chosen {
            continue;
        }
        let l = margin + s - best;
        if l > 0.0 {
            loss += l;
            coeff[j] += 1.0;
            coeff[step.chosen] -= 1.0;
        }
    }
    if loss == 0.0 {
        return Ok(0.0);
    }

    let mut offsets = vec![w.action_net.params.len()];
    for n in &w.param_nets[..2] {
        offsets.push(offsets.last().unwrap() + n.params.len());
    }
    let mut a_up = [0.0; 3];
    for (j, (k, input, act)) in inputs.iter().enumerate() {
        if coeff[j] == 0.0 {
            continue;
        }
        a_up[*k] += coeff[j];
        let net = &w.param_nets[*k];
        let start = offsets[*k];
        net.backward(input, act, &[coeff[j]], &mut grad[start..start + net.params.len()]);
    }
    let n = w.action_net.params.len();
    w.action_net.backward(x, &a_act, &a_up, &mut grad[..n]);
    Ok(loss)
}

fn initial_weights(cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> ScorerWeights {
    let mut w = ScorerWeights::zeros(cfg.hidden);
    w.action_net = Mlp::random(CONTEXT_DIM, cfg.hidden, 3, rng);
    for (i, d) in PARAM_DIMS.iter().enumerate() {
        w.param_nets[i] = Mlp::random(CONTEXT_DIM + d, cfg.hidden, 1, rng);
    }
    w
}

/// Stochastic gradient descent on the summed hinge loss, one step at a
/// time in a seeded shuffled order. Same inputs and seed give the same
/// weights.
pub fn train_max_margin(
    traces: &[DemoTrace],
    cfg: &TrainConfig,
) -> Result<(ScorerWeights, TrainingCurve), PredictError> {
    let steps: Vec<&DemoStep> = traces.iter().flat_map(|t| &t.steps).collect();
    if steps.is_empty() {
        return Err(PredictError::EmptyDataset);
    }
    for (i, s) in steps.iter().enumerate() {
        if s.candidates.len() < 2 || s.chosen >= s.candidates.len() {
            return Err(PredictError::NoNegatives(i));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = initial_weights(cfg, &mut rng);
    let mut flat = w.flat();
    let mut grad = vec![0.0; flat.len()];
    let mut order: Vec<usize> = (0..steps.len()).collect();
    let mut curve = TrainingCurve::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = hinge_loss_and_grad(&w, steps[i], cfg.margin, &mut grad)?;
            total += loss;
            if loss > 0.0 {
                for (p, g) in flat.iter_mut().zip(&grad) {
                    *p -= cfg.learning_rate * g;
                }
                w.set_flat(&flat);
            }
        }
        curve.epoch_loss.push(total / steps.len() as f64);
    }
    Ok((w, curve))
}

//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls the library's forward, loss or metric code: every
//! quantity is recomputed with plain loops so the tests compare two
//! separate implementations.

#![allow(dead_code)]

use attribution_space::detector::{DetectorModel, TrainConfig};
use attribution_space::features::{split, AttributionSource, FeatureDataset, Label};
use attribution_space::numeric::{Activation, MlpParams, SeededRng};
use attribution_space::synth::{generate, SynthSpec};

/// Training schedule used by the end-to-end checks.
///
/// Learning rate, batch size and the five attribution epochs per round are
/// the library defaults. The linear probe gets 50 epochs per round because
/// at this learning rate its bias needs many more steps than the attribution
/// module to settle, most visibly on small training fractions.
pub fn reference_config(source: AttributionSource) -> TrainConfig {
    TrainConfig {
        source,
        seed: 7,
        rounds: 100,
        acm_epochs_per_round: 5,
        cls_epochs_per_round: 50,
        ..TrainConfig::default()
    }
}

/// Reference synthetic instance split in half: (training pool, held-out).
pub fn reference_split(spec: &SynthSpec) -> (FeatureDataset, FeatureDataset) {
    let data = generate(spec).expect("valid spec");
    split(&data, 0.5, 7).expect("valid split")
}

/// Layer-by-layer forward pass for one sample. Returns every layer's
/// pre-activation and the final output.
pub fn naive_forward(net: &MlpParams, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pre = Vec::new();
    let mut a = x.to_vec();
    for layer in net.layers() {
        let (out_dim, in_dim) = layer.weight.shape();
        assert_eq!(in_dim, a.len());
        let mut z = vec![0.0; out_dim];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut s = layer.bias[o];
            for (i, ai) in a.iter().enumerate() {
                s += layer.weight.get(o, i) * ai;
            }
            *zo = s;
        }
        a = match layer.activation {
            Activation::Relu => z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Activation::Identity => z.clone(),
        };
        pre.push(z);
    }
    (pre, a)
}

/// Pre-activations that feed a ReLU; the loss is not differentiable where
/// any of them is 0.
pub fn relu_kinks(net: &MlpParams, pre: &[Vec<f64>]) -> Vec<f64> {
    net.layers()
        .iter()
        .zip(pre)
        .filter(|(l, _)| l.activation == Activation::Relu)
        .flat_map(|(_, z)| z.iter().copied())
        .collect()
}

/// Mean over rows of `sum_j |x_j - dec(enc(x))_j|`, together with every
/// quantity whose sign decides the local branch of the loss.
pub fn naive_reconstruction_loss(encoder: &MlpParams, decoder: &MlpParams, rows: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut kinks = Vec::new();
    for x in rows {
        let (pre_e, code) = naive_forward(encoder, x);
        let (pre_d, recon) = naive_forward(decoder, &code);
        kinks.extend(relu_kinks(encoder, &pre_e));
        kinks.extend(relu_kinks(decoder, &pre_d));
        for (a, b) in x.iter().zip(&recon) {
            total += (a - b).abs();
            kinks.push(a - b);
        }
    }
    (total / rows.len() as f64, kinks)
}

/// Mean binary cross-entropy of a one-logit network, probabilities clamped
/// to `[eps, 1 - eps]` with `eps = 1e-7`. Inside the clamp the log terms
/// are evaluated as softplus of the logit, which stays accurate when the
/// sigmoid saturates.
pub fn naive_bce_loss(net: &MlpParams, rows: &[Vec<f64>], labels: &[f64]) -> (f64, Vec<f64>) {
    let eps: f64 = 1e-7;
    let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
    let mut total = 0.0;
    let mut kinks = Vec::new();
    for (x, &y) in rows.iter().zip(labels) {
        let (pre, out) = naive_forward(net, x);
        kinks.extend(relu_kinks(net, &pre));
        let z = out[0];
        let p = 1.0 / (1.0 + (-z).exp());
        // The trainer passes the gradient straight through the clamp, so a
        // clamped sample is reported as sitting on a kink.
        let inside = (eps..=1.0 - eps).contains(&p);
        kinks.push(if inside { p.min(1.0 - p) } else { 0.0 });
        let (log_p, log_q) = if inside {
            (-softplus(-z), -softplus(z))
        } else {
            let p = p.clamp(eps, 1.0 - eps);
            (p.ln(), (1.0 - p).ln())
        };
        total -= y * log_p + (1.0 - y) * log_q;
    }
    (total / rows.len() as f64, kinks)
}

/// Signs of the kink variables, 0 for anything within `margin` of zero.
pub fn branch_pattern(kinks: &[f64], margin: f64) -> Vec<i8> {
    kinks
        .iter()
        .map(|&v| if v.abs() <= margin { 0 } else if v > 0.0 { 1 } else { -1 })
        .collect()
}

/// Outcome of comparing analytic and numerical gradients of one network.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    pub worst_rel_error: f64,
}

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms; below it the
/// central difference is dominated by rounding in the loss.
pub const GRAD_FLOOR: f64 = 1e-4;
/// Kink variables this close to zero make a coordinate non-differentiable
/// for checking purposes.
pub const KINK_MARGIN: f64 = 1e-6;

/// Loss with the kink variables of the evaluation.
pub type KinkedLoss<'a> = dyn Fn(&[&mut MlpParams]) -> (f64, Vec<f64>) + 'a;

/// Central-difference check of `analytic` against `loss`, one coordinate at
/// a time. A coordinate is skipped when the step crosses a kink.
pub fn check_gradient(
    params: &mut [&mut MlpParams],
    analytic: &[f64],
    loss: &KinkedLoss,
) -> GradCheck {
    let mut out = GradCheck::default();
    let base = branch_pattern(&loss(&*params).1, KINK_MARGIN);
    if base.contains(&0) {
        out.skipped = analytic.len();
        return out;
    }
    let mut idx = 0;
    for net in 0..params.len() {
        for i in 0..params[net].num_params() {
            let orig = *params[net].param_mut(i);
            *params[net].param_mut(i) = orig + FD_STEP;
            let (up, k_up) = loss(&*params);
            *params[net].param_mut(i) = orig - FD_STEP;
            let (down, k_down) = loss(&*params);
            *params[net].param_mut(i) = orig;
            let a = analytic[idx];
            idx += 1;
            if branch_pattern(&k_up, KINK_MARGIN) != base || branch_pattern(&k_down, KINK_MARGIN) != base {
                out.skipped += 1;
                continue;
            }
            let n = (up - down) / (2.0 * FD_STEP);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(GRAD_FLOOR);
            out.worst_rel_error = out.worst_rel_error.max(rel);
            out.checked += 1;
        }
    }
    assert_eq!(idx, analytic.len(), "analytic gradient length");
    out
}

/// Random network with the given layer widths: Glorot-uniform weights,
/// biases uniform in [-0.5, 0.5], hidden activations drawn at random and an
/// identity output.
pub fn random_net(rng: &mut SeededRng, widths: &[usize]) -> MlpParams {
    let acts: Vec<Activation> = (1..widths.len())
        .map(|i| {
            if i + 1 == widths.len() || rng.uniform() < 0.3 {
                Activation::Identity
            } else {
                Activation::Relu
            }
        })
        .collect();
    let mut net = MlpParams::glorot(widths, &acts, rng).unwrap();
    for layer in net.layers_mut() {
        layer.bias.iter_mut().for_each(|b| *b = rng.uniform_range(-0.5, 0.5));
    }
    net
}

pub fn random_rows(rng: &mut SeededRng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.uniform_range(-scale, scale)).collect())
        .collect()
}

/// Average precision by counting: each positive's rank is one plus the
/// number of samples ahead of it, precision at that rank counts positives
/// at or before it. Terms are summed in rank order.
pub fn oracle_average_precision(scores: &[f64], labels: &[Label]) -> Option<f64> {
    let n = scores.len();
    let ahead = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
    let rank = |i: usize| 1 + (0..n).filter(|&j| ahead(i, j)).count();
    let mut positives: Vec<(usize, usize)> = (0..n)
        .filter(|&i| labels[i] == Label::Generated)
        .map(|i| (rank(i), i))
        .collect();
    if positives.is_empty() {
        return None;
    }
    positives.sort();
    let mut sum = 0.0;
    for (hits, &(r, _)) in positives.iter().enumerate() {
        sum += (hits + 1) as f64 / r as f64;
    }
    Some(sum / positives.len() as f64)
}

/// (acc, f1, real_acc, fake_acc) from hard decisions `p > t`.
pub fn oracle_accuracy(probs: &[f64], labels: &[Label], t: f64) -> (f64, f64, Option<f64>, Option<f64>) {
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in probs.iter().zip(labels) {
        let predicted_generated = p > t;
        match (predicted_generated, y == Label::Generated) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let n = probs.len();
    let acc = (tp + tn) as f64 / n as f64;
    let f1 = if tp == 0 { 0.0 } else { (2 * tp) as f64 / (2 * tp + fp + fneg) as f64 };
    let real = (tn + fp > 0).then(|| tn as f64 / (tn + fp) as f64);
    let fake = (tp + fneg > 0).then(|| tp as f64 / (tp + fneg) as f64);
    (acc, f1, real, fake)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Separability with the class spreads taken from pairwise distances: the
/// mean squared distance to the class mean is half the mean pairwise
/// squared distance. Returns (inter, var_r, var_g, fisher), fisher `None`
/// when both spreads are zero.
pub fn oracle_separability(r: &[Vec<f64>], g: &[Vec<f64>]) -> (f64, f64, f64, Option<f64>) {
    let within = |c: &[Vec<f64>]| {
        let n = c.len() as f64;
        let mut s = 0.0;
        for a in c {
            for b in c {
                s += sq_dist(a, b);
            }
        }
        s / (2.0 * n * n)
    };
    let mean = |c: &[Vec<f64>]| {
        let mut m = vec![0.0; c[0].len()];
        for row in c {
            for (j, v) in row.iter().enumerate() {
                m[j] += v;
            }
        }
        m.iter().map(|v| v / c.len() as f64).collect::<Vec<f64>>()
    };
    let (vr, vg) = (within(r), within(g));
    let inter = sq_dist(&mean(r), &mean(g)).sqrt();
    let fisher = (vr + vg > 0.0).then(|| inter * inter / (vr + vg));
    (inter, vr, vg, fisher)
}

/// Mean per-row L1 norm of a set of deviation rows selected by label.
pub fn mean_deviation_norm(model: &DetectorModel, data: &FeatureDataset, label: Label) -> f64 {
    let dev = model
        .deviations(&data.to_matrix(false))
        .expect("matching width");
    let labels = data.labels();
    let norms: Vec<f64> = dev
        .row_iter()
        .zip(&labels)
        .filter(|(_, &y)| y == label)
        .map(|(row, _)| row.iter().map(|v| v.abs()).sum())
        .collect();
    norms.iter().sum::<f64>() / norms.len() as f64
}

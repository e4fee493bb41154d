//! Central-difference checks shared by the gradient tests and the acceptance run.
#![allow(dead_code)]

use amp_biped::amp::{discriminator_loss, Discriminator, AMP_TRANSITION_DIM};
use amp_biped::nn::ParamTree;
use amp_biped::rl::{
    gaussian_log_prob, ppo_loss, InputScaling, ObsBatch, PolicyShape, PpoBatch, PpoConfig, TeacherPolicy, ACTION_DIM,
    PRIVILEGED_DIM, PROPRIO_DIM, TERRAIN_DIM,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const RTOL: f64 = 1e-4;
pub const ATOL: f64 = 1e-7;
pub const MAX_PARAMS: usize = 500;

pub fn compare(analytic: &[f64], numeric: &[f64]) -> Result<(), String> {
    if analytic.len() != numeric.len() {
        return Err(format!("{} analytic vs {} numeric entries", analytic.len(), numeric.len()));
    }
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        if (a - n).abs() > ATOL + RTOL * a.abs().max(n.abs()) {
            return Err(format!("param {i}: analytic {a} vs numeric {n}"));
        }
    }
    Ok(())
}

pub fn central(f: impl Fn(f64) -> f64) -> f64 {
    (f(H) - f(-H)) / (2.0 * H)
}

pub fn perturbed(net: &ParamTree, i: usize, d: f64) -> ParamTree {
    let mut p = net.to_flat();
    p[i] += d;
    let mut out = net.clone();
    out.set_flat(&p).unwrap();
    out
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

/// Least-squares discriminator loss with input-gradient penalty 10.
pub fn check_discriminator_gradient(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut disc = Discriminator::new(&[8, 4], &mut rng);
    if disc.net.num_params() > MAX_PARAMS {
        return Err(format!("{} params", disc.net.num_params()));
    }
    disc.mean = (0..AMP_TRANSITION_DIM).map(|_| rng.gen_range(-0.2..0.2)).collect();
    disc.std = (0..AMP_TRANSITION_DIM).map(|_| rng.gen_range(0.5..2.0)).collect();
    let demo = random_matrix(&mut rng, 12, AMP_TRANSITION_DIM, 1.5);
    let agent = random_matrix(&mut rng, 9, AMP_TRANSITION_DIM, 1.5);
    let (_, grads, terms) = discriminator_loss(&disc, demo.view(), agent.view(), 10.0).map_err(|e| e.to_string())?;
    if terms.penalty.is_nan() || terms.penalty <= 0.0 {
        return Err("penalty inactive".into());
    }
    let loss_at = |net: ParamTree| {
        let d = Discriminator { net, ..disc.clone() };
        discriminator_loss(&d, demo.view(), agent.view(), 10.0).unwrap().0
    };
    let numeric: Vec<f64> =
        (0..disc.net.num_params()).map(|i| central(|d| loss_at(perturbed(&disc.net, i, d)))).collect();
    compare(&grads.to_flat(), &numeric)
}

pub fn tiny_policy(rng: &mut ChaCha8Rng) -> TeacherPolicy {
    let shape = PolicyShape { encoder_hidden: vec![2], low_level_hidden: vec![4], init_log_std: -0.7 };
    let scaling = InputScaling { nominal_joints: [0.0; 4], weight: 1.0 };
    let mut p = TeacherPolicy::new(&shape, scaling, rng);
    // larger output weights so the action mean actually depends on the inputs
    for l in p.low_level.layers_mut() {
        l.weight.mapv_inplace(|_| rng.gen_range(-0.6..0.6));
        l.bias.mapv_inplace(|_| rng.gen_range(-0.2..0.2));
    }
    p
}

/// Samples whose probability ratios sit away from the clip boundaries.
pub fn ppo_batch(policy: &TeacherPolicy, rng: &mut ChaCha8Rng, n: usize) -> PpoBatch {
    let obs = ObsBatch {
        proprio: random_matrix(rng, n, PROPRIO_DIM, 1.0),
        privileged: random_matrix(rng, n, PRIVILEGED_DIM, 1.0),
        terrain: random_matrix(rng, n, TERRAIN_DIM, 1.0),
    };
    let (out, _) = policy.predict(&obs).unwrap();
    let actions = Array2::from_shape_fn((n, ACTION_DIM), |(i, j)| out[[i, j]] + rng.gen_range(-0.8..0.8));
    let ratios: [f64; 5] = [0.55, 0.9, 1.05, 1.12, 1.5];
    let old_log_prob = (0..n)
        .map(|i| {
            let mean: Vec<f64> = (0..ACTION_DIM).map(|j| out[[i, j]]).collect();
            let a: Vec<f64> = actions.row(i).to_vec();
            gaussian_log_prob(&a, &mean, &policy.log_std) - ratios[i % ratios.len()].ln()
        })
        .collect();
    PpoBatch {
        obs,
        actions,
        old_log_prob,
        advantages: (0..n).map(|i| if i % 2 == 0 { 1.3 } else { -0.7 } * rng.gen_range(0.5..1.5)).collect(),
        returns: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

/// Clipped surrogate plus value and entropy terms, including the clipped branch.
pub fn check_ppo_gradient(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = tiny_policy(&mut rng);
    if policy.num_params() > MAX_PARAMS {
        return Err(format!("{} params", policy.num_params()));
    }
    let batch = ppo_batch(&policy, &mut rng, 18);
    let cfg = PpoConfig::default();
    let (_, grads, stats) = ppo_loss(&policy, &batch, &cfg).map_err(|e| e.to_string())?;
    if !(stats.clip_fraction > 0.0 && stats.clip_fraction < 1.0) {
        return Err(format!("clip fraction {}", stats.clip_fraction));
    }
    let loss = |p: &TeacherPolicy| ppo_loss(p, &batch, &cfg).unwrap().0;

    let mut numeric = Vec::new();
    for part in 0..3 {
        let base = match part {
            0 => policy.terrain_encoder.clone(),
            1 => policy.privileged_encoder.clone(),
            _ => policy.low_level.clone(),
        };
        for i in 0..base.num_params() {
            numeric.push(central(|d| {
                let mut p = policy.clone();
                let moved = perturbed(&base, i, d);
                match part {
                    0 => p.terrain_encoder = moved,
                    1 => p.privileged_encoder = moved,
                    _ => p.low_level = moved,
                }
                loss(&p)
            }));
        }
    }
    for j in 0..ACTION_DIM {
        numeric.push(central(|d| {
            let mut p = policy.clone();
            p.log_std[j] += d;
            loss(&p)
        }));
    }
    compare(&grads.to_flat(), &numeric)
}

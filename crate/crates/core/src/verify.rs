//! Self-checks behind the `verify` command. Each suite measures a residual
//! against an independent recomputation and compares it to a fixed limit.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::aggregate::{
    agg_cwmed, agg_mean, estimate_resilience, geomed_objective, geomed_with_trace,
    krum_select, AggregationRule, ScenarioSpec,
};
use crate::attack::{apply_attack, craft_random_noise, craft_sign_flip, honest_mean, AttackKind};
use crate::data::SyntheticKind;
use crate::engine::{run_training, DatasetSpec, ModelSpec, OptimizerKind, RunConfig};
use crate::error::{Error, Result};
use crate::model::{
    init_params, logistic_grad, logistic_loss, mlp_loss_grad, Batch, Label, ModelParams,
    ModelShape, Sample,
};
use crate::optimizer::{
    aux_sequence_v, classical_nesterov_step, error_floor_bound, max_stepsize,
    unroll_identity_residual, ServerState, TheoremParams,
};
use crate::rng::{from_seed, RngStream};
use crate::vector::{dist_sq, GradVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gradients,
    Nesterov,
    Aggregation,
    Attacks,
    Resilience,
    Theorem,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Gradients,
        Suite::Nesterov,
        Suite::Aggregation,
        Suite::Attacks,
        Suite::Resilience,
        Suite::Theorem,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Gradients => "gradients",
            Suite::Nesterov => "nesterov",
            Suite::Aggregation => "aggregation",
            Suite::Attacks => "attacks",
            Suite::Resilience => "resilience",
            Suite::Theorem => "theorem",
        }
    }

    /// `all` expands to every suite.
    pub fn parse_selection(name: &str) -> Result<Vec<Suite>> {
        if name == "all" {
            return Ok(Suite::ALL.to_vec());
        }
        Suite::ALL
            .iter()
            .find(|s| s.name() == name)
            .map(|s| vec![*s])
            .ok_or_else(|| Error::invalid(format!("unknown suite {name:?}")))
    }

    pub fn run(&self) -> Result<Vec<Check>> {
        match self {
            Suite::Gradients => gradients(),
            Suite::Nesterov => nesterov(),
            Suite::Aggregation => aggregation(),
            Suite::Attacks => attacks(),
            Suite::Resilience => resilience(),
            Suite::Theorem => theorem(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    Below,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub limit: f64,
}

impl Check {
    fn new(suite: Suite, name: impl Into<String>, measured: f64, relation: Relation, limit: f64) -> Self {
        Check { suite: suite.name(), name: name.into(), measured, relation, limit }
    }

    pub fn passed(&self) -> bool {
        match self.relation {
            Relation::AtMost => self.measured <= self.limit,
            Relation::Below => self.measured < self.limit,
            Relation::AtLeast => self.measured >= self.limit,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.relation {
            Relation::AtMost => "<=",
            Relation::Below => "<",
            Relation::AtLeast => ">=",
        };
        write!(
            f,
            "{} {}/{}: {:.3e} {op} {:.3e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.limit
        )
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-300 {
        diff
    } else {
        diff / scale
    }
}

fn gaussian(rng: &mut RngStream, n: usize, std: f64) -> Vec<f64> {
    let d = Normal::new(0.0, std).expect("valid std");
    (0..n).map(|_| d.sample(rng)).collect()
}

const FD_STEP: f64 = 1e-5;

fn central_difference(p: &ModelParams, coord: usize, loss: impl Fn(&ModelParams) -> f64) -> f64 {
    let mut plus = p.clone();
    plus.values_mut()[coord] += FD_STEP;
    let mut minus = p.clone();
    minus.values_mut()[coord] -= FD_STEP;
    (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP)
}

fn gradients() -> Result<Vec<Check>> {
    let mut rng = from_seed(0x9AD);
    let mut worst_logistic: f64 = 0.0;
    for _ in 0..100 {
        let m = 54;
        let n = rng.random_range(1..=16);
        let samples: Vec<Sample> = (0..n)
            .map(|_| Sample {
                features: gaussian(&mut rng, m, 1.0),
                label: Label::positive(rng.random::<bool>()),
            })
            .collect();
        let batch = Batch::from_samples(&samples)?;
        let rho = rng.random_range(0.0..0.1);
        let p = ModelParams::new(ModelShape::Logistic { features: m }, gaussian(&mut rng, m, 0.5))?;
        let g = logistic_grad(&p, &batch, rho)?;
        let fd: Vec<f64> = (0..m)
            .map(|j| central_difference(&p, j, |q| logistic_loss(q, &batch, rho).expect("valid batch")))
            .collect();
        worst_logistic = worst_logistic.max(rel_err(&g, &fd));
    }

    let shape = ModelShape::MNIST_MLP;
    let (input, hidden, output) = (784, 32, 10);
    let b1 = hidden * input;
    let w2 = b1 + hidden;
    let b2 = w2 + output * hidden;
    let mut worst_mlp: f64 = 0.0;
    for point in 0..100u64 {
        let mut p = init_params(shape, point)?;
        for v in &mut p.values_mut()[b1..w2] {
            *v = rng.random_range(-0.1..0.1);
        }
        for v in &mut p.values_mut()[b2..] {
            *v = rng.random_range(-0.1..0.1);
        }
        let n = rng.random_range(1..=8);
        let samples: Vec<Sample> = (0..n)
            .map(|_| Sample {
                features: (0..input)
                    .map(|_| if rng.random::<f64>() < 0.2 { rng.random::<f64>() } else { 0.0 })
                    .collect(),
                label: Label::Class(rng.random_range(0..10)),
            })
            .collect();
        let batch = Batch::from_samples(&samples)?;
        let (_, g) = mlp_loss_grad(&p, &batch)?;
        // 50 coordinates spread over the four parameter blocks
        let mut coords: Vec<usize> = (0..20).map(|_| rng.random_range(0..b1)).collect();
        coords.extend((0..10).map(|_| rng.random_range(b1..w2)));
        coords.extend((0..15).map(|_| rng.random_range(w2..b2)));
        coords.extend((0..5).map(|_| rng.random_range(b2..shape.param_count())));
        let analytic: Vec<f64> = coords.iter().map(|&c| g[c]).collect();
        let fd: Vec<f64> = coords
            .iter()
            .map(|&c| central_difference(&p, c, |q| mlp_loss_grad(q, &batch).expect("valid batch").0))
            .collect();
        worst_mlp = worst_mlp.max(rel_err(&analytic, &fd));
    }
    let s = Suite::Gradients;
    Ok(vec![
        Check::new(s, "logistic max relative finite-difference error", worst_logistic, Relation::AtMost, 1e-5),
        Check::new(s, "mlp max relative finite-difference error", worst_mlp, Relation::AtMost, 1e-4),
    ])
}

/// Diagonal quadratic `0.5 x^T diag(a) x` with eigenvalues spread over [0.5, 1].
fn quadratic_diag(d: usize) -> Vec<f64> {
    (0..d).map(|i| 0.5 + 0.5 * i as f64 / (d - 1) as f64).collect()
}

fn quad_grad(a: &[f64], x: &[f64]) -> GradVector {
    GradVector(a.iter().zip(x).map(|(ai, xi)| ai * xi).collect())
}

fn logistic_params(v: Vec<f64>) -> Result<ModelParams> {
    ModelParams::new(ModelShape::Logistic { features: v.len() }, v)
}

fn nesterov() -> Result<Vec<Check>> {
    let s = Suite::Nesterov;
    let d = 10;
    let a = quadratic_diag(d);
    let (eta, beta) = (0.1, 0.9);

    let x0 = vec![1.0; d];
    let mut state = ServerState::new(logistic_params(x0.clone())?, eta, beta)?;
    let (mut x, mut y_prev) = (x0.clone(), x0.clone());
    let mut two_form: f64 = 0.0;
    for _ in 0..100 {
        let g = quad_grad(&a, state.x.values());
        state.step(&g)?;
        let (xn, y) = classical_nesterov_step(&y_prev, &x, &quad_grad(&a, &x), eta, beta)?;
        x = xn;
        y_prev = y;
        for (p, q) in x.iter().zip(state.x.values()) {
            two_form = two_form.max((p - q).abs());
        }
    }

    let mut unroll: [f64; 2] = [0.0; 2];
    let mut aux: f64 = 0.0;
    for (slot, b) in [beta, 0.0].into_iter().enumerate() {
        let mut st = ServerState::new(logistic_params(x0.clone())?, eta, b)?;
        let mut history = Vec::new();
        for _ in 0..50 {
            let g = quad_grad(&a, st.x.values());
            history.push((st.x.values().to_vec(), g.clone()));
            st.step(&g)?;
        }
        history.push((st.x.values().to_vec(), GradVector::zeros(d)));
        unroll[slot] = unroll_identity_residual(&history, eta, b)?;
        if b > 0.0 {
            // v_{k+1} - v_k = -eta g_k / (1 - beta), with v_0 = x_0
            let v = |k: usize| -> Result<Vec<f64>> {
                if k == 0 {
                    Ok(history[0].0.clone())
                } else {
                    aux_sequence_v(&history[k].0, &history[k - 1].0, &history[k - 1].1, eta, b)
                }
            };
            for k in 0..50 {
                let (vk, vn) = (v(k)?, v(k + 1)?);
                for j in 0..d {
                    aux = aux.max((vn[j] - vk[j] + eta * history[k].1[j] / (1.0 - b)).abs());
                }
            }
        }
    }

    let mut sgd = ServerState::new(logistic_params(x0.clone())?, eta, 0.0)?;
    let mut plain = x0.clone();
    let mut mismatches = 0usize;
    for _ in 0..100 {
        let g = quad_grad(&a, &plain);
        sgd.step(&g)?;
        for (p, gi) in plain.iter_mut().zip(g.iter()) {
            *p -= eta * gi;
        }
        mismatches += sgd.x.values().iter().zip(&plain).filter(|(p, q)| p.to_bits() != q.to_bits()).count();
    }

    let mut checks = vec![
        Check::new(s, "two-form max iterate deviation (100 steps)", two_form, Relation::AtMost, 1e-10),
        Check::new(s, "unroll identity residual, beta=0.9 (50 steps)", unroll[0], Relation::AtMost, 1e-8),
        Check::new(s, "unroll identity residual, beta=0", unroll[1], Relation::AtMost, 1e-12),
        Check::new(s, "auxiliary sequence increment deviation", aux, Relation::AtMost, 1e-10),
        Check::new(s, "beta=0 bit mismatches against gradient descent", mismatches as f64, Relation::AtMost, 0.0),
    ];
    for b in [0.0, 0.5, 0.9] {
        let tp = TheoremParams { sin_gamma: 0.0, c1: 1.0, c2: 0.0, lipschitz: 1.0, beta: b, eta: 1.0 };
        let step = 0.5 * max_stepsize(&tp)?;
        let mut st = ServerState::new(logistic_params(x0.clone())?, step, b)?;
        let mut gnorm = quad_grad(&a, st.x.values()).norm();
        for _ in 0..10_000 {
            if gnorm < 1e-6 {
                break;
            }
            let g = quad_grad(&a, st.x.values());
            st.step(&g)?;
            gnorm = quad_grad(&a, st.x.values()).norm();
        }
        checks.push(Check::new(s, format!("quadratic gradient norm after <=10000 steps, beta={b}"), gnorm, Relation::Below, 1e-6));
    }
    Ok(checks)
}

fn random_grads(rng: &mut RngStream, n: usize, d: usize) -> Vec<GradVector> {
    (0..n).map(|_| GradVector(gaussian(rng, d, 1.0))).collect()
}

fn sort_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Minimum of the geometric-median objective over a grid, refined three
/// times around the best cell.
fn grid_geomed_2d(points: &[GradVector]) -> f64 {
    let xs = points.iter().map(|p| p[0]);
    let ys = points.iter().map(|p| p[1]);
    let (mut x0, mut x1) = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
    let (mut y0, mut y1) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let steps = 200;
    for _ in 0..4 {
        for i in 0..=steps {
            for j in 0..=steps {
                let x = x0 + (x1 - x0) * i as f64 / steps as f64;
                let y = y0 + (y1 - y0) * j as f64 / steps as f64;
                let obj: f64 = points.iter().map(|p| ((p[0] - x).powi(2) + (p[1] - y).powi(2)).sqrt()).sum();
                if obj < best.0 {
                    best = (obj, x, y);
                }
            }
        }
        let (hx, hy) = (2.0 * (x1 - x0) / steps as f64, 2.0 * (y1 - y0) / steps as f64);
        (x0, x1, y0, y1) = (best.1 - hx, best.1 + hx, best.2 - hy, best.2 + hy);
    }
    best.0
}

/// Krum by exhaustive search over every neighbour subset of each candidate.
fn brute_force_krum(grads: &[GradVector], f: usize) -> usize {
    let n = grads.len();
    let k = n - f - 2;
    let mut best = (f64::INFINITY, 0);
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let mut score = f64::INFINITY;
        for mask in 0u32..(1 << others.len()) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let s: f64 = others
                .iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, &j)| grads[i].iter().zip(grads[j].iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum();
            score = score.min(s);
        }
        if score < best.0 {
            best = (score, i);
        }
    }
    best.1
}

fn aggregation() -> Result<Vec<Check>> {
    let s = Suite::Aggregation;
    let mut rng = from_seed(0xA66);

    let mut cwmed_dev: f64 = 0.0;
    let mut mean_dev: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=9);
        let d = rng.random_range(1..=6);
        let g = random_grads(&mut rng, n, d);
        let med = agg_cwmed(&g)?;
        let mean = agg_mean(&g)?;
        for j in 0..d {
            let mut col: Vec<f64> = g.iter().map(|v| v[j]).collect();
            cwmed_dev = cwmed_dev.max((med[j] - sort_median(&mut col)).abs());
            let direct = g.iter().map(|v| v[j]).sum::<f64>() / n as f64;
            mean_dev = mean_dev.max((mean[j] - direct).abs());
        }
    }

    let mut fixtures = vec![
        vec![GradVector(vec![0.0, 0.0]), GradVector(vec![2.0, 0.0]), GradVector(vec![1.0, 1.0]), GradVector(vec![1.0, -1.0])],
        vec![GradVector(vec![0.0, 0.0]), GradVector(vec![1.0, 0.0]), GradVector(vec![10.0, 0.0])],
    ];
    for _ in 0..8 {
        let n = rng.random_range(3..=7);
        fixtures.push(random_grads(&mut rng, n, 2));
    }
    let mut geomed_gap: f64 = f64::NEG_INFINITY;
    let mut geomed_rise: f64 = 0.0;
    for pts in &fixtures {
        let trace = geomed_with_trace(pts, 1e-10, 1000)?;
        geomed_gap = geomed_gap.max(geomed_objective(&trace.median, pts) - grid_geomed_2d(pts));
        for w in trace.objective.windows(2) {
            geomed_rise = geomed_rise.max(w[1] - w[0]);
        }
    }
    for _ in 0..50 {
        let n = rng.random_range(2..=12);
        let d = rng.random_range(1..=20);
        let pts: Vec<GradVector> = random_grads(&mut rng, n, d).into_iter().map(|v| GradVector(v.iter().map(|x| 5.0 * x).collect())).collect();
        let trace = geomed_with_trace(&pts, 1e-6, 100)?;
        for w in trace.objective.windows(2) {
            geomed_rise = geomed_rise.max(w[1] - w[0]);
        }
    }

    let mut krum_mismatch = 0usize;
    let mut krum_instances = 0usize;
    for n in 3..=8 {
        for f in 0..=2 {
            if n < f + 3 {
                continue;
            }
            for _ in 0..40 {
                let d = rng.random_range(1..=5);
                let g = random_grads(&mut rng, n, d);
                krum_instances += 1;
                if krum_select(&g, f)? != brute_force_krum(&g, f) {
                    krum_mismatch += 1;
                }
            }
        }
    }

    let mut perm_dev: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=9);
        let d = rng.random_range(1..=8);
        let g = random_grads(&mut rng, n, d);
        let mut shuffled = g.clone();
        shuffled.shuffle(&mut rng);
        for rule in [AggregationRule::Mean, AggregationRule::CwMed, AggregationRule::geomed()] {
            let (a, b) = (rule.aggregate(&g, 0)?, rule.aggregate(&shuffled, 0)?);
            perm_dev = perm_dev.max(dist_sq(&a, &b).sqrt());
        }
    }

    Ok(vec![
        Check::new(s, "mean max deviation from direct sum (1000 instances)", mean_dev, Relation::AtMost, 1e-12),
        Check::new(s, "cwmed max deviation from sort oracle (1000 instances)", cwmed_dev, Relation::AtMost, 0.0),
        Check::new(s, "geomed objective minus grid optimum (2-D fixtures)", geomed_gap, Relation::AtMost, 1e-4),
        Check::new(s, "geomed largest objective increase per iteration", geomed_rise, Relation::AtMost, 1e-12),
        Check::new(s, format!("krum selections differing from brute force ({krum_instances} instances)"), krum_mismatch as f64, Relation::AtMost, 0.0),
        Check::new(s, "permutation deviation of mean/cwmed/geomed", perm_dev, Relation::AtMost, 1e-12),
    ])
}

fn frozen_drift(model: ModelSpec, family: SyntheticKind, dim: usize) -> Result<f64> {
    let cfg = RunConfig {
        n_workers: 10,
        byz_ratio: 0.2,
        iterations: 30,
        eta: 0.5,
        beta: 0.9,
        batch_size: 8,
        seed: 17,
        rule: AggregationRule::Mean,
        attack: AttackKind::ZeroGradient,
        optimizer: OptimizerKind::Nesterov,
        eval_every: 10,
        model,
        dataset: DatasetSpec::Synthetic { family, n: 300, dim, data_seed: 5, train_fraction: 0.8 },
    };
    let data = cfg.dataset.load(cfg.seed)?;
    let x0 = crate::model::init_params_with(
        model.shape_for(&data.train)?,
        &mut crate::rng::setup_stream(cfg.seed, crate::rng::SetupPurpose::Init),
    )?;
    let run = run_training(&cfg)?;
    Ok(dist_sq(run.final_params.values(), x0.values()).sqrt())
}

fn attacks() -> Result<Vec<Check>> {
    let s = Suite::Attacks;
    let mut rng = from_seed(0xA77);

    let honest = random_grads(&mut rng, 80, 50);
    let uploads = apply_attack(&AttackKind::ZeroGradient, &honest, 20, &mut rng)?;
    let zero_mean = agg_mean(&uploads)?.norm();

    let drift = frozen_drift(ModelSpec::Logistic { rho: 0.01 }, SyntheticKind::Binary, 6)?
        .max(frozen_drift(ModelSpec::Mlp { hidden: 8 }, SyntheticKind::Class10, 12)?);

    let mut flip_dev: f64 = 0.0;
    for _ in 0..100 {
        let h = rng.random_range(1..=20);
        let g = random_grads(&mut rng, h, 30);
        let m = honest_mean(&g)?;
        let mu = rng.random_range(-20.0..5.0);
        for v in craft_sign_flip(&g, mu, 3)? {
            for (a, b) in v.iter().zip(m.iter()) {
                flip_dev = flip_dev.max((a - mu * b).abs());
            }
        }
    }

    let mu = 300.0;
    let base = random_grads(&mut rng, 5, 54);
    let draws = craft_random_noise(&base, mu, 10_000, &mut rng)?;
    let mean = honest_mean(&base)?;
    let mut var_dev: f64 = 0.0;
    for j in 0..54 {
        let var = draws.iter().map(|v| (v[j] - mean[j]).powi(2)).sum::<f64>() / draws.len() as f64;
        var_dev = var_dev.max((var / mu - 1.0).abs());
    }

    Ok(vec![
        Check::new(s, "zero-gradient mean upload norm (H=80, 20 adversaries)", zero_mean, Relation::AtMost, 1e-10),
        Check::new(s, "zero-gradient + mean model drift |x_K - x_0|", drift, Relation::AtMost, 1e-10),
        Check::new(s, "sign-flip deviation from mu * honest mean", flip_dev, Relation::AtMost, 0.0),
        Check::new(s, "random-noise relative variance error (10000 draws, mu=300)", var_dev, Relation::AtMost, 0.05),
    ])
}

fn resilience() -> Result<Vec<Check>> {
    let s = Suite::Resilience;
    let mut rng = from_seed(0x8E5);
    let direction = gaussian(&mut rng, 10, 1.0);
    let scenario = |attack, byzantine, noise_std| ScenarioSpec {
        direction: direction.clone(),
        magnitudes: vec![1.0, 2.0, 4.0, 8.0],
        honest: 40,
        byzantine,
        noise_std,
        attack,
    };
    let clean = estimate_resilience(&AggregationRule::Mean, &scenario(AttackKind::NoAttack, 0, 0.0), 30, &mut rng)?;
    let zero = estimate_resilience(&AggregationRule::Mean, &scenario(AttackKind::ZeroGradient, 10, 1.0), 30, &mut rng)?;
    let krum = estimate_resilience(
        &AggregationRule::Krum { f: None },
        &scenario(AttackKind::SignFlip { mu: -10.0 }, 10, 1.0),
        1000,
        &mut rng,
    )?;
    Ok(vec![
        Check::new(s, "mean, no attack, noiseless: sin_gamma_hat", clean.sin_gamma_hat, Relation::AtMost, 1e-9),
        Check::new(s, "mean, zero-gradient: |1 - sin_gamma_hat|", (1.0 - zero.sin_gamma_hat).abs(), Relation::AtMost, 1e-9),
        Check::new(s, "krum, sign-flip mu=-10, eps=0.2 (1000 trials): sin_gamma_hat", krum.sin_gamma_hat, Relation::Below, 0.5),
        Check::new(s, "krum envelope c1_hat (finite, >= 0)", krum.c1_hat, Relation::AtLeast, 0.0),
    ])
}

fn theorem() -> Result<Vec<Check>> {
    let s = Suite::Theorem;
    let tp = |sin_gamma, beta, c1, c2, eta| TheoremParams { sin_gamma, c1, c2, lipschitz: 1.0, beta, eta };
    let hand = [
        (max_stepsize(&tp(0.0, 0.0, 1.0, 1.0, 0.1))?, 1.0),
        (max_stepsize(&tp(0.5, 0.0, 2.0, 1.0, 0.1))?, 0.25),
        (error_floor_bound(&tp(0.0, 0.0, 1.0, 1.0, 0.1))?, 0.2),
        (error_floor_bound(&tp(0.3, 0.5, 1.0, 0.0, 0.1))?, 0.0),
    ];
    let hand_dev = hand.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut worst_rise = f64::NEG_INFINITY;
    for bi in 0..20 {
        let beta = 0.95 * bi as f64 / 19.0;
        let mut prev = f64::INFINITY;
        for si in 0..20 {
            let v = max_stepsize(&tp(si as f64 / 19.0, beta, 1.5, 1.0, 0.1))?;
            worst_rise = worst_rise.max(v - prev);
            prev = v;
        }
    }
    let t = tp(0.2, 0.7, 1.0, 3.0, 0.01);
    let linear = (error_floor_bound(&TheoremParams { eta: 0.02, ..t })? - 2.0 * error_floor_bound(&t)?).abs();
    let vacuous = max_stepsize(&tp(1.0, 0.5, 1.0, 1.0, 0.1))?;
    Ok(vec![
        Check::new(s, "hand substitutions max deviation", hand_dev, Relation::AtMost, 0.0),
        Check::new(s, "largest stepsize increase along sin_gamma (20x20 grid)", worst_rise, Relation::AtMost, 0.0),
        Check::new(s, "error floor linearity in eta", linear, Relation::AtMost, 1e-15),
        Check::new(s, "stepsize at sin_gamma=1", vacuous, Relation::AtMost, 0.0),
    ])
}

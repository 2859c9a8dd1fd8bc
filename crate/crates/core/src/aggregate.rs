//! Server-side aggregation rules and a Monte-Carlo estimator of soft
//! gamma-Byzantine resilience.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attack::{apply_attack, AttackKind};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vector::{common_dim, dist_sq, dot, mean_in_order, norm, norm_sq, GradVector};

pub const GEOMED_DEFAULT_TOL: f64 = 1e-6;
pub const GEOMED_DEFAULT_MAX_ITER: usize = 100;
/// Lower bound on Weiszfeld distances.
pub const GEOMED_DIST_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AggregationRule {
    Mean,
    #[serde(rename = "cwmed")]
    CwMed,
    #[serde(rename = "geomed")]
    GeoMed {
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    /// `f = None` means "use the configured Byzantine count".
    Krum {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f: Option<usize>,
    },
}

fn default_tol() -> f64 {
    GEOMED_DEFAULT_TOL
}

fn default_max_iter() -> usize {
    GEOMED_DEFAULT_MAX_ITER
}

impl AggregationRule {
    pub fn geomed() -> Self {
        AggregationRule::GeoMed { tol: GEOMED_DEFAULT_TOL, max_iter: GEOMED_DEFAULT_MAX_ITER }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AggregationRule::Mean => "mean",
            AggregationRule::CwMed => "cwmed",
            AggregationRule::GeoMed { .. } => "geomed",
            AggregationRule::Krum { .. } => "krum",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AggregationRule::GeoMed { tol, max_iter } if !(tol > 0.0) || max_iter == 0 => {
                Err(Error::invalid(format!("geomed needs tol > 0 and max_iter >= 1 (tol={tol}, max_iter={max_iter})")))
            }
            _ => Ok(()),
        }
    }

    /// Applies the rule. `byzantine_count` fills in Krum's `f` when unset.
    pub fn aggregate(&self, grads: &[GradVector], byzantine_count: usize) -> Result<GradVector> {
        match *self {
            AggregationRule::Mean => agg_mean(grads),
            AggregationRule::CwMed => agg_cwmed(grads),
            AggregationRule::GeoMed { tol, max_iter } => agg_geomed(grads, tol, max_iter),
            AggregationRule::Krum { f } => agg_krum(grads, f.unwrap_or(byzantine_count)),
        }
    }
}

/// Coordinate-wise mean, summed in ascending worker order.
pub fn agg_mean(grads: &[GradVector]) -> Result<GradVector> {
    mean_in_order(grads)
}

fn median_of(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Coordinate-wise median; even counts average the two middle values.
pub fn agg_cwmed(grads: &[GradVector]) -> Result<GradVector> {
    let dim = common_dim(grads)?;
    let mut column = vec![0.0; grads.len()];
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        for (c, g) in column.iter_mut().zip(grads) {
            *c = g[j];
        }
        out.push(median_of(&mut column));
    }
    Ok(GradVector(out))
}

/// Sum of Euclidean distances from `m` to every input.
pub fn geomed_objective(m: &[f64], grads: &[GradVector]) -> f64 {
    grads.iter().map(|g| dist_sq(m, g).sqrt()).sum()
}

/// Result of a Weiszfeld solve with the per-iteration objective trace.
#[derive(Debug, Clone)]
pub struct GeoMedTrace {
    pub median: GradVector,
    /// Objective at the start point and after every iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

/// Smoothed Weiszfeld iteration from the coordinate-wise mean.
pub fn geomed_with_trace(grads: &[GradVector], tol: f64, max_iter: usize) -> Result<GeoMedTrace> {
    let dim = common_dim(grads)?;
    AggregationRule::GeoMed { tol, max_iter }.validate()?;
    let mut m = mean_in_order(grads)?.into_inner();
    let mut objective = vec![geomed_objective(&m, grads)];
    let mut next = vec![0.0; dim];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        next.iter_mut().for_each(|v| *v = 0.0);
        let mut weight_sum = 0.0;
        for g in grads {
            let w = 1.0 / dist_sq(&m, g).sqrt().max(GEOMED_DIST_FLOOR);
            weight_sum += w;
            for (n, v) in next.iter_mut().zip(g.iter()) {
                *n += w * v;
            }
        }
        next.iter_mut().for_each(|v| *v /= weight_sum);
        let step = dist_sq(&m, &next).sqrt();
        std::mem::swap(&mut m, &mut next);
        objective.push(geomed_objective(&m, grads));
        if step <= tol {
            break;
        }
    }
    Ok(GeoMedTrace { median: GradVector(m), objective, iterations })
}

pub fn agg_geomed(grads: &[GradVector], tol: f64, max_iter: usize) -> Result<GradVector> {
    geomed_with_trace(grads, tol, max_iter).map(|t| t.median)
}

const KRUM_BLOCK: usize = 1024;

/// Krum scores: for each vector, the sum of squared distances to its
/// `n - f - 2` nearest other vectors.
pub fn krum_scores(grads: &[GradVector], f: usize) -> Result<Vec<f64>> {
    common_dim(grads)?;
    let n = grads.len();
    if n < f + 3 {
        return Err(Error::invalid(format!("krum needs n >= f + 3 (n={n}, f={f})")));
    }
    let neighbours = n - f - 2;
    // Coordinate blocks keep the working set of all n vectors in cache.
    let dim = grads[0].dim();
    let mut dist = vec![0.0; n * n];
    for start in (0..dim).step_by(KRUM_BLOCK) {
        let end = (start + KRUM_BLOCK).min(dim);
        for i in 0..n {
            let a = &grads[i][start..end];
            for j in i + 1..n {
                dist[i * n + j] += dist_sq(a, &grads[j][start..end]);
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            dist[j * n + i] = dist[i * n + j];
        }
    }
    let mut row = Vec::with_capacity(n - 1);
    let scores = (0..n)
        .map(|i| {
            row.clear();
            row.extend((0..n).filter(|&j| j != i).map(|j| dist[i * n + j]));
            row.sort_unstable_by(f64::total_cmp);
            row[..neighbours].iter().sum()
        })
        .collect();
    Ok(scores)
}

/// Index of the Krum-selected vector (lowest index on ties).
pub fn krum_select(grads: &[GradVector], f: usize) -> Result<usize> {
    let scores = krum_scores(grads, f)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Single-Krum: returns the selected input verbatim.
pub fn agg_krum(grads: &[GradVector], f: usize) -> Result<GradVector> {
    krum_select(grads, f).map(|i| grads[i].clone())
}

/// Synthetic round used to probe a rule: honest workers report
/// `truth + noise_std * N(0, I)` around a ground-truth gradient whose
/// direction is fixed and whose norm is swept over `magnitudes`.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub direction: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub honest: usize,
    pub byzantine: usize,
    pub noise_std: f64,
    pub attack: AttackKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResilienceEstimate {
    pub sin_gamma_hat: f64,
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub trials: usize,
}

/// Monte-Carlo estimate of the constants in the soft resilience condition.
///
/// At each magnitude the expectation of the aggregate is replaced by its
/// sample mean over `trials` rounds; `sin_gamma_hat` is the largest
/// `1 - <mean, truth> / |truth|^2` over the sweep, clamped to [0, 1].
/// `(c1_hat, c2_hat)` is the upper envelope of the sampled second moments
/// with the least total slack.
pub fn estimate_resilience(
    rule: &AggregationRule,
    scenario: &ScenarioSpec,
    trials: usize,
    rng: &mut RngStream,
) -> Result<ResilienceEstimate> {
    if trials < 30 {
        return Err(Error::invalid(format!("need at least 30 trials, got {trials}")));
    }
    if scenario.honest == 0 || scenario.direction.is_empty() {
        return Err(Error::invalid("scenario needs honest workers and a non-empty direction"));
    }
    if !(scenario.noise_std >= 0.0) {
        return Err(Error::invalid("noise_std must be >= 0"));
    }
    let dir_norm = norm(&scenario.direction);
    let dim = scenario.direction.len();
    let mut sin_gamma: f64 = 0.0;
    let mut points = Vec::new();
    for &mag in &scenario.magnitudes {
        let truth: Vec<f64> = if dir_norm > 0.0 {
            scenario.direction.iter().map(|v| v * mag / dir_norm).collect()
        } else {
            vec![0.0; dim]
        };
        let truth_sq = norm_sq(&truth);
        if !(truth_sq > 0.0) {
            continue;
        }
        let mut mean_agg = vec![0.0; dim];
        let mut second_moment = 0.0;
        for _ in 0..trials {
            let honest: Vec<GradVector> = (0..scenario.honest)
                .map(|_| {
                    GradVector(
                        truth
                            .iter()
                            .map(|t| {
                                let e: f64 = StandardNormal.sample(rng);
                                t + scenario.noise_std * e
                            })
                            .collect(),
                    )
                })
                .collect();
            let uploads = apply_attack(&scenario.attack, &honest, scenario.byzantine, rng)?;
            let agg = rule.aggregate(&uploads, scenario.byzantine)?;
            for (m, a) in mean_agg.iter_mut().zip(agg.iter()) {
                *m += a;
            }
            second_moment += norm_sq(&agg);
        }
        mean_agg.iter_mut().for_each(|m| *m /= trials as f64);
        second_moment /= trials as f64;
        let s = (1.0 - dot(&mean_agg, &truth) / truth_sq).clamp(0.0, 1.0);
        sin_gamma = sin_gamma.max(s);
        points.push((truth_sq, second_moment));
    }
    if points.is_empty() {
        return Err(Error::invalid("every scenario point had a zero ground-truth gradient"));
    }
    let (c1_hat, c2_hat) = upper_envelope(&points);
    Ok(ResilienceEstimate { sin_gamma_hat: sin_gamma, c1_hat, c2_hat, trials })
}

/// Smallest-slack line `c1 * x + c2` with `c1, c2 >= 0` lying on or above all
/// `(x, y)` points. The optimum of this two-variable LP sits on a vertex, so
/// lines through point pairs and the two axis-constrained lines are enough.
fn upper_envelope(points: &[(f64, f64)]) -> (f64, f64) {
    let feasible = |c1: f64, c2: f64| {
        c1 >= 0.0
            && c2 >= 0.0
            && points.iter().all(|&(x, y)| c1 * x + c2 >= y - 1e-12 * y.abs().max(1.0))
    };
    let slack = |c1: f64, c2: f64| points.iter().map(|&(x, y)| c1 * x + c2 - y).sum::<f64>();
    let mut candidates = vec![
        (points.iter().map(|&(x, y)| y / x).fold(0.0, f64::max), 0.0),
        (0.0, points.iter().map(|&(_, y)| y).fold(0.0, f64::max)),
    ];
    for (i, &(x1, y1)) in points.iter().enumerate() {
        for &(x2, y2) in &points[i + 1..] {
            if (x2 - x1).abs() > 0.0 {
                let c1 = (y2 - y1) / (x2 - x1);
                candidates.push((c1, y1 - c1 * x1));
            }
        }
    }
    candidates
        .into_iter()
        .filter(|&(c1, c2)| feasible(c1, c2))
        .min_by(|a, b| slack(a.0, a.1).total_cmp(&slack(b.0, b.1)))
        .expect("axis-constrained candidates are always feasible")
}

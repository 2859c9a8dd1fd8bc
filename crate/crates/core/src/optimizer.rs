//! Server-side Nesterov recursion, its classical look-ahead form, the
//! momentum unrolling identity, the auxiliary sequence used in the
//! convergence analysis, and the stepsize / error-floor formulas.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::vector::GradVector;

/// Server iterate `x_k`, momentum buffer `z_k` and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub x: ModelParams,
    pub z: Vec<f64>,
    pub eta: f64,
    pub beta: f64,
    pub k: usize,
}

impl ServerState {
    pub fn new(x: ModelParams, eta: f64, beta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {eta}")));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::invalid(format!("momentum must be in [0, 1), got {beta}")));
        }
        let z = vec![0.0; x.dim()];
        Ok(ServerState { x, z, eta, beta, k: 0 })
    }

    /// `z <- beta z + g; y = beta z + g; x <- x - eta y`.
    pub fn step(&mut self, grad: &GradVector) -> Result<()> {
        if grad.dim() != self.z.len() {
            return Err(Error::DimMismatch { expected: self.z.len(), got: grad.dim() });
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite(format!("aggregated gradient at iteration {}", self.k)));
        }
        let (eta, beta) = (self.eta, self.beta);
        for ((x, z), g) in self.x.values_mut().iter_mut().zip(self.z.iter_mut()).zip(grad.iter()) {
            *z = beta * *z + g;
            let y = beta * *z + g;
            *x -= eta * y;
        }
        self.k += 1;
        Ok(())
    }
}

/// Functional form of [`ServerState::step`].
pub fn nesterov_step(state: &ServerState, grad: &GradVector) -> Result<ServerState> {
    let mut next = state.clone();
    next.step(grad)?;
    Ok(next)
}

/// One step of the look-ahead form: `y = x - eta g(x)`,
/// `x_next = y + beta (y - y_prev)`. Returns `(x_next, y)`.
pub fn classical_nesterov_step(
    y_prev: &[f64],
    x: &[f64],
    grad_at_x: &GradVector,
    eta: f64,
    beta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    for len in [y_prev.len(), grad_at_x.dim()] {
        if len != x.len() {
            return Err(Error::DimMismatch { expected: x.len(), got: len });
        }
    }
    let y: Vec<f64> = x.iter().zip(grad_at_x.iter()).map(|(xi, gi)| xi - eta * gi).collect();
    let x_next = y.iter().zip(y_prev).map(|(yi, pi)| yi + beta * (yi - pi)).collect();
    Ok((x_next, y))
}

/// Largest violation of
/// `(x_k - x_{k+1}) / eta = (1 + beta) g_k + sum_{t<k} beta^{k+1-t} g_t`
/// along a recorded trajectory. `history[t] = (x_t, g_t)`; the gradient of
/// the last entry is not used.
pub fn unroll_identity_residual(history: &[(Vec<f64>, GradVector)], eta: f64, beta: f64) -> Result<f64> {
    if history.len() < 2 {
        return Err(Error::invalid("history needs at least two iterates"));
    }
    let dim = history[0].0.len();
    let mut worst: f64 = 0.0;
    for k in 0..history.len() - 1 {
        let (x_k, g_k) = &history[k];
        let x_next = &history[k + 1].0;
        if x_k.len() != dim || g_k.dim() != dim || x_next.len() != dim {
            return Err(Error::DimMismatch { expected: dim, got: g_k.dim() });
        }
        let mut sq = 0.0;
        for j in 0..dim {
            let lhs = (x_k[j] - x_next[j]) / eta;
            let mut rhs = (1.0 + beta) * g_k[j];
            for (t, (_, g_t)) in history[..k].iter().enumerate() {
                rhs += beta.powi((k + 1 - t) as i32) * g_t[j];
            }
            sq += (lhs - rhs).powi(2);
        }
        worst = worst.max(sq.sqrt());
    }
    Ok(worst)
}

/// `v = (x_k - beta x_prev + eta beta grad) / (1 - beta)`.
///
/// `grad` must be the aggregated gradient of the step that produced `x_k`
/// from `x_prev`; with that pairing `v_{k+1} - v_k = -eta grad_k / (1 - beta)`
/// and `v_k - x_k = -eta beta^2 z_k / (1 - beta)` hold along any run.
pub fn aux_sequence_v(
    x_k: &[f64],
    x_prev: &[f64],
    grad: &GradVector,
    eta: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    if beta == 1.0 {
        return Err(Error::invalid("auxiliary sequence undefined for beta = 1"));
    }
    for len in [x_prev.len(), grad.dim()] {
        if len != x_k.len() {
            return Err(Error::DimMismatch { expected: x_k.len(), got: len });
        }
    }
    let scale = 1.0 / (1.0 - beta);
    Ok(x_k
        .iter()
        .zip(x_prev)
        .zip(grad.iter())
        .map(|((x, p), g)| scale * (x - beta * p + eta * beta * g))
        .collect())
}

/// Constants of the convergence bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremParams {
    pub sin_gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub lipschitz: f64,
    pub beta: f64,
    pub eta: f64,
}

impl TheoremParams {
    fn validate(&self) -> Result<()> {
        let all = [self.sin_gamma, self.c1, self.c2, self.lipschitz, self.beta, self.eta];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theorem parameters".into()));
        }
        if !(0.0..=1.0).contains(&self.sin_gamma) {
            return Err(Error::invalid(format!("sin_gamma {} outside [0, 1]", self.sin_gamma)));
        }
        if self.c1 <= 0.0 || self.lipschitz <= 0.0 {
            return Err(Error::invalid("c1 and L must be > 0"));
        }
        if self.c2 < 0.0 {
            return Err(Error::invalid("c2 must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::invalid(format!("beta {} outside [0, 1)", self.beta)));
        }
        Ok(())
    }

    /// True when `sin_gamma = 1`, where the bound gives no admissible stepsize.
    pub fn is_vacuous(&self) -> bool {
        self.sin_gamma >= 1.0
    }
}

/// `(1 - sin g)(1 - b)^3 / (c1 L (L b^4 + (1 - b)^2))`. Returns 0 when
/// `sin_gamma = 1`; check [`TheoremParams::is_vacuous`] to tell that case apart.
pub fn max_stepsize(tp: &TheoremParams) -> Result<f64> {
    tp.validate()?;
    let one_b = 1.0 - tp.beta;
    let l = tp.lipschitz;
    Ok((1.0 - tp.sin_gamma) * one_b.powi(3) / (tp.c1 * l * (l * tp.beta.powi(4) + one_b * one_b)))
}

/// Noise floor `eta L c2 / (1 - sin g) * (L b^4 / (1 - b)^3 + 2 / (1 - b))`.
pub fn error_floor_bound(tp: &TheoremParams) -> Result<f64> {
    tp.validate()?;
    if tp.is_vacuous() {
        return Err(Error::invalid("error floor is unbounded for sin_gamma = 1"));
    }
    let one_b = 1.0 - tp.beta;
    let l = tp.lipschitz;
    Ok(tp.eta * l * tp.c2 / (1.0 - tp.sin_gamma)
        * (l * tp.beta.powi(4) / one_b.powi(3) + 2.0 / one_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelShape;

    fn params(v: Vec<f64>) -> ModelParams {
        ModelParams::new(ModelShape::Logistic { features: v.len() }, v).unwrap()
    }

    fn tp(sin_gamma: f64, beta: f64, c1: f64, l: f64) -> TheoremParams {
        TheoremParams { sin_gamma, c1, c2: 1.0, lipschitz: l, beta, eta: 0.1 }
    }

    #[test]
    fn first_step_unrolls_by_hand() {
        let g = GradVector(vec![1.0, -2.0, 0.5]);
        let (eta, beta) = (0.1, 0.9);
        let s = ServerState::new(params(vec![1.0, 1.0, 1.0]), eta, beta).unwrap();
        let next = nesterov_step(&s, &g).unwrap();
        for j in 0..3 {
            assert!((next.x.values()[j] - (1.0 - eta * (1.0 + beta) * g[j])).abs() < 1e-15);
        }
        assert_eq!(next.k, 1);
        assert_eq!(next.z, g.0);
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut s = ServerState::new(params(vec![0.3, -0.7]), 0.05, 0.0).unwrap();
        let mut x = vec![0.3, -0.7];
        for k in 0..20 {
            let g = GradVector(vec![(k as f64).sin(), (k as f64 * 0.3).cos()]);
            s.step(&g).unwrap();
            for j in 0..2 {
                x[j] -= 0.05 * g[j];
            }
            assert_eq!(s.x.values(), &x[..]);
        }
    }

    #[test]
    fn zero_gradient_leaves_iterate() {
        let s = ServerState::new(params(vec![2.0, 3.0]), 0.1, 0.9).unwrap();
        let next = nesterov_step(&s, &GradVector::zeros(2)).unwrap();
        assert_eq!(next.x, s.x);
        assert_eq!(next.k, 1);
    }

    #[test]
    fn step_rejects_bad_gradients() {
        let mut s = ServerState::new(params(vec![0.0; 2]), 0.1, 0.5).unwrap();
        assert!(matches!(s.step(&GradVector::zeros(3)), Err(Error::DimMismatch { .. })));
        assert!(matches!(s.step(&GradVector(vec![f64::NAN, 0.0])), Err(Error::NonFinite(_))));
        assert!(ServerState::new(params(vec![0.0]), 0.1, 1.0).is_err());
    }

    #[test]
    fn classical_form_first_step_and_sgd_limit() {
        let x0 = vec![1.0, -1.0];
        let g = GradVector(vec![0.5, 2.0]);
        let (x1, _) = classical_nesterov_step(&x0, &x0, &g, 0.1, 0.9).unwrap();
        for j in 0..2 {
            assert!((x1[j] - (x0[j] - 0.1 * 1.9 * g[j])).abs() < 1e-15);
        }
        let (x1, _) = classical_nesterov_step(&[5.0, 5.0], &x0, &g, 0.1, 0.0).unwrap();
        assert_eq!(x1, vec![1.0 - 0.05, -1.0 - 0.2]);
    }

    #[test]
    fn two_forms_agree_on_quadratic() {
        let d = 10;
        let (eta, beta) = (0.1, 0.9);
        let x0 = vec![1.0; d];
        let mut state = ServerState::new(params(x0.clone()), eta, beta).unwrap();
        let (mut x, mut y_prev) = (x0.clone(), x0);
        for _ in 0..100 {
            let g_state = GradVector(state.x.values().to_vec());
            state.step(&g_state).unwrap();
            let (xn, y) = classical_nesterov_step(&y_prev, &x, &GradVector(x.clone()), eta, beta).unwrap();
            x = xn;
            y_prev = y;
            let dev = x.iter().zip(state.x.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dev <= 1e-10);
        }
    }

    #[test]
    fn unroll_residual_small_on_deterministic_run() {
        let diag: Vec<f64> = (0..6).map(|i| 0.2 + 0.15 * i as f64).collect();
        for beta in [0.0, 0.5, 0.9] {
            let eta = 0.1;
            let mut s = ServerState::new(params(vec![1.0, -2.0, 0.5, 3.0, -1.0, 2.0]), eta, beta).unwrap();
            let mut history = Vec::new();
            for _ in 0..50 {
                let g = GradVector(s.x.values().iter().zip(&diag).map(|(x, a)| a * x).collect());
                history.push((s.x.values().to_vec(), g.clone()));
                s.step(&g).unwrap();
            }
            history.push((s.x.values().to_vec(), GradVector::zeros(6)));
            let r = unroll_identity_residual(&history, eta, beta).unwrap();
            if beta == 0.0 {
                assert!(r <= 1e-12, "beta=0 residual {r}");
            }
            assert!(r <= 1e-8, "beta={beta} residual {r}");
            let first: f64 = (0..6)
                .map(|j| ((history[0].0[j] - history[1].0[j]) / eta - (1.0 + beta) * history[0].1[j]).abs())
                .fold(0.0, f64::max);
            assert!(first <= 1e-12);
        }
        assert!(unroll_identity_residual(&[(vec![0.0], GradVector::zeros(1))], 0.1, 0.5).is_err());
    }

    #[test]
    fn aux_sequence_properties() {
        let x = vec![1.0, 2.0];
        let v = aux_sequence_v(&x, &[7.0, -3.0], &GradVector(vec![4.0, 4.0]), 0.1, 0.0).unwrap();
        assert_eq!(v, x);
        let v = aux_sequence_v(&x, &x, &GradVector::zeros(2), 0.1, 0.7).unwrap();
        for (a, b) in v.iter().zip(&x) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(aux_sequence_v(&x, &x, &GradVector::zeros(2), 0.1, 1.0).is_err());
    }

    #[test]
    fn aux_sequence_increments_along_run() {
        let (eta, beta) = (0.05, 0.8);
        let mut s = ServerState::new(params(vec![1.0, -1.0, 0.5]), eta, beta).unwrap();
        let mut xs = vec![s.x.values().to_vec()];
        let mut grads = Vec::new();
        for k in 0..40 {
            let g = GradVector(s.x.values().iter().map(|x| x * 0.7 + (k as f64 * 0.1).sin()).collect());
            s.step(&g).unwrap();
            xs.push(s.x.values().to_vec());
            grads.push(g);
        }
        // v_0 = x_0; v_k uses the gradient that produced x_k
        let v = |k: usize| -> Vec<f64> {
            if k == 0 {
                xs[0].clone()
            } else {
                aux_sequence_v(&xs[k], &xs[k - 1], &grads[k - 1], eta, beta).unwrap()
            }
        };
        for k in 0..39 {
            let (a, b) = (v(k), v(k + 1));
            for j in 0..3 {
                let expect = -eta * grads[k][j] / (1.0 - beta);
                assert!((b[j] - a[j] - expect).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn stepsize_substitutions() {
        assert_eq!(max_stepsize(&tp(0.0, 0.0, 1.0, 1.0)).unwrap(), 1.0);
        assert_eq!(max_stepsize(&tp(0.5, 0.0, 2.0, 1.0)).unwrap(), 0.25);
        let vac = tp(1.0, 0.5, 1.0, 1.0);
        assert_eq!(max_stepsize(&vac).unwrap(), 0.0);
        assert!(vac.is_vacuous());
        assert!(max_stepsize(&tp(0.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn stepsize_non_increasing_in_sin_gamma() {
        for bi in 0..20 {
            let beta = bi as f64 / 20.0;
            let mut prev = f64::INFINITY;
            for si in 0..20 {
                let v = max_stepsize(&tp(si as f64 / 19.0, beta, 1.0, 2.0)).unwrap();
                assert!(v <= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn error_floor_substitutions() {
        let base = TheoremParams { sin_gamma: 0.0, c1: 1.0, c2: 1.0, lipschitz: 1.0, beta: 0.0, eta: 0.1 };
        assert!((error_floor_bound(&base).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(error_floor_bound(&TheoremParams { c2: 0.0, ..base }).unwrap(), 0.0);
        let t = TheoremParams { beta: 0.6, sin_gamma: 0.3, ..base };
        let doubled = TheoremParams { eta: 0.2, ..t };
        assert!((error_floor_bound(&doubled).unwrap() - 2.0 * error_floor_bound(&t).unwrap()).abs() < 1e-14);
        assert!(error_floor_bound(&TheoremParams { sin_gamma: 1.0, ..base }).is_err());
    }
}

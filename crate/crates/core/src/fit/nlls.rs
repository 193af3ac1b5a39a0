use nalgebra::{DMatrix, DVector};

use super::{FitError, Result};

pub const MAX_ITERATIONS: usize = 200;
/// Relative χ² decrease below which an accepted step ends the iteration.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-10;
const RELATIVE_STEP: f64 = 1e-6;
const DEGENERACY_RATIO: f64 = 1e-12;
const MAX_DAMPING: f64 = 1e12;

/// Weighted least-squares problem Σ wᵢ(yᵢ − mᵢ(p))².
pub struct FitProblem<'a> {
    /// Writes the model prediction for `params` into the output slice.
    pub model: &'a dyn Fn(&[f64], &mut [f64]),
    pub data: &'a [f64],
    /// Inverse variances, all positive.
    pub weights: &'a [f64],
    pub initial: Vec<f64>,
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Typical magnitude of each parameter, used for finite-difference steps
    /// of parameters that start at zero. Defaults to |initial| or 1.
    pub scales: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NllsFit {
    pub params: Vec<f64>,
    /// Inverse normal matrix scaled by the reduced χ².
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl NllsFit {
    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }
}

struct Workspace<'p, 'a> {
    problem: &'p FitProblem<'a>,
    scales: Vec<f64>,
    buf: Vec<f64>,
    plus: Vec<f64>,
    minus: Vec<f64>,
}

impl Workspace<'_, '_> {
    fn project(&self, p: &mut [f64]) {
        if let Some(bounds) = &self.problem.bounds {
            for (v, &(lo, hi)) in p.iter_mut().zip(bounds) {
                *v = v.clamp(lo, hi);
            }
        }
    }

    fn chi2(&mut self, p: &[f64]) -> f64 {
        (self.problem.model)(p, &mut self.buf);
        self.buf
            .iter()
            .zip(self.problem.data)
            .zip(self.problem.weights)
            .map(|((m, y), w)| w * (y - m) * (y - m))
            .sum()
    }

    /// Normal matrix JᵀWJ and gradient JᵀW(y − m) with a central-difference
    /// Jacobian, one-sided next to a bound.
    fn normal_equations(&mut self, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.problem.data.len();
        let k = p.len();
        let mut jac = DMatrix::<f64>::zeros(n, k);
        let mut q = p.to_vec();
        for j in 0..k {
            let h = RELATIVE_STEP * p[j].abs().max(self.scales[j]);
            let (lo, hi) = self
                .problem
                .bounds
                .as_ref()
                .map(|b| b[j])
                .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
            let up = if p[j] + h <= hi { p[j] + h } else { p[j] };
            let down = if p[j] - h >= lo { p[j] - h } else { p[j] };
            q[j] = up;
            (self.problem.model)(&q, &mut self.plus);
            q[j] = down;
            (self.problem.model)(&q, &mut self.minus);
            q[j] = p[j];
            let span = up - down;
            for i in 0..n {
                jac[(i, j)] = (self.plus[i] - self.minus[i]) / span;
            }
        }
        (self.problem.model)(p, &mut self.buf);
        let mut h = DMatrix::<f64>::zeros(k, k);
        let mut g = DVector::<f64>::zeros(k);
        for i in 0..n {
            let w = self.problem.weights[i];
            let r = self.problem.data[i] - self.buf[i];
            for a in 0..k {
                let wa = w * jac[(i, a)];
                g[a] += wa * r;
                for b in 0..=a {
                    h[(a, b)] += wa * jac[(i, b)];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        (h, g)
    }
}

/// Diagonal scaling D with D⁻¹HD⁻¹ having unit diagonal; fails when the
/// scaled matrix is numerically singular.
fn scaled_normal_matrix(h: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let k = h.nrows();
    let d = DVector::from_iterator(k, (0..k).map(|i| h[(i, i)].sqrt()));
    if d.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(FitError::Degenerate);
    }
    let hs = DMatrix::from_fn(k, k, |a, b| h[(a, b)] / (d[a] * d[b]));
    let eig = hs.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > DEGENERACY_RATIO * max) {
        return Err(FitError::Degenerate);
    }
    Ok((hs, d))
}

fn covariance(h: &DMatrix<f64>, reduced_chi2: f64) -> Result<DMatrix<f64>> {
    let (hs, d) = scaled_normal_matrix(h)?;
    let inv = hs.cholesky().ok_or(FitError::Degenerate)?.inverse();
    let k = h.nrows();
    Ok(DMatrix::from_fn(k, k, |a, b| {
        inv[(a, b)] / (d[a] * d[b]) * reduced_chi2
    }))
}

/// Levenberg–Marquardt minimisation of a weighted least-squares problem.
pub fn nlls_fit(problem: &FitProblem<'_>) -> Result<NllsFit> {
    let n = problem.data.len();
    let k = problem.initial.len();
    if k == 0 {
        return Err(FitError::InvalidInput("no parameters".into()));
    }
    if n < 2 * k {
        return Err(FitError::InsufficientData {
            points: n,
            params: k,
        });
    }
    if problem.weights.len() != n {
        return Err(FitError::InvalidInput(format!(
            "{} weights for {n} points",
            problem.weights.len()
        )));
    }
    if let Some(i) = problem
        .weights
        .iter()
        .position(|w| !(w.is_finite() && *w > 0.0))
    {
        return Err(FitError::InvalidInput(format!(
            "weight {i} is not positive"
        )));
    }
    if let Some(i) = problem.data.iter().position(|y| !y.is_finite()) {
        return Err(FitError::InvalidInput(format!(
            "data point {i} is not finite"
        )));
    }
    if problem.initial.iter().any(|p| !p.is_finite()) {
        return Err(FitError::InvalidInput(
            "initial parameters must be finite".into(),
        ));
    }
    if problem.bounds.as_ref().is_some_and(|b| b.len() != k) {
        return Err(FitError::InvalidInput(
            "bounds length differs from parameter count".into(),
        ));
    }
    let scales = match &problem.scales {
        Some(s) if s.len() == k => s.iter().map(|v| v.abs()).collect(),
        Some(_) => {
            return Err(FitError::InvalidInput(
                "scales length differs from parameter count".into(),
            ))
        }
        None => problem
            .initial
            .iter()
            .map(|p| if *p != 0.0 { p.abs() } else { 1.0 })
            .collect(),
    };
    let mut ws = Workspace {
        problem,
        scales,
        buf: vec![0.0; n],
        plus: vec![0.0; n],
        minus: vec![0.0; n],
    };

    let mut p = problem.initial.clone();
    ws.project(&mut p);
    let mut chi2 = ws.chi2(&p);
    if !chi2.is_finite() {
        return Err(FitError::InvalidInput(
            "model is not finite at the initial parameters".into(),
        ));
    }
    let dof = n - k;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS && !converged {
        iterations += 1;
        if chi2 == 0.0 {
            converged = true;
            break;
        }
        let (h, g) = ws.normal_equations(&p);
        let (hs, d) = scaled_normal_matrix(&h)?;
        let gs = DVector::from_iterator(k, (0..k).map(|a| g[a] / d[a]));
        loop {
            let mut damped = hs.clone();
            for a in 0..k {
                damped[(a, a)] += lambda;
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    return Err(FitError::Degenerate);
                }
                continue;
            };
            let step_s = chol.solve(&gs);
            let mut trial: Vec<f64> = (0..k).map(|a| p[a] + step_s[a] / d[a]).collect();
            ws.project(&mut trial);
            let trial_chi2 = ws.chi2(&trial);
            if trial_chi2.is_finite() && trial_chi2 < chi2 {
                let decrease = (chi2 - trial_chi2) / chi2;
                let tiny =
                    (0..k).all(|a| (trial[a] - p[a]).abs() <= 1e-14 * p[a].abs().max(ws.scales[a]));
                p = trial;
                chi2 = trial_chi2;
                lambda = (lambda / 10.0).max(1e-15);
                converged = decrease < CONVERGENCE_TOLERANCE || tiny;
                break;
            }
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                // no descent direction left at working precision
                converged = true;
                break;
            }
        }
    }

    let reduced_chi2 = if dof > 0 { chi2 / dof as f64 } else { 0.0 };
    let (h, _) = ws.normal_equations(&p);
    let covariance = covariance(&h, reduced_chi2)?;
    let fit = NllsFit {
        params: p,
        covariance,
        chi2,
        reduced_chi2,
        dof,
        iterations,
    };
    if converged {
        Ok(fit)
    } else {
        Err(FitError::NotConverged {
            iterations,
            best: Box::new(fit),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn line(xs: &[f64]) -> impl Fn(&[f64], &mut [f64]) + '_ {
        move |p: &[f64], out: &mut [f64]| {
            for (o, x) in out.iter_mut().zip(xs) {
                *o = p[0] * x + p[1];
            }
        }
    }

    #[test]
    fn exact_data_at_truth() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let model = line(&xs);
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let w = vec![1.0; 20];
        let fit = nlls_fit(&FitProblem {
            model: &model,
            data: &ys,
            weights: &w,
            initial: vec![2.0, -1.0],
            bounds: None,
            scales: None,
        })
        .unwrap();
        assert_eq!(fit.params, vec![2.0, -1.0]);
        assert!(fit.reduced_chi2 < 1e-20);
    }

    #[test]
    fn weighted_line_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..50).map(|i| 0.3 * i as f64).collect();
        let sig: Vec<f64> = (0..50).map(|i| 0.5 + 0.05 * i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .zip(&sig)
            .map(|(x, s)| 1.7 * x + 0.4 + s * noise.sample(&mut rng))
            .collect();
        let w: Vec<f64> = sig.iter().map(|s| 1.0 / (s * s)).collect();
        let model = line(&xs);
        let fit = nlls_fit(&FitProblem {
            model: &model,
            data: &ys,
            weights: &w,
            initial: vec![0.0, 0.0],
            bounds: None,
            scales: None,
        })
        .unwrap();

        // closed-form weighted regression
        let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..50 {
            s += w[i];
            sx += w[i] * xs[i];
            sxx += w[i] * xs[i] * xs[i];
            sy += w[i] * ys[i];
            sxy += w[i] * xs[i] * ys[i];
        }
        let det = s * sxx - sx * sx;
        let slope = (s * sxy - sx * sy) / det;
        let icept = (sxx * sy - sx * sxy) / det;
        assert!((fit.params[0] - slope).abs() < 1e-10 * slope.abs());
        assert!((fit.params[1] - icept).abs() < 1e-10 * icept.abs().max(1.0));
        let var_slope = s / det * fit.reduced_chi2;
        assert!((fit.covariance[(0, 0)] / var_slope - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lorentzian_pulls_are_calibrated() {
        // χ²_{2M}/2M noise on a Lorentzian; parameters inside 3σ in ≥ 99% of trials
        let xs: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let model = |p: &[f64], out: &mut [f64]| {
            for (o, x) in out.iter_mut().zip(&xs) {
                let d = (x - p[1]) / (0.5 * p[2]);
                *o = p[3] + p[0] / (1.0 + d * d);
            }
        };
        let truth = [10.0, 200.0, 30.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let chi = rand_distr::ChiSquared::new(200.0).unwrap();
        let mut expected = vec![0.0; 400];
        model(&truth, &mut expected);
        let trials = 500;
        let mut inside = 0;
        for _ in 0..trials {
            let ys: Vec<f64> = expected
                .iter()
                .map(|e| e * chi.sample(&mut rng) / 200.0)
                .collect();
            let w: Vec<f64> = super::super::periodogram_weights(&ys, 100).unwrap();
            let fit = nlls_fit(&FitProblem {
                model: &model,
                data: &ys,
                weights: &w,
                initial: vec![8.0, 195.0, 25.0, 1.2],
                bounds: None,
                scales: None,
            })
            .unwrap();
            if (0..4).all(|i| (fit.params[i] - truth[i]).abs() < 3.0 * fit.sigma(i)) {
                inside += 1;
            }
        }
        assert!(inside as f64 >= 0.99 * trials as f64, "{inside}/{trials}");
    }

    #[test]
    fn degenerate_parameters_detected() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let model = |p: &[f64], out: &mut [f64]| {
            for (o, x) in out.iter_mut().zip(&xs) {
                *o = (p[0] + p[1]) * x;
            }
        };
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
        let w = vec![1.0; 20];
        let err = nlls_fit(&FitProblem {
            model: &model,
            data: &ys,
            weights: &w,
            initial: vec![1.0, 1.0],
            bounds: None,
            scales: None,
        })
        .unwrap_err();
        assert_eq!(err, FitError::Degenerate);
        assert_eq!(err.to_string(), "degenerate parameterization");
    }

    #[test]
    fn non_convergence_carries_best_fit() {
        // a sine frequency started far from truth has many local minima
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let model = |p: &[f64], out: &mut [f64]| {
            for (o, x) in out.iter_mut().zip(&xs) {
                *o = p[0] * (p[1] * x).sin() + p[2] * x;
            }
        };
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 2.0 * (9.0 * x).sin() + 0.1 * x * x * x)
            .collect();
        let w = vec![1.0; 30];
        match nlls_fit(&FitProblem {
            model: &model,
            data: &ys,
            weights: &w,
            initial: vec![1.0, 1.0, 0.0],
            bounds: None,
            scales: None,
        }) {
            Err(FitError::NotConverged { iterations, best }) => {
                assert_eq!(iterations, MAX_ITERATIONS);
                assert_eq!(best.params.len(), 3);
            }
            // converging to some local minimum is also legitimate here
            Ok(fit) => assert!(fit.iterations <= MAX_ITERATIONS),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let xs = [0.0, 1.0, 2.0];
        let model = line(&xs);
        let w = [1.0; 3];
        let r = nlls_fit(&FitProblem {
            model: &model,
            data: &[1.0, 2.0, 3.0],
            weights: &w,
            initial: vec![1.0, 0.0],
            bounds: None,
            scales: None,
        });
        assert!(matches!(r, Err(FitError::InsufficientData { .. })));
        let xs = [0.0, 1.0, 2.0, 3.0];
        let model = line(&xs);
        let r = nlls_fit(&FitProblem {
            model: &model,
            data: &[1.0, 2.0, 3.0, 4.0],
            weights: &[1.0, 0.0, 1.0, 1.0],
            initial: vec![1.0, 0.0],
            bounds: None,
            scales: None,
        });
        assert!(matches!(r, Err(FitError::InvalidInput(_))));
    }

    #[test]
    fn argmin_invariant_under_rescaling() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let model = |p: &[f64], out: &mut [f64]| {
            for (o, x) in out.iter_mut().zip(&xs) {
                *o = p[0] * (-x / p[1]).exp() + p[2];
            }
        };
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 5.0 * (-x / 7.0).exp() + 0.3 + 0.01 * (x * 1.3).sin())
            .collect();
        let w = vec![4.0; 40];
        let fit = |data: &[f64], weights: &[f64], init: Vec<f64>| {
            nlls_fit(&FitProblem {
                model: &model,
                data,
                weights,
                initial: init,
                bounds: None,
                scales: None,
            })
            .unwrap()
        };
        let a = fit(&ys, &w, vec![4.0, 6.0, 0.2]);
        let c = 1e3;
        let ys2: Vec<f64> = ys.iter().map(|y| y * c).collect();
        let w2: Vec<f64> = w.iter().map(|v| v / (c * c)).collect();
        let b = fit(&ys2, &w2, vec![4.0 * c, 6.0, 0.2 * c]);
        assert!((b.params[0] / c / a.params[0] - 1.0).abs() < 1e-7);
        assert!((b.params[1] / a.params[1] - 1.0).abs() < 1e-7);
        assert!((b.params[2] / c / a.params[2] - 1.0).abs() < 1e-7);
        assert!((b.chi2 / a.chi2 - 1.0).abs() < 1e-7);
    }
}

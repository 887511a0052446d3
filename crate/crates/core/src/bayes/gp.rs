//! Gaussian-process surrogate with an anisotropic squared-exponential
//! kernel and the Expected Improvement acquisition function.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Observation noise floor added to the kernel diagonal.
pub const NOISE_FLOOR: f64 = 1e-8;

/// A fitted GP over normalized encodings.
///
/// The kernel is an anisotropic squared exponential. Encodings made of
/// several per-kernel blocks (multi-kernel plans) use one squared
/// exponential per block, summed: plan times add across passes, and a
/// summed kernel carries what one pass teaches to every plan sharing it.
/// Single-kernel encodings are one block, the plain squared exponential.
pub struct SurrogateModel {
    x_train: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    lengthscales: Vec<f64>,
    signal_var: f64,
    block_len: usize,
    y_mean: f64,
    y_std: f64,
}

fn sq_exp_blocked(
    x1: &[f64],
    x2: &[f64],
    lengthscales: &[f64],
    signal_var: f64,
    block_len: usize,
) -> f64 {
    let dims = x1.len();
    let blocks = dims / block_len;
    let per_block = signal_var / blocks as f64;
    let mut total = 0.0;
    for b in 0..blocks {
        let mut dist = 0.0;
        for d in b * block_len..(b + 1) * block_len {
            let delta = (x1[d] - x2[d]) / lengthscales[d];
            dist += delta * delta;
        }
        total += per_block * (-0.5 * dist).exp();
    }
    total
}

fn kernel_matrix(
    xs: &[Vec<f64>],
    lengthscales: &[f64],
    signal_var: f64,
    noise: f64,
    block_len: usize,
) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| {
        let k = sq_exp_blocked(&xs[i], &xs[j], lengthscales, signal_var, block_len);
        if i == j {
            k + noise
        } else {
            k
        }
    })
}

/// Log marginal likelihood of standardized targets under the kernel.
fn log_marginal(
    xs: &[Vec<f64>],
    ys: &DVector<f64>,
    lengthscales: &[f64],
    signal_var: f64,
    noise: f64,
    block_len: usize,
) -> Option<f64> {
    let k = kernel_matrix(xs, lengthscales, signal_var, noise, block_len);
    let chol = nalgebra::Cholesky::new(k)?;
    let alpha = chol.solve(ys);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    let n = ys.len() as f64;
    Some(-0.5 * ys.dot(&alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

impl SurrogateModel {
    /// Fits a single-block GP; see [`SurrogateModel::fit_blocked`].
    pub fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Result<Self> {
        let block_len = xs.first().map(|x| x.len().max(1)).unwrap_or(1);
        Self::fit_blocked(xs, ys, block_len)
    }

    /// Fits the GP by maximizing marginal likelihood with a deterministic
    /// multi-start coordinate search over the lengthscales. `block_len`
    /// splits the encoding into equal kernel blocks (one per plan pass).
    ///
    /// Requires at least two observations at distinct encodings.
    pub fn fit_blocked(xs: &[Vec<f64>], ys: &[f64], block_len: usize) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::UntrainableModel(format!(
                "need at least 2 paired observations, got {}",
                xs.len()
            )));
        }
        let dims = xs[0].len();
        if block_len == 0 || dims % block_len != 0 {
            return Err(Error::UntrainableModel(format!(
                "encoding length {dims} is not a multiple of the block length {block_len}"
            )));
        }
        let has_distinct = xs.iter().any(|x| x != &xs[0]);
        if !has_distinct {
            return Err(Error::UntrainableModel(
                "observations share one encoding".into(),
            ));
        }

        let n = ys.len() as f64;
        let y_mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n;
        let y_std = var.sqrt().max(1e-12);
        let standardized: Vec<f64> = ys.iter().map(|y| (y - y_mean) / y_std).collect();
        let y_vec = DVector::from_column_slice(&standardized);
        let signal_var = 1.0;

        // Multi-start over shared lengthscales, then per-dimension
        // refinement by coordinate descent over a small factor grid.
        let starts = [0.15, 0.3, 0.6, 1.2, 2.5, 5.0];
        let mut best: Option<(f64, Vec<f64>)> = None;
        for &s in &starts {
            let ls = vec![s; dims];
            if let Some(lml) = log_marginal(xs, &y_vec, &ls, signal_var, NOISE_FLOOR, block_len) {
                if best.as_ref().map(|(b, _)| lml > *b).unwrap_or(true) {
                    best = Some((lml, ls));
                }
            }
        }
        let (mut best_lml, mut lengthscales) = best.ok_or_else(|| {
            Error::UntrainableModel("kernel matrix is not positive definite".into())
        })?;
        for _ in 0..3 {
            let mut moved = false;
            for d in 0..dims {
                for factor in [0.4, 0.7, 1.4, 2.5] {
                    let mut trial = lengthscales.clone();
                    trial[d] = (trial[d] * factor).clamp(0.02, 20.0);
                    if let Some(lml) =
                        log_marginal(xs, &y_vec, &trial, signal_var, NOISE_FLOOR, block_len)
                    {
                        if lml > best_lml + 1e-9 {
                            best_lml = lml;
                            lengthscales = trial;
                            moved = true;
                        }
                    }
                }
            }
            if !moved {
                break;
            }
        }

        let mut noise = NOISE_FLOOR;
        let chol = loop {
            let k = kernel_matrix(xs, &lengthscales, signal_var, noise, block_len);
            if let Some(c) = nalgebra::Cholesky::new(k) {
                break c;
            }
            noise *= 10.0;
            if noise > 1e-2 {
                return Err(Error::UntrainableModel(
                    "kernel matrix is not positive definite".into(),
                ));
            }
        };
        let alpha = chol.solve(&y_vec);
        Ok(SurrogateModel {
            x_train: xs.to_vec(),
            alpha,
            chol,
            lengthscales,
            signal_var,
            block_len,
            y_mean,
            y_std,
        })
    }

    /// Predictive mean and standard deviation at an encoding, in the
    /// original (unstandardized) time unit.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k_star = DVector::from_fn(self.x_train.len(), |i, _| {
            sq_exp_blocked(
                x,
                &self.x_train[i],
                &self.lengthscales,
                self.signal_var,
                self.block_len,
            )
        });
        let mean = k_star.dot(&self.alpha);
        let v = self.chol.solve(&k_star);
        let var = (self.signal_var - k_star.dot(&v)).max(0.0);
        (
            self.y_mean + self.y_std * mean,
            self.y_std * var.sqrt(),
        )
    }

    pub fn len(&self) -> usize {
        self.x_train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_train.is_empty()
    }
}

/// Expected Improvement for minimization: (best - mu) Phi(z) + sigma phi(z)
/// with z = (best - mu) / sigma; the deterministic limit is
/// max(best - mu, 0).
pub fn expected_improvement(mean: f64, std_dev: f64, best_time: f64) -> f64 {
    if std_dev < 1e-12 {
        return (best_time - mean).max(0.0);
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z = (best_time - mean) / std_dev;
    let ei = (best_time - mean) * normal.cdf(z) + std_dev * normal.pdf(z);
    ei.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_points(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect()
    }

    #[test]
    fn interpolates_noiseless_observations() {
        let xs = vec![vec![0.0, 0.0], vec![1.0, 0.5]];
        let ys = vec![3.0, 7.0];
        let model = SurrogateModel::fit(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let (mean, _) = model.predict(x);
            assert!((mean - y).abs() < 1e-6, "{mean} vs {y}");
        }
    }

    #[test]
    fn constant_observations_predict_the_constant() {
        let xs = grid_points(5);
        let ys = vec![4.2; 5];
        let model = SurrogateModel::fit(&xs, &ys).unwrap();
        for x in [[0.13], [0.5], [0.99]] {
            let (mean, _) = model.predict(&x);
            assert!((mean - 4.2).abs() < 1e-9);
        }
        let (_, sd) = model.predict(&xs[2]);
        assert!(sd < 1e-5);
    }

    #[test]
    fn variance_nonnegative_and_zero_at_training_points() {
        let xs = grid_points(6);
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin()).collect();
        let model = SurrogateModel::fit(&xs, &ys).unwrap();
        for x in &xs {
            let (_, sd) = model.predict(x);
            assert!(sd >= 0.0);
            assert!(sd < 1e-3);
        }
        let (_, sd) = model.predict(&[0.55]);
        assert!(sd >= 0.0);
    }

    #[test]
    fn beats_constant_predictor_on_holdout() {
        let all: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64 / 24.0]).collect();
        let f = |x: f64| 2.0 + (6.0 * x).sin() + 0.5 * x;
        let train: Vec<Vec<f64>> = all.iter().step_by(2).cloned().collect();
        let train_y: Vec<f64> = train.iter().map(|x| f(x[0])).collect();
        let hold: Vec<Vec<f64>> = all.iter().skip(1).step_by(2).cloned().collect();
        let model = SurrogateModel::fit(&train, &train_y).unwrap();

        let mean_y = train_y.iter().sum::<f64>() / train_y.len() as f64;
        let mut gp_mse = 0.0;
        let mut const_mse = 0.0;
        for x in &hold {
            let truth = f(x[0]);
            let (mean, _) = model.predict(x);
            gp_mse += (mean - truth).powi(2);
            const_mse += (mean_y - truth).powi(2);
        }
        assert!(gp_mse < const_mse, "{gp_mse} vs {const_mse}");
    }

    #[test]
    fn undertrained_or_degenerate_inputs_error() {
        assert!(SurrogateModel::fit(&[vec![0.0]], &[1.0]).is_err());
        let same = vec![vec![0.5], vec![0.5]];
        assert!(SurrogateModel::fit(&same, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ei_deterministic_limits() {
        assert_eq!(expected_improvement(3.0, 0.0, 5.0), 2.0);
        assert_eq!(expected_improvement(7.0, 0.0, 5.0), 0.0);
    }

    #[test]
    fn ei_monotone_in_mean() {
        let mut prev = f64::INFINITY;
        for step in 0..20 {
            let mu = -2.0 + step as f64 * 0.4;
            let ei = expected_improvement(mu, 1.3, 1.0);
            assert!(ei <= prev + 1e-12);
            assert!(ei >= 0.0);
            prev = ei;
        }
    }

    #[test]
    fn ei_matches_monte_carlo() {
        // E[max(best - X, 0)], X ~ Normal(mu, sigma), via a deterministic
        // low-discrepancy probe of the inverse CDF.
        let cases = [(1.0f64, 1.0f64, 0.0f64), (0.3, 0.7, 0.5), (-0.2, 2.0, 0.1)];
        let normal = Normal::new(0.0, 1.0).unwrap();
        for (mu, sigma, best) in cases {
            let m = 1_000_000usize;
            let mut acc = 0.0;
            for i in 0..m {
                let u = (i as f64 + 0.5) / m as f64;
                let x = mu + sigma * normal.inverse_cdf(u);
                acc += (best - x).max(0.0);
            }
            let mc = acc / m as f64;
            let ei = expected_improvement(mu, sigma, best);
            assert!((ei - mc).abs() < 1e-3, "mu={mu} sigma={sigma}: {ei} vs {mc}");
        }
    }
}

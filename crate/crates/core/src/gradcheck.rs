//! Central finite-difference gradient checking.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub h: f64,
    /// Coordinates sampled per tensor; tensors at or below this size are checked exhaustively.
    pub samples_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-4,
            samples_per_tensor: 500,
            seed: 0,
        }
    }
}

/// Worst coordinate seen in one tensor.
#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub index: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_coord: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn coordinates_checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }
}

/// `|a − n| / max(|a|, |n|, 1e-12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares `analytic` against `(f(θ+h) − f(θ−h)) / 2h` on sampled
/// coordinates of every tensor in `params`. Parameters are restored
/// bit-exactly after each probe.
pub fn grad_check(
    params: &mut [Tensor<f64>],
    analytic: &[Tensor<f64>],
    mut loss: impl FnMut(&[Tensor<f64>]) -> f64,
    cfg: &GradCheckConfig,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len(), "one analytic gradient per parameter");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tensors = Vec::with_capacity(params.len());
    for ti in 0..params.len() {
        let n = params[ti].len();
        let coords: Vec<usize> = if n <= cfg.samples_per_tensor {
            (0..n).collect()
        } else {
            let mut c = index::sample(&mut rng, n, cfg.samples_per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        let mut check = TensorCheck {
            index: ti,
            checked: coords.len(),
            max_rel_error: 0.0,
            worst_coord: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for &c in &coords {
            let orig = params[ti].data()[c];
            params[ti].data_mut()[c] = orig + cfg.h;
            let up = loss(params);
            params[ti].data_mut()[c] = orig - cfg.h;
            let down = loss(params);
            params[ti].data_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * cfg.h);
            let a = analytic[ti].data()[c];
            let err = relative_error(a, numeric);
            if err > check.max_rel_error || c == coords[0] {
                check.max_rel_error = err;
                check.worst_coord = c;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        tensors.push(check);
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    GradCheckReport { max_rel_error, tensors }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(p: &[Tensor<f64>]) -> f64 {
        p.iter()
            .flat_map(|t| t.data().iter().enumerate())
            .map(|(i, &x)| (i as f64 + 1.0) * x * x + 0.5 * x)
            .sum()
    }

    fn quadratic_grad(p: &[Tensor<f64>]) -> Vec<Tensor<f64>> {
        p.iter()
            .map(|t| {
                let g = t.data().iter().enumerate().map(|(i, &x)| 2.0 * (i as f64 + 1.0) * x + 0.5);
                Tensor::from_vec(t.shape().to_vec(), g.collect()).unwrap()
            })
            .collect()
    }

    fn params() -> Vec<Tensor<f64>> {
        vec![
            Tensor::from_vec(vec![2, 3], vec![0.3, -1.1, 2.0, 0.7, -0.2, 1.4]).unwrap(),
            Tensor::from_vec(vec![4], vec![5.0, -3.0, 0.01, 1.0]).unwrap(),
        ]
    }

    #[test]
    fn quadratic_loss_is_exact() {
        let mut p = params();
        let g = quadratic_grad(&p);
        let report = grad_check(&mut p, &g, quadratic, &GradCheckConfig::default());
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.coordinates_checked(), 10);
        assert_eq!(p, params());
    }

    #[test]
    fn planted_factor_two_is_detected() {
        let mut p = params();
        let g: Vec<_> = quadratic_grad(&p).iter().map(|t| t.map(|x| 2.0 * x)).collect();
        let report = grad_check(&mut p, &g, quadratic, &GradCheckConfig::default());
        assert!((report.max_rel_error - 0.5).abs() < 1e-6, "{}", report.max_rel_error);
    }

    #[test]
    fn subsamples_large_tensors() {
        let mut p = vec![Tensor::from_vec(vec![2000], (0..2000).map(|i| i as f64 * 1e-3).collect()).unwrap()];
        let g = quadratic_grad(&p);
        let cfg = GradCheckConfig { samples_per_tensor: 64, ..Default::default() };
        let report = grad_check(&mut p, &g, quadratic, &cfg);
        assert_eq!(report.coordinates_checked(), 64);
        assert!(report.max_rel_error < 1e-6);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}

//! Closed-form ground truth for paired data.
//!
//! A [`GaussianWorld`] draws `x0 ~ N(m, S)` and `y = A x0 + u + n` with
//! `n ~ N(0, Sn)`. Everything the sampler and the losses need is then
//! available analytically: `E[x0 | y]`, the minimiser of the data-prediction
//! loss `E[x0 | x_t, y]`, and the resulting MMSE floor. The [`TwoArcs`] set is
//! a non-Gaussian 2-D companion for distributional checks.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PairSource;
use crate::paths::{PairedBatch, PathSpec};
use crate::sampler::{LossKind, Predictor};

/// Linear-Gaussian clean/degraded pair distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWorld {
    mean_x0: DVector<f64>,
    cov_x0: DMatrix<f64>,
    a: DMatrix<f64>,
    u: DVector<f64>,
    noise_cov: DMatrix<f64>,
    x0_factor: DMatrix<f64>,
    noise_factor: DMatrix<f64>,
    /// `S A^T (A S A^T + Sn)^{-1}`.
    gain: DMatrix<f64>,
    /// `Cov(x0 | y)`.
    post_cov: DMatrix<f64>,
}

const SYM_TOL: f64 = 1e-12;

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > SYM_TOL * scale {
        return Err(Error::invalid(format!("{name} is not symmetric")));
    }
    Ok(())
}

/// Symmetric square root factor `F` with `F F^T = m` for a PSD matrix.
fn psd_factor(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let floor = -1e-12 * m.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < floor) {
        return Err(Error::invalid(format!("{name} is not positive semi-definite")));
    }
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * sqrt * eig.eigenvectors.transpose())
}

impl GaussianWorld {
    /// The noise covariance may be singular (including zero) to model the
    /// noiseless limit; the marginal covariance of `y` must stay invertible.
    pub fn new(
        mean_x0: DVector<f64>,
        cov_x0: DMatrix<f64>,
        a: DMatrix<f64>,
        u: DVector<f64>,
        noise_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let d = mean_x0.len();
        if d == 0 {
            return Err(Error::invalid("Gaussian world needs a positive dimension"));
        }
        for (m, name) in [(&cov_x0, "cov_x0"), (&a, "A"), (&noise_cov, "noise_cov")] {
            if m.shape() != (d, d) {
                return Err(Error::invalid(format!("{name} must be {d}x{d}")));
            }
        }
        if u.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: u.len(),
            });
        }
        check_symmetric(&cov_x0, "cov_x0")?;
        check_symmetric(&noise_cov, "noise_cov")?;
        let x0_factor = cov_x0
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularCovariance("cov_x0 is not positive definite".into()))?
            .l();
        let noise_factor = psd_factor(&noise_cov, "noise_cov")?;
        if a.clone().lu().try_inverse().is_none() || a.determinant().abs() < 1e-300 {
            return Err(Error::SingularCovariance(
                "degradation matrix A is not invertible".into(),
            ));
        }
        let cov_xy = &cov_x0 * a.transpose();
        let cov_y = &a * &cov_xy + &noise_cov;
        let cov_y_chol = cov_y
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularCovariance("covariance of y is singular".into()))?;
        // gain = cov_xy cov_y^{-1}; cov_y is symmetric so solve on the transpose
        let gain = cov_y_chol.solve(&cov_xy.transpose()).transpose();
        let post_cov = &cov_x0 - &gain * cov_xy.transpose();
        let post_cov = 0.5 * (&post_cov + post_cov.transpose());
        Ok(GaussianWorld {
            mean_x0,
            cov_x0,
            a,
            u,
            noise_cov,
            x0_factor,
            noise_factor,
            gain,
            post_cov,
        })
    }

    /// `x0 ~ N(0, 1)`, `y = x0 + n`, `n ~ N(0, 1)`.
    pub fn standard_1d() -> Self {
        Self::isotropic(1, 1.0, 1.0).expect("valid standard world")
    }

    /// Identity degradation with isotropic clean and noise covariances.
    pub fn isotropic(dim: usize, x0_var: f64, noise_var: f64) -> Result<Self> {
        Self::new(
            DVector::zeros(dim),
            DMatrix::identity(dim, dim) * x0_var,
            DMatrix::identity(dim, dim),
            DVector::zeros(dim),
            DMatrix::identity(dim, dim) * noise_var,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean_x0.len()
    }

    pub fn mean_x0(&self) -> &DVector<f64> {
        &self.mean_x0
    }

    pub fn cov_x0(&self) -> &DMatrix<f64> {
        &self.cov_x0
    }

    pub fn degradation(&self) -> (&DMatrix<f64>, &DVector<f64>, &DMatrix<f64>) {
        (&self.a, &self.u, &self.noise_cov)
    }

    /// `Cov(x0 | y)`, independent of `y`.
    pub fn posterior_cov(&self) -> &DMatrix<f64> {
        &self.post_cov
    }

    /// Expected squared error of the conditional mean, `tr Cov(x0 | y)`.
    pub fn mmse_floor(&self) -> f64 {
        self.post_cov.trace()
    }

    /// Mean of `y`.
    pub fn mean_y(&self) -> DVector<f64> {
        &self.a * &self.mean_x0 + &self.u
    }

    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x0 = &self.mean_x0 + &self.x0_factor * z;
        let y = &self.a * &x0 + &self.u + &self.noise_factor * w;
        (x0.as_slice().to_vec(), y.as_slice().to_vec())
    }

    /// `E[x0 | y]` by joint-Gaussian conditioning.
    pub fn conditional_mean_x0_given_y(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.cond_mean(y)?.as_slice().to_vec())
    }

    fn cond_mean(&self, y: &[f64]) -> Result<DVector<f64>> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: y.len(),
            });
        }
        let y = DVector::from_column_slice(y);
        Ok(&self.mean_x0 + &self.gain * (y - self.mean_y()))
    }

    /// `E[x0 | x_t, y]` where `x_t = alpha x0 + beta y + sqrt(var) eps`.
    ///
    /// This is the exact minimiser of the data-prediction loss along `path`.
    pub fn posterior_mean_x0(&self, path: &PathSpec, x_t: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
        let p = path.point(t)?;
        let m = self.cond_mean(y)?;
        if x_t.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x_t.len(),
            });
        }
        if p.alpha == 0.0 {
            return Ok(m.as_slice().to_vec());
        }
        let z: Vec<f64> = x_t.iter().zip(y).map(|(&x, &y)| x - p.beta * y).collect();
        if p.var == 0.0 {
            return Ok(z.iter().map(|v| v / p.alpha).collect());
        }
        let z = DVector::from_vec(z);
        let d = self.dim();
        let obs_cov = &self.post_cov * (p.alpha * p.alpha) + DMatrix::identity(d, d) * p.var;
        let innovation = z - &m * p.alpha;
        let solved = obs_cov
            .cholesky()
            .ok_or_else(|| Error::SingularCovariance("observation covariance is singular".into()))?
            .solve(&innovation);
        Ok((m + &self.post_cov * solved * p.alpha).as_slice().to_vec())
    }
}

impl PairSource for GaussianWorld {
    fn dim(&self) -> usize {
        GaussianWorld::dim(self)
    }

    fn sample_pairs(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<PairedBatch> {
        let (x0, y) = (0..n).map(|_| self.sample_pair(rng)).unzip();
        PairedBatch::new(x0, y)
    }
}

/// The data-prediction optimum `E[x0 | x_t, y]` of a Gaussian world used as a
/// predictor (or `E[x0 | x_t, y] - y` for the flow-matching parameterisation).
#[derive(Debug, Clone)]
pub struct PosteriorMeanPredictor<'a> {
    pub world: &'a GaussianWorld,
    pub path: PathSpec,
    pub kind: LossKind,
}

impl Predictor for PosteriorMeanPredictor<'_> {
    fn loss_kind(&self) -> LossKind {
        self.kind
    }

    fn dim(&self) -> usize {
        self.world.dim()
    }

    fn predict(&self, x_t: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, t: f64) -> Result<Array2<f64>> {
        let mut out = Array2::zeros(x_t.raw_dim());
        for ((xr, yr), mut orow) in x_t.rows().into_iter().zip(y.rows()).zip(out.rows_mut()) {
            let (xv, yv) = (xr.to_vec(), yr.to_vec());
            let m = self.world.posterior_mean_x0(&self.path, &xv, &yv, t)?;
            for ((o, m), y) in orow.iter_mut().zip(m).zip(&yv) {
                *o = match self.kind {
                    LossKind::Dp => m,
                    LossKind::Fm => m - y,
                };
            }
        }
        Ok(out)
    }
}

/// A predictor that knows the clean rows: returns `x0` (DP) or `x0 - y` (FM).
#[derive(Debug, Clone)]
pub struct ExactPredictor {
    pub x0: Array2<f64>,
    pub kind: LossKind,
}

impl Predictor for ExactPredictor {
    fn loss_kind(&self) -> LossKind {
        self.kind
    }

    fn dim(&self) -> usize {
        self.x0.ncols()
    }

    fn predict(&self, x_t: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, _t: f64) -> Result<Array2<f64>> {
        if x_t.dim() != self.x0.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.x0.nrows(),
                actual: x_t.nrows(),
            });
        }
        Ok(match self.kind {
            LossKind::Dp => self.x0.clone(),
            LossKind::Fm => &self.x0 - &y,
        })
    }
}

/// Two interleaved half circles, shifted and corrupted by isotropic noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoArcs {
    /// Offset added to every clean point by the degradation.
    pub shift: [f64; 2],
    /// Standard deviation of the degradation noise.
    pub noise_std: f64,
    /// Standard deviation of isotropic jitter on the clean arcs.
    pub clean_jitter: f64,
}

impl Default for TwoArcs {
    fn default() -> Self {
        TwoArcs {
            shift: [0.5, -0.5],
            noise_std: 0.3,
            clean_jitter: 0.0,
        }
    }
}

impl TwoArcs {
    pub fn sample_clean<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let theta = std::f64::consts::PI * rng.random::<f64>();
        let (s, c) = theta.sin_cos();
        let (x, y) = if rng.random::<bool>() {
            (c, s)
        } else {
            (1.0 - c, 0.5 - s)
        };
        let jx: f64 = rng.sample(StandardNormal);
        let jy: f64 = rng.sample(StandardNormal);
        // centre the pair of arcs on the origin
        [x - 0.5 + self.clean_jitter * jx, y - 0.25 + self.clean_jitter * jy]
    }

    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let x0 = self.sample_clean(rng);
        let y = (0..2)
            .map(|i| x0[i] + self.shift[i] + self.noise_std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (x0.to_vec(), y)
    }
}

impl PairSource for TwoArcs {
    fn dim(&self) -> usize {
        2
    }

    fn sample_pairs(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<PairedBatch> {
        let (x0, y) = (0..n).map(|_| self.sample_pair(rng)).unzip();
        PairedBatch::new(x0, y)
    }
}

/// Energy distance `2 E|X - Y| - E|X - X'| - E|Y - Y'|` between two empirical
/// samples (V-statistic: all pairs, including the diagonal).
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("energy distance needs non-empty samples"));
    }
    let d = a[0].len();
    if let Some(bad) = a.iter().chain(b).find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    fn mean_dist(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for u in p {
            let mut row = 0.0;
            for v in q {
                row += u.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            }
            total += row;
        }
        total / (p.len() * q.len()) as f64
    }
    let e = 2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b);
    Ok(e.max(0.0))
}

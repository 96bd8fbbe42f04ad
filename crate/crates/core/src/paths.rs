//! Gaussian probability paths between a clean sample `x0` and its degraded
//! counterpart `y`.
//!
//! Every path is an affine interpolation `mu_t = alpha(t) x0 + beta(t) y` with an
//! isotropic marginal variance `var(t)`:
//!
//! | family | `beta(t)`            | `var(t)`                         |
//! |--------|----------------------|----------------------------------|
//! | SB-VE  | `s2(t) / s2(1)`      | `s2(t) (1 - s2(t) / s2(1))`      |
//! | SB-SV  | `s2(t) / s2(1)`      | `c`                              |
//! | ICFM   | `t`                  | `c`                              |
//!
//! with the variance-exploding schedule `s2(t) = c (k^(2t) - 1) / (2 ln k)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Within this distance of `k = 1` the schedule is evaluated through its
/// analytic limit `s2(t) = c t`.
pub const K_LIMIT_BAND: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathFamily {
    /// Schrödinger bridge with a variance-exploding reference.
    SbVe,
    /// Schrödinger-bridge mean with a static (time-independent) variance.
    SbSv,
    /// Independent conditional flow matching: linear mean, constant variance.
    Icfm,
}

impl PathFamily {
    pub fn is_bridge(self) -> bool {
        matches!(self, PathFamily::SbVe | PathFamily::SbSv)
    }

    pub fn name(self) -> &'static str {
        match self {
            PathFamily::SbVe => "sb-ve",
            PathFamily::SbSv => "sb-sv",
            PathFamily::Icfm => "icfm",
        }
    }
}

impl fmt::Display for PathFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PathFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "sb-ve" | "sbve" => Ok(PathFamily::SbVe),
            "sb-sv" | "sbsv" => Ok(PathFamily::SbSv),
            "icfm" => Ok(PathFamily::Icfm),
            other => Err(Error::invalid(format!("unknown path family `{other}`"))),
        }
    }
}

/// A path family together with its shape parameters.
///
/// `k` is the base of the interpolation weight (ignored by ICFM) and `c` scales
/// the variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPathSpec", into = "RawPathSpec")]
pub struct PathSpec {
    family: PathFamily,
    k: f64,
    c: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPathSpec {
    family: PathFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<f64>,
    c: f64,
}

impl TryFrom<RawPathSpec> for PathSpec {
    type Error = Error;

    fn try_from(raw: RawPathSpec) -> Result<Self> {
        match (raw.family, raw.k) {
            (PathFamily::Icfm, _) => PathSpec::icfm(raw.c),
            (family, Some(k)) => PathSpec::new(family, k, raw.c),
            (family, None) => Err(Error::Config(format!("path family {family} requires `k`"))),
        }
    }
}

impl From<PathSpec> for RawPathSpec {
    fn from(spec: PathSpec) -> Self {
        RawPathSpec {
            family: spec.family,
            k: spec.family.is_bridge().then_some(spec.k),
            c: spec.c,
        }
    }
}

impl PathSpec {
    pub fn new(family: PathFamily, k: f64, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid(format!("variance scale c must be positive, got {c}")));
        }
        if family.is_bridge() && !(k.is_finite() && k > 0.0 && k != 1.0) {
            return Err(Error::invalid(format!(
                "schedule base k must be positive and different from 1, got {k}"
            )));
        }
        let k = if family.is_bridge() { k } else { 1.0 };
        Ok(PathSpec { family, k, c })
    }

    pub fn sb_ve(k: f64, c: f64) -> Result<Self> {
        Self::new(PathFamily::SbVe, k, c)
    }

    pub fn sb_sv(k: f64, c: f64) -> Result<Self> {
        Self::new(PathFamily::SbSv, k, c)
    }

    pub fn icfm(c: f64) -> Result<Self> {
        Self::new(PathFamily::Icfm, 1.0, c)
    }

    /// The five reference configurations studied for speech enhancement.
    pub fn reference_configs() -> [PathSpec; 5] {
        [
            PathSpec::sb_ve(2.6, 0.4).unwrap(),
            PathSpec::sb_ve(0.99, 0.375).unwrap(),
            PathSpec::sb_sv(2.6, 0.15).unwrap(),
            PathSpec::sb_sv(0.99, 0.1).unwrap(),
            PathSpec::icfm(0.1).unwrap(),
        ]
    }

    pub fn family(&self) -> PathFamily {
        self.family
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Variance-exploding schedule `s2(t) = c (k^(2t) - 1) / (2 ln k)`.
    ///
    /// Only defined for the bridge families.
    pub fn sigma_sq(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        if !self.family.is_bridge() {
            return Err(Error::invalid("ICFM paths have no sigma_t schedule"));
        }
        Ok(ve_sigma_sq(self.k, self.c, t))
    }

    /// `s2(1)`, the terminal value of the schedule.
    pub fn sigma1_sq(&self) -> Result<f64> {
        self.sigma_sq(1.0)
    }

    /// Interpolation weights and marginal variance at time `t`.
    pub fn point(&self, t: f64) -> Result<PathPoint> {
        check_time(t)?;
        let (alpha, beta, var) = match self.family {
            PathFamily::Icfm => (1.0 - t, t, self.c),
            PathFamily::SbVe | PathFamily::SbSv => {
                let s2 = ve_sigma_sq(self.k, self.c, t);
                let s2_1 = ve_sigma_sq(self.k, self.c, 1.0);
                let beta = s2 / s2_1;
                let alpha = 1.0 - beta;
                let var = match self.family {
                    PathFamily::SbVe => (s2 * alpha).max(0.0),
                    _ => self.c,
                };
                (alpha, beta, var)
            }
        };
        Ok(PathPoint { t, alpha, beta, var })
    }

    /// Draws `x_t ~ N(alpha x0 + beta y, var I)` with real-valued noise.
    pub fn sample_perturbation<R: Rng + ?Sized>(&self, x0: &[f64], y: &[f64], t: f64, rng: &mut R) -> Result<Vec<f64>> {
        self.sample_perturbation_in(NoiseDomain::Real, x0, y, t, rng)
    }

    /// Like [`PathSpec::sample_perturbation`], with the noise realised in the
    /// given domain.
    pub fn sample_perturbation_in<R: Rng + ?Sized>(
        &self,
        domain: NoiseDomain,
        x0: &[f64],
        y: &[f64],
        t: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if x0.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x0.len(),
                actual: y.len(),
            });
        }
        let p = self.point(t)?;
        let std = domain.coordinate_std(p.var);
        Ok(x0
            .iter()
            .zip(y)
            .map(|(&a, &b)| {
                let eps: f64 = rng.sample(StandardNormal);
                p.alpha * a + p.beta * b + std * eps
            })
            .collect())
    }

    /// Evenly spaced `(t, alpha, beta, var)` rows on `[0, 1]`.
    pub fn schedule_curve(&self, n_points: usize) -> Result<Vec<PathPoint>> {
        if n_points < 2 {
            return Err(Error::invalid("schedule curve needs at least two points"));
        }
        let last = (n_points - 1) as f64;
        (0..n_points)
            .map(|i| {
                let t = if i + 1 == n_points { 1.0 } else { i as f64 / last };
                self.point(t)
            })
            .collect()
    }
}

impl fmt::Display for PathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            PathFamily::Icfm => write!(f, "icfm(c={})", self.c),
            fam => write!(f, "{fam}(k={}, c={})", self.k, self.c),
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::invalid(format!("time {t} outside [0, 1]")))
    }
}

fn ve_sigma_sq(k: f64, c: f64, t: f64) -> f64 {
    if (k - 1.0).abs() < K_LIMIT_BAND {
        return c * t;
    }
    let ln_k = k.ln();
    c * (2.0 * t * ln_k).exp_m1() / (2.0 * ln_k)
}

/// A point on a probability path: `x_t = alpha x0 + beta y + sqrt(var) eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub alpha: f64,
    pub beta: f64,
    pub var: f64,
}

/// How isotropic Gaussian noise of variance `var` is split over coordinates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseDomain {
    /// Every coordinate receives variance `var`.
    #[default]
    Real,
    /// Coordinates are interleaved (re, im) pairs of a complex vector; circular
    /// complex noise of variance `var` puts `var / 2` on each part.
    Complex,
}

impl NoiseDomain {
    pub fn coordinate_std(self, var: f64) -> f64 {
        match self {
            NoiseDomain::Real => var.sqrt(),
            NoiseDomain::Complex => (0.5 * var).sqrt(),
        }
    }
}

/// Matched clean / degraded sample pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedBatch {
    x0: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    dim: usize,
}

impl PairedBatch {
    pub fn new(x0: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> Result<Self> {
        if x0.len() != y.len() {
            return Err(Error::invalid(format!(
                "paired batch has {} clean and {} degraded samples",
                x0.len(),
                y.len()
            )));
        }
        let dim = x0.first().map_or(0, Vec::len);
        for v in x0.iter().chain(&y) {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
        }
        if !x0.is_empty() && dim == 0 {
            return Err(Error::invalid("paired batch vectors must be non-empty"));
        }
        Ok(PairedBatch { x0, y, dim })
    }

    pub fn x0(&self) -> &[Vec<f64>] {
        &self.x0
    }

    pub fn y(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.x0.iter().map(Vec::as_slice).zip(self.y.iter().map(Vec::as_slice))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma_sq_examples() {
        let spec = PathSpec::sb_ve(2.6, 0.4).unwrap();
        assert_eq!(spec.sigma_sq(0.0).unwrap(), 0.0);
        assert!((spec.sigma_sq(1.0).unwrap() - 1.20563).abs() < 1e-5);

        for k in [1.0 + 1e-6, 1.0 - 1e-6] {
            let s = PathSpec::sb_ve(k, 0.4).unwrap();
            assert!((s.sigma_sq(0.5).unwrap() - 0.2).abs() < 1e-9);
        }
    }

    #[test]
    fn sigma_sq_rejects_bad_input() {
        let spec = PathSpec::sb_ve(2.6, 0.4).unwrap();
        assert!(spec.sigma_sq(-0.1).is_err());
        assert!(spec.sigma_sq(1.0 + 1e-12).is_err());
        assert!(PathSpec::icfm(0.1).unwrap().sigma_sq(0.5).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(PathSpec::sb_ve(1.0, 0.4).is_err());
        assert!(PathSpec::sb_ve(-2.0, 0.4).is_err());
        assert!(PathSpec::sb_sv(2.6, 0.0).is_err());
        assert!(PathSpec::icfm(f64::NAN).is_err());
        assert!(PathSpec::icfm(0.1).is_ok());
    }

    #[test]
    fn path_point_examples() {
        let spec = PathSpec::sb_ve(2.6, 0.4).unwrap();
        let p = spec.point(0.5).unwrap();
        assert!((p.beta - 0.27778).abs() < 1e-5);
        assert!((p.var - 0.24187).abs() < 1e-5);

        let p = PathSpec::sb_ve(0.99, 0.375).unwrap().point(0.5).unwrap();
        assert!((p.beta - 0.50251).abs() < 1e-5);

        let p = PathSpec::icfm(0.1).unwrap().point(0.7).unwrap();
        assert!((p.alpha - 0.3).abs() < 1e-15);
        assert_eq!(p.beta, 0.7);
        assert_eq!(p.var, 0.1);

        for spec in [PathSpec::sb_ve(2.6, 0.4).unwrap(), PathSpec::sb_ve(0.5, 3.0).unwrap()] {
            let p = spec.point(1.0).unwrap();
            assert_eq!(p.var, 0.0);
            assert_eq!(p.beta, 1.0);
        }
    }

    #[test]
    fn perturbation_boundaries_are_exact() {
        let spec = PathSpec::sb_ve(2.6, 0.4).unwrap();
        let x0 = [0.3, -1.7, 2.5];
        let y = [1.1, 0.4, -0.9];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(spec.sample_perturbation(&x0, &y, 0.0, &mut rng).unwrap(), x0);
        assert_eq!(spec.sample_perturbation(&x0, &y, 1.0, &mut rng).unwrap(), y);
        assert!(matches!(
            spec.sample_perturbation(&x0, &y[..2], 0.5, &mut rng),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn complex_noise_splits_variance() {
        assert_eq!(NoiseDomain::Complex.coordinate_std(0.5), 0.5);
        assert_eq!(NoiseDomain::Real.coordinate_std(0.25), 0.5);
    }

    #[test]
    fn icfm_curve_three_points() {
        let rows = PathSpec::icfm(0.1).unwrap().schedule_curve(3).unwrap();
        let betas: Vec<f64> = rows.iter().map(|r| r.beta).collect();
        assert_eq!(betas, vec![0.0, 0.5, 1.0]);
        assert!(PathSpec::icfm(0.1).unwrap().schedule_curve(1).is_err());
    }

    #[test]
    fn serde_round_trip_reference_configs() {
        for spec in PathSpec::reference_configs() {
            let text = toml::to_string(&spec).unwrap();
            let back: PathSpec = toml::from_str(&text).unwrap();
            assert_eq!(back, spec, "{text}");
        }
        let err = toml::from_str::<PathSpec>("family = \"sb-ve\"\nc = 0.4\n");
        assert!(err.is_err());
        let err = toml::from_str::<PathSpec>("family = \"sb-ve\"\nk = 1.0\nc = 0.4\n");
        assert!(err.is_err());
    }

    #[test]
    fn paired_batch_validation() {
        assert!(PairedBatch::new(vec![vec![1.0]], vec![]).is_err());
        assert!(PairedBatch::new(vec![vec![1.0], vec![1.0, 2.0]], vec![vec![0.0], vec![0.0]]).is_err());
        let b = PairedBatch::new(vec![vec![1.0, 2.0]], vec![vec![0.0, 0.5]]).unwrap();
        assert_eq!(b.dim(), 2);
        assert_eq!(b.len(), 1);
    }
}

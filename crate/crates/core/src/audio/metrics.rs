use crate::error::{Error, Result};

/// SI-SDR values are clipped to `±SI_SDR_CLIP_DB`.
pub const SI_SDR_CLIP_DB: f64 = 60.0;

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// The estimate is split into its projection onto the reference and the
/// orthogonal residual; the score is their energy ratio.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            actual: estimate.len(),
        });
    }
    let ref_energy: f64 = reference.iter().map(|r| r * r).sum();
    if ref_energy == 0.0 {
        return Err(Error::invalid("SI-SDR reference is identically zero"));
    }
    let dot: f64 = estimate.iter().zip(reference).map(|(e, r)| e * r).sum();
    let scale = dot / ref_energy;
    let (mut target, mut residual) = (0.0, 0.0);
    for (e, r) in estimate.iter().zip(reference) {
        let s = scale * r;
        target += s * s;
        residual += (e - s) * (e - s);
    }
    let db = 10.0 * (target / residual).log10();
    Ok(if db.is_nan() {
        // 0 / 0: a zero estimate carries no signal
        -SI_SDR_CLIP_DB
    } else {
        db.clamp(-SI_SDR_CLIP_DB, SI_SDR_CLIP_DB)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Vec<f64> {
        (0..1000)
            .map(|i| (i as f64 * 0.05).sin() + 0.2 * (i as f64 * 0.31).cos())
            .collect()
    }

    #[test]
    fn scaled_reference_is_perfect() {
        let s = reference();
        for alpha in [1.0, -0.3, 7.5] {
            let est: Vec<f64> = s.iter().map(|v| alpha * v).collect();
            assert_eq!(si_sdr(&est, &s).unwrap(), SI_SDR_CLIP_DB);
        }
    }

    #[test]
    fn orthogonal_noise_at_ten_db() {
        let s = reference();
        let mut n: Vec<f64> = (0..1000).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        // Gram-Schmidt against s, then scale to a tenth of its energy
        let proj = n.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / s.iter().map(|v| v * v).sum::<f64>();
        n.iter_mut().zip(&s).for_each(|(a, b)| *a -= proj * b);
        let es: f64 = s.iter().map(|v| v * v).sum();
        let en: f64 = n.iter().map(|v| v * v).sum();
        let g = (es / (10.0 * en)).sqrt();
        let est: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + g * b).collect();
        assert!((si_sdr(&est, &s).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn doubling_is_exactly_invariant() {
        let s = reference();
        let est: Vec<f64> = s
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.1 * ((i % 7) as f64 - 3.0))
            .collect();
        let doubled: Vec<f64> = est.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_sdr(&doubled, &s).unwrap(), si_sdr(&est, &s).unwrap());
    }

    #[test]
    fn errors_and_clipping() {
        let s = reference();
        assert!(si_sdr(&s, &vec![0.0; 1000]).is_err());
        assert!(si_sdr(&s[..10], &s).is_err());
        assert_eq!(si_sdr(&vec![0.0; 1000], &s).unwrap(), -SI_SDR_CLIP_DB);
    }
}

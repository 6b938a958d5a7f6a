use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

/// Bound on reported SI-SDR magnitude, dB.
pub const SI_SDR_CAP_DB: f64 = 80.0;

/// Scale-invariant SDR of `est` against `clean`, clamped to ±80 dB.
pub fn si_sdr(clean: &AudioBuffer<f64>, est: &AudioBuffer<f64>) -> Result<f64> {
    if clean.len() != est.len() {
        return Err(Error::domain(format!(
            "si_sdr needs equal lengths, got {} and {}",
            clean.len(),
            est.len()
        )));
    }
    let cc: f64 = clean.samples.iter().map(|v| v * v).sum();
    if cc <= f64::MIN_POSITIVE {
        return Err(Error::domain("si_sdr reference is silent"));
    }
    let alpha = clean.samples.iter().zip(&est.samples).map(|(c, e)| c * e).sum::<f64>() / cc;
    let target = alpha * alpha * cc;
    let err: f64 = clean
        .samples
        .iter()
        .zip(&est.samples)
        .map(|(c, e)| (e - alpha * c).powi(2))
        .sum();
    if err == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    if target == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / err).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buf(v: Vec<f64>) -> AudioBuffer<f64> {
        AudioBuffer::new(v, 16000).unwrap()
    }

    #[test]
    fn identity_hits_cap_and_scale_is_ignored() {
        let x = buf((0..500).map(|i| ((i * 7919) % 101) as f64 - 50.0).collect());
        assert_eq!(si_sdr(&x, &x).unwrap(), SI_SDR_CAP_DB);
        let y = buf(x.samples.iter().map(|v| -3.5 * v).collect());
        assert_eq!(si_sdr(&x, &y).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn orthogonal_equal_power_error_is_zero_db() {
        let x = buf(vec![1.0, 1.0, -1.0, -1.0]);
        let e = buf(vec![1.0 + 1.0, 1.0 - 1.0, -1.0 + 1.0, -1.0 - 1.0]);
        assert!(si_sdr(&x, &e).unwrap().abs() < 1e-12);
    }

    #[test]
    fn silent_reference_is_rejected() {
        let z = buf(vec![0.0; 8]);
        assert!(matches!(si_sdr(&z, &z), Err(Error::Domain(_))));
    }
}

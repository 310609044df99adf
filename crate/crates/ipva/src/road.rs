//! Stochastic road realizations and preview windows.
//!
//! The road displacement is white noise through a first-order filter,
//! `ẋr = −ωc·xr + n(t)` with `n` white of intensity `2πGrV`, giving the
//! displacement spectrum `S(ω) = 2πGrV/(ω² + ωc²)`. Realizations use the
//! exact discrete-time update of the filter, so they are bit-identical
//! for a given seed regardless of duration chunking.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::RoadError;

/// Class-C road roughness coefficient in the `2πGrV/ω²` convention
/// (Gd(n0)·n0² with Gd(n0) = 256e-6 m³ at n0 = 0.1 cycle/m).
pub const GR_CLASS_C: f64 = 2.56e-6;

/// Road excitation model: filtered white noise at vehicle speed `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadModel {
    /// Roughness coefficient (class-C default [`GR_CLASS_C`]).
    pub gr: f64,
    /// Vehicle speed (m/s).
    pub v: f64,
    /// Filter cutoff ωc (rad/s); keeps the spectrum bounded at ω = 0.
    pub omega_c: f64,
    /// Sample period (s).
    pub ts: f64,
    /// RNG seed; same seed gives a bit-identical realization.
    pub seed: u64,
}

impl Default for RoadModel {
    fn default() -> Self {
        RoadModel {
            gr: GR_CLASS_C,
            v: 20.0,
            omega_c: 0.01,
            ts: 0.01,
            seed: 0,
        }
    }
}

impl RoadModel {
    pub fn with_seed(self, seed: u64) -> Self {
        RoadModel { seed, ..self }
    }

    /// White-noise intensity of ẋr, `q = 2πGrV`.
    pub fn noise_intensity(&self) -> f64 {
        std::f64::consts::TAU * self.gr * self.v
    }

    /// Stationary variance `πGrV/ωc` of the displacement filter.
    pub fn stationary_variance(&self) -> f64 {
        self.noise_intensity() / (2.0 * self.omega_c)
    }
}

/// A sampled road-displacement realization.
#[derive(Debug, Clone)]
pub struct RoadSignal {
    /// Displacement samples (m) at period `model.ts`, starting at t = 0.
    pub samples: Vec<f64>,
    pub model: RoadModel,
}

/// How the controller sees the upcoming road inside its horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PreviewMode {
    /// Exact future samples.
    Perfect,
    /// Last road-disturbance estimate held constant over the horizon.
    Lrde,
    /// Future samples corrupted by white Gaussian noise at the given SNR
    /// (dB), with signal power measured over the whole realization.
    Noisy { snr_db: f64 },
}

/// Generates a road realization of `duration` seconds (`duration/ts + 1`
/// samples including t = 0).
pub fn generate(model: &RoadModel, duration: f64) -> RoadSignal {
    let n = (duration / model.ts).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let q = model.noise_intensity();
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(0.0);
    if q == 0.0 {
        samples.resize(n + 1, 0.0);
        return RoadSignal {
            samples,
            model: *model,
        };
    }
    // exact discretization of the OU filter over one sample period
    let a = (-model.omega_c * model.ts).exp();
    let var = if model.omega_c > 0.0 {
        q / (2.0 * model.omega_c) * (1.0 - a * a)
    } else {
        q * model.ts
    };
    let normal = Normal::new(0.0, var.sqrt()).expect("variance is finite");
    let mut x = 0.0;
    for _ in 0..n {
        x = a * x + normal.sample(&mut rng);
        samples.push(x);
    }
    RoadSignal {
        samples,
        model: *model,
    }
}

impl RoadSignal {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean-square signal power over the full realization.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }

    /// Writes the realization as two-column CSV (time s, displacement m).
    pub fn write_csv(&self, path: &Path) -> Result<(), RoadError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "time_s,displacement_m")?;
        for (k, x) in self.samples.iter().enumerate() {
            writeln!(w, "{},{}", k as f64 * self.model.ts, x)?;
        }
        Ok(())
    }

    /// Reads a realization written by [`RoadSignal::write_csv`]. The sample
    /// period is recovered from the time column.
    pub fn read_csv(path: &Path, model: RoadModel) -> Result<Self, RoadError> {
        let f = std::fs::File::open(path)?;
        let mut samples = Vec::new();
        let mut ts = model.ts;
        for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line?;
            if i == 0 {
                continue; // header
            }
            let mut it = line.split(',');
            let t: f64 = it
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| RoadError::Parse {
                    line: i + 1,
                    reason: "bad time".into(),
                })?;
            let x: f64 = it
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| RoadError::Parse {
                    line: i + 1,
                    reason: "bad displacement".into(),
                })?;
            if i == 2 {
                ts = t;
            }
            samples.push(x);
        }
        Ok(RoadSignal {
            samples,
            model: RoadModel { ts, ..model },
        })
    }
}

/// Precomputed preview noise for [`PreviewMode::Noisy`]; fixed per run so
/// the corruption level is stationary and the plant's true disturbance is
/// never altered.
#[derive(Debug, Clone)]
pub struct PreviewNoise {
    noise: Vec<f64>,
}

impl PreviewNoise {
    /// Draws a noise track scaled so signal-power / noise-power equals
    /// `10^(snr_db/10)` against the full-realization signal power.
    pub fn new(signal: &RoadSignal, snr_db: f64, seed: u64) -> Self {
        let sigma = (signal.power() / 10f64.powf(snr_db / 10.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
        PreviewNoise {
            noise: (0..signal.len()).map(|_| normal.sample(&mut rng)).collect(),
        }
    }

    /// Measured SNR (dB) of signal + this noise, for diagnostics/tests.
    pub fn measured_snr_db(&self, signal: &RoadSignal) -> f64 {
        let ps = signal.power();
        let pn = self.noise.iter().map(|v| v * v).sum::<f64>() / self.noise.len() as f64;
        10.0 * (ps / pn).log10()
    }
}

/// Builds the N-step preview window starting at sample `k`.
///
/// `w_hat` is the latest disturbance estimate, used only in LRDE mode.
/// `noise` must be supplied for `Noisy` mode (same realization each call).
pub fn preview(
    signal: &RoadSignal,
    k: usize,
    n: usize,
    mode: PreviewMode,
    w_hat: f64,
    noise: Option<&PreviewNoise>,
) -> Result<Vec<f64>, RoadError> {
    match mode {
        PreviewMode::Lrde => Ok(vec![w_hat; n]),
        PreviewMode::Perfect => {
            if k + n > signal.len() {
                return Err(RoadError::IndexOutOfRange {
                    start: k,
                    end: k + n,
                    len: signal.len(),
                });
            }
            Ok(signal.samples[k..k + n].to_vec())
        }
        PreviewMode::Noisy { .. } => {
            if k + n > signal.len() {
                return Err(RoadError::IndexOutOfRange {
                    start: k,
                    end: k + n,
                    len: signal.len(),
                });
            }
            let noise = noise.expect("Noisy preview requires a PreviewNoise track");
            Ok((k..k + n)
                .map(|i| signal.samples[i] + noise.noise[i])
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_roughness_gives_zero_signal() {
        let model = RoadModel {
            gr: 0.0,
            ..RoadModel::default()
        };
        let sig = generate(&model, 10.0);
        assert!(sig.samples.iter().all(|&v| v == 0.0));
        assert_eq!(sig.len(), 1001);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let model = RoadModel::default().with_seed(42);
        let a = generate(&model, 50.0);
        let b = generate(&model, 50.0);
        assert_eq!(a.samples, b.samples);
        let c = generate(&model.with_seed(43), 50.0);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn stationary_variance_matches_ou_closed_form() {
        // faster filter so the realization covers many correlation times
        let model = RoadModel {
            omega_c: 1.0,
            seed: 7,
            ..RoadModel::default()
        };
        let sig = generate(&model, 5000.0);
        let skip = 2000; // past the start-up transient
        let s: Vec<&f64> = sig.samples[skip..].iter().collect();
        let var = s.iter().map(|&&v| v * v).sum::<f64>() / s.len() as f64;
        assert_relative_eq!(var, model.stationary_variance(), max_relative = 0.10);
    }

    #[test]
    fn perfect_preview_is_exact() {
        let sig = generate(&RoadModel::default().with_seed(3), 5.0);
        let w = preview(&sig, 100, 15, PreviewMode::Perfect, 0.0, None).unwrap();
        assert_eq!(w, sig.samples[100..115].to_vec());
    }

    #[test]
    fn lrde_preview_is_constant() {
        let sig = generate(&RoadModel::default().with_seed(3), 5.0);
        let w = preview(&sig, 0, 4, PreviewMode::Lrde, 0.003, None).unwrap();
        assert_eq!(w, vec![0.003; 4]);
    }

    #[test]
    fn preview_out_of_range() {
        let sig = generate(&RoadModel::default().with_seed(3), 1.0);
        let e = preview(&sig, 95, 15, PreviewMode::Perfect, 0.0, None);
        assert!(matches!(e, Err(RoadError::IndexOutOfRange { .. })));
    }

    #[test]
    fn noisy_preview_hits_requested_snr() {
        let model = RoadModel::default().with_seed(11);
        let sig = generate(&model, 2000.0);
        let noise = PreviewNoise::new(&sig, 10.0, model.seed);
        let snr = noise.measured_snr_db(&sig);
        assert!((snr - 10.0).abs() < 0.5, "measured SNR {snr} dB");
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join("ipva_road_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("road.csv");
        let sig = generate(&RoadModel::default().with_seed(5), 2.0);
        sig.write_csv(&path).unwrap();
        let back = RoadSignal::read_csv(&path, sig.model).unwrap();
        assert_eq!(back.len(), sig.len());
        for (a, b) in back.samples.iter().zip(&sig.samples) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }
}

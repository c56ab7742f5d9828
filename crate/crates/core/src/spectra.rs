//! IR-style spectra from trajectory observables.
//!
//! The pipeline is the standard molecular-dynamics one: biased time
//! autocorrelation of the mean-subtracted observable over half the run, a
//! Hann taper, and a discrete cosine transform evaluated through a
//! zero-padded FFT (4x) so peak positions can be refined below the grid
//! spacing.  The reported `resolution` is the physical one set by the
//! retained lag span; the frequency grid itself is finer by the padding
//! factor.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};

use crate::dynamics::{
    analytic_mode_dynamics, initial_state, propagate, CO2Preset, ThermostatParams, Trajectory,
};
use crate::error::{Error, Result};
use crate::model::ApproximationLevel;
use crate::units::HARTREE_TO_INV_CM;

pub const MIN_SERIES_LEN: usize = 1 << 10;
const PAD_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableKind {
    CollectiveDipole,
    LocalDipole,
    Bond,
    Photon,
}

impl ObservableKind {
    pub const ALL: [ObservableKind; 4] = [
        ObservableKind::CollectiveDipole,
        ObservableKind::LocalDipole,
        ObservableKind::Bond,
        ObservableKind::Photon,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ObservableKind::CollectiveDipole => "collective_dipole",
            ObservableKind::LocalDipole => "local_dipole",
            ObservableKind::Bond => "bond",
            ObservableKind::Photon => "photon",
        }
    }
}

/// Taper applied to the autocorrelation before transforming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Taper {
    #[default]
    Hann,
    None,
}

/// One-sided power spectrum on a uniform frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub intensities: Vec<f64>,
    pub source_observable: ObservableKind,
    /// Physical resolution `2 pi / (lag span)`; the grid spacing is finer by
    /// the interpolation padding.
    pub resolution: f64,
}

impl Spectrum {
    pub fn grid_spacing(&self) -> f64 {
        if self.frequencies.len() > 1 {
            self.frequencies[1] - self.frequencies[0]
        } else {
            0.0
        }
    }

    pub fn frequencies_inv_cm(&self) -> impl Iterator<Item = f64> + '_ {
        self.frequencies.iter().map(|f| f * HARTREE_TO_INV_CM)
    }

    pub fn max_intensity(&self) -> f64 {
        self.intensities.iter().fold(0.0f64, |a, &b| a.max(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub frequency: f64,
    pub intensity: f64,
    pub width: f64,
}

/// Pull one observable time series out of a trajectory.
pub fn observable_series(trajectory: &Trajectory, kind: ObservableKind) -> &[f64] {
    match kind {
        ObservableKind::CollectiveDipole => &trajectory.collective_dipole,
        ObservableKind::LocalDipole => &trajectory.local_dipole,
        ObservableKind::Bond => &trajectory.bond_length,
        ObservableKind::Photon => &trajectory.q_beta,
    }
}

fn fft_in_place(planner: &mut FftPlanner<f64>, data: &mut [Complex64], inverse: bool) {
    let fft = if inverse {
        planner.plan_fft_inverse(data.len())
    } else {
        planner.plan_fft_forward(data.len())
    };
    fft.process(data);
}

/// Biased autocorrelation `c[k] = 1/L sum_t x(t) x(t+k)` of the
/// mean-subtracted series, computed via FFT without circular wrap.
fn autocorrelation(series: &[f64], max_lag: usize) -> Vec<f64> {
    let len = series.len();
    let mean = series.iter().sum::<f64>() / len as f64;
    let padded = (2 * len).next_power_of_two();
    let mut data: Vec<Complex64> = series
        .iter()
        .map(|&x| Complex64::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(padded)
        .collect();
    let mut planner = FftPlanner::new();
    fft_in_place(&mut planner, &mut data, false);
    for value in data.iter_mut() {
        *value = Complex64::new(value.norm_sqr(), 0.0);
    }
    fft_in_place(&mut planner, &mut data, true);
    let norm = 1.0 / (padded as f64 * len as f64);
    (0..max_lag).map(|k| data[k].re * norm).collect()
}

/// Autocorrelation power spectrum of a uniformly sampled series.
///
/// `dt` is the sample spacing in atomic-unit time.  Retains half the series
/// as lags, tapers, and transforms; the one-sided result has non-negative
/// intensities and satisfies the windowed Parseval identity.
pub fn autocorrelation_spectrum(series: &[f64], dt: f64, window: Taper) -> Result<Spectrum> {
    autocorrelation_spectrum_named(series, dt, window, ObservableKind::CollectiveDipole)
}

pub fn autocorrelation_spectrum_named(
    series: &[f64],
    dt: f64,
    window: Taper,
    source: ObservableKind,
) -> Result<Spectrum> {
    if series.len() < MIN_SERIES_LEN {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            min: MIN_SERIES_LEN,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSeries);
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "sample spacing must be > 0, got {dt}"
        )));
    }

    let max_lag = series.len() / 2;
    let acf = autocorrelation(series, max_lag);
    let tapered: Vec<f64> = acf
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let w = match window {
                Taper::Hann => 0.5 * (1.0 + (PI * k as f64 / max_lag as f64).cos()),
                Taper::None => 1.0,
            };
            c * w
        })
        .collect();

    // Symmetric extension, zero padded for sub-bin peak interpolation; the
    // transform of an even real sequence is real.
    let padded = PAD_FACTOR * 2 * max_lag;
    let mut data = vec![Complex64::new(0.0, 0.0); padded];
    data[0] = Complex64::new(tapered[0], 0.0);
    for (k, &value) in tapered.iter().enumerate().skip(1) {
        data[k] = Complex64::new(value, 0.0);
        data[padded - k] = Complex64::new(value, 0.0);
    }
    let mut planner = FftPlanner::new();
    fft_in_place(&mut planner, &mut data, false);

    let half = padded / 2;
    let intensities: Vec<f64> = data[..=half].iter().map(|c| c.re.max(0.0)).collect();
    let d_omega = 2.0 * PI / (padded as f64 * dt);
    let frequencies: Vec<f64> = (0..=half).map(|j| j as f64 * d_omega).collect();

    Ok(Spectrum {
        frequencies,
        intensities,
        source_observable: source,
        resolution: 2.0 * PI / (max_lag as f64 * dt),
    })
}

/// Average spectra computed on identical grids (e.g. across seeds), in the
/// order given.
pub fn average_spectra(spectra: &[Spectrum]) -> Result<Spectrum> {
    let first = spectra.first().ok_or(Error::GridMismatch)?;
    let len = first.frequencies.len();
    if spectra
        .iter()
        .any(|s| s.frequencies.len() != len || s.resolution != first.resolution)
    {
        return Err(Error::GridMismatch);
    }
    let mut intensities = vec![0.0; len];
    for spectrum in spectra {
        for (total, value) in intensities.iter_mut().zip(&spectrum.intensities) {
            *total += value;
        }
    }
    let scale = 1.0 / spectra.len() as f64;
    intensities.iter_mut().for_each(|v| *v *= scale);
    Ok(Spectrum {
        frequencies: first.frequencies.clone(),
        intensities,
        source_observable: first.source_observable,
        resolution: first.resolution,
    })
}

/// Local maxima above `rel_threshold` times the global maximum, refined to
/// sub-bin positions by parabolic interpolation, sorted by frequency.
pub fn find_peaks(spectrum: &Spectrum, rel_threshold: f64) -> Result<Vec<Peak>> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "rel_threshold must lie in (0, 1), got {rel_threshold}"
        )));
    }
    let intensities = &spectrum.intensities;
    let global_max = spectrum.max_intensity();
    if global_max <= 0.0 {
        return Ok(Vec::new());
    }
    let cutoff = rel_threshold * global_max;
    let spacing = spectrum.grid_spacing();
    let mut peaks = Vec::new();
    for j in 1..intensities.len().saturating_sub(1) {
        let (left, center, right) = (intensities[j - 1], intensities[j], intensities[j + 1]);
        if center > left && center >= right && center >= cutoff {
            let curvature = left - 2.0 * center + right;
            let shift = if curvature < 0.0 {
                0.5 * (left - right) / curvature
            } else {
                0.0
            };
            let frequency = spectrum.frequencies[j] + shift * spacing;
            let intensity = center - 0.25 * (left - right) * shift;
            peaks.push(Peak {
                frequency,
                intensity,
                width: half_max_width(spectrum, j),
            });
        }
    }
    Ok(peaks)
}

fn half_max_width(spectrum: &Spectrum, peak_index: usize) -> f64 {
    let intensities = &spectrum.intensities;
    let half = intensities[peak_index] / 2.0;
    let crossing = |mut j: usize, step: isize| -> f64 {
        loop {
            let next = j as isize + step;
            if next < 0 || next as usize >= intensities.len() {
                return spectrum.frequencies[j];
            }
            let next = next as usize;
            if intensities[next] <= half {
                // Linear interpolation between j and next.
                let f0 = spectrum.frequencies[j];
                let f1 = spectrum.frequencies[next];
                let i0 = intensities[j];
                let i1 = intensities[next];
                let t = if (i0 - i1).abs() > 0.0 {
                    (i0 - half) / (i0 - i1)
                } else {
                    0.0
                };
                return f0 + t * (f1 - f0);
            }
            j = next;
        }
    };
    crossing(peak_index, 1) - crossing(peak_index, -1)
}

/// Frequency difference of the nearest peaks below and above `omega_ref`.
pub fn rabi_splitting(peaks: &[Peak], omega_ref: f64) -> Result<f64> {
    let below = peaks
        .iter()
        .filter(|p| p.frequency < omega_ref)
        .max_by(|a, b| a.frequency.total_cmp(&b.frequency));
    let above = peaks
        .iter()
        .filter(|p| p.frequency > omega_ref)
        .min_by(|a, b| a.frequency.total_cmp(&b.frequency));
    match (below, above) {
        (Some(lo), Some(hi)) => Ok(hi.frequency - lo.frequency),
        _ => Err(Error::NoBracketingPeaks { omega_ref }),
    }
}

/// Peak closest to `target` within `window`, if any cleared the threshold.
pub fn nearest_peak(peaks: &[Peak], target: f64, window: f64) -> Option<Peak> {
    peaks
        .iter()
        .filter(|p| (p.frequency - target).abs() <= window)
        .min_by(|a, b| {
            (a.frequency - target)
                .abs()
                .total_cmp(&(b.frequency - target).abs())
        })
        .copied()
}

/// Highest intensity on the grid within `half_width` of `target`; the robust
/// way to read a line height off a noisy spectrum when the line position is
/// known.
pub fn intensity_near(spectrum: &Spectrum, target: f64, half_width: f64) -> f64 {
    spectrum
        .frequencies
        .iter()
        .zip(&spectrum.intensities)
        .filter(|(f, _)| (**f - target).abs() <= half_width)
        .map(|(_, i)| *i)
        .fold(0.0f64, f64::max)
}

/// Locate the lower and upper polariton peaks of a spectrum against their
/// continuum-analytic positions, mapping through the integrator dispersion.
/// The strongest-to-weakest polariton intensity ratio can be large off
/// resonance, so matching is done by targeted windows rather than by a
/// global threshold around the midpoint.
pub fn polariton_pair(
    spectrum: &Spectrum,
    analytic: (f64, f64),
    dt: f64,
    threshold: f64,
) -> Result<(Peak, Peak)> {
    let lower_target = crate::dynamics::discrete_mode_frequency(analytic.0, dt);
    let upper_target = crate::dynamics::discrete_mode_frequency(analytic.1, dt);
    let window = 0.3 * (upper_target - lower_target);
    let peaks = find_peaks(spectrum, threshold)?;
    let lower = nearest_peak(&peaks, lower_target, window);
    let upper = nearest_peak(&peaks, upper_target, window);
    match (lower, upper) {
        (Some(lo), Some(up)) => Ok((lo, up)),
        _ => Err(Error::NoBracketingPeaks {
            omega_ref: 0.5 * (lower_target + upper_target),
        }),
    }
}

/// Protocol shared by the N-scan runs.
#[derive(Debug, Clone)]
pub struct ScanProtocol {
    pub omega_beta: f64,
    pub thermostat: ThermostatParams,
    pub n_steps: u64,
    pub sample_stride: u64,
    pub n_seeds: u32,
    pub init_radius: f64,
    pub peak_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityScanRow {
    pub n_molecules: usize,
    pub lambda: f64,
    /// Height of the lower/upper polariton peak in the single-molecule
    /// dipole spectrum.
    pub local_lower_intensity: f64,
    pub local_upper_intensity: f64,
    /// Polariton splitting measured on the collective-dipole spectrum.
    pub collective_splitting: f64,
    pub analytic_splitting: f64,
}

/// Seed-averaged spectrum of one observable for a given ensemble size.
pub fn averaged_run_spectrum(
    preset: &CO2Preset,
    n_molecules: usize,
    lambda: f64,
    protocol: &ScanProtocol,
    kind: ObservableKind,
) -> Result<Spectrum> {
    let config = preset.ensemble_config(
        n_molecules,
        lambda,
        protocol.omega_beta,
        ApproximationLevel::SelfConsistent,
    )?;
    let spectra: Vec<Result<Spectrum>> = (0..protocol.n_seeds)
        .into_par_iter()
        .map(|seed_index| {
            let run_tag = (n_molecules as u64) << 32 | seed_index as u64;
            let mut thermostat = protocol.thermostat.clone();
            thermostat.rng_seed = protocol.thermostat.rng_seed.wrapping_add(run_tag);
            let state = initial_state(
                &config,
                protocol.init_radius,
                0x5EED ^ run_tag.wrapping_mul(0x9E37_79B9),
            );
            let trajectory = propagate(
                &config,
                &thermostat,
                protocol.n_steps,
                protocol.sample_stride,
                state,
            )?;
            autocorrelation_spectrum_named(
                observable_series(&trajectory, kind),
                trajectory.sample_dt(),
                Taper::Hann,
                kind,
            )
        })
        .collect();
    let spectra: Vec<Spectrum> = spectra.into_iter().collect::<Result<_>>()?;
    average_spectra(&spectra)
}

/// Scan ensemble sizes at fixed collective coupling `lambda_col`: the
/// collective Rabi splitting stays put while the single-molecule polariton
/// peaks fade.
pub fn local_polariton_intensity_scan(
    preset: &CO2Preset,
    n_values: &[usize],
    lambda_col: f64,
    protocol: &ScanProtocol,
) -> Result<Vec<IntensityScanRow>> {
    let mut rows = Vec::with_capacity(n_values.len());
    let dt = protocol.thermostat.dt * protocol.sample_stride as f64;
    for &n in n_values {
        let lambda = lambda_col / (n as f64).sqrt();
        let analytic = analytic_mode_dynamics(preset, n, lambda, protocol.omega_beta)?;
        let targets = (
            crate::dynamics::discrete_mode_frequency(analytic.polariton_frequencies.0, dt),
            crate::dynamics::discrete_mode_frequency(analytic.polariton_frequencies.1, dt),
        );

        // Local polariton heights read at the known line positions; the
        // single-molecule spectrum is dominated by the dark line, so peak
        // hunting is not reliable once the polaritons fade.
        let local =
            averaged_run_spectrum(preset, n, lambda, protocol, ObservableKind::LocalDipole)?;
        let half_width = 3.0 * local.resolution;
        let local_lower = intensity_near(&local, targets.0, half_width);
        let local_upper = intensity_near(&local, targets.1, half_width);

        let collective = averaged_run_spectrum(
            preset,
            n,
            lambda,
            protocol,
            ObservableKind::CollectiveDipole,
        )?;
        let (lower_peak, upper_peak) = polariton_pair(
            &collective,
            analytic.polariton_frequencies,
            dt,
            protocol.peak_threshold,
        )?;

        rows.push(IntensityScanRow {
            n_molecules: n,
            lambda,
            local_lower_intensity: local_lower,
            local_upper_intensity: local_upper,
            collective_splitting: upper_peak.frequency - lower_peak.frequency,
            analytic_splitting: analytic.rabi_splitting(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine_series(freqs: &[(f64, f64)], len: usize, dt: f64) -> Vec<f64> {
        (0..len)
            .map(|t| {
                freqs
                    .iter()
                    .map(|&(w, a)| a * (w * t as f64 * dt).cos())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn single_cosine_peaks_at_its_frequency() {
        let omega = 0.3;
        let series = cosine_series(&[(omega, 1.0)], 1 << 13, 1.0);
        let spectrum = autocorrelation_spectrum(&series, 1.0, Taper::Hann).unwrap();
        let peaks = find_peaks(&spectrum, 0.5).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!(
            (peaks[0].frequency - omega).abs() < spectrum.resolution,
            "peak at {} vs {}",
            peaks[0].frequency,
            omega
        );
    }

    #[test]
    fn two_cosines_give_two_comparable_peaks() {
        let series = cosine_series(&[(0.2, 1.0), (0.5, 1.0)], 1 << 13, 1.0);
        let spectrum = autocorrelation_spectrum(&series, 1.0, Taper::Hann).unwrap();
        let peaks = find_peaks(&spectrum, 0.2).unwrap();
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0].frequency - 0.2).abs() < spectrum.resolution);
        assert!((peaks[1].frequency - 0.5).abs() < spectrum.resolution);
        let ratio = peaks[0].intensity / peaks[1].intensity;
        assert!(ratio > 0.8 && ratio < 1.25, "ratio {ratio}");
        assert!(peaks[0].width > 0.0);
    }

    #[test]
    fn flat_series_has_no_peaks() {
        let series = vec![3.25; 1 << 11];
        let spectrum = autocorrelation_spectrum(&series, 1.0, Taper::Hann).unwrap();
        assert!(find_peaks(&spectrum, 0.1).unwrap().is_empty());
    }

    #[test]
    fn input_validation() {
        assert!(matches!(
            autocorrelation_spectrum(&[0.0; 100], 1.0, Taper::Hann),
            Err(Error::SeriesTooShort { .. })
        ));
        let mut bad = vec![0.0; 1 << 11];
        bad[17] = f64::NAN;
        assert!(matches!(
            autocorrelation_spectrum(&bad, 1.0, Taper::Hann),
            Err(Error::NonFiniteSeries)
        ));
        let series = cosine_series(&[(0.3, 1.0)], 1 << 11, 1.0);
        let spectrum = autocorrelation_spectrum(&series, 1.0, Taper::Hann).unwrap();
        assert!(find_peaks(&spectrum, 0.0).is_err());
        assert!(find_peaks(&spectrum, 1.0).is_err());
    }

    #[test]
    fn windowed_parseval_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_pcg::Pcg64::seed_from_u64(4);
        let series: Vec<f64> = (0..(1 << 12)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spectrum = autocorrelation_spectrum(&series, 1.0, Taper::Hann).unwrap();
        let padded = 2 * (spectrum.intensities.len() - 1);
        let interior: f64 = spectrum.intensities[1..spectrum.intensities.len() - 1]
            .iter()
            .sum();
        let total = spectrum.intensities[0]
            + spectrum.intensities[spectrum.intensities.len() - 1]
            + 2.0 * interior;
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let variance = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / series.len() as f64;
        let integral = total / padded as f64;
        assert!(
            (integral - variance).abs() / variance < 0.01,
            "{integral} vs {variance}"
        );
    }

    #[test]
    fn peak_positions_stable_under_longer_series() {
        let short = cosine_series(&[(0.21, 1.0), (0.47, 0.8)], 1 << 12, 1.0);
        let long = cosine_series(&[(0.21, 1.0), (0.47, 0.8)], 1 << 13, 1.0);
        let s_short = autocorrelation_spectrum(&short, 1.0, Taper::Hann).unwrap();
        let s_long = autocorrelation_spectrum(&long, 1.0, Taper::Hann).unwrap();
        let p_short = find_peaks(&s_short, 0.2).unwrap();
        let p_long = find_peaks(&s_long, 0.2).unwrap();
        assert_eq!(p_short.len(), p_long.len());
        for (a, b) in p_short.iter().zip(&p_long) {
            assert!((a.frequency - b.frequency).abs() < s_short.resolution);
        }
    }

    #[test]
    fn rabi_splitting_bracket_logic() {
        let peaks = vec![
            Peak {
                frequency: 0.9,
                intensity: 1.0,
                width: 0.01,
            },
            Peak {
                frequency: 1.1,
                intensity: 1.0,
                width: 0.01,
            },
        ];
        assert!((rabi_splitting(&peaks, 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(
            rabi_splitting(&peaks[..1], 1.0),
            Err(Error::NoBracketingPeaks { .. })
        ));
        assert!(rabi_splitting(&peaks, 0.5).is_err());
    }

    #[test]
    fn averaging_requires_matching_grids() {
        let a = autocorrelation_spectrum(
            &cosine_series(&[(0.3, 1.0)], 1 << 11, 1.0),
            1.0,
            Taper::Hann,
        )
        .unwrap();
        let b = autocorrelation_spectrum(
            &cosine_series(&[(0.3, 1.0)], 1 << 12, 1.0),
            1.0,
            Taper::Hann,
        )
        .unwrap();
        assert!(average_spectra(&[a.clone(), b]).is_err());
        let mean = average_spectra(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(mean.intensities, a.intensities);
    }

    #[test]
    fn uncoupled_run_has_a_single_line_and_no_splitting() {
        let preset = CO2Preset::reference();
        let config = preset
            .ensemble_config(
                4,
                0.0,
                preset.asymmetric_frequency(),
                ApproximationLevel::SelfConsistent,
            )
            .unwrap();
        let trajectory = propagate(
            &config,
            &ThermostatParams::nve(20.0),
            1 << 13,
            1,
            initial_state(&config, 0.1, 8),
        )
        .unwrap();
        let spectrum = autocorrelation_spectrum_named(
            observable_series(&trajectory, ObservableKind::CollectiveDipole),
            trajectory.sample_dt(),
            Taper::Hann,
            ObservableKind::CollectiveDipole,
        )
        .unwrap();
        let peaks = find_peaks(&spectrum, 0.05).unwrap();
        assert_eq!(peaks.len(), 1, "{peaks:?}");
        let expected =
            crate::dynamics::discrete_mode_frequency(preset.asymmetric_frequency(), 20.0);
        assert!((peaks[0].frequency - expected).abs() < spectrum.resolution);
        assert!(matches!(
            rabi_splitting(&peaks, expected),
            Err(Error::NoBracketingPeaks { .. })
        ));
    }

    #[test]
    fn single_molecule_local_and_collective_series_coincide() {
        let preset = CO2Preset::reference();
        let config = preset
            .ensemble_config(
                1,
                0.03,
                preset.asymmetric_frequency(),
                ApproximationLevel::SelfConsistent,
            )
            .unwrap();
        let trajectory = propagate(
            &config,
            &ThermostatParams::nve(20.0),
            500,
            1,
            initial_state(&config, 0.1, 2),
        )
        .unwrap();
        assert_eq!(trajectory.collective_dipole, trajectory.local_dipole);
    }

    #[test]
    fn md_collective_spectrum_hits_analytic_polaritons() {
        // Short resonant NVE run; the collective dipole carries exactly the
        // two polariton lines of the 2x2 mode analysis.
        let preset = CO2Preset::reference();
        let n = 4;
        let lambda = 0.02;
        let omega = preset.asymmetric_frequency();
        let config = preset
            .ensemble_config(n, lambda, omega, ApproximationLevel::SelfConsistent)
            .unwrap();
        let trajectory = propagate(
            &config,
            &ThermostatParams::nve(20.0),
            1 << 15,
            1,
            initial_state(&config, 0.1, 2),
        )
        .unwrap();
        let spectrum = autocorrelation_spectrum_named(
            observable_series(&trajectory, ObservableKind::CollectiveDipole),
            trajectory.sample_dt(),
            Taper::Hann,
            ObservableKind::CollectiveDipole,
        )
        .unwrap();
        let peaks = find_peaks(&spectrum, 0.05).unwrap();
        let analytic = analytic_mode_dynamics(&preset, n, lambda, omega).unwrap();
        // The run measures the discrete-time system, so map the analytic
        // frequencies through the integrator dispersion before comparing.
        let dt = trajectory.sample_dt();
        let lower = crate::dynamics::discrete_mode_frequency(analytic.polariton_frequencies.0, dt);
        let upper = crate::dynamics::discrete_mode_frequency(analytic.polariton_frequencies.1, dt);
        assert!(
            nearest_peak(&peaks, lower, spectrum.resolution).is_some(),
            "no lower polariton near {lower}"
        );
        assert!(
            nearest_peak(&peaks, upper, spectrum.resolution).is_some(),
            "no upper polariton near {upper}"
        );
        // Beat between the polaritons shows up as the measured splitting.
        let measured = rabi_splitting(&peaks, 0.5 * (lower + upper)).unwrap();
        assert!(
            (measured - (upper - lower)).abs() < 2.0 * spectrum.resolution,
            "measured {measured} vs analytic {}",
            upper - lower
        );
    }
}

//! Subcommand implementations, shared by the binary and the test suites.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use vsc_core::cavity;
use vsc_core::dynamics::{
    discrete_mode_frequency, forces, initial_state, propagate_with_bound, Trajectory,
};
use vsc_core::model::{ApproximationLevel, EnsembleConfig, NuclearPotential};
use vsc_core::oracle::{self, SweepReport};
use vsc_core::polarizability::{
    bare_polarizability, perturbative_polarizability, self_consistent_polarizability,
    PolarizabilityKind, Scope,
};
use vsc_core::spectra::{
    autocorrelation_spectrum_named, average_spectra, find_peaks, ObservableKind, Peak, Spectrum,
    Taper,
};
use vsc_core::units::HARTREE_TO_INV_CM;

use crate::config::RunConfig;
use crate::output::{config_hash, create_file, meta_lines, write_table};

pub fn parse_observable(name: &str) -> Result<ObservableKind> {
    ObservableKind::ALL
        .into_iter()
        .find(|kind| kind.label() == name)
        .ok_or_else(|| {
            anyhow::anyhow!(
                "unknown observable {name:?}; expected one of collective_dipole, local_dipole, bond, photon"
            )
        })
}

fn run_trajectory(config: &RunConfig, seed_offset: u64) -> Result<Trajectory> {
    let ensemble = config.ensemble_config()?;
    let mut thermostat = config.thermostat_params();
    thermostat.rng_seed = thermostat.rng_seed.wrapping_add(seed_offset);
    let init_seed = config
        .run
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(seed_offset);
    let state = initial_state(&ensemble, config.run.init_radius, init_seed);
    let trajectory = propagate_with_bound(
        &ensemble,
        &thermostat,
        config.run.n_steps,
        config.run.sample_stride,
        state,
        config.run.blowup_bound,
    )?;
    Ok(trajectory)
}

/// Run one trajectory and stream it to `trajectory.csv`.
pub fn simulate(config: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let trajectory = run_trajectory(config, 0)?;
    let hash = config_hash(config);
    let meta = meta_lines(
        hash,
        &[
            format!("dt={:e}", config.thermostat.dt),
            format!("sample_stride={}", config.run.sample_stride),
            format!("level={}", config.ensemble.level),
            format!("n_molecules={}", config.ensemble.n_molecules),
            format!("seed={}", config.run.seed),
        ],
    );
    let (path, out) = create_file(out_dir, "trajectory.csv")?;
    trajectory.write_csv(out, &meta)?;
    Ok(path)
}

/// Parsed trajectory file, as written by [`simulate`].
pub struct ParsedTrajectory {
    pub sample_dt: f64,
    pub q_beta: Vec<f64>,
    pub collective_dipole: Vec<f64>,
    pub local_dipole: Vec<f64>,
    pub bond_length: Vec<f64>,
    pub kinetic_energy: Vec<f64>,
}

impl ParsedTrajectory {
    pub fn series(&self, kind: ObservableKind) -> &[f64] {
        match kind {
            ObservableKind::CollectiveDipole => &self.collective_dipole,
            ObservableKind::LocalDipole => &self.local_dipole,
            ObservableKind::Bond => &self.bond_length,
            ObservableKind::Photon => &self.q_beta,
        }
    }
}

pub fn read_trajectory_csv(path: &Path) -> Result<ParsedTrajectory> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("cannot open trajectory {}", path.display()))?;
    let reader = std::io::BufReader::new(file);
    let mut dt = None;
    let mut stride = 1u64;
    let mut header_seen = false;
    let mut parsed = ParsedTrajectory {
        sample_dt: 0.0,
        q_beta: Vec::new(),
        collective_dipole: Vec::new(),
        local_dipole: Vec::new(),
        bond_length: Vec::new(),
        kinetic_energy: Vec::new(),
    };
    for line in reader.lines() {
        let line = line?;
        if let Some(comment) = line.strip_prefix('#') {
            for token in comment.split_whitespace() {
                if let Some(value) = token.strip_prefix("dt=") {
                    dt = Some(value.parse::<f64>().context("bad dt header")?);
                } else if let Some(value) = token.strip_prefix("sample_stride=") {
                    stride = value.parse::<u64>().context("bad sample_stride header")?;
                }
            }
            continue;
        }
        if !header_seen {
            header_seen = true; // column header row
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            bail!("malformed trajectory row: {line:?}");
        }
        parsed.q_beta.push(fields[1].parse()?);
        parsed.collective_dipole.push(fields[2].parse()?);
        parsed.local_dipole.push(fields[3].parse()?);
        parsed.bond_length.push(fields[4].parse()?);
        parsed.kinetic_energy.push(fields[5].parse()?);
    }
    let dt = dt.context("trajectory file lacks a dt header")?;
    parsed.sample_dt = dt * stride as f64;
    Ok(parsed)
}

/// Seed-averaged autocorrelation spectrum of one observable, running the
/// configured protocol end to end.
pub fn averaged_spectrum(
    config: &RunConfig,
    observable: ObservableKind,
    n_seeds: u32,
) -> Result<Spectrum> {
    if n_seeds == 0 {
        bail!("need at least one seed");
    }
    let mut spectra = Vec::with_capacity(n_seeds as usize);
    for seed_offset in 0..n_seeds as u64 {
        let trajectory = run_trajectory(config, seed_offset)?;
        spectra.push(autocorrelation_spectrum_named(
            vsc_core::spectra::observable_series(&trajectory, observable),
            trajectory.sample_dt(),
            Taper::Hann,
            observable,
        )?);
    }
    Ok(average_spectra(&spectra)?)
}

#[derive(Serialize)]
struct PeakRecord {
    frequency_au: f64,
    frequency_cm1: f64,
    intensity: f64,
    width_au: f64,
    observable: &'static str,
}

pub struct SpectrumOutput {
    pub spectrum_path: PathBuf,
    pub peaks_path: PathBuf,
    pub peaks: Vec<Peak>,
}

/// Compute and write a spectrum (CSV) and its peak list (JSON lines), either
/// from a previously written trajectory file or by running the protocol.
pub fn spectrum(
    config: &RunConfig,
    out_dir: &Path,
    observable: ObservableKind,
    trajectory_file: Option<&Path>,
    n_seeds: u32,
    peak_threshold: f64,
) -> Result<SpectrumOutput> {
    let spectrum = match trajectory_file {
        Some(path) => {
            let parsed = read_trajectory_csv(path)?;
            autocorrelation_spectrum_named(
                parsed.series(observable),
                parsed.sample_dt,
                Taper::Hann,
                observable,
            )?
        }
        None => averaged_spectrum(config, observable, n_seeds)?,
    };
    let peaks = find_peaks(&spectrum, peak_threshold)?;
    let hash = config_hash(config);

    let meta = meta_lines(
        hash,
        &[
            format!("observable={}", observable.label()),
            format!("resolution_au={:e}", spectrum.resolution),
        ],
    );
    let label = observable.label();
    let spectrum_path = write_table(
        out_dir,
        &format!("spectrum_{label}.csv"),
        &meta,
        "frequency_au,frequency_cm1,intensity,observable",
        spectrum
            .frequencies
            .iter()
            .zip(&spectrum.intensities)
            .map(|(f, i)| format!("{:e},{:e},{:e},{label}", f, f * HARTREE_TO_INV_CM, i)),
    )?;

    let (peaks_path, mut out) = create_file(out_dir, &format!("peaks_{label}.jsonl"))?;
    {
        use std::io::Write;
        for line in &meta {
            writeln!(out, "# {line}")?;
        }
        for peak in &peaks {
            let record = PeakRecord {
                frequency_au: peak.frequency,
                frequency_cm1: peak.frequency * HARTREE_TO_INV_CM,
                intensity: peak.intensity,
                width_au: peak.width,
                observable: label,
            };
            writeln!(out, "{}", serde_json::to_string(&record)?)?;
        }
        out.flush()?;
    }

    Ok(SpectrumOutput {
        spectrum_path,
        peaks_path,
        peaks,
    })
}

fn format_optional(value: Option<f64>) -> String {
    value.map(|v| format!("{v:e}")).unwrap_or_default()
}

/// Emit the polarizability table over an (N, lambda) grid.
pub fn polarizability_table(
    config: &RunConfig,
    out_dir: &Path,
    n_list: &[usize],
    lambdas: &[f64],
) -> Result<PathBuf> {
    let base = config.ensemble_config()?;
    let mut rows = Vec::new();
    for &n in n_list {
        for &lambda in lambdas {
            let c = base.clone().with_n_molecules(n).with_lambda(lambda);
            let (bare_ensemble, bare_single) = bare_polarizability(&c);
            rows.push(format!(
                "ensemble/ensemble,bare,{n},{lambda:e},{bare_ensemble:e},"
            ));
            rows.push(format!(
                "local/ensemble,bare,{n},{lambda:e},{bare_single:e},"
            ));

            for kind in [
                PolarizabilityKind::ENSEMBLE,
                PolarizabilityKind::LOCAL_RESPONSE,
                PolarizabilityKind::LOCAL_PERTURBATION,
            ] {
                let report = self_consistent_polarizability(kind, &c, None)?;
                rows.push(format!(
                    "{},self_consistent,{n},{lambda:e},{:e},{}",
                    kind.label(),
                    report.value,
                    format_optional(report.tc_limit)
                ));
            }
            let same =
                self_consistent_polarizability(PolarizabilityKind::LOCAL_LOCAL, &c, Some((0, 0)))?;
            rows.push(format!(
                "local/local:same,self_consistent,{n},{lambda:e},{:e},{}",
                same.value,
                format_optional(same.tc_limit)
            ));
            if n > 1 {
                let cross = self_consistent_polarizability(
                    PolarizabilityKind::LOCAL_LOCAL,
                    &c,
                    Some((1, 0)),
                )?;
                rows.push(format!(
                    "local/local:cross,self_consistent,{n},{lambda:e},{:e},{}",
                    cross.value,
                    format_optional(cross.tc_limit)
                ));
            }
            for scope in [Scope::Ensemble, Scope::Local] {
                let report = perturbative_polarizability(scope, &c);
                rows.push(format!(
                    "{},perturbative,{n},{lambda:e},{:e},",
                    report.kind.label(),
                    report.value
                ));
            }
        }
    }
    let meta = meta_lines(config_hash(config), &[]);
    write_table(
        out_dir,
        "polarizabilities.csv",
        &meta,
        "kind,method,n,lambda,value,tc_limit",
        rows,
    )
}

/// Sweep lambda and emit the frequency-renormalization ratios of every
/// closure level next to the Maxwell refractive-index route.
pub fn redshift_scan(
    config: &RunConfig,
    out_dir: &Path,
    lambda_min: f64,
    lambda_max: f64,
    steps: usize,
) -> Result<PathBuf> {
    if steps < 2 {
        bail!("redshift scan needs at least 2 steps");
    }
    if lambda_min < 0.0 || lambda_max < lambda_min {
        bail!("need 0 <= lambda-min <= lambda-max");
    }
    let base = config.ensemble_config()?;
    let mut rows = Vec::with_capacity(steps);
    for k in 0..steps {
        let lambda = lambda_min + (lambda_max - lambda_min) * k as f64 / (steps - 1) as f64;
        let c = base.clone().with_lambda(lambda);
        let omega = c.omega_beta;
        let sc = cavity::renormalized_frequency(ApproximationLevel::SelfConsistent, &c)?;
        let be = cavity::renormalized_frequency(ApproximationLevel::BareElectronic, &c)?;
        let displacement = cavity::renormalized_frequency(ApproximationLevel::DisplacementOnly, &c)
            .map(|r| r.omega_out / omega)
            .unwrap_or(f64::NAN);
        let maxwell = cavity::maxwell_redshift(&c)?;
        rows.push(format!(
            "{lambda:e},{:e},{:e},{:e},{:e},{displacement:e},{:e}",
            sc.gamma2,
            sc.omega_out / omega,
            maxwell.omega_out / omega,
            be.omega_out / omega,
            maxwell.n_r.unwrap_or(f64::NAN)
        ));
    }
    let meta = meta_lines(
        config_hash(config),
        &[format!("n_molecules={}", config.ensemble.n_molecules)],
    );
    write_table(
        out_dir,
        "redshift_scan.csv",
        &meta,
        "lambda,gamma2,ratio_sc,ratio_maxwell,ratio_be,ratio_displacement,n_r",
        rows,
    )
}

#[derive(Debug, Clone)]
pub struct LevelComparisonRow {
    pub level: ApproximationLevel,
    /// Strongest photon-spectrum peak, NaN when the level cannot run.
    pub photon_peak: f64,
    /// Closed-form renormalized frequency.
    pub predicted: f64,
    /// Same, mapped through the integrator dispersion for peak comparison.
    pub predicted_discrete: f64,
    /// Largest nuclear force magnitude on a neutral-atom ensemble at this
    /// level; nonzero only where the closure breaks charge screening.
    pub neutral_atom_force_residual: f64,
    pub status: &'static str,
}

/// Run the same protocol at every closure level and tabulate where the
/// photon peak lands, next to the neutral-atom decoupling check.
pub fn approximation_compare(
    config: &RunConfig,
    out_dir: &Path,
    n_seeds: u32,
) -> Result<(PathBuf, Vec<LevelComparisonRow>)> {
    let base = config.ensemble_config()?;
    let mut rows = Vec::new();
    for level in ApproximationLevel::ALL {
        let mut leveled_config = config.clone();
        leveled_config.ensemble.level = level.label().to_string();
        let ensemble = base.clone().with_level(level);

        let predicted = match cavity::renormalized_frequency(level, &ensemble) {
            Ok(report) => report.omega_out,
            Err(_) => f64::NAN,
        };
        let predicted_discrete = if predicted.is_finite() {
            discrete_mode_frequency(predicted, config.thermostat.dt)
        } else {
            f64::NAN
        };

        let (photon_peak, status) = if predicted.is_finite() {
            match averaged_spectrum(&leveled_config, ObservableKind::Photon, n_seeds) {
                Ok(spectrum) => {
                    let peaks = find_peaks(&spectrum, 0.2)?;
                    let strongest = peaks
                        .iter()
                        .max_by(|a, b| a.intensity.total_cmp(&b.intensity));
                    (strongest.map_or(f64::NAN, |p| p.frequency), "ok")
                }
                Err(_) => (f64::NAN, "diverged"),
            }
        } else {
            (f64::NAN, "unstable")
        };

        rows.push(LevelComparisonRow {
            level,
            photon_peak,
            predicted,
            predicted_discrete,
            neutral_atom_force_residual: neutral_atom_residual(&base, level)?,
            status,
        });
    }

    let meta = meta_lines(
        config_hash(config),
        &[format!("omega_beta={:e}", config.omega_beta())],
    );
    let path = write_table(
        out_dir,
        "approximation_compare.csv",
        &meta,
        "level,photon_peak_au,predicted_au,predicted_discrete_au,neutral_atom_force_residual,status",
        rows.iter().map(|r| {
            format!(
                "{},{:e},{:e},{:e},{:e},{}",
                r.level, r.photon_peak, r.predicted, r.predicted_discrete,
                r.neutral_atom_force_residual, r.status
            )
        }),
    )?;
    Ok((path, rows))
}

fn neutral_atom_residual(base: &EnsembleConfig, level: ApproximationLevel) -> Result<f64> {
    let atoms = EnsembleConfig::new(
        base.n_molecules,
        vec![base.nuclear_masses[0]],
        vec![base.electron_charge],
        base.electron_charge,
        base.k_e,
        NuclearPotential::harmonic_chain(0.0),
        base.lambda,
        base.omega_beta,
        level,
    )?;
    let mut state = initial_state(&atoms, 0.5, 0x0A70);
    state.q_beta = 1.5;
    let f = forces(&atoms, &state)?;
    // A free neutral atom feels no force at all unless the closure leaks
    // unscreened charge.
    Ok(f.nuclear.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// Render the oracle equivalence sweep as a pass/fail table.
pub fn oracle_verify(draws: usize, seed: u64) -> Result<(SweepReport, String)> {
    let report = oracle::verify_sweep(draws, seed)?;
    let mut table = String::new();
    table.push_str(&format!(
        "{:<38} {:>12} {:>10} {:>7}\n",
        "quantity", "max rel err", "tolerance", "status"
    ));
    for category in &report.categories {
        table.push_str(&format!(
            "{:<38} {:>12.3e} {:>10.0e} {:>7}\n",
            category.name,
            category.max_rel_err,
            category.tolerance,
            if category.passed() { "PASS" } else { "FAIL" }
        ));
    }
    table.push_str(&format!(
        "overall: {} ({} randomized draws)\n",
        if report.passed() { "PASS" } else { "FAIL" },
        report.draws
    ));
    Ok((report, table))
}

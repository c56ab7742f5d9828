//! Run configuration: one TOML file describes the ensemble, the bath, and
//! the run protocol.  Defaults reproduce the reference CO2 setup, so a
//! minimal file only names the preset.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use vsc_core::dynamics::{CO2Preset, ThermostatParams};
use vsc_core::model::{ApproximationLevel, EnsembleConfig, NuclearPotential};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub thermostat: ThermostatSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    /// Molecule preset; `"co2"` is the only one.  Mutually exclusive with
    /// an explicit `[ensemble.molecule]` table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default = "defaults::n_molecules")]
    pub n_molecules: usize,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    /// Defaults to the preset's bare asymmetric-stretch frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_beta: Option<f64>,
    /// Electronic closure: "sc", "be", or "D".
    #[serde(default = "defaults::level")]
    pub level: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub molecule: Option<MoleculeSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoleculeSection {
    pub nuclear_masses: Vec<f64>,
    pub nuclear_charges: Vec<f64>,
    pub electron_charge: f64,
    #[serde(default = "defaults::k_e")]
    pub k_e: f64,
    /// Nearest-neighbor chain force constant; zero for single atoms.
    #[serde(default)]
    pub k_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermostatSection {
    #[serde(default = "defaults::kb_temperature")]
    pub kb_temperature: f64,
    #[serde(default = "defaults::friction")]
    pub friction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photon_friction: Option<f64>,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
}

impl Default for ThermostatSection {
    fn default() -> Self {
        ThermostatSection {
            kb_temperature: defaults::kb_temperature(),
            friction: defaults::friction(),
            photon_friction: None,
            dt: defaults::dt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "defaults::n_steps")]
    pub n_steps: u64,
    #[serde(default = "defaults::sample_stride")]
    pub sample_stride: u64,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::init_radius")]
    pub init_radius: f64,
    #[serde(default = "defaults::blowup_bound")]
    pub blowup_bound: f64,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            n_steps: defaults::n_steps(),
            sample_stride: defaults::sample_stride(),
            seed: defaults::seed(),
            init_radius: defaults::init_radius(),
            blowup_bound: defaults::blowup_bound(),
            out_dir: defaults::out_dir(),
        }
    }
}

mod defaults {
    pub fn n_molecules() -> usize {
        20
    }
    pub fn lambda() -> f64 {
        0.005
    }
    pub fn level() -> String {
        "sc".into()
    }
    pub fn k_e() -> f64 {
        1.0
    }
    pub fn kb_temperature() -> f64 {
        1e-3
    }
    pub fn friction() -> f64 {
        0.5e-5
    }
    pub fn dt() -> f64 {
        20.0
    }
    pub fn n_steps() -> u64 {
        200_000
    }
    pub fn sample_stride() -> u64 {
        1
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn init_radius() -> f64 {
        0.1
    }
    pub fn blowup_bound() -> f64 {
        1e6
    }
    pub fn out_dir() -> String {
        "out".into()
    }
}

impl RunConfig {
    /// Load, parse, and validate a configuration file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.ensemble;
        if e.preset.is_some() && e.molecule.is_some() {
            bail!("ensemble.preset and ensemble.molecule are mutually exclusive");
        }
        if e.preset.is_none() && e.molecule.is_none() {
            bail!("ensemble needs either a preset name or an explicit [ensemble.molecule] table");
        }
        if let Some(name) = &e.preset {
            if name != "co2" {
                bail!("ensemble.preset: unknown preset {name:?}, expected \"co2\"");
            }
        }
        if e.n_molecules == 0 {
            bail!("ensemble.n_molecules must be >= 1");
        }
        if !e.lambda.is_finite() || e.lambda < 0.0 {
            bail!("ensemble.lambda must be >= 0, got {}", e.lambda);
        }
        if let Some(omega) = e.omega_beta {
            if !omega.is_finite() || omega <= 0.0 {
                bail!("ensemble.omega_beta must be > 0, got {omega}");
            }
        }
        e.level
            .parse::<ApproximationLevel>()
            .map_err(|err| anyhow::anyhow!("ensemble.level: {err}"))?;
        if let Some(m) = &e.molecule {
            if m.nuclear_masses.is_empty() {
                bail!("ensemble.molecule.nuclear_masses must not be empty");
            }
            if m.nuclear_masses.len() != m.nuclear_charges.len() {
                bail!(
                    "ensemble.molecule.nuclear_masses ({}) and nuclear_charges ({}) differ in length",
                    m.nuclear_masses.len(),
                    m.nuclear_charges.len()
                );
            }
            if m.nuclear_masses.iter().any(|&v| !v.is_finite() || v <= 0.0) {
                bail!("ensemble.molecule.nuclear_masses must be positive");
            }
            if !m.k_e.is_finite() || m.k_e <= 0.0 {
                bail!("ensemble.molecule.k_e must be > 0, got {}", m.k_e);
            }
            if !m.k_n.is_finite() || m.k_n < 0.0 {
                bail!("ensemble.molecule.k_n must be >= 0, got {}", m.k_n);
            }
        }
        let t = &self.thermostat;
        if !t.dt.is_finite() || t.dt <= 0.0 {
            bail!("thermostat.dt must be > 0, got {}", t.dt);
        }
        if t.friction < 0.0 {
            bail!("thermostat.friction must be >= 0, got {}", t.friction);
        }
        if t.kb_temperature < 0.0 {
            bail!(
                "thermostat.kb_temperature must be >= 0, got {}",
                t.kb_temperature
            );
        }
        let r = &self.run;
        if r.n_steps == 0 {
            bail!("run.n_steps must be >= 1");
        }
        if r.sample_stride == 0 {
            bail!("run.sample_stride must be >= 1");
        }
        if !r.init_radius.is_finite() || r.init_radius < 0.0 {
            bail!("run.init_radius must be >= 0, got {}", r.init_radius);
        }
        Ok(())
    }

    pub fn preset(&self) -> Option<CO2Preset> {
        match self.ensemble.preset.as_deref() {
            Some("co2") => Some(CO2Preset::reference()),
            _ => None,
        }
    }

    pub fn level(&self) -> ApproximationLevel {
        self.ensemble
            .level
            .parse()
            .expect("level validated at load time")
    }

    pub fn omega_beta(&self) -> f64 {
        self.ensemble.omega_beta.unwrap_or_else(|| {
            self.preset()
                .map(|p| p.asymmetric_frequency())
                .unwrap_or(0.0116)
        })
    }

    /// Resolve into the core ensemble description.
    pub fn ensemble_config(&self) -> Result<EnsembleConfig> {
        let level = self.level();
        let omega = self.omega_beta();
        let config = if let Some(preset) = self.preset() {
            preset.ensemble_config(
                self.ensemble.n_molecules,
                self.ensemble.lambda,
                omega,
                level,
            )?
        } else {
            let m = self.ensemble.molecule.as_ref().expect("validated");
            EnsembleConfig::new(
                self.ensemble.n_molecules,
                m.nuclear_masses.clone(),
                m.nuclear_charges.clone(),
                m.electron_charge,
                m.k_e,
                NuclearPotential::harmonic_chain(m.k_n),
                self.ensemble.lambda,
                omega,
                level,
            )?
        };
        Ok(config)
    }

    pub fn thermostat_params(&self) -> ThermostatParams {
        ThermostatParams {
            kb_temperature: self.thermostat.kb_temperature,
            friction: self.thermostat.friction,
            photon_friction: self.thermostat.photon_friction,
            dt: self.thermostat.dt,
            rng_seed: self.run.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

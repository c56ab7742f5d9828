//! Model parameters and the closed-form dressed-electron solution.
//!
//! An ensemble of `N` identical one-dimensional molecules, each with one
//! effective electron of charge `-Z_e` bound harmonically (force constant
//! `k_e`) to `N_n` nuclei, couples through its total dipole to a single
//! cavity mode with frequency `omega_beta` and coupling constant `lambda`.
//! Treating electrons as instantaneously adiabatic with respect to both
//! nuclei and the photon displacement coordinate, every electronic quantity
//! has a closed form: each electron sits in a shifted harmonic oscillator
//! whose shift couples to all other molecules through the dipole self-energy.
//! The self-consistency is resolved exactly (never iteratively) by summing
//! the per-molecule relations over the ensemble, which produces the
//! universal factor `gamma^2 = 1 / (1 + lambda^2 N alpha_i)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Electronic-closure level used when evaluating dressed quantities.
///
/// * `SelfConsistent` — exact solution including the dipole self-energy and
///   the cavity-mediated inter-molecular polarization.
/// * `BareElectronic` — electrons keep their uncoupled (bare matter) ground
///   state; the cavity acts on nuclei only.
/// * `DisplacementOnly` — the quadratic dipole self-energy is dropped and
///   electrons couple to the bare displacement field `lambda omega_beta q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApproximationLevel {
    #[default]
    SelfConsistent,
    BareElectronic,
    DisplacementOnly,
}

impl ApproximationLevel {
    pub const ALL: [ApproximationLevel; 3] = [
        ApproximationLevel::SelfConsistent,
        ApproximationLevel::BareElectronic,
        ApproximationLevel::DisplacementOnly,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ApproximationLevel::SelfConsistent => "sc",
            ApproximationLevel::BareElectronic => "be",
            ApproximationLevel::DisplacementOnly => "D",
        }
    }
}

impl fmt::Display for ApproximationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ApproximationLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sc" => Ok(ApproximationLevel::SelfConsistent),
            "be" => Ok(ApproximationLevel::BareElectronic),
            "D" | "d" => Ok(ApproximationLevel::DisplacementOnly),
            other => Err(Error::InvalidConfig(format!(
                "unknown approximation level {other:?}; expected one of sc, be, D"
            ))),
        }
    }
}

/// Intra-molecular nucleus-nucleus potential `W`.
///
/// The default (and only) choice is a harmonic nearest-neighbor chain.  The
/// companion one-body potential `V_i = W_i - k_e/2 (sum_n R_in^2 - (sum_n
/// R_in)^2 / N_n)` is implied throughout so that out-of-cavity dynamics
/// reduce to plain `-dW/dR` for any molecule shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NuclearPotential {
    HarmonicChain { k_n: f64 },
}

impl NuclearPotential {
    pub fn harmonic_chain(k_n: f64) -> Self {
        NuclearPotential::HarmonicChain { k_n }
    }

    pub fn chain_constant(&self) -> f64 {
        match self {
            NuclearPotential::HarmonicChain { k_n } => *k_n,
        }
    }

    /// W evaluated on one molecule's nuclear positions.
    pub fn energy(&self, positions: &[f64]) -> f64 {
        match self {
            NuclearPotential::HarmonicChain { k_n } => positions
                .windows(2)
                .map(|w| 0.5 * k_n * (w[0] - w[1]).powi(2))
                .sum(),
        }
    }

    /// -dW/dR for one molecule, accumulated into `out`.
    pub fn add_forces(&self, positions: &[f64], out: &mut [f64]) {
        match self {
            NuclearPotential::HarmonicChain { k_n } => {
                for n in 0..positions.len().saturating_sub(1) {
                    let stretch = positions[n] - positions[n + 1];
                    out[n] -= k_n * stretch;
                    out[n + 1] += k_n * stretch;
                }
            }
        }
    }
}

/// Full parameter set for one ensemble-in-cavity setup.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub n_molecules: usize,
    /// Per-nucleus masses, length `N_n`.
    pub nuclear_masses: Vec<f64>,
    /// Per-nucleus charges `Z_n`, length `N_n`.
    pub nuclear_charges: Vec<f64>,
    /// Effective electron charge magnitude `Z_e`.
    pub electron_charge: f64,
    /// Electron-nucleus force constant `k_e`.
    pub k_e: f64,
    pub nuclear_potential: NuclearPotential,
    /// Cavity coupling constant `lambda = sqrt(4 pi / V)`.
    pub lambda: f64,
    /// Bare cavity frequency `omega_beta`.
    pub omega_beta: f64,
    pub level: ApproximationLevel,
}

impl EnsembleConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_molecules: usize,
        nuclear_masses: Vec<f64>,
        nuclear_charges: Vec<f64>,
        electron_charge: f64,
        k_e: f64,
        nuclear_potential: NuclearPotential,
        lambda: f64,
        omega_beta: f64,
        level: ApproximationLevel,
    ) -> Result<Self> {
        let config = EnsembleConfig {
            n_molecules,
            nuclear_masses,
            nuclear_charges,
            electron_charge,
            k_e,
            nuclear_potential,
            lambda,
            omega_beta,
            level,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_molecules == 0 {
            return Err(Error::InvalidConfig("n_molecules must be >= 1".into()));
        }
        if self.nuclear_masses.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one nucleus per molecule is required".into(),
            ));
        }
        if self.nuclear_masses.len() != self.nuclear_charges.len() {
            return Err(Error::InvalidConfig(format!(
                "nuclear_masses ({}) and nuclear_charges ({}) differ in length",
                self.nuclear_masses.len(),
                self.nuclear_charges.len()
            )));
        }
        if self
            .nuclear_masses
            .iter()
            .any(|&m| m <= 0.0 || !m.is_finite())
        {
            return Err(Error::InvalidConfig(
                "nuclear_masses must be positive and finite".into(),
            ));
        }
        if !self.k_e.is_finite() || self.k_e <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "k_e must be > 0, got {}",
                self.k_e
            )));
        }
        if !self.omega_beta.is_finite() || self.omega_beta <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "omega_beta must be > 0, got {}",
                self.omega_beta
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.nuclear_potential.chain_constant() < 0.0 {
            return Err(Error::InvalidConfig(
                "chain force constant must be >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn nuclei_per_molecule(&self) -> usize {
        self.nuclear_masses.len()
    }

    pub fn total_nuclear_charge(&self) -> f64 {
        self.nuclear_charges.iter().sum()
    }

    /// Whether the per-molecule nuclear charge balances the electron charge.
    pub fn is_neutral(&self) -> bool {
        (self.total_nuclear_charge() - self.electron_charge).abs() < 1e-12
    }

    /// Screened nuclear charge `Z_n' = Z_n - Z_e / N_n`.
    pub fn screened_charge(&self, n: usize) -> f64 {
        self.nuclear_charges[n] - self.electron_charge / self.nuclei_per_molecule() as f64
    }

    /// Bare single-molecule electronic polarizability `alpha_i = Z_e^2 / (N_n k_e)`.
    pub fn alpha_single(&self) -> f64 {
        self.electron_charge.powi(2) / (self.nuclei_per_molecule() as f64 * self.k_e)
    }

    /// `gamma^2` evaluated for this ensemble at its own coupling.
    pub fn gamma2(&self) -> f64 {
        gamma_squared(self.n_molecules, self.lambda, self.alpha_single())
    }

    /// Dressed electronic oscillator frequency for a given closure level.
    ///
    /// The dipole self-energy stiffens the electron from `sqrt(N_n k_e)` to
    /// `sqrt(lambda^2 Z_e^2 + N_n k_e)`; the bare-electronic and
    /// displacement-only closures keep the bare value.
    pub fn nu2(&self, level: ApproximationLevel) -> f64 {
        let bare = self.nuclei_per_molecule() as f64 * self.k_e;
        match level {
            ApproximationLevel::SelfConsistent => {
                (self.lambda.powi(2) * self.electron_charge.powi(2) + bare).sqrt()
            }
            _ => bare.sqrt(),
        }
    }

    pub fn with_level(mut self, level: ApproximationLevel) -> Self {
        self.level = level;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_n_molecules(mut self, n: usize) -> Self {
        self.n_molecules = n;
        self
    }
}

/// Static external electric field coupled to the electronic dipole.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ExternalField {
    #[default]
    None,
    /// The same field applied to every molecule's dipole.
    Uniform(f64),
    /// Field applied molecule by molecule (length `N`).
    PerMolecule(Vec<f64>),
}

impl ExternalField {
    pub fn on_molecule(&self, i: usize) -> f64 {
        match self {
            ExternalField::None => 0.0,
            ExternalField::Uniform(e) => *e,
            ExternalField::PerMolecule(fields) => fields[i],
        }
    }

    pub fn total(&self, n_molecules: usize) -> f64 {
        match self {
            ExternalField::None => 0.0,
            ExternalField::Uniform(e) => *e * n_molecules as f64,
            ExternalField::PerMolecule(fields) => fields.iter().sum(),
        }
    }

    /// Field on a single molecule `j`, zero elsewhere.
    pub fn local(n_molecules: usize, j: usize, value: f64) -> Self {
        let mut fields = vec![0.0; n_molecules];
        fields[j] = value;
        ExternalField::PerMolecule(fields)
    }
}

/// Nuclear and photonic phase-space point.
///
/// `positions` and `momenta` are `N x N_n` (molecule-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub positions: DMatrix<f64>,
    pub momenta: DMatrix<f64>,
    pub q_beta: f64,
    pub p_beta: f64,
    pub external_field: ExternalField,
}

impl SystemState {
    pub fn zeros(config: &EnsembleConfig) -> Self {
        let n = config.n_molecules;
        let nn = config.nuclei_per_molecule();
        SystemState {
            positions: DMatrix::zeros(n, nn),
            momenta: DMatrix::zeros(n, nn),
            q_beta: 0.0,
            p_beta: 0.0,
            external_field: ExternalField::None,
        }
    }

    pub fn check_shape(&self, config: &EnsembleConfig) -> Result<()> {
        let n = config.n_molecules;
        let nn = config.nuclei_per_molecule();
        if self.positions.nrows() != n || self.positions.ncols() != nn {
            return Err(Error::ShapeMismatch(format!(
                "positions are {}x{}, config expects {}x{}",
                self.positions.nrows(),
                self.positions.ncols(),
                n,
                nn
            )));
        }
        if self.momenta.nrows() != n || self.momenta.ncols() != nn {
            return Err(Error::ShapeMismatch(format!(
                "momenta are {}x{}, config expects {}x{}",
                self.momenta.nrows(),
                self.momenta.ncols(),
                n,
                nn
            )));
        }
        if let ExternalField::PerMolecule(fields) = &self.external_field {
            if fields.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "per-molecule field has {} entries, config expects {}",
                    fields.len(),
                    n
                )));
            }
        }
        Ok(())
    }

    /// Position sum of molecule `i`'s nuclei.
    pub fn molecule_position_sum(&self, i: usize) -> f64 {
        self.positions.row(i).sum()
    }

    /// Sum of all nuclear positions.
    pub fn position_sum(&self) -> f64 {
        self.positions.sum()
    }

    /// Nuclear polarization `X = lambda sum_in Z_n R_in`.
    pub fn nuclear_polarization(&self, config: &EnsembleConfig) -> f64 {
        let mut total = 0.0;
        for i in 0..self.positions.nrows() {
            for n in 0..self.positions.ncols() {
                total += config.nuclear_charges[n] * self.positions[(i, n)];
            }
        }
        config.lambda * total
    }

    /// Screened nuclear polarization `X' = lambda sum_in Z_n' R_in`.
    pub fn screened_polarization(&self, config: &EnsembleConfig) -> f64 {
        let mut total = 0.0;
        for i in 0..self.positions.nrows() {
            for n in 0..self.positions.ncols() {
                total += config.screened_charge(n) * self.positions[(i, n)];
            }
        }
        config.lambda * total
    }

    pub fn kinetic_energy(&self, config: &EnsembleConfig) -> f64 {
        let mut kinetic = 0.5 * self.p_beta.powi(2);
        for i in 0..self.momenta.nrows() {
            for n in 0..self.momenta.ncols() {
                kinetic += 0.5 * self.momenta[(i, n)].powi(2) / config.nuclear_masses[n];
            }
        }
        kinetic
    }
}

/// Universal renormalization factor `1 / (1 + lambda^2 n alpha_i)`.
///
/// Lies in `(0, 1]`; equals 1 exactly when uncoupled.
pub fn gamma_squared(n: usize, lambda: f64, alpha_i: f64) -> f64 {
    debug_assert!(n >= 1);
    debug_assert!(lambda >= 0.0);
    debug_assert!(alpha_i > 0.0);
    1.0 / (1.0 + lambda.powi(2) * n as f64 * alpha_i)
}

/// Ground-state electronic quantities at one nuclear-photon configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DressedElectronSolution {
    /// Per-molecule linear coefficient of the shifted oscillator.
    pub nu1: Vec<f64>,
    /// Common oscillator frequency; independent of molecule and of (R, q).
    pub nu2: f64,
    /// Dimensionless displacement `eta_i = nu1_i / sqrt(2 nu2^3)`.
    pub eta: Vec<f64>,
    /// Electron position expectation values.
    pub r_expect: Vec<f64>,
    /// Ensemble electronic polarization `<x> = -lambda Z_e sum_i <r_i>`.
    pub x_expect: f64,
    /// Transverse electric field acting on the matter.
    pub e_perp: f64,
}

impl DressedElectronSolution {
    /// Electronic dipole of molecule `i`, `-(-Z_e) <r_i> = Z_e <r_i>`.
    pub fn electron_dipole(&self, electron_charge: f64, i: usize) -> f64 {
        -electron_charge * self.r_expect[i]
    }
}

/// Solve the dressed-electron problem at fixed nuclear positions and photon
/// displacement.
///
/// The self-consistent level resolves the mutual polarization in closed form;
/// the other levels evaluate their simpler closures.  External fields (if
/// present in the state) shift the solution exactly, which is what the static
/// polarizabilities differentiate.
pub fn solve_dressed_electrons(
    config: &EnsembleConfig,
    state: &SystemState,
) -> Result<DressedElectronSolution> {
    config.validate()?;
    state.check_shape(config)?;

    let n = config.n_molecules;
    let nn = config.nuclei_per_molecule() as f64;
    let z_e = config.electron_charge;
    let lambda = config.lambda;
    let omega = config.omega_beta;
    let k_e = config.k_e;
    let q = state.q_beta;
    let x_nuc = state.nuclear_polarization(config);

    let centroid: Vec<f64> = (0..n)
        .map(|i| state.molecule_position_sum(i) / nn)
        .collect();
    let field = &state.external_field;

    let r_expect: Vec<f64>;
    let x_expect;
    let e_perp;

    match config.level {
        ApproximationLevel::SelfConsistent => {
            let alpha_i = config.alpha_single();
            let g2 = config.gamma2();
            let e_total = field.total(n);
            // Exact lambda-weighted sum over the per-molecule relations.
            let r_sum = g2
                * (state.position_sum() / nn
                    + alpha_i / z_e * (n as f64 * lambda * (x_nuc - omega * q) + e_total));
            x_expect = -lambda * z_e * r_sum;
            e_perp = lambda * omega * q - lambda * (x_nuc + x_expect);
            r_expect = (0..n)
                .map(|i| centroid[i] + z_e / (nn * k_e) * (field.on_molecule(i) - e_perp))
                .collect();
        }
        ApproximationLevel::BareElectronic => {
            r_expect = (0..n)
                .map(|i| centroid[i] + z_e / (nn * k_e) * field.on_molecule(i))
                .collect();
            x_expect = -lambda * z_e * r_expect.iter().sum::<f64>();
            e_perp = lambda * omega * q - lambda * (x_nuc + x_expect);
        }
        ApproximationLevel::DisplacementOnly => {
            // The electrons see only the displacement field, unscreened.
            e_perp = lambda * omega * q;
            r_expect = (0..n)
                .map(|i| centroid[i] + z_e / (nn * k_e) * (field.on_molecule(i) - e_perp))
                .collect();
            x_expect = -lambda * z_e * r_expect.iter().sum::<f64>();
        }
    }

    let nu2 = config.nu2(config.level);
    let nu2_sq = nu2 * nu2;
    let nu1: Vec<f64> = r_expect.iter().map(|&r| -nu2_sq * r).collect();
    let eta_denom = (2.0 * nu2.powi(3)).sqrt();
    let eta: Vec<f64> = nu1.iter().map(|&v| v / eta_denom).collect();

    Ok(DressedElectronSolution {
        nu1,
        nu2,
        eta,
        r_expect,
        x_expect,
        e_perp,
    })
}

/// Total electronic energy at the self-consistent level.
///
/// Sum of the shifted-oscillator ground-state energies minus the
/// double-counted dipole-dipole interaction.
pub fn electronic_energy(config: &EnsembleConfig, state: &SystemState) -> Result<f64> {
    if config.level != ApproximationLevel::SelfConsistent {
        return Err(Error::RequiresSelfConsistent(config.level.to_string()));
    }
    let sol = solve_dressed_electrons(config, state)?;
    electronic_energy_from_solution(config, &sol)
}

pub fn electronic_energy_from_solution(
    config: &EnsembleConfig,
    sol: &DressedElectronSolution,
) -> Result<f64> {
    let nu2 = sol.nu2;
    let nu2_sq = nu2 * nu2;
    let single_sum: f64 = sol
        .nu1
        .iter()
        .map(|&nu1| 0.5 * nu2 - nu1 * nu1 / (2.0 * nu2_sq))
        .sum();
    let r_sq_sum: f64 = sol.r_expect.iter().map(|&r| r * r).sum();
    let z_e = config.electron_charge;
    let lambda = config.lambda;
    Ok(single_sum - 0.5 * (sol.x_expect.powi(2) - z_e.powi(2) * lambda.powi(2) * r_sq_sum))
}

/// Adiabatic potential for the nuclear-photon subsystem at the
/// self-consistent level: nuclear one-body and chain terms, the photon term
/// with its nuclear-dipole shift, and the electronic energy.
///
/// Its negative gradient reproduces the self-consistent forces, so it is the
/// conserved potential for NVE dynamics.
pub fn cbo_potential_energy(config: &EnsembleConfig, state: &SystemState) -> Result<f64> {
    if config.level != ApproximationLevel::SelfConsistent {
        return Err(Error::RequiresSelfConsistent(config.level.to_string()));
    }
    state.check_shape(config)?;
    let nn = config.nuclei_per_molecule() as f64;
    let mut potential = 0.0;
    for i in 0..config.n_molecules {
        let row: Vec<f64> = state.positions.row(i).iter().copied().collect();
        // W + the one-body compensation folded together: W + k_e/2 (sum R)^2 / N_n.
        potential += config.nuclear_potential.energy(&row);
        potential += 0.5 * config.k_e * state.molecule_position_sum(i).powi(2) / nn;
    }
    let x_nuc = state.nuclear_polarization(config);
    potential += 0.5 * (config.omega_beta * state.q_beta - x_nuc).powi(2);
    potential += electronic_energy(config, state)?;
    Ok(potential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn toy_config(n: usize, lambda: f64, level: ApproximationLevel) -> EnsembleConfig {
        EnsembleConfig::new(
            n,
            vec![1836.0, 2000.0, 1836.0],
            vec![2.0, 1.0, 2.0],
            5.0,
            1.0,
            NuclearPotential::harmonic_chain(0.7),
            lambda,
            0.01,
            level,
        )
        .unwrap()
    }

    pub(crate) fn random_state(config: &EnsembleConfig, seed: u64) -> SystemState {
        let mut rng = Pcg64::seed_from_u64(seed);
        let mut state = SystemState::zeros(config);
        for v in state.positions.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        state.q_beta = rng.gen_range(-2.0..2.0);
        state
    }

    #[test]
    fn gamma_squared_limits() {
        assert_eq!(gamma_squared(7, 0.0, 3.3), 1.0);
        assert_eq!(gamma_squared(1, 1.0, 1.0), 0.5);
        // Direct substitution for the reference molecule parameters.
        let alpha_i = 25.0 / 3.0;
        let expected = 1.0 / (1.0 + 0.01f64.powi(2) * 20.0 * alpha_i);
        assert!((gamma_squared(20, 0.01, alpha_i) - expected).abs() < 1e-15);
        assert!((expected - 0.983606557377049).abs() < 1e-12);
    }

    #[test]
    fn gamma_squared_stays_in_unit_interval() {
        let mut rng = Pcg64::seed_from_u64(6);
        for _ in 0..500 {
            let n = rng.gen_range(1..10_000usize);
            let lambda = rng.gen_range(0.0..5.0);
            let alpha_i = rng.gen_range(1e-3..100.0);
            let g2 = gamma_squared(n, lambda, alpha_i);
            assert!(g2 > 0.0 && g2 <= 1.0, "gamma^2 = {g2}");
        }
    }

    #[test]
    fn uncoupled_limit_matches_centroids_for_all_levels() {
        for level in ApproximationLevel::ALL {
            let config = toy_config(3, 0.0, level);
            let state = random_state(&config, 11);
            let sol = solve_dressed_electrons(&config, &state).unwrap();
            for i in 0..3 {
                let centroid = state.molecule_position_sum(i) / 3.0;
                assert!((sol.r_expect[i] - centroid).abs() < 1e-14);
            }
            assert_eq!(sol.e_perp, 0.0);
            assert_eq!(sol.x_expect, 0.0);
        }
    }

    #[test]
    fn levels_agree_at_zero_coupling() {
        let state_template =
            random_state(&toy_config(4, 0.0, ApproximationLevel::SelfConsistent), 3);
        let solutions: Vec<_> = ApproximationLevel::ALL
            .iter()
            .map(|&level| {
                let config = toy_config(4, 0.0, level);
                solve_dressed_electrons(&config, &state_template).unwrap()
            })
            .collect();
        for sol in &solutions[1..] {
            assert_eq!(sol.r_expect, solutions[0].r_expect);
            assert_eq!(sol.nu2, solutions[0].nu2);
            assert_eq!(sol.e_perp, solutions[0].e_perp);
        }
    }

    #[test]
    fn self_consistency_residual_is_tiny() {
        for seed in 0..20u64 {
            let config = toy_config(
                1 + (seed as usize % 6),
                0.05 + 0.01 * seed as f64,
                ApproximationLevel::SelfConsistent,
            );
            let state = random_state(&config, seed);
            let sol = solve_dressed_electrons(&config, &state).unwrap();
            let nn = config.nuclei_per_molecule() as f64;
            // Substitute <r> back into the per-molecule relation.
            for i in 0..config.n_molecules {
                let rhs = state.molecule_position_sum(i) / nn
                    + config.lambda * config.electron_charge / (nn * config.k_e)
                        * (state.nuclear_polarization(&config) + sol.x_expect
                            - config.omega_beta * state.q_beta);
                let scale = rhs.abs().max(1.0);
                assert!(
                    (sol.r_expect[i] - rhs).abs() / scale < 1e-12,
                    "residual too large: {} vs {}",
                    sol.r_expect[i],
                    rhs
                );
            }
        }
    }

    #[test]
    fn ensemble_polarization_matches_direct_sum_expression() {
        // Two algebraic routes to <x>: the solver's summed form and the
        // (1 - gamma^2)-weighted expression in nuclear-photon variables.
        let config = toy_config(3, 0.21, ApproximationLevel::SelfConsistent);
        let state = random_state(&config, 5);
        let sol = solve_dressed_electrons(&config, &state).unwrap();
        let g2 = config.gamma2();
        let direct = (1.0 - g2)
            * (-config.k_e * state.position_sum()
                / (config.lambda * config.electron_charge * config.n_molecules as f64)
                - state.nuclear_polarization(&config)
                + config.omega_beta * state.q_beta);
        assert!((sol.x_expect - direct).abs() < 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn transverse_field_identity_with_screened_polarization() {
        let config = toy_config(5, 0.13, ApproximationLevel::SelfConsistent);
        let state = random_state(&config, 9);
        let sol = solve_dressed_electrons(&config, &state).unwrap();
        let expected = config.gamma2()
            * config.lambda
            * (config.omega_beta * state.q_beta - state.screened_polarization(&config));
        assert!((sol.e_perp - expected).abs() < 1e-13 * expected.abs().max(1.0));
    }

    #[test]
    fn x_expect_is_weighted_r_sum() {
        for level in ApproximationLevel::ALL {
            let config = toy_config(4, 0.17, level);
            let state = random_state(&config, 21);
            let sol = solve_dressed_electrons(&config, &state).unwrap();
            let direct = -config.lambda * config.electron_charge * sol.r_expect.iter().sum::<f64>();
            assert!((sol.x_expect - direct).abs() < 1e-13 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn electronic_energy_zero_coupling_is_bare_zero_point() {
        let config = toy_config(6, 0.0, ApproximationLevel::SelfConsistent);
        let state = SystemState::zeros(&config);
        let energy = electronic_energy(&config, &state).unwrap();
        let expected = 6.0 * (3.0f64).sqrt() / 2.0; // N sqrt(N_n k_e) / 2
        assert!((energy - expected).abs() < 1e-12);
    }

    #[test]
    fn electronic_energy_single_molecule_equilibrium() {
        let mut config = toy_config(1, 0.3, ApproximationLevel::SelfConsistent);
        config.omega_beta = 0.5;
        let state = SystemState::zeros(&config);
        let energy = electronic_energy(&config, &state).unwrap();
        let nu2 = (config.lambda.powi(2) * 25.0 + 3.0).sqrt();
        assert!((energy - nu2 / 2.0).abs() < 1e-13);
    }

    #[test]
    fn nu2_is_state_independent() {
        let config = toy_config(2, 0.4, ApproximationLevel::SelfConsistent);
        let a = solve_dressed_electrons(&config, &random_state(&config, 1)).unwrap();
        let b = solve_dressed_electrons(&config, &random_state(&config, 2)).unwrap();
        assert_eq!(a.nu2, b.nu2);
        assert!((a.nu2 - (config.lambda.powi(2) * 25.0 + 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(EnsembleConfig::new(
            0,
            vec![1.0],
            vec![1.0],
            1.0,
            1.0,
            NuclearPotential::harmonic_chain(0.0),
            0.0,
            1.0,
            ApproximationLevel::SelfConsistent,
        )
        .is_err());
        assert!(EnsembleConfig::new(
            1,
            vec![1.0],
            vec![1.0, 2.0],
            1.0,
            1.0,
            NuclearPotential::harmonic_chain(0.0),
            0.0,
            1.0,
            ApproximationLevel::SelfConsistent,
        )
        .is_err());
        assert!(EnsembleConfig::new(
            1,
            vec![1.0],
            vec![1.0],
            1.0,
            -1.0,
            NuclearPotential::harmonic_chain(0.0),
            0.0,
            1.0,
            ApproximationLevel::SelfConsistent,
        )
        .is_err());
    }

    #[test]
    fn level_labels_round_trip() {
        for level in ApproximationLevel::ALL {
            assert_eq!(level.label().parse::<ApproximationLevel>().unwrap(), level);
        }
        assert!("xx".parse::<ApproximationLevel>().is_err());
    }
}

//! Brute-force ground truth for every closed form in the library.
//!
//! The full quadratic energy of electrons, nuclei, and the photon coordinate
//! is assembled term by term as a dense stiffness matrix, then minimized,
//! differentiated, or diagonalized numerically.  None of the analytic
//! shortcuts (the `gamma^2` summation, the shifted-oscillator energies, the
//! mode analysis) enter on this side, which is what makes the comparison
//! meaningful.  Dense linear algebra limits the oracle to modest ensembles.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{self, CO2Preset};
use crate::error::{Error, Result};
use crate::model::{
    solve_dressed_electrons, ApproximationLevel, EnsembleConfig, ExternalField, SystemState,
};
use crate::polarizability::{self, PolarizabilityKind};

pub const MAX_ORACLE_MOLECULES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordLabel {
    Electron(usize),
    Nucleus(usize, usize),
    Photon,
}

/// Dense quadratic energy `U = 1/2 x^T K x - b^T x + offset` with one mass
/// per coordinate.  Coordinates are ordered electrons, nuclei
/// (molecule-major), photon.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub labels: Vec<CoordLabel>,
    pub masses: Vec<f64>,
    pub stiffness: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub offset: f64,
    n_molecules: usize,
    nuclei_per_molecule: usize,
}

impl QuadraticModel {
    pub fn n_coords(&self) -> usize {
        self.labels.len()
    }

    pub fn electron_count(&self) -> usize {
        self.n_molecules
    }

    pub fn energy(&self, coords: &DVector<f64>) -> f64 {
        0.5 * (self.stiffness.clone() * coords).dot(coords) - self.linear.dot(coords) + self.offset
    }

    pub fn assemble(
        &self,
        electrons: &[f64],
        positions: &DMatrix<f64>,
        q_beta: f64,
    ) -> DVector<f64> {
        let n = self.n_molecules;
        let nn = self.nuclei_per_molecule;
        let mut coords = DVector::zeros(self.n_coords());
        for (i, &r) in electrons.iter().enumerate() {
            coords[i] = r;
        }
        for i in 0..n {
            for k in 0..nn {
                coords[n + i * nn + k] = positions[(i, k)];
            }
        }
        coords[self.n_coords() - 1] = q_beta;
        coords
    }

    /// Rescale electron masses, for probing the adiabatic limit.
    pub fn with_electron_mass(mut self, mass: f64) -> Self {
        for i in 0..self.n_molecules {
            self.masses[i] = mass;
        }
        self
    }
}

/// Assemble the quadratic model at a given closure level.
///
/// Level variants drop terms of the squared-polarization expansion: the
/// bare-electronic model keeps only nuclear dipole terms, the
/// displacement-only model keeps the photon-dipole cross term but no
/// squared-dipole block at all.
pub fn build_quadratic(
    config: &EnsembleConfig,
    level: ApproximationLevel,
    field: &ExternalField,
) -> Result<QuadraticModel> {
    config.validate()?;
    let n = config.n_molecules;
    if n > MAX_ORACLE_MOLECULES {
        return Err(Error::TooManyMolecules {
            n,
            max: MAX_ORACLE_MOLECULES,
        });
    }
    let nn = config.nuclei_per_molecule();
    let total = n + n * nn + 1;
    let lambda = config.lambda;
    let omega = config.omega_beta;
    let k_e = config.k_e;
    let k_n = config.nuclear_potential.chain_constant();
    let z_e = config.electron_charge;

    let mut labels = Vec::with_capacity(total);
    let mut masses = Vec::with_capacity(total);
    for i in 0..n {
        labels.push(CoordLabel::Electron(i));
        masses.push(1.0);
    }
    for i in 0..n {
        for k in 0..nn {
            labels.push(CoordLabel::Nucleus(i, k));
            masses.push(config.nuclear_masses[k]);
        }
    }
    labels.push(CoordLabel::Photon);
    masses.push(1.0);

    let elec = |i: usize| i;
    let nuc = |i: usize, k: usize| n + i * nn + k;
    let photon = total - 1;

    let mut k_mat = DMatrix::<f64>::zeros(total, total);
    let mut b = DVector::<f64>::zeros(total);

    // Electron-nucleus springs k_e/2 (R_in - r_i)^2.
    for i in 0..n {
        for k in 0..nn {
            k_mat[(elec(i), elec(i))] += k_e;
            k_mat[(nuc(i, k), nuc(i, k))] += k_e;
            k_mat[(elec(i), nuc(i, k))] -= k_e;
            k_mat[(nuc(i, k), elec(i))] -= k_e;
        }
    }

    // Nearest-neighbor chain W plus the compensating one-body choice
    // -k_e/2 (sum_k R^2 - (sum_k R)^2 / N_n).
    for i in 0..n {
        for k in 0..nn.saturating_sub(1) {
            k_mat[(nuc(i, k), nuc(i, k))] += k_n;
            k_mat[(nuc(i, k + 1), nuc(i, k + 1))] += k_n;
            k_mat[(nuc(i, k), nuc(i, k + 1))] -= k_n;
            k_mat[(nuc(i, k + 1), nuc(i, k))] -= k_n;
        }
        for k in 0..nn {
            k_mat[(nuc(i, k), nuc(i, k))] -= k_e;
            for m in 0..nn {
                k_mat[(nuc(i, k), nuc(i, m))] += k_e / nn as f64;
            }
        }
    }

    // Photon restoring term.
    k_mat[(photon, photon)] += omega * omega;

    // Polarization weights: the total dipole couples as lambda times
    // charge-weighted coordinates, electrons entering with -Z_e.
    let mut weight_full = vec![0.0; total];
    let mut weight_nuclear = vec![0.0; total];
    for i in 0..n {
        weight_full[elec(i)] = -lambda * z_e;
        for k in 0..nn {
            weight_full[nuc(i, k)] = lambda * config.nuclear_charges[k];
            weight_nuclear[nuc(i, k)] = lambda * config.nuclear_charges[k];
        }
    }
    let (self_weight, cross_weight): (Option<&[f64]>, &[f64]) = match level {
        ApproximationLevel::SelfConsistent => (Some(&weight_full), &weight_full),
        ApproximationLevel::BareElectronic => (Some(&weight_nuclear), &weight_nuclear),
        ApproximationLevel::DisplacementOnly => (None, &weight_full),
    };

    // Squared-polarization block 1/2 (X + x)^2.
    if let Some(w) = self_weight {
        for a in 0..total {
            if w[a] == 0.0 {
                continue;
            }
            for c in 0..total {
                k_mat[(a, c)] += w[a] * w[c];
            }
        }
    }
    // Photon-dipole cross term -omega q (X + x).
    for (a, &w) in cross_weight.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        k_mat[(photon, a)] -= omega * w;
        k_mat[(a, photon)] -= omega * w;
    }

    // External field acting on the electronic dipole Z_e sum_i r_i.
    for i in 0..n {
        b[elec(i)] += z_e * field.on_molecule(i);
    }

    Ok(QuadraticModel {
        labels,
        masses,
        stiffness: k_mat,
        linear: b,
        offset: 0.0,
        n_molecules: n,
        nuclei_per_molecule: nn,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectronicMinimum {
    pub electrons: Vec<f64>,
    /// Full quadratic energy at the minimizer: the adiabatic surface for the
    /// nuclear-photon subsystem.
    pub bo_energy: f64,
    /// Electron-dependent part only (energy relative to frozen electrons at
    /// the origin).
    pub electronic_energy: f64,
    /// Hartree zero-point energy, `1/2 sum_i sqrt(K_ii / m_i)` over the
    /// electron sub-block diagonal.
    pub zero_point: f64,
}

/// Minimize the quadratic energy over electron coordinates at fixed nuclear
/// positions and photon displacement.
pub fn electronic_minimize(
    model: &QuadraticModel,
    positions: &DMatrix<f64>,
    q_beta: f64,
) -> Result<ElectronicMinimum> {
    let n = model.electron_count();
    let k_ee = model.stiffness.view((0, 0), (n, n)).into_owned();
    let chol = k_ee
        .clone()
        .cholesky()
        .ok_or(Error::IndefiniteElectronBlock)?;

    // Stationarity: K_ee s = b_e - K_e,rest * rest.
    let rest_dim = model.n_coords() - n;
    let k_er = model.stiffness.view((0, n), (n, rest_dim)).into_owned();
    let zero_electrons = vec![0.0; n];
    let frozen = model.assemble(&zero_electrons, positions, q_beta);
    let rest = frozen.rows(n, rest_dim).into_owned();
    let rhs = model.linear.rows(0, n).into_owned() - k_er * rest;
    let solution = chol.solve(&rhs);

    let electrons: Vec<f64> = solution.iter().copied().collect();
    let coords = model.assemble(&electrons, positions, q_beta);
    let bo_energy = model.energy(&coords);
    let electronic_energy = bo_energy - model.energy(&frozen);
    let zero_point = (0..n)
        .map(|i| 0.5 * (model.stiffness[(i, i)] / model.masses[i]).sqrt())
        .sum();

    Ok(ElectronicMinimum {
        electrons,
        bo_energy,
        electronic_energy,
        zero_point,
    })
}

/// Damped fixed-point iteration on the per-molecule shift relations; the
/// independent iterative route to the same electron positions the closed
/// form produces.  The mixing factor keeps the map contractive at any
/// coupling strength.
pub fn fixed_point_electrons(
    config: &EnsembleConfig,
    state: &SystemState,
    tolerance: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    config.validate()?;
    state.check_shape(config)?;
    let n = config.n_molecules;
    let nn = config.nuclei_per_molecule() as f64;
    let lambda = config.lambda;
    let z_e = config.electron_charge;
    let k_e = config.k_e;
    let x_nuc = state.nuclear_polarization(config);
    let omega_q = config.omega_beta * state.q_beta;
    let alpha_i = config.alpha_single();
    let mixing = 2.0 / (2.0 + n as f64 * lambda * lambda * alpha_i);

    let mut s: Vec<f64> = (0..n)
        .map(|i| state.molecule_position_sum(i) / nn)
        .collect();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let x_elec = -lambda * z_e * s.iter().sum::<f64>();
        let mut next = Vec::with_capacity(n);
        residual = 0.0;
        for (i, &s_i) in s.iter().enumerate() {
            let target = state.molecule_position_sum(i) / nn
                + z_e / (nn * k_e)
                    * (lambda * (x_nuc + x_elec - omega_q) + state.external_field.on_molecule(i));
            let updated = (1.0 - mixing) * s_i + mixing * target;
            residual = residual.max((updated - s_i).abs());
            next.push(updated);
        }
        s = next;
        if residual < tolerance {
            return Ok(s);
        }
    }
    Err(Error::FixedPointDiverged { max_iter, residual })
}

/// Eigenvalue spectra of the full model and of its electron-eliminated
/// (adiabatic) nuclear-photon block, both sorted ascending as squared
/// frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleModes {
    pub omega2_full: Vec<f64>,
    pub omega2_adiabatic: Vec<f64>,
}

impl OracleModes {
    pub fn adiabatic_frequencies(&self) -> Result<Vec<f64>> {
        frequencies(&self.omega2_adiabatic)
    }

    pub fn full_frequencies(&self) -> Result<Vec<f64>> {
        frequencies(&self.omega2_full)
    }
}

/// Convert squared frequencies to frequencies, flagging genuine instability
/// instead of returning NaN.  Small negative values from roundoff of zero
/// modes are clamped.
pub fn frequencies(omega2: &[f64]) -> Result<Vec<f64>> {
    let scale = omega2
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    let tol = 1e-9 * scale;
    omega2
        .iter()
        .map(|&v| {
            if v < -tol {
                Err(Error::InvalidConfig(format!(
                    "unstable mode: squared frequency {v:.6e}"
                )))
            } else {
                Ok(v.max(0.0).sqrt())
            }
        })
        .collect()
}

fn sorted_eigenvalues(matrix: DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = matrix
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    values.sort_by(f64::total_cmp);
    values
}

fn mass_weighted(matrix: &DMatrix<f64>, masses: &[f64]) -> DMatrix<f64> {
    let dim = masses.len();
    DMatrix::from_fn(dim, dim, |a, c| {
        matrix[(a, c)] / (masses[a] * masses[c]).sqrt()
    })
}

/// Normal modes of the full electron-nuclear-photon system plus the
/// adiabatic (electron-eliminated) modes of the nuclear-photon block.
pub fn full_normal_modes(model: &QuadraticModel) -> Result<OracleModes> {
    let total = model.n_coords();
    let n = model.electron_count();
    let omega2_full = sorted_eigenvalues(mass_weighted(&model.stiffness, &model.masses));

    let k_ee = model.stiffness.view((0, 0), (n, n)).into_owned();
    let chol = k_ee.cholesky().ok_or(Error::IndefiniteElectronBlock)?;
    let rest = total - n;
    let k_er = model.stiffness.view((0, n), (n, rest)).into_owned();
    let k_rr = model.stiffness.view((n, n), (rest, rest)).into_owned();
    let schur = &k_rr - k_er.transpose() * chol.solve(&k_er);
    let omega2_adiabatic = sorted_eigenvalues(mass_weighted(&schur, &model.masses[n..]));

    Ok(OracleModes {
        omega2_full,
        omega2_adiabatic,
    })
}

/// What a static response probes or observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseTarget {
    Ensemble,
    Molecule(usize),
}

fn dipole_of(config: &EnsembleConfig, electrons: &[f64], target: ResponseTarget) -> f64 {
    match target {
        ResponseTarget::Ensemble => config.electron_charge * electrons.iter().sum::<f64>(),
        ResponseTarget::Molecule(i) => config.electron_charge * electrons[i],
    }
}

/// Static electronic polarizability by central finite differences on the
/// quadratic model, with a half-step consistency check.
pub fn static_response(
    config: &EnsembleConfig,
    perturbation: ResponseTarget,
    observable: ResponseTarget,
) -> Result<f64> {
    let delta = 1e-4;
    let coarse = response_at_step(config, perturbation, observable, delta)?;
    let fine = response_at_step(config, perturbation, observable, delta / 2.0)?;
    let scale = coarse.abs().max(fine.abs()).max(1e-12);
    if (coarse - fine).abs() / scale > 1e-8 {
        return Err(Error::ResponseInconsistent { coarse, fine });
    }
    Ok(fine)
}

fn response_at_step(
    config: &EnsembleConfig,
    perturbation: ResponseTarget,
    observable: ResponseTarget,
    delta: f64,
) -> Result<f64> {
    let n = config.n_molecules;
    let field = |amplitude: f64| match perturbation {
        ResponseTarget::Ensemble => ExternalField::Uniform(amplitude),
        ResponseTarget::Molecule(j) => ExternalField::local(n, j, amplitude),
    };
    let positions = DMatrix::zeros(n, config.nuclei_per_molecule());
    let plus = electronic_minimize(
        &build_quadratic(config, config.level, &field(delta))?,
        &positions,
        0.0,
    )?;
    let minus = electronic_minimize(
        &build_quadratic(config, config.level, &field(-delta))?,
        &positions,
        0.0,
    )?;
    let d_plus = dipole_of(config, &plus.electrons, observable);
    let d_minus = dipole_of(config, &minus.electrons, observable);
    Ok((d_plus - d_minus) / (2.0 * delta))
}

/// Sum-over-states polarizability for a single molecule: only the first
/// excited state of the dressed oscillator carries transition dipole, so the
/// series collapses after one term.
pub fn sum_over_states_response(config: &EnsembleConfig) -> Result<f64> {
    if config.n_molecules != 1 {
        return Err(Error::InvalidConfig(
            "sum-over-states route is defined for a single molecule".into(),
        ));
    }
    let nu2 = config.nu2(config.level);
    let z_e = config.electron_charge;
    let mut total = 0.0;
    for level in 1..12usize {
        // |<0| r |l>|^2 for the displaced oscillator; the displacement drops
        // out of the matrix element, leaving the bare ladder structure.
        let overlap_sq = if level == 1 { 1.0 / (2.0 * nu2) } else { 0.0 };
        let gap = -(level as f64) * nu2; // eps_0 - eps_l
        total += -2.0 * z_e * z_e * overlap_sq / gap;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Randomized equivalence sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CategoryReport {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CategoryReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub draws: usize,
    pub categories: Vec<CategoryReport>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.categories.iter().all(CategoryReport::passed)
    }
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

struct DrawErrors {
    positions: f64,
    polarization: f64,
    transverse_field: f64,
    fixed_point: f64,
    energy: f64,
    forces: f64,
    polarizabilities: f64,
    photon_frequency: f64,
    mode_spectrum: f64,
}

fn run_draw(seed: u64) -> Result<DrawErrors> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_pcg::Pcg64::seed_from_u64(seed);

    let n = rng.gen_range(1..=8usize);
    let nn = rng.gen_range(1..=4usize);
    let k_e = rng.gen_range(0.3..3.0);
    let z_e = rng.gen_range(0.5..6.0);
    let lambda = rng.gen_range(0.0..0.5);
    let omega = rng.gen_range(0.05..2.0);
    let masses: Vec<f64> = (0..nn).map(|_| rng.gen_range(100.0..50_000.0)).collect();
    let charges: Vec<f64> = (0..nn).map(|_| rng.gen_range(0.1..3.0)).collect();
    let k_n = rng.gen_range(0.0..2.0);

    let config = EnsembleConfig::new(
        n,
        masses.clone(),
        charges,
        z_e,
        k_e,
        crate::model::NuclearPotential::harmonic_chain(k_n),
        lambda,
        omega,
        ApproximationLevel::SelfConsistent,
    )?;

    let mut state = SystemState::zeros(&config);
    for v in state.positions.iter_mut() {
        *v = rng.gen_range(-0.5..0.5);
    }
    state.q_beta = rng.gen_range(-2.0..2.0);
    if rng.gen_bool(0.3) {
        state.external_field = ExternalField::Uniform(rng.gen_range(-0.1..0.1));
    } else if rng.gen_bool(0.3) {
        state.external_field =
            ExternalField::PerMolecule((0..n).map(|_| rng.gen_range(-0.1..0.1)).collect());
    }

    let mut errors = DrawErrors {
        positions: 0.0,
        polarization: 0.0,
        transverse_field: 0.0,
        fixed_point: 0.0,
        energy: 0.0,
        forces: 0.0,
        polarizabilities: 0.0,
        photon_frequency: 0.0,
        mode_spectrum: 0.0,
    };

    // Electron positions at every closure level.
    for level in ApproximationLevel::ALL {
        let leveled = config.clone().with_level(level);
        let analytic = solve_dressed_electrons(&leveled, &state)?;
        let model = build_quadratic(&leveled, level, &state.external_field)?;
        let minimum = electronic_minimize(&model, &state.positions, state.q_beta)?;
        for i in 0..n {
            errors.positions =
                errors
                    .positions
                    .max(rel_err(analytic.r_expect[i], minimum.electrons[i], 1e-6));
        }
        if level == ApproximationLevel::SelfConsistent {
            let x_oracle = -lambda * z_e * minimum.electrons.iter().sum::<f64>();
            errors.polarization = rel_err(analytic.x_expect, x_oracle, 1e-6);
            let e_perp_oracle = lambda * omega * state.q_beta
                - lambda * (state.nuclear_polarization(&config) + x_oracle);
            errors.transverse_field = rel_err(analytic.e_perp, e_perp_oracle, 1e-6);

            let iterated = fixed_point_electrons(&leveled, &state, 1e-14, 100_000)?;
            for (expected, found) in analytic.r_expect.iter().zip(&iterated) {
                errors.fixed_point = errors.fixed_point.max(rel_err(*expected, *found, 1e-6));
            }

            // Total electronic energy against minimum + Hartree zero point.
            let analytic_energy = crate::model::electronic_energy(&leveled, &state)?;
            let nu2 = leveled.nu2(level);
            let oracle_energy = minimum.electronic_energy + n as f64 * nu2 / 2.0;
            errors.energy = rel_err(analytic_energy, oracle_energy, 1e-6);
            let diag_zero_point: f64 = minimum.zero_point;
            errors.energy = errors
                .energy
                .max(rel_err(diag_zero_point, n as f64 * nu2 / 2.0, 1e-6));

            // Forces against the gradient of the adiabatic surface.
            let analytic_forces = dynamics::forces(&leveled, &state)?;
            let delta = 1e-5;
            let mut force_scale = analytic_forces.photon.abs();
            for v in analytic_forces.nuclear.iter() {
                force_scale = force_scale.max(v.abs());
            }
            let floor = force_scale.max(1.0);
            for i in 0..n {
                for k in 0..config.nuclei_per_molecule() {
                    let mut shifted = state.positions.clone();
                    shifted[(i, k)] += delta;
                    let up = electronic_minimize(&model, &shifted, state.q_beta)?.bo_energy;
                    shifted[(i, k)] -= 2.0 * delta;
                    let down = electronic_minimize(&model, &shifted, state.q_beta)?.bo_energy;
                    let gradient_force = -(up - down) / (2.0 * delta);
                    errors.forces = errors
                        .forces
                        .max((analytic_forces.nuclear[(i, k)] - gradient_force).abs() / floor);
                }
            }
            let up = electronic_minimize(&model, &state.positions, state.q_beta + delta)?.bo_energy;
            let down =
                electronic_minimize(&model, &state.positions, state.q_beta - delta)?.bo_energy;
            let photon_force = -(up - down) / (2.0 * delta);
            errors.forces = errors
                .forces
                .max((analytic_forces.photon - photon_force).abs() / floor);
        }
    }

    // All four self-consistent polarizabilities.
    let floor = config.alpha_single().max(1e-6);
    let pairs = [
        (
            PolarizabilityKind::ENSEMBLE,
            ResponseTarget::Ensemble,
            ResponseTarget::Ensemble,
        ),
        (
            PolarizabilityKind::LOCAL_RESPONSE,
            ResponseTarget::Ensemble,
            ResponseTarget::Molecule(0),
        ),
        (
            PolarizabilityKind::LOCAL_PERTURBATION,
            ResponseTarget::Molecule(n - 1),
            ResponseTarget::Ensemble,
        ),
    ];
    for (kind, pert, obs) in pairs {
        let analytic = polarizability::self_consistent_polarizability(kind, &config, None)?.value;
        let oracle = static_response(&config, pert, obs)?;
        errors.polarizabilities = errors
            .polarizabilities
            .max(rel_err(analytic, oracle, floor));
    }
    let same = polarizability::self_consistent_polarizability(
        PolarizabilityKind::LOCAL_LOCAL,
        &config,
        Some((0, 0)),
    )?
    .value;
    let oracle_same = static_response(
        &config,
        ResponseTarget::Molecule(0),
        ResponseTarget::Molecule(0),
    )?;
    errors.polarizabilities = errors
        .polarizabilities
        .max(rel_err(same, oracle_same, floor));
    if n > 1 {
        let cross = polarizability::self_consistent_polarizability(
            PolarizabilityKind::LOCAL_LOCAL,
            &config,
            Some((1, 0)),
        )?
        .value;
        let oracle_cross = static_response(
            &config,
            ResponseTarget::Molecule(0),
            ResponseTarget::Molecule(1),
        )?;
        errors.polarizabilities = errors
            .polarizabilities
            .max(rel_err(cross, oracle_cross, floor));
    }

    // Photon frequency via an ensemble of neutral atoms (nuclear motion
    // decouples, leaving the renormalized photon mode exact).
    let atom = EnsembleConfig::new(
        n,
        vec![masses[0]],
        vec![z_e],
        z_e,
        k_e,
        crate::model::NuclearPotential::harmonic_chain(0.0),
        lambda,
        omega,
        ApproximationLevel::SelfConsistent,
    )?;
    let atom_model = build_quadratic(
        &atom,
        ApproximationLevel::SelfConsistent,
        &ExternalField::None,
    )?;
    let modes = full_normal_modes(&atom_model)?;
    let adiabatic = modes.adiabatic_frequencies()?;
    let photon_freq = adiabatic.last().copied().unwrap_or(0.0);
    let expected = atom.gamma2().sqrt() * omega;
    errors.photon_frequency = rel_err(photon_freq, expected, 1e-6);

    // Three-nucleus neutral molecule: full adiabatic spectrum against the
    // analytic mode table.
    let preset = CO2Preset::new(
        rng.gen_range(5_000.0..40_000.0),
        rng.gen_range(5_000.0..40_000.0),
        2.0,
        1.0,
        5.0,
        rng.gen_range(0.1..2.0),
        k_e,
    )?;
    let co2_lambda = rng.gen_range(0.0..0.3);
    let co2_omega = preset.asymmetric_frequency() * rng.gen_range(0.5..2.0);
    let co2 =
        preset.ensemble_config(n, co2_lambda, co2_omega, ApproximationLevel::SelfConsistent)?;
    let co2_model = build_quadratic(
        &co2,
        ApproximationLevel::SelfConsistent,
        &ExternalField::None,
    )?;
    let co2_modes = full_normal_modes(&co2_model)?.omega2_adiabatic;
    let report = dynamics::analytic_mode_dynamics(&preset, n, co2_lambda, co2_omega)?;
    // Expected squared frequencies: N translations, N symmetric stretches,
    // N-1 dark asymmetric combinations, and the two polaritons.  Comparing
    // eigenvalues (not their square roots) keeps the zero modes
    // well-conditioned.
    let mut expected_modes = vec![0.0; n];
    expected_modes.extend(vec![preset.k_s(); n]);
    expected_modes.extend(vec![preset.k_a(); n - 1]);
    expected_modes.push(report.polariton_frequencies.0.powi(2));
    expected_modes.push(report.polariton_frequencies.1.powi(2));
    expected_modes.sort_by(f64::total_cmp);
    let scale_sq = (co2_omega * co2_omega).max(preset.k_a());
    for (oracle, analytic) in co2_modes.iter().zip(expected_modes.iter()) {
        errors.mode_spectrum = errors
            .mode_spectrum
            .max((oracle - analytic).abs() / oracle.abs().max(*analytic).max(1e-4 * scale_sq));
    }

    Ok(errors)
}

/// Randomized analytic-versus-oracle equivalence sweep.
pub fn verify_sweep(draws: usize, seed: u64) -> Result<SweepReport> {
    let results: Vec<Result<DrawErrors>> = (0..draws)
        .into_par_iter()
        .map(|k| {
            run_draw(
                seed.wrapping_add(k as u64)
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15),
            )
        })
        .collect();

    let mut max = DrawErrors {
        positions: 0.0,
        polarization: 0.0,
        transverse_field: 0.0,
        fixed_point: 0.0,
        energy: 0.0,
        forces: 0.0,
        polarizabilities: 0.0,
        photon_frequency: 0.0,
        mode_spectrum: 0.0,
    };
    for result in results {
        let e = result?;
        max.positions = max.positions.max(e.positions);
        max.polarization = max.polarization.max(e.polarization);
        max.transverse_field = max.transverse_field.max(e.transverse_field);
        max.fixed_point = max.fixed_point.max(e.fixed_point);
        max.energy = max.energy.max(e.energy);
        max.forces = max.forces.max(e.forces);
        max.polarizabilities = max.polarizabilities.max(e.polarizabilities);
        max.photon_frequency = max.photon_frequency.max(e.photon_frequency);
        max.mode_spectrum = max.mode_spectrum.max(e.mode_spectrum);
    }

    let categories = vec![
        CategoryReport {
            name: "electron positions (sc/be/D)",
            max_rel_err: max.positions,
            tolerance: 1e-10,
        },
        CategoryReport {
            name: "ensemble polarization <x>",
            max_rel_err: max.polarization,
            tolerance: 1e-10,
        },
        CategoryReport {
            name: "transverse field E_perp",
            max_rel_err: max.transverse_field,
            tolerance: 1e-10,
        },
        CategoryReport {
            name: "fixed-point electron route",
            max_rel_err: max.fixed_point,
            tolerance: 1e-10,
        },
        CategoryReport {
            name: "electronic energy",
            max_rel_err: max.energy,
            tolerance: 1e-10,
        },
        CategoryReport {
            name: "adiabatic forces",
            max_rel_err: max.forces,
            tolerance: 1e-8,
        },
        CategoryReport {
            name: "self-consistent polarizabilities",
            max_rel_err: max.polarizabilities,
            tolerance: 1e-8,
        },
        CategoryReport {
            name: "renormalized photon frequency",
            max_rel_err: max.photon_frequency,
            tolerance: 1e-8,
        },
        CategoryReport {
            name: "three-nucleus mode spectrum",
            max_rel_err: max.mode_spectrum,
            tolerance: 1e-8,
        },
    ];

    Ok(SweepReport { draws, categories })
}

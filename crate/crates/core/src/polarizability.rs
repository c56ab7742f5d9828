//! Static electronic polarizabilities of the coupled ensemble.
//!
//! Four response/perturbation combinations are distinguished: the ensemble
//! dipole or a single molecule's dipole may respond, and the probing field
//! may act on the whole ensemble or on a single molecule.  All four have
//! closed forms in terms of `gamma^2(N, lambda)`, and all four agree with the
//! brute-force finite-difference response of the full quadratic model (see
//! [`crate::oracle`]).  A perturbative (sum-over-states) treatment of the
//! probe field instead lands on `gamma^2(1, lambda)` and misses the
//! ensemble feedback entirely; comparing the two is the point of
//! [`verify_scaling_recipe`].

use crate::error::{Error, Result};
use crate::model::{gamma_squared, EnsembleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Ensemble,
    Local,
}

impl Scope {
    pub fn label(&self) -> &'static str {
        match self {
            Scope::Ensemble => "ensemble",
            Scope::Local => "local",
        }
    }
}

/// Which dipole responds and which dipole is probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolarizabilityKind {
    pub response: Scope,
    pub perturbation: Scope,
}

impl PolarizabilityKind {
    pub const ENSEMBLE: Self = PolarizabilityKind {
        response: Scope::Ensemble,
        perturbation: Scope::Ensemble,
    };
    pub const LOCAL_RESPONSE: Self = PolarizabilityKind {
        response: Scope::Local,
        perturbation: Scope::Ensemble,
    };
    pub const LOCAL_PERTURBATION: Self = PolarizabilityKind {
        response: Scope::Ensemble,
        perturbation: Scope::Local,
    };
    pub const LOCAL_LOCAL: Self = PolarizabilityKind {
        response: Scope::Local,
        perturbation: Scope::Local,
    };

    pub const ALL: [Self; 4] = [
        Self::ENSEMBLE,
        Self::LOCAL_RESPONSE,
        Self::LOCAL_PERTURBATION,
        Self::LOCAL_LOCAL,
    ];

    pub fn label(&self) -> String {
        format!("{}/{}", self.response.label(), self.perturbation.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    SelfConsistent,
    Perturbative,
    Bare,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::SelfConsistent => "self_consistent",
            Method::Perturbative => "perturbative",
            Method::Bare => "bare",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarizabilityReport {
    pub kind: PolarizabilityKind,
    pub method: Method,
    pub value: f64,
    pub n: usize,
    pub lambda: f64,
    /// Large-N limit along the fixed-collective-coupling family through
    /// (n, lambda), when defined.
    pub tc_limit: Option<f64>,
}

/// Bare matter polarizabilities: `(ensemble, single)` with
/// `alpha_i = Z_e^2 / (N_n k_e)` and the ensemble value `N alpha_i`.
pub fn bare_polarizability(config: &EnsembleConfig) -> (f64, f64) {
    let single = config.alpha_single();
    (config.n_molecules as f64 * single, single)
}

fn require_pair(
    kind: PolarizabilityKind,
    config: &EnsembleConfig,
    pair: Option<(usize, usize)>,
) -> Result<Option<(usize, usize)>> {
    if kind != PolarizabilityKind::LOCAL_LOCAL {
        return Ok(None);
    }
    let (i, j) = pair.ok_or_else(|| {
        Error::InvalidConfig("local/local polarizability needs a molecule pair (i, j)".into())
    })?;
    if i >= config.n_molecules || j >= config.n_molecules {
        return Err(Error::InvalidConfig(format!(
            "molecule pair ({i}, {j}) out of range for N = {}",
            config.n_molecules
        )));
    }
    Ok(Some((i, j)))
}

/// Exact self-consistent polarizability of the requested kind.
///
/// With `g2 = gamma^2(N, lambda)` and `a = alpha_i`:
///
/// * ensemble response / ensemble probe: `N a g2`
/// * local response / ensemble probe: `a g2`
/// * ensemble response / local probe: `a g2`
/// * local response / local probe: `a (1 - lambda^2 a g2)` on the probed
///   molecule and `-lambda^2 a^2 g2` on any other.
///
/// The local/local values sum back to the local-probe ensemble response,
/// and every value matches the quadratic-model response exactly.
pub fn self_consistent_polarizability(
    kind: PolarizabilityKind,
    config: &EnsembleConfig,
    pair: Option<(usize, usize)>,
) -> Result<PolarizabilityReport> {
    config.validate()?;
    let pair = require_pair(kind, config, pair)?;
    let n = config.n_molecules;
    let lambda = config.lambda;
    let alpha_i = config.alpha_single();
    let g2 = gamma_squared(n, lambda, alpha_i);

    let value = match (kind.response, kind.perturbation) {
        (Scope::Ensemble, Scope::Ensemble) => n as f64 * alpha_i * g2,
        (Scope::Local, Scope::Ensemble) | (Scope::Ensemble, Scope::Local) => alpha_i * g2,
        (Scope::Local, Scope::Local) => {
            let (i, j) = pair.unwrap();
            if i == j {
                alpha_i * (1.0 - lambda.powi(2) * alpha_i * g2)
            } else {
                -lambda.powi(2) * alpha_i.powi(2) * g2
            }
        }
    };

    let lambda_col = lambda * (n as f64).sqrt();
    let tc_limit = tavis_cummings_limit(kind, lambda_col, config, pair)?;

    Ok(PolarizabilityReport {
        kind,
        method: Method::SelfConsistent,
        value,
        n,
        lambda,
        tc_limit: Some(tc_limit),
    })
}

/// Polarizability with the probe field treated by perturbation theory.
///
/// The shift of the dressed oscillator drops out of the transition dipoles,
/// so only the renormalized excitation energy survives and the result is
/// `alpha_i gamma^2(1, lambda)` per molecule regardless of N — the scaling
/// pathology that [`verify_scaling_recipe`] exposes.
pub fn perturbative_polarizability(scope: Scope, config: &EnsembleConfig) -> PolarizabilityReport {
    let alpha_i = config.alpha_single();
    let local = alpha_i * gamma_squared(1, config.lambda, alpha_i);
    let (kind, value) = match scope {
        Scope::Local => (PolarizabilityKind::LOCAL_RESPONSE, local),
        Scope::Ensemble => (
            PolarizabilityKind::ENSEMBLE,
            config.n_molecules as f64 * local,
        ),
    };
    PolarizabilityReport {
        kind,
        method: Method::Perturbative,
        value,
        n: config.n_molecules,
        lambda: config.lambda,
        tc_limit: None,
    }
}

/// Large-N limit of the self-consistent polarizabilities along the
/// fixed-collective-coupling family `lambda = lambda_col / sqrt(N)`.
///
/// For the ensemble-probe kinds the finite-N value is already constant along
/// the family (it equals `alpha_i gamma^2(1, lambda_col)`); the ensemble
/// kind is reported per molecule.  The local/local values converge to the
/// uncoupled single-molecule response: `alpha_i` on the probed molecule and
/// zero elsewhere.
pub fn tavis_cummings_limit(
    kind: PolarizabilityKind,
    lambda_col: f64,
    config: &EnsembleConfig,
    pair: Option<(usize, usize)>,
) -> Result<f64> {
    if lambda_col < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "lambda_col must be >= 0, got {lambda_col}"
        )));
    }
    let alpha_i = config.alpha_single();
    let dressed = alpha_i * gamma_squared(1, lambda_col, alpha_i);
    Ok(match (kind.response, kind.perturbation) {
        (Scope::Ensemble, Scope::Ensemble)
        | (Scope::Local, Scope::Ensemble)
        | (Scope::Ensemble, Scope::Local) => dressed,
        (Scope::Local, Scope::Local) => {
            let (i, j) = pair.ok_or_else(|| {
                Error::InvalidConfig("local/local limit needs a molecule pair (i, j)".into())
            })?;
            if i == j {
                alpha_i
            } else {
                0.0
            }
        }
    })
}

/// The four numbers of the single-molecule scaling recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRecipeReport {
    pub n: usize,
    pub lambda_col: f64,
    /// Self-consistent local response at `(N, lambda_col / sqrt(N))`.
    pub sc_at_n: f64,
    /// Self-consistent local response at `(1, lambda_col)`.
    pub sc_at_1: f64,
    /// Perturbative local response at `(1, lambda_col)`.
    pub pert_at_1: f64,
    /// Perturbative local response at `(N, lambda_col / sqrt(N))`.
    pub pert_at_n: f64,
    pub max_identity_deviation: f64,
    /// Relative gap between the perturbative ensemble evaluation and the
    /// exact one; nonzero whenever N >= 2 and lambda_col > 0.
    pub pert_gap: f64,
    pub passed: bool,
}

/// Check the practical recipe: the dressed local response of an N-molecule
/// ensemble equals the single-molecule response at the collective coupling
/// (self-consistently or perturbatively), while the perturbative treatment
/// at the ensemble's own coupling disagrees.
///
/// Fails loudly when the three-way identity is violated beyond 1e-12
/// relative, since that can only be an implementation bug.
pub fn verify_scaling_recipe(
    config: &EnsembleConfig,
    lambda_col: f64,
) -> Result<ScalingRecipeReport> {
    let n = config.n_molecules;
    let lambda_n = lambda_col / (n as f64).sqrt();

    let at_n = config.clone().with_lambda(lambda_n);
    let at_1 = config.clone().with_lambda(lambda_col).with_n_molecules(1);

    let sc_at_n =
        self_consistent_polarizability(PolarizabilityKind::LOCAL_RESPONSE, &at_n, None)?.value;
    let sc_at_1 =
        self_consistent_polarizability(PolarizabilityKind::LOCAL_RESPONSE, &at_1, None)?.value;
    let pert_at_1 = perturbative_polarizability(Scope::Local, &at_1).value;
    let pert_at_n = perturbative_polarizability(Scope::Local, &at_n).value;

    let scale = sc_at_1.abs().max(f64::MIN_POSITIVE);
    let max_identity_deviation =
        ((sc_at_n - sc_at_1).abs().max((sc_at_1 - pert_at_1).abs())) / scale;
    let pert_gap = (pert_at_n - sc_at_n).abs() / scale;
    let gap_required = n >= 2 && lambda_col > 0.0;
    let passed = max_identity_deviation <= 1e-12 && (!gap_required || pert_gap > 1e-12);

    if max_identity_deviation > 1e-12 {
        return Err(Error::ScalingRecipeViolation {
            n,
            sc_at_n,
            sc_at_1,
            pert_at_1,
        });
    }

    Ok(ScalingRecipeReport {
        n,
        lambda_col,
        sc_at_n,
        sc_at_1,
        pert_at_1,
        pert_at_n,
        max_identity_deviation,
        pert_gap,
        passed,
    })
}

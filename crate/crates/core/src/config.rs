//! Run configuration: a sectioned TOML schema ([params], [grid], [data],
//! [solver], plus optional [lemmas], [estimates], [sweep] sections) with
//! strict unknown-key rejection, and assembly of a `ProblemSpec` from it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::inequality::SuiteConfig;
use crate::params::Params;
use crate::solver::{self, manufactured, NonlinearSettings, ProblemSpec, TraceFn};

/// `[params]` section: the continuous model parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub p: f64,
    pub delta: f64,
    pub eps: f64,
    pub n: usize,
}

/// `[grid]` section: the space-time box and its resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// per-axis intervals `[[a1, b1], ..., [an, bn]]`
    pub extent: Vec<[f64; 2]>,
    pub nx: Vec<usize>,
    pub dt: f64,
    pub nt: usize,
    #[serde(default)]
    pub t0: f64,
}

/// `[data]` section: initial/boundary trace and the source term.
///
/// `profile` selects the analytic family:
/// - `"manufactured"`: the built-in smooth nondegenerate benchmark (n = 2)
///   with its exact forcing, so solver output can be compared to a known
///   profile;
/// - `"linear"`: `u = offset + slopes . x`, zero forcing — stationary for the
///   degenerate operator whenever `|slopes| <= 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub profile: String,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub slopes: Vec<f64>,
    /// radius of the space-time mollifier applied to the source (0 = none)
    #[serde(default)]
    pub source_mollify: f64,
}

/// `[solver]` section: Newton controls. All fields default to the library
/// defaults, so the section may be omitted entirely.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub abs_tol: f64,
    pub damping: f64,
    pub fallback: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = NonlinearSettings::default();
        SolverConfig {
            max_iter: d.max_iter,
            abs_tol: d.abs_tol,
            damping: d.damping,
            fallback: d.fallback,
        }
    }
}

/// `[lemmas]` section: the randomized inequality suite. Optional; defaults
/// to the full acceptance sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmasConfig {
    pub p_values: Vec<f64>,
    pub delta_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub samples: usize,
    pub tolerance: f64,
    pub calibration_samples: usize,
}

impl Default for LemmasConfig {
    fn default() -> Self {
        let d = SuiteConfig::default();
        LemmasConfig {
            p_values: d.p_values,
            delta_values: d.delta_values,
            n_values: d.n_values,
            samples: d.samples,
            tolerance: d.tolerance,
            calibration_samples: d.calibration_samples,
        }
    }
}

impl LemmasConfig {
    pub fn suite(&self, seed: u64) -> SuiteConfig {
        SuiteConfig {
            p_values: self.p_values.clone(),
            delta_values: self.delta_values.clone(),
            n_values: self.n_values.clone(),
            samples: self.samples,
            seed,
            tolerance: self.tolerance,
            calibration_samples: self.calibration_samples,
        }
    }
}

/// `[estimates]` section: geometry of the report cylinders. Optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatesConfig {
    /// spatial center of the cylinders; vertex time is the final time level
    pub center: Vec<f64>,
    /// outer radius R of the Caccioppoli cylinder; the Lemma-3.1-style
    /// reports use rho = R/2
    pub radius: f64,
    /// axis of the difference-quotient report
    #[serde(default)]
    pub diff_axis: usize,
    /// translation |h| of the difference-quotient report; must be a grid
    /// multiple below rho/4
    pub diff_h: f64,
}

/// `[sweep]` section: the epsilon ladder of the comparison reports. Optional;
/// defaults to a four-rung halving ladder from the configured eps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps_ladder: Vec<f64>,
}

/// Full run configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsConfig,
    pub grid: GridConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub lemmas: LemmasConfig,
    #[serde(default)]
    pub estimates: Option<EstimatesConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    /// Parses and structurally validates a TOML document; unknown keys are
    /// rejected.
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_params()?;
        let g = &self.grid;
        if g.extent.len() != self.params.n || g.nx.len() != self.params.n {
            return Err(Error::InvalidInput(
                "grid.extent and grid.nx must have params.n entries".into(),
            ));
        }
        match self.data.profile.as_str() {
            "manufactured" => {
                if self.params.n != 2 {
                    return Err(Error::InvalidInput(
                        "the manufactured profile is two-dimensional".into(),
                    ));
                }
            }
            "linear" => {
                if self.data.slopes.len() != self.params.n {
                    return Err(Error::InvalidInput(
                        "data.slopes must have params.n entries".into(),
                    ));
                }
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown data.profile {other:?} (expected \"manufactured\" or \"linear\")"
                )));
            }
        }
        if self.data.source_mollify < 0.0 {
            return Err(Error::InvalidInput("data.source_mollify must be >= 0".into()));
        }
        if let Some(sw) = &self.sweep {
            if sw.eps_ladder.is_empty() || sw.eps_ladder.iter().any(|e| !(*e > 0.0)) {
                return Err(Error::InvalidInput(
                    "sweep.eps_ladder must be nonempty with positive entries".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn model_params(&self) -> Result<Params> {
        Params::new(self.params.p, self.params.delta, self.params.eps, self.params.n)
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        Grid::new(
            self.grid.extent.iter().map(|e| (e[0], e[1])).collect(),
            self.grid.nx.clone(),
            self.grid.dt,
            self.grid.nt,
            self.grid.t0,
        )
    }

    fn newton(&self) -> NonlinearSettings {
        NonlinearSettings {
            max_iter: self.solver.max_iter,
            abs_tol: self.solver.abs_tol,
            damping: self.solver.damping,
            fallback: self.solver.fallback,
        }
    }

    /// Assembles the initial-boundary value problem described by the config,
    /// optionally overriding eps (used by the epsilon sweep).
    pub fn build_problem(&self, eps_override: Option<f64>) -> Result<ProblemSpec> {
        let mut params = self.model_params()?;
        if let Some(e) = eps_override {
            params = Params::new(params.p, params.delta, e, params.n)?;
        }
        let grid = self.build_grid()?;
        let (boundary, f): (TraceFn, ScalarField) = match self.data.profile.as_str() {
            "manufactured" => {
                let prm = params;
                (
                    Arc::new(manufactured::exact),
                    ScalarField::from_fn(grid.clone(), |x, t| manufactured::forcing(x, t, &prm)),
                )
            }
            "linear" => {
                let offset = self.data.offset;
                let slopes = self.data.slopes.clone();
                let trace: TraceFn = Arc::new(move |x: &[f64], _t: f64| {
                    offset + x.iter().zip(&slopes).map(|(a, b)| a * b).sum::<f64>()
                });
                (trace, ScalarField::zeros(grid.clone()))
            }
            other => {
                return Err(Error::InvalidInput(format!("unknown data.profile {other:?}")));
            }
        };
        let f = if self.data.source_mollify > 0.0 {
            solver::mollify(&f, self.data.source_mollify)?
        } else {
            f
        };
        let t0 = grid.t0;
        let initial: Vec<f64> = (0..grid.spatial_len())
            .map(|i| (boundary)(&grid.coords(i), t0))
            .collect();
        Ok(ProblemSpec {
            params,
            grid,
            f,
            initial,
            boundary,
            newton: self.newton(),
        })
    }

    /// The halving ladder used by the epsilon sweep when `[sweep]` is absent.
    pub fn eps_ladder(&self) -> Vec<f64> {
        match &self.sweep {
            Some(sw) => sw.eps_ladder.clone(),
            None => (0..4).map(|k| self.params.eps / f64::powi(2.0, k)).collect(),
        }
    }
}

/// Stable 64-bit FNV-1a hash of the raw configuration bytes, recorded in
/// every output manifest so artifacts can be traced back to their inputs.
pub fn config_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_toml() -> &'static str {
        r#"
[params]
p = 3.0
delta = 0.5
eps = 0.1
n = 2

[grid]
extent = [[0.0, 2.0], [0.0, 2.0]]
nx = [17, 17]
dt = 0.025
nt = 5

[data]
profile = "manufactured"
"#
    }

    #[test]
    fn parses_and_builds_problem() {
        let cfg = RunConfig::from_toml(sample_toml()).unwrap();
        let spec = cfg.build_problem(None).unwrap();
        spec.validate(true).unwrap();
        assert_eq!(spec.grid.nx, vec![17, 17]);
        assert_eq!(spec.params.p, 3.0);
        // eps override feeds the sweep
        let spec2 = cfg.build_problem(Some(0.05)).unwrap();
        assert_eq!(spec2.params.eps, 0.05);
        assert_eq!(cfg.eps_ladder(), vec![0.1, 0.05, 0.025, 0.0125]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_profiles() {
        let bad = sample_toml().replace("profile = \"manufactured\"", "profil = \"x\"");
        assert!(RunConfig::from_toml(&bad).is_err());
        let bad = sample_toml().replace("manufactured", "mystery");
        assert!(RunConfig::from_toml(&bad).is_err());
        let bad = sample_toml().replace("n = 2", "n = 3");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn linear_profile_is_stationary_data() {
        let text = sample_toml()
            .replace("profile = \"manufactured\"", "profile = \"linear\"\nslopes = [0.9, 0.0]");
        let cfg = RunConfig::from_toml(&text).unwrap();
        let spec = cfg.build_problem(None).unwrap();
        assert!(spec.f.values().iter().all(|v| *v == 0.0));
        assert!((spec.initial[1] - (spec.boundary)(&spec.grid.coords(1), 0.0)).abs() < 1e-15);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = config_hash(sample_toml());
        assert_eq!(a, config_hash(sample_toml()));
        assert_ne!(a, config_hash(&sample_toml().replace("3.0", "4.0")));
    }
}

//! Run configuration: a flat, diff-able `key = value` text format with
//! dotted section prefixes (`grid.points_x = 41`). Unknown keys and
//! duplicate keys are errors — a config that parses is a config that was
//! read in full, with nothing silently ignored.

use crate::error::{KfpError, Result};
use crate::grid::PhaseGrid;
use crate::model::{ConfinementPotential, ControlShape};
use crate::riccati::RiccatiOptions;
use crate::simulate::{InitialKind, IntegratorConfig};
use std::collections::HashSet;
use std::path::{Path, PathBuf};

/// Which initial state `simulate` builds (parameters live alongside).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialChoice {
    Perturbed,
    Rotated,
    Equilibrium,
}

/// Everything one run needs. Field defaults reproduce the desk-scale
/// triple-well study: `(−5,5)²` with 41 points per axis, γ = β = 1,
/// shift δ = 0.2, four logistic control shapes, horizon 40.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub points_x: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub points_v: usize,
    /// `triple_well` or `polynomial` (with `model.coefficients`).
    pub potential_name: String,
    pub coefficients: Option<Vec<f64>>,
    pub gamma: f64,
    /// Temperature parameter of the model (the weight is `e^{−βH}`).
    pub beta: f64,
    /// Logistic shape centers, one control channel per entry.
    pub control_centers: Vec<f64>,
    pub delta: f64,
    /// Control penalty in the quadratic cost (`R = β_cost·I`); defaults to
    /// the model temperature.
    pub cost_beta: f64,
    pub riccati_update_tolerance: f64,
    pub riccati_residual_tolerance: f64,
    pub riccati_max_iterations: usize,
    pub rtol: f64,
    pub atol: f64,
    pub horizon: f64,
    pub samples: usize,
    pub initial: InitialChoice,
    pub amplitude: f64,
    pub theta: f64,
    pub out_dir: PathBuf,
    /// Seed for synthetic test-instance generation only; the pipeline
    /// itself is deterministic.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            x_min: -5.0,
            x_max: 5.0,
            points_x: 41,
            v_min: -5.0,
            v_max: 5.0,
            points_v: 41,
            potential_name: "triple_well".into(),
            coefficients: None,
            gamma: 1.0,
            beta: 1.0,
            control_centers: vec![3.0, 1.0, -1.0, -3.0],
            delta: 0.2,
            cost_beta: 1.0,
            riccati_update_tolerance: 1e-5,
            riccati_residual_tolerance: 1e-8,
            riccati_max_iterations: 50,
            rtol: 1e-3,
            atol: 1e-6,
            horizon: 40.0,
            samples: 401,
            initial: InitialChoice::Perturbed,
            amplitude: 0.5,
            theta: 0.5,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| {
        KfpError::Config(format!("key '{key}': cannot parse '{v}' as a number"))
    })
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|p| parse_num::<f64>(key, p))
        .collect::<Result<Vec<f64>>>()
        .and_then(|xs| {
            if xs.is_empty() {
                Err(KfpError::Config(format!("key '{key}': empty list")))
            } else {
                Ok(xs)
            }
        })
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            KfpError::Config(format!("cannot read config '{}': {e}", path.display()))
        })?;
        Self::from_str_validated(&text)
    }

    /// Parses and validates. Lines are `key = value`; `#` starts a comment;
    /// blank lines are skipped.
    pub fn from_str_validated(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut cost_beta_set = false;
        let mut seen: HashSet<String> = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                KfpError::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(KfpError::Config(format!("duplicate key '{key}'")));
            }
            match key {
                "grid.x_min" => cfg.x_min = parse_num(key, value)?,
                "grid.x_max" => cfg.x_max = parse_num(key, value)?,
                "grid.points_x" => cfg.points_x = parse_num(key, value)?,
                "grid.v_min" => cfg.v_min = parse_num(key, value)?,
                "grid.v_max" => cfg.v_max = parse_num(key, value)?,
                "grid.points_v" => cfg.points_v = parse_num(key, value)?,
                "model.potential" => cfg.potential_name = value.to_string(),
                "model.coefficients" => cfg.coefficients = Some(parse_list(key, value)?),
                "model.gamma" => cfg.gamma = parse_num(key, value)?,
                "model.beta" => cfg.beta = parse_num(key, value)?,
                "control.centers" => cfg.control_centers = parse_list(key, value)?,
                "riccati.delta" => cfg.delta = parse_num(key, value)?,
                "riccati.cost_beta" => {
                    cfg.cost_beta = parse_num(key, value)?;
                    cost_beta_set = true;
                }
                "riccati.update_tolerance" => {
                    cfg.riccati_update_tolerance = parse_num(key, value)?
                }
                "riccati.residual_tolerance" => {
                    cfg.riccati_residual_tolerance = parse_num(key, value)?
                }
                "riccati.max_iterations" => {
                    cfg.riccati_max_iterations = parse_num(key, value)?
                }
                "simulate.rtol" => cfg.rtol = parse_num(key, value)?,
                "simulate.atol" => cfg.atol = parse_num(key, value)?,
                "simulate.horizon" => cfg.horizon = parse_num(key, value)?,
                "simulate.samples" => cfg.samples = parse_num(key, value)?,
                "simulate.initial" => {
                    cfg.initial = match value {
                        "perturbed" => InitialChoice::Perturbed,
                        "rotated" => InitialChoice::Rotated,
                        "equilibrium" => InitialChoice::Equilibrium,
                        other => {
                            return Err(KfpError::Config(format!(
                                "key '{key}': unknown initial state '{other}' \
                                 (expected perturbed | rotated | equilibrium)"
                            )))
                        }
                    }
                }
                "simulate.amplitude" => cfg.amplitude = parse_num(key, value)?,
                "simulate.theta" => cfg.theta = parse_num(key, value)?,
                "output.dir" => cfg.out_dir = PathBuf::from(value),
                "seed" => cfg.seed = parse_num(key, value)?,
                other => {
                    return Err(KfpError::Config(format!(
                        "unknown key '{other}' (nothing is ignored silently)"
                    )))
                }
            }
        }
        if !cost_beta_set {
            cfg.cost_beta = cfg.beta;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        // Grid construction enforces odd point counts and ordered bounds.
        self.grid()?;
        match self.potential_name.as_str() {
            "triple_well" | "quadratic" => {
                if self.coefficients.is_some() {
                    return Err(KfpError::Config(
                        "model.coefficients is only meaningful with \
                         model.potential = polynomial"
                            .into(),
                    ));
                }
            }
            "polynomial" => {
                if self.coefficients.is_none() {
                    return Err(KfpError::Config(
                        "model.potential = polynomial requires model.coefficients".into(),
                    ));
                }
            }
            other => {
                return Err(KfpError::Config(format!(
                    "unknown potential '{other}' (expected triple_well | quadratic | polynomial)"
                )))
            }
        }
        for (name, v) in [
            ("model.gamma", self.gamma),
            ("model.beta", self.beta),
            ("riccati.delta", self.delta),
            ("riccati.cost_beta", self.cost_beta),
            ("riccati.update_tolerance", self.riccati_update_tolerance),
            ("riccati.residual_tolerance", self.riccati_residual_tolerance),
            ("simulate.rtol", self.rtol),
            ("simulate.atol", self.atol),
            ("simulate.horizon", self.horizon),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(KfpError::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.riccati_max_iterations == 0 {
            return Err(KfpError::Config("riccati.max_iterations must be ≥ 1".into()));
        }
        if self.samples < 2 {
            return Err(KfpError::Config("simulate.samples must be ≥ 2".into()));
        }
        if !self.amplitude.is_finite() {
            return Err(KfpError::Config(format!(
                "simulate.amplitude must be finite, got {}",
                self.amplitude
            )));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(KfpError::Config(format!(
                "simulate.theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if self.control_centers.iter().any(|c| !c.is_finite()) {
            return Err(KfpError::Config("control.centers must be finite".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<PhaseGrid> {
        PhaseGrid::new(
            self.x_min,
            self.x_max,
            self.points_x,
            self.v_min,
            self.v_max,
            self.points_v,
        )
    }

    pub fn potential(&self) -> Result<ConfinementPotential> {
        match self.potential_name.as_str() {
            "triple_well" => Ok(ConfinementPotential::TripleWell),
            "quadratic" => Ok(ConfinementPotential::Quadratic),
            "polynomial" => ConfinementPotential::polynomial(
                self.coefficients.clone().unwrap_or_default(),
            ),
            other => Err(KfpError::Config(format!("unknown potential '{other}'"))),
        }
    }

    pub fn shapes(&self) -> Vec<ControlShape> {
        self.control_centers
            .iter()
            .map(|&c| ControlShape::Logistic { center: c })
            .collect()
    }

    pub fn initial_kind(&self) -> InitialKind {
        match self.initial {
            InitialChoice::Perturbed => InitialKind::Perturbed,
            InitialChoice::Rotated => InitialKind::Rotated { theta: self.theta },
            InitialChoice::Equilibrium => InitialKind::Perturbed,
        }
    }

    /// Amplitude actually applied (zero for the equilibrium start).
    pub fn effective_amplitude(&self) -> f64 {
        match self.initial {
            InitialChoice::Equilibrium => 0.0,
            _ => self.amplitude,
        }
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let k = self.samples - 1;
        let times =
            (0..=k).map(|i| self.horizon * i as f64 / k as f64).collect::<Vec<_>>();
        IntegratorConfig {
            rtol: self.rtol,
            atol: self.atol,
            max_step: None,
            output_times: Some(times),
        }
    }

    pub fn riccati_options(&self) -> RiccatiOptions {
        RiccatiOptions {
            max_iterations: self.riccati_max_iterations,
            update_tolerance: self.riccati_update_tolerance,
            residual_tolerance: self.riccati_residual_tolerance,
            keep_iterates: false,
        }
    }

    /// Metadata pairs persisted with Π so `simulate` can verify it matches
    /// the config it is asked to serve.
    pub fn pi_metadata(&self) -> Vec<(String, String)> {
        let mut m = vec![
            ("grid.x_min".into(), format!("{:.16e}", self.x_min)),
            ("grid.x_max".into(), format!("{:.16e}", self.x_max)),
            ("grid.points_x".into(), self.points_x.to_string()),
            ("grid.v_min".into(), format!("{:.16e}", self.v_min)),
            ("grid.v_max".into(), format!("{:.16e}", self.v_max)),
            ("grid.points_v".into(), self.points_v.to_string()),
            ("model.potential".into(), self.potential_name.clone()),
            ("model.gamma".into(), format!("{:.16e}", self.gamma)),
            ("model.beta".into(), format!("{:.16e}", self.beta)),
            (
                "control.centers".into(),
                self.control_centers
                    .iter()
                    .map(|c| format!("{c:.16e}"))
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("riccati.delta".into(), format!("{:.16e}", self.delta)),
            ("riccati.cost_beta".into(), format!("{:.16e}", self.cost_beta)),
        ];
        if let Some(cs) = &self.coefficients {
            m.push((
                "model.coefficients".into(),
                cs.iter().map(|c| format!("{c:.16e}")).collect::<Vec<_>>().join(","),
            ));
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_yields_the_desk_defaults() {
        let cfg = RunConfig::from_str_validated("").unwrap();
        assert_eq!(cfg.points_x, 41);
        assert_eq!(cfg.control_centers, vec![3.0, 1.0, -1.0, -3.0]);
        assert_eq!(cfg.delta, 0.2);
        assert_eq!(cfg.cost_beta, cfg.beta);
        assert_eq!(cfg.horizon, 40.0);
        assert_eq!(cfg.initial, InitialChoice::Perturbed);
    }

    #[test]
    fn every_key_round_trips() {
        let text = "
# full override
grid.x_min = -4        # trailing comment
grid.x_max = 4
grid.points_x = 31
grid.v_min = -6
grid.v_max = 6
grid.points_v = 33
model.potential = polynomial
model.coefficients = 0, 0, 0.5
model.gamma = 0.7
model.beta = 1.3
control.centers = 2, -2
riccati.delta = 0.15
riccati.cost_beta = 2.5
riccati.update_tolerance = 1e-6
riccati.residual_tolerance = 1e-9
riccati.max_iterations = 30
simulate.rtol = 1e-4
simulate.atol = 1e-8
simulate.horizon = 10
simulate.samples = 101
simulate.initial = rotated
simulate.amplitude = 0.25
simulate.theta = 0.3
output.dir = results/run1
seed = 42
";
        let cfg = RunConfig::from_str_validated(text).unwrap();
        assert_eq!(cfg.points_v, 33);
        assert_eq!(cfg.coefficients, Some(vec![0.0, 0.0, 0.5]));
        assert_eq!(cfg.control_centers, vec![2.0, -2.0]);
        assert_eq!(cfg.cost_beta, 2.5);
        assert_eq!(cfg.initial, InitialChoice::Rotated);
        assert_eq!(cfg.theta, 0.3);
        assert_eq!(cfg.out_dir, PathBuf::from("results/run1"));
        assert_eq!(cfg.seed, 42);
        // The grid and potential constructors accept the parsed values.
        cfg.grid().unwrap();
        cfg.potential().unwrap();
        assert_eq!(cfg.shapes().len(), 2);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected_by_name() {
        let err = RunConfig::from_str_validated("grid.ponts_x = 41").unwrap_err();
        assert!(err.to_string().contains("grid.ponts_x"), "{err}");
        let err =
            RunConfig::from_str_validated("model.gamma = 1\nmodel.gamma = 2").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        let err = RunConfig::from_str_validated("just some words").unwrap_err();
        assert!(err.to_string().contains("key = value"), "{err}");
    }

    #[test]
    fn numeric_validation_names_the_offending_key() {
        for (text, needle) in [
            ("grid.points_x = 40", "points_x"),
            ("riccati.delta = 0", "riccati.delta"),
            ("riccati.delta = -0.2", "riccati.delta"),
            ("simulate.rtol = 0", "simulate.rtol"),
            ("simulate.theta = 1.5", "simulate.theta"),
            ("model.gamma = nope", "model.gamma"),
            ("model.potential = mystery", "mystery"),
            ("model.coefficients = 1,2", "coefficients"),
            ("simulate.samples = 1", "samples"),
        ] {
            let err = RunConfig::from_str_validated(text).unwrap_err();
            assert!(
                err.to_string().contains(needle),
                "config '{text}' should fail mentioning '{needle}', got: {err}"
            );
        }
        let err = RunConfig::from_str_validated("model.potential = polynomial").unwrap_err();
        assert!(err.to_string().contains("coefficients"), "{err}");
    }

    #[test]
    fn equilibrium_initial_forces_zero_amplitude() {
        let cfg = RunConfig::from_str_validated(
            "simulate.initial = equilibrium\nsimulate.amplitude = 0.5",
        )
        .unwrap();
        assert_eq!(cfg.effective_amplitude(), 0.0);
        let times = cfg.integrator_config().output_times.unwrap();
        assert_eq!(times.len(), cfg.samples);
        assert_eq!(*times.last().unwrap(), cfg.horizon);
    }
}

//! Experiment configuration.
//!
//! A run is described by flat `key = value` pairs: per-experiment defaults,
//! overlaid by an optional config file, overlaid by command-line flags. The
//! resolved [`ExperimentConfig`] is echoed into every report.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use clap::Subcommand;
use serde::{Deserialize, Serialize};

use homlab_core::estimators::check_decay_parameters;
use homlab_core::{DirectionVector, EnsembleSpec, SolverConfig, TorusLattice};

use crate::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Exact identities and the single-bond derivative identities.
    VerifyIdentities,
    /// Coercivity, oscillation bound and Leibniz-rule inequalities.
    IneqSuite,
    /// Corrector moments along a T grid.
    Moments,
    /// Spectral gap inequality for the corrector at the origin.
    SgCheck,
    /// Caccioppoli estimate in probability along a T grid.
    Caccioppoli,
    /// Green's-gradient decay over dyadic annuli.
    GreenDecay,
    /// Homogenized coefficient in one direction.
    Ahom,
    /// Sublinear growth profile of the anchored corrector.
    Growth,
    /// Neighbour distance after deleting a bond (modified Bernoulli).
    NeighborDist,
    /// Sample environments and write them to disk.
    Gen,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::VerifyIdentities => "verify-identities",
            Experiment::IneqSuite => "ineq-suite",
            Experiment::Moments => "moments",
            Experiment::SgCheck => "sg-check",
            Experiment::Caccioppoli => "caccioppoli",
            Experiment::GreenDecay => "green-decay",
            Experiment::Ahom => "ahom",
            Experiment::Growth => "growth",
            Experiment::NeighborDist => "neighbor-dist",
            Experiment::Gen => "gen",
        }
    }

    /// Defaults applied before the config file and flags.
    fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Experiment::VerifyIdentities => {
                &[("ensemble", "iid-uniform"), ("side", "4"), ("t", "8"), ("samples", "50"), ("tolerance", "1e-13")]
            }
            Experiment::IneqSuite => &[("side", "8"), ("p", "5"), ("tolerance", "1e-12")],
            Experiment::Moments => &[("t", "4,16,64,256"), ("samples", "30")],
            Experiment::SgCheck => &[("side", "4"), ("t", "16"), ("samples", "200")],
            Experiment::Caccioppoli => &[("t", "16,64,256"), ("samples", "8")],
            Experiment::GreenDecay => &[("side", "64"), ("t", "256"), ("p", "1.5")],
            Experiment::Ahom => &[("side", "32"), ("t", "256"), ("samples", "30")],
            Experiment::Growth => &[("side", "128"), ("t", "4096")],
            Experiment::NeighborDist => &[("lambda", "0.5"), ("side", "32"), ("samples", "10000")],
            Experiment::Gen => &[("side", "16"), ("samples", "1")],
        }
    }
}

/// Every accepted key with its shared default (empty when there is none).
const KEYS: &[(&str, &str)] = &[
    ("ensemble", "modified-bernoulli"),
    ("lambda", "0.7"),
    ("open-axis", "0"),
    ("lo", "0"),
    ("hi", "1"),
    ("value", "1"),
    ("dim", "3"),
    ("side", ""),
    ("t", "16"),
    ("p", "2"),
    ("samples", "20"),
    ("seed", "1"),
    ("tolerance", "1e-10"),
    ("max-iterations", ""),
    ("e", "0,1,0"),
    ("h", "1e-4"),
    ("h-ratio", "1e-2"),
    ("trials", "1000"),
    ("pairs", "1000000"),
    ("leibniz-p", "1,2,4"),
    ("r0", "2"),
    ("k", "3"),
    ("slope-tol", "0.3"),
    ("slope-max", "-1.5"),
    ("theta", "0.5"),
    ("radii", "8,16,32,64"),
    ("axis", "1"),
    ("band", "2"),
    ("ratio-lo", "0.8"),
    ("ratio-hi", "1.25"),
    ("out", ""),
];

/// Fully resolved run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub ensemble: EnsembleSpec,
    pub dim: usize,
    /// Lattice side; `None` picks `max(16, 8 ceil(sqrt T))` per `T`, capped at 128.
    pub side: Option<usize>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub e: Vec<f64>,
    pub h: f64,
    pub h_ratio: f64,
    pub trials: usize,
    pub pairs: usize,
    pub leibniz_p: Vec<u32>,
    pub r0: f64,
    pub k: usize,
    pub slope_tol: f64,
    pub slope_max: f64,
    pub theta: f64,
    pub radii: Vec<usize>,
    pub axis: usize,
    pub band: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    /// Not part of the report: outputs must not depend on where they are written.
    #[serde(skip)]
    pub out: Option<String>,
}

/// Raw `key -> value` pairs with later layers overriding earlier ones.
#[derive(Clone, Debug, Default)]
pub struct RawConfig(BTreeMap<String, String>);

fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl RawConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, RunError> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| RunError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            let key = normalize_key(k);
            if !KEYS.iter().any(|(name, _)| *name == key) {
                return Err(RunError::Usage(format!("config line {}: unknown key `{key}`", n + 1)));
            }
            map.insert(key, v.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(normalize_key(key), value.to_string());
    }

    pub fn overlay(&mut self, other: &RawConfig) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    fn get(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse_key<T: FromStr>(&self, key: &str) -> Result<T, RunError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse().map_err(|e| RunError::Usage(format!("bad value `{v}` for `{key}`: {e}")))
    }

    fn parse_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, RunError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .split(',')
            .map(|s| s.trim().parse().map_err(|e| RunError::Usage(format!("bad entry `{s}` in `{key}`: {e}"))))
            .collect()
    }

    fn parse_optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, RunError>
    where
        T::Err: std::fmt::Display,
    {
        if self.get(key).is_empty() {
            Ok(None)
        } else {
            self.parse_key(key).map(Some)
        }
    }

    /// Layers defaults under `self` and resolves the result.
    pub fn resolve(&self, experiment: Experiment) -> Result<ExperimentConfig, RunError> {
        let mut raw = RawConfig::default();
        for (k, v) in KEYS.iter().chain(experiment.defaults()) {
            raw.set(k, v);
        }
        raw.overlay(self);
        let cfg = raw.build(experiment)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn build(&self, experiment: Experiment) -> Result<ExperimentConfig, RunError> {
        let ensemble = match self.get("ensemble") {
            "modified-bernoulli" => EnsembleSpec::ModifiedBernoulli {
                lambda: self.parse_key("lambda")?,
                open_axis: self.parse_key("open-axis")?,
            },
            "iid-bernoulli" => EnsembleSpec::IidBernoulli { lambda: self.parse_key("lambda")? },
            "iid-uniform" => EnsembleSpec::IidUniform { lo: self.parse_key("lo")?, hi: self.parse_key("hi")? },
            "deterministic" => EnsembleSpec::Deterministic { value: self.parse_key("value")? },
            other => {
                return Err(RunError::Usage(format!(
                    "unknown ensemble `{other}` (modified-bernoulli, iid-bernoulli, iid-uniform, deterministic)"
                )))
            }
        };
        let e = DirectionVector::normalized(self.parse_list("e")?).map_err(|e| RunError::Usage(e.to_string()))?;
        let out = Some(self.get("out").to_string()).filter(|s| !s.is_empty());
        Ok(ExperimentConfig {
            experiment,
            ensemble,
            dim: self.parse_key("dim")?,
            side: self.parse_optional("side")?,
            t: self.parse_list("t")?,
            p: self.parse_list("p")?,
            samples: self.parse_key("samples")?,
            seed: self.parse_key("seed")?,
            solver: SolverConfig {
                tolerance: self.parse_key("tolerance")?,
                max_iterations: self.parse_optional("max-iterations")?,
                precondition: true,
            },
            e: e.components().to_vec(),
            h: self.parse_key("h")?,
            h_ratio: self.parse_key("h-ratio")?,
            trials: self.parse_key("trials")?,
            pairs: self.parse_key("pairs")?,
            leibniz_p: self.parse_list("leibniz-p")?,
            r0: self.parse_key("r0")?,
            k: self.parse_key("k")?,
            slope_tol: self.parse_key("slope-tol")?,
            slope_max: self.parse_key("slope-max")?,
            theta: self.parse_key("theta")?,
            radii: self.parse_list("radii")?,
            axis: self.parse_key("axis")?,
            band: self.parse_key("band")?,
            ratio_lo: self.parse_key("ratio-lo")?,
            ratio_hi: self.parse_key("ratio-hi")?,
            out,
        })
    }
}

fn usage(e: homlab_core::Error) -> RunError {
    RunError::Usage(e.to_string())
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<(), RunError> {
    if ok {
        Ok(())
    } else {
        Err(RunError::Usage(msg()))
    }
}

impl ExperimentConfig {
    /// Side for a given `T`.
    pub fn side_for(&self, t: f64) -> usize {
        self.side.unwrap_or_else(|| homlab_core::estimators::default_side(t))
    }

    pub fn direction(&self) -> DirectionVector {
        DirectionVector::new(self.e.clone()).expect("validated direction")
    }

    pub fn first_p(&self) -> f64 {
        self.p[0]
    }

    /// Checks every precondition of the target operation; nothing is solved.
    pub fn validate(&self) -> Result<(), RunError> {
        self.ensemble.validate(self.dim).map_err(usage)?;
        self.solver.validate().map_err(usage)?;
        require(self.e.len() == self.dim, || format!("direction has {} components, d = {}", self.e.len(), self.dim))?;
        require(!self.t.is_empty() && self.t.iter().all(|&t| t > 0.0 && t.is_finite()), || {
            format!("every T must be positive and finite, got {:?}", self.t)
        })?;
        require(!self.p.is_empty(), || "p list is empty".into())?;
        for &t in &self.t {
            TorusLattice::new(self.dim, self.side_for(t)).map_err(usage)?;
        }
        let p = self.first_p();
        match self.experiment {
            Experiment::VerifyIdentities => {
                require(self.samples >= 1, || "need at least one configuration".into())?;
                require(self.h > 0.0 && self.h_ratio > 0.0 && self.h_ratio <= 0.25, || {
                    format!("steps must satisfy h > 0 and 0 < h-ratio <= 0.25, got {} and {}", self.h, self.h_ratio)
                })?;
            }
            Experiment::IneqSuite => {
                let d = self.dim as f64;
                require(p > d + 1.0, || format!("coercivity needs p > d + 1 = {}, got {p}", d + 1.0))?;
                require(self.leibniz_p.iter().all(|&q| q >= 1), || "Leibniz exponents must be >= 1".into())?;
            }
            Experiment::Moments => {
                require(self.p.iter().all(|&q| q >= 1.0), || {
                    format!("moment exponents must be >= 1, got {:?}", self.p)
                })?;
                require(self.samples >= 2, || "moments need at least 2 samples".into())?;
                require(self.ratio_lo < self.ratio_hi, || "ratio-lo must be below ratio-hi".into())?;
            }
            Experiment::SgCheck => {
                require(self.ensemble.is_product(), || "spectral gap check needs a product ensemble".into())?;
                require(self.samples >= 2, || "need at least 2 samples".into())?;
            }
            Experiment::Caccioppoli => {
                require(p >= 2.0 && p.fract() == 0.0 && (p as u32).is_multiple_of(2), || {
                    format!("Caccioppoli exponent must be an even integer >= 2, got {p}")
                })?;
                require(self.samples >= 2, || "need at least 2 samples".into())?;
            }
            Experiment::GreenDecay => {
                let side = self.side_for(self.t[0]);
                check_decay_parameters(self.dim, side, self.t[0], p, self.r0, self.k).map_err(usage)?;
            }
            Experiment::Ahom => require(self.samples >= 1, || "need at least one sample".into())?,
            Experiment::Growth => {
                let side = self.side_for(self.t[0]);
                require(self.theta > 0.0 && self.theta < 1.0, || {
                    format!("theta must lie in (0, 1), got {}", self.theta)
                })?;
                require(!self.radii.is_empty() && self.radii.iter().all(|&r| r >= 1 && 2 * r <= side), || {
                    format!("radii must lie in [1, L/2 = {}]", side / 2)
                })?;
            }
            Experiment::NeighborDist => {
                let EnsembleSpec::ModifiedBernoulli { lambda, open_axis } = self.ensemble else {
                    return Err(RunError::Usage("neighbor-dist runs on the modified Bernoulli ensemble".into()));
                };
                require(lambda > 0.0, || "lambda must lie in (0, 1]".into())?;
                require(open_axis == 0, || "neighbor-dist uses open axis 0".into())?;
                require(self.axis != 0 && self.axis < self.dim, || {
                    format!("axis must differ from the open axis 0 and be < {}", self.dim)
                })?;
                require(p >= 1.0, || format!("p must be >= 1, got {p}"))?;
                require(self.samples >= 1, || "need at least one trial".into())?;
            }
            Experiment::Gen => require(self.samples >= 1, || "need at least one sample".into())?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_layering() {
        let file = RawConfig::parse("# run\nlambda = 0.6\nmax_iterations=500 # cap\n\nt = 4, 16\n").unwrap();
        let mut flags = RawConfig::default();
        flags.set("lambda", 0.9);
        let mut raw = file.clone();
        raw.overlay(&flags);
        let cfg = raw.resolve(Experiment::Moments).unwrap();
        assert_eq!(cfg.ensemble, EnsembleSpec::modified_bernoulli(0.9));
        assert_eq!(cfg.t, vec![4.0, 16.0]);
        assert_eq!(cfg.solver.max_iterations, Some(500));
        assert_eq!(cfg.side, None);
        assert_eq!(cfg.side_for(256.0), 128);
        assert_eq!(cfg.samples, 30);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RawConfig::parse("nonsense"), Err(RunError::Usage(_))));
        assert!(matches!(RawConfig::parse("colour = red"), Err(RunError::Usage(_))));
        let mut raw = RawConfig::default();
        raw.set("p", 2.5);
        assert!(matches!(raw.resolve(Experiment::GreenDecay), Err(RunError::Usage(_))));
        let mut raw = RawConfig::default();
        raw.set("lambda", 1.5);
        assert!(raw.resolve(Experiment::Moments).is_err());
        let mut raw = RawConfig::default();
        raw.set("p", 3);
        assert!(raw.resolve(Experiment::Caccioppoli).is_err());
        let mut raw = RawConfig::default();
        raw.set("axis", 0);
        assert!(raw.resolve(Experiment::NeighborDist).is_err());
    }

    #[test]
    fn direction_is_normalized() {
        let mut raw = RawConfig::default();
        raw.set("e", "3,0,4");
        let cfg = raw.resolve(Experiment::Ahom).unwrap();
        assert_eq!(cfg.e, vec![0.6, 0.0, 0.8]);
    }
}

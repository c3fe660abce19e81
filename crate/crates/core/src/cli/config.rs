//! Run configuration: flags, config files, sweeps and model construction.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::collision::{AncillaCoupling, CollisionBlocks, ModelSpec, SystemCoupling};
use crate::error::{Error, Result};
use crate::symplectic::{CovarianceMatrix, TOL_POS};

/// Largest number of sweep cells a single run may request.
pub const MAX_SWEEP_CELLS: usize = 1_000_000;
/// Largest number of collisions a single run may request.
pub const MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bs,
    Tms,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Intermediate maps evaluated by the divisibility command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Pairs {
    /// Every `0 ≤ n < m ≤ n_max`.
    All,
    /// Only `m = n + 1`.
    Consecutive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    LambdaS,
    LambdaE,
    NuE,
    Theta0Thermal,
    EpsilonThermal,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::LambdaS => "lambda_s",
            SweepVar::LambdaE => "lambda_e",
            SweepVar::NuE => "nu_e",
            SweepVar::Theta0Thermal => "theta0_thermal",
            SweepVar::EpsilonThermal => "epsilon_thermal",
        }
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "lambda_s" => Ok(SweepVar::LambdaS),
            "lambda_e" => Ok(SweepVar::LambdaE),
            "nu_e" => Ok(SweepVar::NuE),
            "theta0_thermal" => Ok(SweepVar::Theta0Thermal),
            "epsilon_thermal" => Ok(SweepVar::EpsilonThermal),
            other => Err(Error::Config(format!("unknown sweep variable '{other}'"))),
        }
    }
}

/// `var=start:stop:steps`, `steps` points including both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub var: SweepVar,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let h = (self.stop - self.start) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| if k + 1 == self.steps { self.stop } else { self.start + h * k as f64 })
            .collect()
    }
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("sweep '{s}' is not of the form var=start:stop:steps"));
        let (var, range) = s.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if steps == 0 || !start.is_finite() || !stop.is_finite() {
            return Err(bad());
        }
        Ok(Sweep { var: var.trim().parse()?, start, stop, steps })
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub model: ModelKind,
    pub lambda_s: f64,
    pub lambda_e: f64,
    pub nu_e: f64,
    pub blocks: Option<PathBuf>,
    pub theta0_thermal: f64,
    pub epsilon_thermal: f64,
    pub n_max: usize,
    pub sweeps: Vec<Sweep>,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub tol: f64,
    pub kappa_max: f64,
    pub step: Option<usize>,
    pub pairs: Pairs,
    pub consolidate: bool,
}

/// Every field optional; the shape of a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub model: Option<ModelKind>,
    pub lambda_s: Option<f64>,
    pub lambda_e: Option<f64>,
    pub nu_e: Option<f64>,
    pub blocks: Option<PathBuf>,
    pub theta0_thermal: Option<f64>,
    pub epsilon_thermal: Option<f64>,
    pub n_max: Option<usize>,
    pub sweeps: Option<Vec<Sweep>>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub tol: Option<f64>,
    pub kappa_max: Option<f64>,
    pub step: Option<usize>,
    pub pairs: Option<Pairs>,
    pub consolidate: Option<bool>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `self` win over `base`.
    pub fn over(self, base: PartialConfig) -> PartialConfig {
        PartialConfig {
            model: self.model.or(base.model),
            lambda_s: self.lambda_s.or(base.lambda_s),
            lambda_e: self.lambda_e.or(base.lambda_e),
            nu_e: self.nu_e.or(base.nu_e),
            blocks: self.blocks.or(base.blocks),
            theta0_thermal: self.theta0_thermal.or(base.theta0_thermal),
            epsilon_thermal: self.epsilon_thermal.or(base.epsilon_thermal),
            n_max: self.n_max.or(base.n_max),
            sweeps: self.sweeps.or(base.sweeps),
            format: self.format.or(base.format),
            out: self.out.or(base.out),
            jobs: self.jobs.or(base.jobs),
            tol: self.tol.or(base.tol),
            kappa_max: self.kappa_max.or(base.kappa_max),
            step: self.step.or(base.step),
            pairs: self.pairs.or(base.pairs),
            consolidate: self.consolidate.or(base.consolidate),
        }
    }

    /// Fills defaults and checks ranges. `env_jobs` is the `GAUCOLL_JOBS` value.
    pub fn resolve(self, command: &str, env_jobs: Option<&str>) -> Result<RunConfig> {
        let jobs = match (self.jobs, env_jobs) {
            (Some(j), _) => j,
            (None, Some(v)) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("GAUCOLL_JOBS='{v}' is not a positive integer")))?,
            (None, None) => 1,
        };
        let cfg = RunConfig {
            command: command.to_string(),
            model: self.model.unwrap_or(ModelKind::Bs),
            lambda_s: self.lambda_s.unwrap_or(0.5),
            lambda_e: self.lambda_e.unwrap_or(0.0),
            nu_e: self.nu_e.unwrap_or(0.0),
            blocks: self.blocks,
            theta0_thermal: self.theta0_thermal.unwrap_or(20.0),
            epsilon_thermal: self.epsilon_thermal.unwrap_or(0.0),
            n_max: self.n_max.unwrap_or(50),
            sweeps: self.sweeps.unwrap_or_default(),
            format: self.format.unwrap_or(Format::Csv),
            out: self.out,
            jobs,
            tol: self.tol.unwrap_or(TOL_POS),
            kappa_max: self.kappa_max.unwrap_or(crate::divisibility::KAPPA_MAX),
            step: self.step,
            pairs: self.pairs.unwrap_or(Pairs::All),
            consolidate: self.consolidate.unwrap_or(false),
        };
        cfg.check()?;
        Ok(cfg)
    }
}

impl RunConfig {
    fn check(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.sweeps.len() > 2 {
            return Err(Error::Config("at most two sweep variables are supported".into()));
        }
        if self.sweeps.len() == 2 && self.sweeps[0].var == self.sweeps[1].var {
            return Err(Error::Config("the two sweep variables must differ".into()));
        }
        for (name, v) in [
            ("lambda_s", self.lambda_s),
            ("lambda_e", self.lambda_e),
            ("nu_e", self.nu_e),
            ("theta0_thermal", self.theta0_thermal),
            ("epsilon_thermal", self.epsilon_thermal),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Config("tol must be a non-negative number".into()));
        }
        if self.kappa_max.is_nan() || self.kappa_max <= 1.0 {
            return Err(Error::Config("kappa_max must exceed 1".into()));
        }
        if self.model == ModelKind::General {
            if self.blocks.is_none() {
                return Err(Error::Config("the general model needs --blocks <file.json>".into()));
            }
            if !self.sweeps.is_empty() {
                return Err(Error::Config("sweeps are not available for the general model".into()));
            }
        }
        if self.n_max > MAX_STEPS {
            return Err(Error::Resource(format!("n_max {} exceeds {MAX_STEPS}", self.n_max)));
        }
        if self.sweeps.iter().map(|s| s.steps).product::<usize>() > MAX_SWEEP_CELLS {
            return Err(Error::Resource(format!("sweep exceeds {MAX_SWEEP_CELLS} cells")));
        }
        Ok(())
    }

    /// Serialization recorded in output headers. Parallelism and output path
    /// do not affect results and are left out.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("jobs");
            obj.remove("out");
        }
        serde_json::to_string(&v).expect("config serializes")
    }

    /// Parameter points of the sweep grid, first variable slowest.
    pub fn cells(&self) -> Vec<Vec<(SweepVar, f64)>> {
        let mut cells: Vec<Vec<(SweepVar, f64)>> = vec![Vec::new()];
        for sweep in &self.sweeps {
            let values = sweep.values();
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut c = prefix.clone();
                        c.push((sweep.var, v));
                        c
                    })
                })
                .collect();
        }
        cells
    }

    /// Model of one sweep cell.
    pub fn model_at(&self, cell: &[(SweepVar, f64)]) -> Result<ModelSpec> {
        let mut p = self.clone();
        for &(var, v) in cell {
            match var {
                SweepVar::LambdaS => p.lambda_s = v,
                SweepVar::LambdaE => p.lambda_e = v,
                SweepVar::NuE => p.nu_e = v,
                SweepVar::Theta0Thermal => p.theta0_thermal = v,
                SweepVar::EpsilonThermal => p.epsilon_thermal = v,
            }
        }
        p.model()
    }

    pub fn model(&self) -> Result<ModelSpec> {
        let thermal = |name: &str, occ: f64| {
            if occ < 0.0 {
                Err(Error::Config(format!("{name} occupation must be non-negative")))
            } else {
                Ok(CovarianceMatrix::thermal(1, occ))
            }
        };
        let spec = match self.model {
            ModelKind::Bs => ModelSpec::beam_splitter(self.lambda_s, self.lambda_e),
            ModelKind::Tms => ModelSpec::two_mode_squeezing(self.lambda_s, self.nu_e),
            ModelKind::General => {
                let path = self.blocks.as_ref().ok_or_else(|| Error::Config("missing --blocks".into()))?;
                return GeneralModel::from_file(path)?.into_spec();
            }
        };
        Ok(spec
            .with_system_init(thermal("theta0", self.theta0_thermal)?)
            .with_ancilla_state(thermal("epsilon", self.epsilon_thermal)?))
    }
}

/// Block-matrix description of a general model, row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralModel {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    #[serde(rename = "J")]
    pub j: Vec<Vec<f64>>,
    pub epsilon: Vec<Vec<f64>>,
    pub theta0: Vec<Vec<f64>>,
}

pub fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("matrix {name} must be a non-empty rectangular array")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl GeneralModel {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read blocks {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("blocks {}: {e}", path.display())))
    }

    pub fn into_spec(self) -> Result<ModelSpec> {
        let m = |name: &str, rows: &[Vec<f64>]| matrix_from_rows(name, rows);
        let theta0 = CovarianceMatrix::new(m("theta0", &self.theta0)?)?;
        let epsilon = CovarianceMatrix::new(m("epsilon", &self.epsilon)?)?;
        let spec = ModelSpec {
            system_modes: theta0.modes(),
            ancilla_modes: epsilon.modes(),
            system_coupling: SystemCoupling::General(CollisionBlocks {
                a: m("A", &self.a)?,
                b: m("B", &self.b)?,
                c: m("C", &self.c)?,
                d: m("D", &self.d)?,
            }),
            ancilla_coupling: AncillaCoupling::General(CollisionBlocks {
                a: m("E", &self.e)?,
                b: m("F", &self.f)?,
                c: m("G", &self.g)?,
                d: m("J", &self.j)?,
            }),
            ancilla_state: epsilon,
            system_init: theta0,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        let s: Sweep = "lambda_s=0:3:4".parse().unwrap();
        assert_eq!(s.var, SweepVar::LambdaS);
        assert_eq!(s.values(), vec![0.0, 1.0, 2.0, 3.0]);
        let one: Sweep = "nu-e=0.2:0.9:1".parse().unwrap();
        assert_eq!(one.values(), vec![0.2]);
        for bad in ["lambda_s=0:1", "x=0:1:3", "lambda_e=0:1:0", "lambda_e", "nu_e=a:1:2"] {
            assert!(matches!(bad.parse::<Sweep>(), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn flags_override_file() {
        let file = PartialConfig { lambda_s: Some(1.0), n_max: Some(7), ..Default::default() };
        let flags = PartialConfig { lambda_s: Some(2.0), ..Default::default() };
        let cfg = flags.over(file).resolve("evolve", None).unwrap();
        assert_eq!((cfg.lambda_s, cfg.n_max), (2.0, 7));
    }

    #[test]
    fn jobs_from_environment() {
        let cfg = PartialConfig::default().resolve("evolve", Some("3")).unwrap();
        assert_eq!(cfg.jobs, 3);
        let cfg = PartialConfig { jobs: Some(5), ..Default::default() }.resolve("evolve", Some("3")).unwrap();
        assert_eq!(cfg.jobs, 5);
        assert!(matches!(PartialConfig::default().resolve("evolve", Some("x")), Err(Error::Config(_))));
    }

    #[test]
    fn canonical_serialization_round_trips() {
        let cfg = PartialConfig {
            model: Some(ModelKind::Tms),
            nu_e: Some(0.1 + 0.2),
            sweeps: Some(vec!["lambda_s=0.1:3.0:7".parse().unwrap()]),
            jobs: Some(8),
            ..Default::default()
        }
        .resolve("kernel", None)
        .unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        let mut other = cfg.clone();
        other.jobs = 1;
        other.out = Some("x.csv".into());
        assert_eq!(other.canonical_json(), cfg.canonical_json());
    }

    #[test]
    fn sweep_cells_order() {
        let cfg = PartialConfig {
            sweeps: Some(vec!["lambda_s=0:1:2".parse().unwrap(), "lambda_e=0:2:3".parse().unwrap()]),
            ..Default::default()
        }
        .resolve("evolve", None)
        .unwrap();
        let cells: Vec<(f64, f64)> = cfg.cells().iter().map(|c| (c[0].1, c[1].1)).collect();
        assert_eq!(cells, vec![(0., 0.), (0., 1.), (0., 2.), (1., 0.), (1., 1.), (1., 2.)]);
    }

    #[test]
    fn invalid_configs() {
        let three = Some(vec![
            "lambda_s=0:1:2".parse().unwrap(),
            "lambda_e=0:1:2".parse().unwrap(),
            "nu_e=0:1:2".parse().unwrap(),
        ]);
        assert!(matches!(
            PartialConfig { sweeps: three, ..Default::default() }.resolve("evolve", None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            PartialConfig { model: Some(ModelKind::General), ..Default::default() }.resolve("evolve", None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            PartialConfig { n_max: Some(MAX_STEPS + 1), ..Default::default() }.resolve("evolve", None),
            Err(Error::Resource(_))
        ));
        let cfg = PartialConfig { theta0_thermal: Some(-1.0), ..Default::default() }.resolve("evolve", None).unwrap();
        assert!(matches!(cfg.model(), Err(Error::Config(_))));
    }

    #[test]
    fn general_model_from_blocks() {
        let c = 0.3f64.cos();
        let s = 0.3f64.sin();
        let model = GeneralModel {
            a: vec![vec![c, 0.0], vec![0.0, c]],
            b: vec![vec![s, 0.0], vec![0.0, s]],
            c: vec![vec![-s, 0.0], vec![0.0, -s]],
            d: vec![vec![c, 0.0], vec![0.0, c]],
            e: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            f: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            g: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            j: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            epsilon: vec![vec![0.5, 0.0], vec![0.0, 0.5]],
            theta0: vec![vec![2.5, 0.0], vec![0.0, 2.5]],
        };
        let spec = model.clone().into_spec().unwrap();
        assert_eq!(spec.system_modes, 1);
        let reference = ModelSpec::beam_splitter(0.3, 0.0).with_system_init(CovarianceMatrix::thermal(1, 2.0));
        assert_eq!(
            crate::collision::build_embedding(&spec).unwrap(),
            crate::collision::build_embedding(&reference).unwrap()
        );
        let mut broken = model;
        broken.a[0][0] = 2.0;
        assert!(broken.into_spec().is_err());
    }
}

//! The four subcommands. Each returns the rendered output document.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{ModelKind, Pairs, RunConfig, SweepVar};
use super::output::{format_float, Cell, Table};
use crate::collision::{build_embedding, evolve, EmbeddedState};
use crate::divisibility::{
    cumulative_maps, divisibility_grid_with, intermediate_map_with, non_divisibility, CellFlag, DivisibilityGrid,
    NEGATIVITY_TOL,
};
use crate::error::{Error, Result};
use crate::kernel::{tms_qp_kernels, KernelSeries};
use crate::observables::{mutual_information, total_occupation};
use crate::stability::{analyze, StabilityReport};
use crate::symplectic::scale;

/// Embedded dimension above which kernel superoperators are refused.
pub const MAX_KERNEL_DIM: usize = 16;
/// Largest `n_max` for divisibility grids.
pub const MAX_GRID_STEPS: usize = 5000;
/// Entry size beyond which entropies carry no significant digits.
const MI_RESOLUTION_LIMIT: f64 = 1e12;

type Point = Vec<(SweepVar, f64)>;

/// Evaluates `f` on every sweep cell with `cfg.jobs` workers. Results come
/// back in cell order; the first failing cell in that order decides the error.
fn map_cells<T, F>(cfg: &RunConfig, f: F) -> Result<Vec<(Point, T)>>
where
    T: Send,
    F: Fn(&RunConfig, &[(SweepVar, f64)]) -> Result<T> + Sync,
{
    let cells = cfg.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Resource(format!("cannot start {} worker threads: {e}", cfg.jobs)))?;
    let results: Vec<Result<T>> = pool.install(|| cells.par_iter().map(|c| f(cfg, c)).collect());
    cells.into_iter().zip(results).map(|(c, r)| r.map(|v| (c, v))).collect()
}

fn sweep_columns(cfg: &RunConfig) -> Vec<String> {
    cfg.sweeps.iter().map(|s| s.var.name().to_string()).collect()
}

fn prefix(point: &[(SweepVar, f64)]) -> Vec<Cell> {
    point.iter().map(|&(_, v)| Cell::Float(v)).collect()
}

fn entry_columns(name: &str, rows: usize, cols: usize) -> Vec<String> {
    (0..rows).flat_map(|i| (0..cols).map(move |j| format!("{name}_{i}{j}"))).collect()
}

fn entries(m: &DMatrix<f64>) -> impl Iterator<Item = Cell> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| Cell::Float(m[(i, j)])))
}

pub fn run(cfg: &RunConfig) -> Result<String> {
    match cfg.command.as_str() {
        "evolve" => cmd_evolve(cfg),
        "kernel" => cmd_kernel(cfg),
        "divisibility" => cmd_divisibility(cfg),
        "stability" => cmd_stability(cfg),
        other => Err(Error::Config(format!("unknown command '{other}'"))),
    }
}

fn mi_cell(state: &EmbeddedState) -> Result<Cell> {
    if scale(state.gamma.as_matrix()) > MI_RESOLUTION_LIMIT {
        return Ok(Cell::Empty);
    }
    Ok(Cell::Float(mutual_information(state)?))
}

/// Columns `n, occupation, mi`, then the entries of `θ`, the carried ancilla
/// block and the correlation block.
pub fn cmd_evolve(cfg: &RunConfig) -> Result<String> {
    let base = cfg.model()?;
    let (s, e) = (base.system_dim(), base.ancilla_dim());
    let mut table = Table::new(sweep_columns(cfg));
    table.columns.extend(["n", "occupation", "mi"].map(String::from));
    table.columns.extend(entry_columns("theta", s, s));
    table.columns.extend(entry_columns("eps", e, e));
    table.columns.extend(entry_columns("xi", s, e));
    let results = map_cells(cfg, |cfg, point| {
        let spec = cfg.model_at(point)?;
        evolve(&spec, cfg.n_max)?
            .iter()
            .map(|st| {
                let mut row = prefix(point);
                row.push(Cell::from(st.step));
                row.push(Cell::Float(total_occupation(&st.theta())?));
                row.push(mi_cell(st)?);
                row.extend(entries(st.theta().as_matrix()));
                row.extend(entries(st.carried_ancilla().as_matrix()));
                row.extend(entries(&st.correlations()));
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    table.rows = results.into_iter().flat_map(|(_, rows)| rows).collect();
    Ok(table.render(cfg))
}

/// Kraus coefficients per step. BS: `κ₁₁`; TMS: the four `{I, σ_z}`
/// coefficients with `κ_q`, `κ_p`; general models: every basis pair.
pub fn cmd_kernel(cfg: &RunConfig) -> Result<String> {
    let base = cfg.model()?;
    let dim = base.system_dim() + base.ancilla_dim();
    if dim > MAX_KERNEL_DIM {
        return Err(Error::Resource(format!(
            "kernel superoperators for dimension {dim} exceed the limit {MAX_KERNEL_DIM}"
        )));
    }
    let n_top = cfg.step.unwrap_or(cfg.n_max);
    let results = map_cells(cfg, |cfg, point| {
        let ch = build_embedding(&cfg.model_at(point)?)?;
        KernelSeries::for_channel(&ch, n_top)
    })?;
    let labels = results
        .first()
        .map(|(_, s)| s.basis.labels().to_vec())
        .unwrap_or_default();
    let mut table = Table::new(sweep_columns(cfg));
    table.columns.push("n".into());
    match cfg.model {
        ModelKind::Bs => table.columns.push("k_11".into()),
        ModelKind::Tms => table.columns.extend(["k_11", "k_1z", "k_z1", "k_zz", "k_q", "k_p"].map(String::from)),
        ModelKind::General => {
            for li in &labels {
                for lj in &labels {
                    table.columns.push(format!("k_{li}{lj}"));
                }
            }
        }
    }
    let steps: Vec<usize> = match cfg.step {
        Some(n) => vec![n],
        None => (0..=cfg.n_max).collect(),
    };
    for (point, series) in &results {
        for &n in &steps {
            let c = &series.coefficients[n];
            let mut row = prefix(point);
            row.push(Cell::from(n));
            match cfg.model {
                ModelKind::Bs => row.push(Cell::Float(c.get(0, 0))),
                ModelKind::Tms => {
                    let (kq, kp) = tms_qp_kernels(c, &series.basis)?;
                    row.extend([c.get(0, 0), c.get(0, 1), c.get(1, 0), c.get(1, 1), kq, kp].map(Cell::Float));
                }
                ModelKind::General => {
                    let k = series.basis.len();
                    row.extend((0..k).flat_map(|i| (0..k).map(move |j| Cell::Float(c.get(i, j)))));
                }
            }
            table.rows.push(row);
        }
    }
    Ok(table.render(cfg))
}

fn consecutive_grid(cfg: &RunConfig, point: &[(SweepVar, f64)]) -> Result<DivisibilityGrid> {
    let spec = cfg.model_at(point)?;
    let maps = cumulative_maps(&build_embedding(&spec)?, &spec.ancilla_state, cfg.n_max)?;
    let mut grid = DivisibilityGrid { n_max: cfg.n_max, ..Default::default() };
    for w in maps.windows(2) {
        let key = (w[0].to, w[1].to);
        match intermediate_map_with(&w[0], &w[1], cfg.kappa_max).and_then(|m| non_divisibility(&m)) {
            Ok(v) => {
                grid.values.insert(key, v);
            }
            Err(Error::IllConditioned { condition }) => {
                grid.flags.insert(key, CellFlag::IllConditioned { condition });
            }
            Err(other) => {
                grid.flags.insert(key, CellFlag::Failed(other.to_string()));
            }
        }
    }
    Ok(grid)
}

/// Columns `n, m, N, condition_flag, condition`; with `--consolidate` one row
/// per sweep cell: `divisible, max_N, flagged`.
pub fn cmd_divisibility(cfg: &RunConfig) -> Result<String> {
    if cfg.n_max < 2 && cfg.pairs == Pairs::All {
        return Err(Error::Config("divisibility grids need n_max >= 2".into()));
    }
    if cfg.n_max < 1 {
        return Err(Error::Config("divisibility needs n_max >= 1".into()));
    }
    if cfg.n_max > MAX_GRID_STEPS {
        return Err(Error::Resource(format!("grid n_max {} exceeds {MAX_GRID_STEPS}", cfg.n_max)));
    }
    cfg.model()?;
    let results = map_cells(cfg, |cfg, point| match cfg.pairs {
        Pairs::All => divisibility_grid_with(&cfg.model_at(point)?, cfg.n_max, cfg.kappa_max),
        Pairs::Consecutive => consecutive_grid(cfg, point),
    })?;
    let mut table = Table::new(sweep_columns(cfg));
    if cfg.consolidate {
        table.columns.extend(["divisible", "max_N", "flagged"].map(String::from));
        for (point, grid) in &results {
            let mut row = prefix(point);
            row.push(Cell::from(grid.is_divisible(NEGATIVITY_TOL)));
            row.push(Cell::from(grid.values.values().copied().reduce(f64::max)));
            row.push(Cell::from(grid.flags.len()));
            table.rows.push(row);
        }
    } else {
        table.columns.extend(["n", "m", "N", "condition_flag", "condition"].map(String::from));
        for (point, grid) in &results {
            for ((n, m), value, flag) in grid.cells() {
                let mut row = prefix(point);
                row.push(Cell::from(n));
                row.push(Cell::from(m));
                row.push(Cell::from(value));
                match flag {
                    None => row.extend([Cell::Int(0), Cell::Empty]),
                    Some(CellFlag::IllConditioned { condition }) => row.extend([Cell::Int(1), Cell::Float(*condition)]),
                    Some(CellFlag::Failed(_)) => row.extend([Cell::Int(2), Cell::Empty]),
                }
                table.rows.push(row);
            }
        }
    }
    Ok(table.render(cfg))
}

fn report_json(point: &[(SweepVar, f64)], r: &StabilityReport) -> Value {
    let params: serde_json::Map<String, Value> =
        point.iter().map(|&(var, v)| (var.name().to_string(), json!(v))).collect();
    let num = |v: f64| if v.is_finite() { json!(v) } else { json!(format_float(v)) };
    json!({
        "params": params,
        "eigenvalues": r.eigenvalues.iter().map(|z| json!([num(z.re), num(z.im)])).collect::<Vec<_>>(),
        "spectral_radius": num(r.spectral_radius),
        "class": r.class.as_str(),
        "is_gas": r.is_gas,
        "critical_distance": num(r.critical_distance),
        "critical_flag": r.critical_flag,
        "fixed_point": r.fixed_point.as_ref().map(|fp| {
            fp.as_matrix().row_iter().map(|row| row.iter().map(|&v| num(v)).collect::<Vec<_>>()).collect::<Vec<_>>()
        }),
    })
}

/// Spectrum of `X`, spectral radius, GAS class and fixed point.
pub fn cmd_stability(cfg: &RunConfig) -> Result<String> {
    let base = cfg.model()?;
    let d = base.system_dim() + base.ancilla_dim();
    let results = map_cells(cfg, |cfg, point| analyze(&build_embedding(&cfg.model_at(point)?)?, cfg.tol))?;
    if cfg.format == super::config::Format::Json {
        let config: Value = serde_json::from_str(&cfg.canonical_json()).expect("canonical config is JSON");
        let doc = json!({
            "gaucoll": env!("CARGO_PKG_VERSION"),
            "config": config,
            "reports": results.iter().map(|(p, r)| report_json(p, r)).collect::<Vec<_>>(),
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        return Ok(s);
    }
    let mut table = Table::new(sweep_columns(cfg));
    table.columns.extend(
        ["spectral_radius", "class", "is_gas", "critical_distance", "critical_flag"].map(String::from),
    );
    for k in 0..d {
        table.columns.push(format!("ev{k}_re"));
        table.columns.push(format!("ev{k}_im"));
    }
    table.columns.extend(entry_columns("fp", d, d));
    for (point, r) in &results {
        let mut row = prefix(point);
        row.push(Cell::Float(r.spectral_radius));
        row.push(Cell::from(r.class.as_str()));
        row.push(Cell::from(r.is_gas));
        row.push(Cell::Float(r.critical_distance));
        row.push(Cell::from(r.critical_flag));
        for z in &r.eigenvalues {
            row.push(Cell::Float(z.re));
            row.push(Cell::Float(z.im));
        }
        match &r.fixed_point {
            Some(fp) => row.extend(entries(fp.as_matrix())),
            None => row.extend(std::iter::repeat_n(Cell::Empty, d * d)),
        }
        table.rows.push(row);
    }
    Ok(table.render(cfg))
}

#[cfg(test)]
mod tests {
    use super::super::config::PartialConfig;
    use super::*;

    fn cfg(command: &str, p: PartialConfig) -> RunConfig {
        p.resolve(command, None).unwrap()
    }

    fn data_rows(text: &str) -> Vec<Vec<String>> {
        text.lines().skip(2).map(|l| l.split(',').map(String::from).collect()).collect()
    }

    #[test]
    fn evolve_markovian_has_zero_mi_and_decaying_occupation() {
        let c = cfg("evolve", PartialConfig { lambda_e: Some(0.0), n_max: Some(30), ..Default::default() });
        let out = cmd_evolve(&c).unwrap();
        let header = out.lines().nth(1).unwrap();
        assert!(header.starts_with("n,occupation,mi,theta_00"));
        let rows = data_rows(&out);
        assert_eq!(rows.len(), 31);
        assert!(rows.iter().all(|r| r[2] == "0.0"));
        let occ: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
        assert_eq!(occ[0], 20.0);
        assert!(occ.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn evolve_unstable_tms_diverges() {
        let c = cfg(
            "evolve",
            PartialConfig {
                model: Some(ModelKind::Tms),
                lambda_s: Some(0.1),
                nu_e: Some(0.9),
                n_max: Some(1500),
                ..Default::default()
            },
        );
        let out = cmd_evolve(&c).unwrap();
        let rows = data_rows(&out);
        let last: f64 = rows[1500][1].parse().unwrap();
        assert!(last > 1e6);
        assert_eq!(rows[1500][2], "");
    }

    #[test]
    fn kernel_columns() {
        let c = cfg("kernel", PartialConfig { model: Some(ModelKind::Tms), nu_e: Some(0.5), n_max: Some(5), ..Default::default() });
        let out = cmd_kernel(&c).unwrap();
        assert_eq!(out.lines().nth(1).unwrap(), "n,k_11,k_1z,k_z1,k_zz,k_q,k_p");
        assert_eq!(data_rows(&out).len(), 6);
        let c = cfg("kernel", PartialConfig { lambda_e: Some(0.0), n_max: Some(5), ..Default::default() });
        assert!(data_rows(&cmd_kernel(&c).unwrap()).iter().all(|r| r[1].parse::<f64>().unwrap() == 0.0));
    }

    #[test]
    fn kernel_sweep_at_fixed_step() {
        let c = cfg(
            "kernel",
            PartialConfig {
                sweeps: Some(vec!["lambda_s=0:3:4".parse().unwrap(), "lambda_e=-1:1:3".parse().unwrap()]),
                step: Some(4),
                ..Default::default()
            },
        );
        let out = cmd_kernel(&c).unwrap();
        assert_eq!(out.lines().nth(1).unwrap(), "lambda_s,lambda_e,n,k_11");
        let rows = data_rows(&out);
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| r[2] == "4"));
        assert_eq!((rows[1][0].as_str(), rows[1][1].as_str()), ("0.0", "0.0"));
    }

    #[test]
    fn divisibility_paper_grid_and_consolidation() {
        let c = cfg(
            "divisibility",
            PartialConfig { lambda_s: Some(1.1), lambda_e: Some(0.75), n_max: Some(20), ..Default::default() },
        );
        let out = cmd_divisibility(&c).unwrap();
        let rows = data_rows(&out);
        assert_eq!(rows.len(), 210);
        let max = rows
            .iter()
            .filter(|r| r[0] != "0")
            .filter_map(|r| r[2].parse::<f64>().ok())
            .fold(0.0, f64::max);
        assert!((max / 3.42 - 1.0).abs() < 0.02, "{max}");
        let c = cfg(
            "divisibility",
            PartialConfig {
                model: Some(ModelKind::Tms),
                sweeps: Some(vec!["nu_e=0:0.5:3".parse().unwrap()]),
                n_max: Some(11),
                consolidate: Some(true),
                ..Default::default()
            },
        );
        let rows = data_rows(&cmd_divisibility(&c).unwrap());
        let divisible: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
        assert_eq!(divisible, vec!["1", "0", "0"]);
    }

    #[test]
    fn stability_reports() {
        let c = cfg("stability", PartialConfig { lambda_e: Some(0.4), format: Some(super::super::config::Format::Json), ..Default::default() });
        let doc: Value = serde_json::from_str(&cmd_stability(&c).unwrap()).unwrap();
        let r = &doc["reports"][0];
        assert_eq!(r["is_gas"], json!(true));
        assert!((r["fixed_point"][0][0].as_f64().unwrap() - 0.5).abs() < 1e-12);
        let c = cfg("stability", PartialConfig { model: Some(ModelKind::Tms), nu_e: Some(1.2), ..Default::default() });
        let rows = data_rows(&cmd_stability(&c).unwrap());
        assert_eq!(rows[0][1], "unstable");
    }
}

//! Convergence studies: grid sweeps per scheme, observed orders, and the
//! CSV/JSON artifacts they produce.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid3, NodeClass, ScalarField};
use crate::problems::Problem;
use crate::solvers::{solve, Scheme, SolveReport, SolverConfig};

/// Observed convergence order between two grids, with `h = 1/(N-1)`.
pub fn observed_order(e1: f64, e2: f64, n1: usize, n2: usize) -> Result<f64> {
    if !(e1 > 0.0 && e2 > 0.0) || !e1.is_finite() || !e2.is_finite() {
        return Err(Error::InvalidOrderInput);
    }
    if n1 < 2 || n2 <= n1 {
        return Err(Error::InvalidOrderInput);
    }
    let h1 = 1.0 / (n1 - 1) as f64;
    let h2 = 1.0 / (n2 - 1) as f64;
    Ok((e1 / e2).ln() / (h1 / h2).ln())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportFlags {
    /// Write `table.csv`.
    pub table: bool,
    /// Write one JSON solve report per cell.
    pub residual_history: bool,
    /// Levels for the level-set CSV of each cell; empty disables it.
    pub level_sets: Vec<f64>,
}

/// A study description. Scheme names are `naive`, `monotone` (expanded over
/// `n_theta`) or `monotone<w>` for a single width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub problem: String,
    pub schemes: Vec<String>,
    pub n_theta: Vec<usize>,
    pub n_values: Vec<usize>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    /// Radial centre for the examples that take one.
    pub center: Option<[f64; 3]>,
    pub solver: SolverConfig,
    pub export: ExportFlags,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "ex1".into(),
            schemes: vec!["naive".into()],
            n_theta: vec![1],
            n_values: vec![15, 20, 25, 30, 35],
            output_dir: None,
            seed: 0,
            center: None,
            solver: SolverConfig::default(),
            export: ExportFlags {
                table: true,
                ..ExportFlags::default()
            },
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::InvalidConfig("n_values is empty".into()));
        }
        if self.n_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("n_values must be strictly increasing".into()));
        }
        self.resolved_schemes()?;
        self.solver.validate()
    }

    pub fn problem(&self) -> Result<Problem> {
        let p = Problem::by_name(&self.problem)?;
        Ok(match self.center {
            Some(c) => p.with_center(c),
            None => p,
        })
    }

    /// Scheme list with `monotone` expanded over `n_theta`, duplicates removed.
    pub fn resolved_schemes(&self) -> Result<Vec<Scheme>> {
        let mut out = Vec::new();
        for name in &self.schemes {
            let expanded = if name.trim() == "monotone" {
                self.n_theta.iter().map(|&n_theta| Scheme::Monotone { n_theta }).collect()
            } else {
                vec![name.parse::<Scheme>()?]
            };
            for s in expanded {
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("no schemes selected".into()));
        }
        Ok(out)
    }

    fn cell_config(&self, scheme: Scheme) -> SolverConfig {
        SolverConfig {
            scheme,
            seed: self.seed,
            ..self.solver.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub scheme: String,
    pub n: usize,
    pub error_inf: Option<f64>,
    /// Order against the previous row of the same scheme; empty on its first row.
    pub order: Option<f64>,
    pub iterations: Option<usize>,
    pub status: String,
}

impl TableRow {
    pub fn failed(&self) -> bool {
        self.status != "converged"
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub problem: String,
    pub rows: Vec<TableRow>,
}

impl ConvergenceTable {
    pub fn rows_for<'a>(&'a self, scheme: &'a str) -> impl Iterator<Item = &'a TableRow> + 'a {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }

    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(TableRow::failed)
    }

    /// Fills the order column from consecutive rows of each scheme.
    fn fill_orders(&mut self) {
        for i in 0..self.rows.len() {
            let prev = self.rows[..i].iter().rposition(|r| r.scheme == self.rows[i].scheme);
            self.rows[i].order = prev.and_then(|j| {
                let (a, b) = (&self.rows[j], &self.rows[i]);
                observed_order(a.error_inf?, b.error_inf?, a.n, b.n).ok()
            });
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_records(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        self.write_records(&mut w)?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn write_records<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["scheme", "N", "error_inf", "order", "iterations", "status"])?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.scheme.clone(),
                r.n.to_string(),
                opt(r.error_inf.map(|e| format!("{e:.3e}"))),
                opt(r.order.map(|o| format!("{o:.2}"))),
                opt(r.iterations.map(|i| i.to_string())),
                r.status.clone(),
            ])?;
        }
        Ok(())
    }
}

/// Result of one (scheme, N) cell.
#[derive(Debug)]
pub struct CellResult {
    pub report: SolveReport,
    /// Max-norm error against the exact solution, when one is known.
    pub error_inf: Option<f64>,
}

/// Builds the grid for `scheme` and solves once.
pub fn run_cell(problem: &Problem, n: usize, config: &SolverConfig) -> Result<CellResult> {
    let grid = Arc::new(Grid3::build(n, problem.domain.clone(), config.band_width())?);
    let report = solve(problem, grid.clone(), config)?;
    let error_inf = problem
        .sample_exact(&grid)
        .map(|exact| report.final_field.max_norm_error(&exact));
    Ok(CellResult { report, error_inf })
}

/// Runs every (scheme, N) cell. Solver failures become rows with a failed
/// status; only configuration and I/O problems abort the study.
pub fn run_study(config: &RunConfig) -> Result<ConvergenceTable> {
    config.validate()?;
    let problem = config.problem()?;
    let schemes = config.resolved_schemes()?;
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir)?;
    }
    let mut table = ConvergenceTable {
        problem: problem.name.clone(),
        rows: Vec::new(),
    };
    for scheme in schemes {
        let cfg = config.cell_config(scheme);
        for &n in &config.n_values {
            let label = scheme.label();
            let row = match run_cell(&problem, n, &cfg) {
                Ok(cell) => {
                    write_cell_artifacts(config, &label, n, &cell)?;
                    let rep = &cell.report;
                    TableRow {
                        scheme: label,
                        n,
                        error_inf: rep.converged.then_some(cell.error_inf).flatten(),
                        order: None,
                        iterations: Some(rep.iterations),
                        status: if rep.converged {
                            "converged".into()
                        } else {
                            format!("not converged: {:?}", rep.outcome)
                        },
                    }
                }
                Err(e) => {
                    log::warn!("{} {label} N={n}: {e}", problem.name);
                    TableRow {
                        scheme: label,
                        n,
                        error_inf: None,
                        order: None,
                        iterations: None,
                        status: format!("failed: {e}"),
                    }
                }
            };
            table.rows.push(row);
        }
    }
    table.fill_orders();
    if let (Some(dir), true) = (&config.output_dir, config.export.table) {
        table.write_csv(dir.join("table.csv"))?;
    }
    Ok(table)
}

fn write_cell_artifacts(config: &RunConfig, label: &str, n: usize, cell: &CellResult) -> Result<()> {
    let Some(dir) = &config.output_dir else {
        return Ok(());
    };
    if config.export.residual_history {
        fs::write(dir.join(format!("report_{label}_N{n}.json")), cell.report.to_json()?)?;
    }
    if !config.export.level_sets.is_empty() {
        export_level_sets(
            &cell.report.final_field,
            &config.export.level_sets,
            dir.join(format!("levels_{label}_N{n}.csv")),
        )?;
    }
    Ok(())
}

/// Whether `node` lies on the level set `u = level`: its value equals the
/// level, or the field changes sign strictly across one of its axis edges.
pub fn on_level(u: &ScalarField, node: usize, level: f64) -> bool {
    let d = u.get(node) - level;
    if d.abs() <= LEVEL_TOL * level.abs().max(1.0) {
        return true;
    }
    let grid = u.grid();
    for axis in [[1, 0, 0], [0, 1, 0], [0, 0, 1]] {
        for off in [axis, axis.map(|c: i32| -c)] {
            if let Some(q) = grid.offset(node, off) {
                if d * (u.get(q) - level) < 0.0 {
                    return true;
                }
            }
        }
    }
    false
}

const LEVEL_TOL: f64 = 1e-14;

/// Writes `i,j,k,x,y,z,class,value` plus one 0/1 column per level.
pub fn export_level_sets(field: &ScalarField, levels: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let grid = field.grid();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["i", "j", "k", "x", "y", "z", "class", "value"]
        .into_iter()
        .map(String::from)
        .collect();
    header.extend(levels.iter().map(|c| format!("level_{c}")));
    w.write_record(&header)?;
    for node in 0..grid.len() {
        let [i, j, k] = grid.ijk(node);
        let [x, y, z] = grid.point(node);
        let class = match grid.class(node) {
            NodeClass::Interior => "interior",
            NodeClass::Band => "band",
            NodeClass::Exterior => "exterior",
        };
        let mut rec = vec![
            i.to_string(),
            j.to_string(),
            k.to_string(),
            x.to_string(),
            y.to_string(),
            z.to_string(),
            class.to_string(),
            format!("{:e}", field.get(node)),
        ];
        rec.extend(levels.iter().map(|&c| u8::from(on_level(field, node, c)).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;

    #[test]
    fn order_formula() {
        let o = observed_order(2.393e-4, 1.298e-4, 15, 20).unwrap();
        assert!((o - 2.00).abs() <= 0.01, "{o}");
        let o = observed_order(1.669e-4, 1.052e-4, 20, 25).unwrap();
        assert!((o - 1.98).abs() <= 0.01, "{o}");
        assert_eq!(observed_order(0.3, 0.3, 10, 12).unwrap(), 0.0);
        // halving h with error ratio 4 is order 2
        let o = observed_order(4.0, 1.0, 11, 21).unwrap();
        assert!((o - 2.0).abs() < 1e-12);
    }

    #[test]
    fn order_rejects_bad_input() {
        assert!(observed_order(0.0, 1.0, 10, 20).is_err());
        assert!(observed_order(1.0, -1.0, 10, 20).is_err());
        assert!(observed_order(1.0, 0.5, 20, 20).is_err());
        assert!(observed_order(f64::NAN, 0.5, 10, 20).is_err());
    }

    #[test]
    fn orders_use_consecutive_rows_per_scheme() {
        let row = |scheme: &str, n, e: Option<f64>| TableRow {
            scheme: scheme.into(),
            n,
            error_inf: e,
            order: None,
            iterations: Some(1),
            status: "converged".into(),
        };
        let mut t = ConvergenceTable {
            problem: "x".into(),
            rows: vec![
                row("a", 11, Some(4e-2)),
                row("a", 21, Some(1e-2)),
                row("b", 11, Some(1e-3)),
                row("a", 41, None),
                row("b", 21, Some(1e-3)),
            ],
        };
        t.fill_orders();
        let orders: Vec<Option<f64>> = t.rows.iter().map(|r| r.order).collect();
        assert_eq!(orders[0], None);
        assert!((orders[1].unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(orders[2], None);
        assert_eq!(orders[3], None);
        assert_eq!(orders[4], Some(0.0));
        let csv = t.to_csv_string().unwrap();
        assert!(csv.starts_with("scheme,N,error_inf,order,iterations,status\n"));
        assert!(csv.contains("a,21,1.000e-2,2.00,1,converged"));
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = RunConfig::from_toml_str(
            r#"
            problem = "ex2"
            schemes = ["naive", "monotone", "monotone2"]
            n_theta = [1, 2]
            n_values = [9, 11]
            seed = 7

            [solver]
            method = "newton"
            tol = 1e-9
            init = { exact_plus_noise = { amplitude = 0.01 } }

            [export]
            level_sets = [-0.01]
            "#,
        )
        .unwrap();
        assert_eq!(
            cfg.resolved_schemes().unwrap(),
            vec![
                Scheme::Naive,
                Scheme::Monotone { n_theta: 1 },
                Scheme::Monotone { n_theta: 2 }
            ]
        );
        assert_eq!(cfg.solver.tol, 1e-9);
        assert_eq!(cfg.export.level_sets, vec![-0.01]);
        assert!(!cfg.export.table);

        assert!(RunConfig::from_toml_str("n_values = [20, 15]").is_err());
        assert!(RunConfig::from_toml_str("schemes = [\"upwind\"]").is_err());
        assert!(RunConfig::from_toml_str("[solver]\ntol = -1.0").is_err());
    }

    #[test]
    fn constant_field_is_flagged_everywhere() {
        let grid = Arc::new(Grid3::build(5, Domain::Cube, 1).unwrap());
        let u = ScalarField::constant(grid.clone(), 0.25);
        assert!((0..grid.len()).all(|p| on_level(&u, p, 0.25)));
        assert!((0..grid.len()).all(|p| !on_level(&u, p, 0.5)));
    }

    #[test]
    fn level_flags_mark_sign_changes() {
        let grid = Arc::new(Grid3::build(6, Domain::Cube, 1).unwrap());
        let u = ScalarField::from_fn(grid.clone(), |p| p[0]);
        // 0.5 falls between i = 2 (x = 0.4) and i = 3 (x = 0.6)
        for p in 0..grid.len() {
            let i = grid.ijk(p)[0];
            assert_eq!(on_level(&u, p, 0.5), i == 2 || i == 3);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("levels.csv");
        export_level_sets(&u, &[0.5, 0.0], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), grid.len() + 1);
        assert!(text.lines().next().unwrap().ends_with("level_0.5,level_0"));
    }

    #[test]
    fn study_records_failures_without_aborting() {
        let cfg = RunConfig {
            problem: "ex1".into(),
            schemes: vec!["naive".into()],
            n_values: vec![7, 9],
            solver: SolverConfig {
                max_iters: 0,
                init: crate::solvers::Init::ExactPlusNoise { amplitude: 0.01 },
                ..SolverConfig::default()
            },
            ..RunConfig::default()
        };
        let table = run_study(&cfg).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.any_failed());
        assert!(table.rows.iter().all(|r| r.error_inf.is_none()));
    }
}

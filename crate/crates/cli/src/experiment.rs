//! Grid runner: evaluates method grids over `(k, ε, β[, m])`, writes
//! self-describing CSV reports plus two-column `.dat` files per curve, and is
//! byte-deterministic under a fixed master seed.

use std::fs;
use std::path::{Path, PathBuf};

use ppns_core::attack::{run_attack, AttackConfig};
use ppns_core::predict::{evaluate_mae_multi, sample_targets};
use ppns_core::ratings::{ingest_csv, ingest_movielens, RatingMatrix, UserId};
use ppns_core::seeds;
use ppns_core::selection::{LambdaMode, Method, SelectionPolicy};
use ppns_core::{synth, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Movielens,
    Csv,
    /// `dataset` is a generator seed (or `default`).
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    User,
    Item,
}

/// A full experiment description; every run is a pure function of this.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub dataset: String,
    pub format: DatasetFormat,
    pub mode: Mode,
    pub methods: Vec<Method>,
    pub k_grid: Vec<usize>,
    pub epsilon_grid: Vec<f64>,
    pub beta_grid: Vec<usize>,
    /// Attacker-knowledge grid; empty runs the plain accuracy experiment.
    pub m_grid: Vec<usize>,
    pub rho: f64,
    pub formula_lambda: bool,
    pub pncf_laplace_scale: Option<f64>,
    /// Seed replicas (accuracy) or attack rounds per target (attack).
    pub trials: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Targets drawn per accuracy replica and per attack run.
pub const ACCURACY_TARGETS: usize = 200;
pub const ATTACK_TARGETS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSummary {
    pub method: Method,
    pub k: usize,
    pub epsilon: f64,
    pub beta: usize,
    pub m: usize,
    pub seed: u64,
    pub target_in_neighbours: f64,
    pub sole_real_neighbour: f64,
    pub attack_mae: f64,
}

/// Files written by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub files: Vec<PathBuf>,
}

impl ExperimentSpec {
    fn lambda_mode(&self) -> LambdaMode {
        if self.formula_lambda {
            LambdaMode::Formula { rho: self.rho }
        } else {
            LambdaMode::Attack
        }
    }

    fn policy(&self, method: Method, k: usize, epsilon: f64, beta: usize) -> SelectionPolicy {
        SelectionPolicy {
            method,
            k,
            epsilon,
            beta,
            lambda_mode: self.lambda_mode(),
            pncf_laplace_scale: self.pncf_laplace_scale,
            seed: self.seed,
        }
    }

    /// Grid checks that need no data.
    fn validate_shape(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Validation("no methods selected".into()));
        }
        for (name, grid) in [("k", &self.k_grid), ("beta", &self.beta_grid)] {
            if grid.is_empty() {
                return Err(Error::Validation(format!("empty {name} grid")));
            }
            if grid.contains(&0) {
                return Err(Error::Validation(format!("{name} grid values must be positive")));
            }
        }
        if self.epsilon_grid.is_empty() {
            return Err(Error::Validation("empty epsilon grid".into()));
        }
        if self.epsilon_grid.iter().any(|&e| e <= 0.0 || !e.is_finite()) {
            return Err(Error::Validation("epsilon grid values must be positive".into()));
        }
        if self.m_grid.contains(&0) {
            return Err(Error::Validation("attack-m grid values must be positive".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Validation(format!("rho must lie in (0,1), got {}", self.rho)));
        }
        if self.trials == 0 {
            return Err(Error::Validation("trials must be at least 1".into()));
        }
        Ok(())
    }

    /// The candidate tail is near-zero similarity, so β is bounded above by
    /// `U/2k` on the active axis.
    fn validate_beta_bound(&self, m: &RatingMatrix) -> Result<()> {
        let axis = m.n_users();
        for &k in &self.k_grid {
            for &beta in &self.beta_grid {
                let bound = axis / (2 * k);
                if beta > bound.max(1) {
                    return Err(Error::Validation(format!(
                        "beta = {beta} exceeds its upper bound U/2k = {bound} \
                         (axis size {axis}, k = {k})"
                    )));
                }
            }
        }
        Ok(())
    }

    fn load(&self) -> Result<RatingMatrix> {
        let m = match self.format {
            DatasetFormat::Movielens => ingest_movielens(Path::new(&self.dataset))?,
            DatasetFormat::Csv => ingest_csv(Path::new(&self.dataset))?,
            DatasetFormat::Synth => {
                let seed = if self.dataset.is_empty() || self.dataset == "default" {
                    synth::DEFAULT_CORPUS_SEED
                } else {
                    self.dataset.parse().map_err(|_| {
                        Error::Validation(format!(
                            "with --format synth, --dataset must be `default` or a seed, \
                             got `{}`",
                            self.dataset
                        ))
                    })?
                };
                synth::movielens_like(seed)
            }
        };
        Ok(match self.mode {
            Mode::User => m,
            Mode::Item => m.transpose(),
        })
    }
}

/// Run the grid and write every report file. Validation happens before any
/// computation; identical specs produce byte-identical files.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate_shape()?;
    let matrix = spec.load()?;
    spec.validate_beta_bound(&matrix)?;
    fs::create_dir_all(&spec.out_dir)?;

    let mut files = Vec::new();
    if spec.m_grid.is_empty() {
        run_accuracy(spec, &matrix, &mut files)?;
    } else {
        run_attack_grid(spec, &matrix, &mut files)?;
    }
    Ok(ExperimentOutcome { files })
}

struct MaeRow {
    method: Method,
    k: usize,
    epsilon: f64,
    beta: usize,
    seed: u64,
    mae: f64,
    n: usize,
}

fn run_accuracy(spec: &ExperimentSpec, matrix: &RatingMatrix, files: &mut Vec<PathBuf>) -> Result<()> {
    let mut policies = Vec::new();
    for &method in &spec.methods {
        for &k in &spec.k_grid {
            for &epsilon in &spec.epsilon_grid {
                for &beta in &spec.beta_grid {
                    policies.push(spec.policy(method, k, epsilon, beta));
                }
            }
        }
    }

    let n_targets = ACCURACY_TARGETS.min(matrix.n_users());
    let mut rows: Vec<MaeRow> = Vec::new();
    for replica in 0..spec.trials {
        let replica_seed = seeds::derive(spec.seed, &[1, replica as u64]);
        let targets = sample_targets(matrix, n_targets, replica_seed)?;
        files.push(write_targets(
            &spec.out_dir.join(format!("targets_seed{replica}.csv")),
            matrix,
            &targets,
            replica_seed,
        )?);
        let reports = evaluate_mae_multi(matrix, &policies, &targets, None, replica_seed)?;
        for (policy, report) in policies.iter().zip(reports) {
            rows.push(MaeRow {
                method: policy.method,
                k: policy.k,
                epsilon: policy.epsilon,
                beta: policy.beta,
                seed: replica_seed,
                mae: report.mae,
                n: report.n_predictions,
            });
        }
    }

    let csv_path = spec.out_dir.join("mae.csv");
    {
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["method", "k", "epsilon", "beta", "seed", "mae", "n"])?;
        for r in &rows {
            w.write_record(&[
                r.method.to_string(),
                r.k.to_string(),
                format_f64(r.epsilon),
                r.beta.to_string(),
                r.seed.to_string(),
                format!("{:.6}", r.mae),
                r.n.to_string(),
            ])?;
        }
        w.flush()?;
    }
    files.push(csv_path);

    let axis = sweep_axis(spec);
    for &method in &spec.methods {
        let path = spec
            .out_dir
            .join(format!("mae_vs_{}__{}.dat", axis_name(axis), method));
        let points = curve_points(axis, spec, |x| {
            let selected: Vec<&MaeRow> = rows
                .iter()
                .filter(|r| r.method == method && axis_value(axis, r.k, r.epsilon, r.beta, 0) == x)
                .collect();
            let sum: f64 = selected.iter().map(|r| r.mae).sum();
            (!selected.is_empty()).then(|| sum / selected.len() as f64)
        });
        files.push(write_dat(&path, &points)?);
    }
    Ok(())
}

fn run_attack_grid(spec: &ExperimentSpec, matrix: &RatingMatrix, files: &mut Vec<PathBuf>) -> Result<()> {
    if spec.mode == Mode::Item {
        return Err(Error::Validation(
            "the simulated attack is user-based; use --mode user".into(),
        ));
    }
    let targets = sample_targets(matrix, ATTACK_TARGETS.min(matrix.n_users()), seeds::derive(spec.seed, &[2]))?;
    files.push(write_targets(
        &spec.out_dir.join("targets.csv"),
        matrix,
        &targets,
        seeds::derive(spec.seed, &[2]),
    )?);

    let mut pooled: Vec<AttackSummary> = Vec::new();
    let mut per_target_rows: Vec<(AttackSummary, u64)> = Vec::new();
    for (mi, &method) in spec.methods.iter().enumerate() {
        for &k in &spec.k_grid {
            for &epsilon in &spec.epsilon_grid {
                for &beta in &spec.beta_grid {
                    for &m_know in &spec.m_grid {
                        let policy = spec.policy(method, k, epsilon, beta);
                        let config_seed = seeds::derive(
                            spec.seed,
                            &[3, mi as u64, k as u64, epsilon.to_bits(), beta as u64, m_know as u64],
                        );
                        let mut frac_in = 0.0;
                        let mut frac_sole = 0.0;
                        let mut err_weighted = 0.0;
                        let mut err_n = 0usize;
                        for (ti, &target) in targets.iter().enumerate() {
                            let config = AttackConfig::new(
                                target,
                                m_know,
                                policy,
                                spec.trials,
                                seeds::derive(config_seed, &[ti as u64]),
                            );
                            let report = run_attack(matrix, &config)?;
                            frac_in += report.target_in_neighbours;
                            frac_sole += report.sole_real_neighbour;
                            err_weighted += report.attack_mae * report.n_sensitive_predictions as f64;
                            err_n += report.n_sensitive_predictions;
                            per_target_rows.push((
                                AttackSummary {
                                    method,
                                    k,
                                    epsilon,
                                    beta,
                                    m: m_know,
                                    seed: config_seed,
                                    target_in_neighbours: report.target_in_neighbours,
                                    sole_real_neighbour: report.sole_real_neighbour,
                                    attack_mae: report.attack_mae,
                                },
                                matrix.external_user(target),
                            ));
                        }
                        let n_t = targets.len() as f64;
                        pooled.push(AttackSummary {
                            method,
                            k,
                            epsilon,
                            beta,
                            m: m_know,
                            seed: config_seed,
                            target_in_neighbours: frac_in / n_t,
                            sole_real_neighbour: frac_sole / n_t,
                            attack_mae: if err_n > 0 { err_weighted / err_n as f64 } else { 0.0 },
                        });
                    }
                }
            }
        }
    }

    let attack_csv = spec.out_dir.join("attack.csv");
    {
        let mut w = csv::Writer::from_path(&attack_csv)?;
        w.write_record([
            "method", "k", "epsilon", "beta", "m", "seed", "target_in_nbr", "sole_real",
            "attack_mae",
        ])?;
        for r in &pooled {
            w.write_record(attack_record(r, None))?;
        }
        w.flush()?;
    }
    files.push(attack_csv);

    let per_target_csv = spec.out_dir.join("attack_targets.csv");
    {
        let mut w = csv::Writer::from_path(&per_target_csv)?;
        w.write_record([
            "method", "k", "epsilon", "beta", "m", "seed", "target", "target_in_nbr",
            "sole_real", "attack_mae",
        ])?;
        for (r, target) in &per_target_rows {
            w.write_record(attack_record(r, Some(*target)))?;
        }
        w.flush()?;
    }
    files.push(per_target_csv);

    let axis = sweep_axis(spec);
    for &method in &spec.methods {
        let path = spec
            .out_dir
            .join(format!("attack_mae_vs_{}__{}.dat", axis_name(axis), method));
        let points = curve_points(axis, spec, |x| {
            let selected: Vec<&AttackSummary> = pooled
                .iter()
                .filter(|r| r.method == method && axis_value(axis, r.k, r.epsilon, r.beta, r.m) == x)
                .collect();
            let sum: f64 = selected.iter().map(|r| r.attack_mae).sum();
            (!selected.is_empty()).then(|| sum / selected.len() as f64)
        });
        files.push(write_dat(&path, &points)?);
    }
    Ok(())
}

fn attack_record(r: &AttackSummary, target: Option<u64>) -> Vec<String> {
    let mut rec = vec![
        r.method.to_string(),
        r.k.to_string(),
        format_f64(r.epsilon),
        r.beta.to_string(),
        r.m.to_string(),
        r.seed.to_string(),
    ];
    if let Some(t) = target {
        rec.push(t.to_string());
    }
    rec.extend([
        format!("{:.6}", r.target_in_neighbours),
        format!("{:.6}", r.sole_real_neighbour),
        format!("{:.6}", r.attack_mae),
    ]);
    rec
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SweepAxis {
    Beta,
    K,
    Epsilon,
    M,
}

fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::Beta => "beta",
        SweepAxis::K => "k",
        SweepAxis::Epsilon => "epsilon",
        SweepAxis::M => "m",
    }
}

/// The figure's x axis: the first multi-valued grid in priority order
/// `beta, k, epsilon, m`; `beta` when nothing is swept.
fn sweep_axis(spec: &ExperimentSpec) -> SweepAxis {
    if spec.beta_grid.len() > 1 {
        SweepAxis::Beta
    } else if spec.k_grid.len() > 1 {
        SweepAxis::K
    } else if spec.epsilon_grid.len() > 1 {
        SweepAxis::Epsilon
    } else if spec.m_grid.len() > 1 {
        SweepAxis::M
    } else {
        SweepAxis::Beta
    }
}

fn axis_value(axis: SweepAxis, k: usize, epsilon: f64, beta: usize, m: usize) -> f64 {
    match axis {
        SweepAxis::Beta => beta as f64,
        SweepAxis::K => k as f64,
        SweepAxis::Epsilon => epsilon,
        SweepAxis::M => m as f64,
    }
}

fn curve_points(
    axis: SweepAxis,
    spec: &ExperimentSpec,
    mean_at: impl Fn(f64) -> Option<f64>,
) -> Vec<(f64, f64)> {
    let xs: Vec<f64> = match axis {
        SweepAxis::Beta => spec.beta_grid.iter().map(|&b| b as f64).collect(),
        SweepAxis::K => spec.k_grid.iter().map(|&k| k as f64).collect(),
        SweepAxis::Epsilon => spec.epsilon_grid.clone(),
        SweepAxis::M => spec.m_grid.iter().map(|&m| m as f64).collect(),
    };
    xs.into_iter().filter_map(|x| mean_at(x).map(|y| (x, y))).collect()
}

fn write_dat(path: &Path, points: &[(f64, f64)]) -> Result<PathBuf> {
    let mut out = String::new();
    for &(x, y) in points {
        out.push_str(&format!("{} {:.6}\n", format_f64(x), y));
    }
    fs::write(path, out)?;
    Ok(path.to_path_buf())
}

fn write_targets(
    path: &Path,
    matrix: &RatingMatrix,
    targets: &[UserId],
    seed: u64,
) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "target"])?;
    for &t in targets {
        w.write_record(&[seed.to_string(), matrix.external_user(t).to_string()])?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

/// Shortest round-trip decimal form (CSV stays self-describing without
/// trailing-zero noise).
fn format_f64(v: f64) -> String {
    let s = format!("{v}");
    debug_assert_eq!(s.parse::<f64>().ok(), Some(v));
    s
}

//! End-to-end study orchestration: data generation, reconstruction, backward
//! solve, and Monte Carlo aggregation. Replicates fan out to scoped worker
//! threads; every replicate owns its RNG streams, so aggregation order cannot
//! affect the result.

use super::config::ExperimentConfig;
use super::report::{pairwise_mean, standard_error, ExperimentReport, ReportRow, SummaryRow};
use super::truth;
use crate::error::{Error, Result};
use crate::estimator::{empirical_mise, mise_bound_final, reconstruct_final, reconstruct_source, EstimatorConfig};
use crate::operators::{OperatorBand, TruncationLevel};
use crate::params::{
    beta_schedule, clamped_schedule, require_admissible, theoretical_rate_h1, theoretical_rate_l2,
    RegularizationSchedule,
};
use crate::random_data::{
    sample_diffusion_path, sample_final_observations, sample_source_observations, CoefficientPath,
    GridObservations, NoiseSpec,
};
use crate::solver::{backward_regularized_solve, forward_solve, Nonlinearity, SolveSpec, SourcePath, TimeGrid, Trajectory};
use crate::spectral::{format_f64, DesignGrid, ModeSet, SpectralField};

/// One (counts, eps) study cell with its resolved schedule.
#[derive(Debug, Clone)]
pub struct CellPlan {
    pub counts: Vec<usize>,
    pub eps: f64,
    /// Stream-splitting index; distinct per cell.
    pub cell_id: u64,
    pub schedule: RegularizationSchedule,
}

/// Forward-solved ground truth shared by every cell.
pub struct TruthData {
    pub time_grid: TimeGrid,
    pub time_nodes: Vec<f64>,
    pub lambda: CoefficientPath,
    pub trajectory: Trajectory,
}

impl TruthData {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        let time_grid = TimeGrid::uniform(cfg.horizon, cfg.solver.steps)?;
        let time_nodes = time_grid.nodes();
        let lambda = truth::lambda_path(cfg, &time_nodes)?;
        let spec = SolveSpec {
            band: OperatorBand::new(cfg.operator.a0, cfg.operator.a1, 0.0)?,
            trunc: None,
            mode_set: ModeSet::new(cfg.dimension, cfg.solver.forward_beta)?,
            nonlinearity: nonlinearity_flag(cfg),
            coefficient_path: lambda.clone(),
            source: truth::source_path(cfg, &time_nodes)?,
        };
        let u0 = truth::u0_field(cfg)?;
        let trajectory = forward_solve(&u0, &spec, &time_grid)?;
        Ok(TruthData {
            time_grid,
            time_nodes,
            lambda,
            trajectory,
        })
    }
}

fn nonlinearity_flag(cfg: &ExperimentConfig) -> Nonlinearity {
    if cfg.solver.nonlinear {
        Nonlinearity::On
    } else {
        Nonlinearity::Off
    }
}

fn estimator_config(cfg: &ExperimentConfig, schedule: &RegularizationSchedule) -> Result<EstimatorConfig> {
    let mut est = EstimatorConfig::new(schedule.beta_n, cfg.schedule.mu.clone(), cfg.schedule.mu0)?;
    est.c_mu = cfg.schedule.c_mu;
    Ok(est)
}

/// All study cells with their clamped schedules; fails (exit code 3 at the
/// CLI) before any replicate work if a schedule is structurally inadmissible.
pub fn plan_cells(cfg: &ExperimentConfig) -> Result<Vec<CellPlan>> {
    let knobs = cfg.knobs();
    let mode = cfg.mode.as_error_mode();
    let mut cells = Vec::new();
    for (ci, counts) in cfg.counts.iter().enumerate() {
        for (ei, &eps) in cfg.eps.iter().enumerate() {
            let schedule = clamped_schedule(counts, &knobs, eps, mode)?;
            require_admissible(&schedule)?;
            let modes = ModeSet::new(cfg.dimension, schedule.beta_n)?;
            let needed = 2 * modes.max_component() as usize;
            if counts.iter().any(|&n| n < needed) {
                return Err(Error::ConfigInvalid(vec![format!(
                    "counts {counts:?} too coarse for the mode set of beta_n = {} (need n_k >= {needed} to de-alias)",
                    schedule.beta_n
                )]));
            }
            cells.push(CellPlan {
                counts: counts.clone(),
                eps,
                cell_id: (ci * cfg.eps.len() + ei) as u64,
                schedule,
            });
        }
    }
    Ok(cells)
}

struct CellContext<'a> {
    cfg: &'a ExperimentConfig,
    truth: &'a TruthData,
    plan: &'a CellPlan,
    grid: DesignGrid,
    est_modes: ModeSet,
    est_cfg: EstimatorConfig,
    h_values: Vec<f64>,
    g_values: Vec<Vec<f64>>,
    error_times: &'a [f64],
}

impl<'a> CellContext<'a> {
    fn new(cfg: &'a ExperimentConfig, truth: &'a TruthData, plan: &'a CellPlan, error_times: &'a [f64]) -> Result<Self> {
        let grid = DesignGrid::new(&plan.counts)?;
        let est_modes = ModeSet::new(cfg.dimension, plan.schedule.beta_n)?;
        let est_cfg = estimator_config(cfg, &plan.schedule)?;
        let h_field = truth.trajectory.field(truth.time_grid.num_steps());
        let h_values: Result<Vec<f64>> = grid.points().iter().map(|x| h_field.synthesize(x)).collect();
        let g_values = truth::source_values(cfg, &grid, &truth.time_nodes)?;
        Ok(CellContext {
            cfg,
            truth,
            plan,
            grid,
            est_modes,
            est_cfg,
            h_values: h_values?,
            g_values,
            error_times,
        })
    }

    fn noise_spec(&self, replicate: u64) -> Result<NoiseSpec> {
        Ok(NoiseSpec::new(self.cfg.noise.v_max, self.cfg.noise.vartheta, self.plan.eps, self.cfg.seed)?
            .with_replicate(replicate)
            .with_cell(self.plan.cell_id))
    }

    fn sample(&self, replicate: u64) -> Result<(GridObservations, CoefficientPath)> {
        let nspec = self.noise_spec(replicate)?;
        let final_data = sample_final_observations(&self.h_values, &self.grid, &nspec)?;
        let source_paths = sample_source_observations(&self.g_values, &self.grid, &self.truth.time_nodes, &nspec)?;
        let obs = GridObservations::new(self.grid.clone(), final_data, source_paths, self.truth.time_nodes.clone())?;
        let lambda_eps = sample_diffusion_path(&self.truth.lambda, self.cfg.operator.a0, self.cfg.operator.a1, &nspec)?;
        Ok((obs, lambda_eps.path))
    }

    fn reconstruct(&self, obs: &GridObservations) -> Result<(SpectralField, SourcePath)> {
        let h_hat = reconstruct_final(obs, &self.est_cfg)?;
        let g_fields = reconstruct_source(obs, &self.est_cfg)?;
        let g_hat = SourcePath::new(self.truth.time_nodes.clone(), g_fields)?;
        Ok((h_hat, g_hat))
    }

    fn backward(&self, h_hat: &SpectralField, g_hat: SourcePath, lambda_eps: CoefficientPath) -> Result<Trajectory> {
        let s = &self.plan.schedule;
        let spec = SolveSpec {
            band: OperatorBand::new(s.a0, s.a1, s.rho_n)?,
            trunc: if self.cfg.solver.nonlinear {
                Some(TruncationLevel::new(s.q_n)?)
            } else {
                None
            },
            mode_set: self.est_modes.clone(),
            nonlinearity: nonlinearity_flag(self.cfg),
            coefficient_path: lambda_eps,
            source: Some(g_hat),
        };
        backward_regularized_solve(h_hat, &spec, &self.truth.time_grid)
    }

    fn replicate_rows(&self, replicate: u64) -> Result<Vec<ReportRow>> {
        let (obs, lambda_eps) = self.sample(replicate)?;
        let (h_hat, g_hat) = self.reconstruct(&obs)?;
        let reconstruction = self.backward(&h_hat, g_hat, lambda_eps)?;
        let s = &self.plan.schedule;
        let knobs = self.cfg.knobs();
        let n: u64 = self.plan.counts.iter().map(|&c| c as u64).product();
        let mut rows = Vec::with_capacity(self.error_times.len());
        for &t in self.error_times {
            let diff = reconstruction
                .field_near(t)
                .add_scaled(self.truth.trajectory.field_near(t), -1.0);
            let l2 = diff.l2_norm().powi(2);
            let h1 = l2 + diff.sobolev_norm(1.0).powi(2);
            rows.push(ReportRow {
                n,
                eps: self.plan.eps,
                replicate,
                t,
                l2_err: l2,
                h1_err: h1,
                rate_l2: theoretical_rate_l2(t, s, &self.plan.counts, &knobs.mu, knobs.mu0, knobs.gamma)?,
                rate_h1: theoretical_rate_h1(t, s, &self.plan.counts, &knobs.mu, knobs.mu0, knobs.gamma)?,
                seed: self.cfg.seed,
            });
        }
        Ok(rows)
    }
}

fn run_cell(ctx: &CellContext) -> Result<Vec<ReportRow>> {
    let reps = ctx.cfg.replicates as u64;
    let workers = std::thread::available_parallelism()
        .map(|n| n.get() as u64)
        .unwrap_or(1)
        .min(reps);
    let mut indexed: Vec<(u64, Result<Vec<ReportRow>>)> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                let mut r = w;
                while r < reps {
                    out.push((r, ctx.replicate_rows(r)));
                    r += workers;
                }
                out
            }));
        }
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    indexed.sort_by_key(|(r, _)| *r);
    let mut rows = Vec::new();
    for (_, result) in indexed {
        rows.extend(result?);
    }
    Ok(rows)
}

/// The Monte Carlo MISE study over every (counts, eps) cell.
pub fn run_mise_study(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let cells = plan_cells(cfg)?;
    let truth_data = TruthData::prepare(cfg)?;
    let error_times = cfg.error_times_or_default();
    let knobs = cfg.knobs();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for plan in &cells {
        let ctx = CellContext::new(cfg, &truth_data, plan, &error_times)?;
        let cell_rows = run_cell(&ctx)?;
        let n: u64 = plan.counts.iter().map(|&c| c as u64).product();
        for &t in &error_times {
            let l2s: Vec<f64> = cell_rows.iter().filter(|r| r.t == t).map(|r| r.l2_err).collect();
            let h1s: Vec<f64> = cell_rows.iter().filter(|r| r.t == t).map(|r| r.h1_err).collect();
            summary.push(SummaryRow {
                n,
                eps: plan.eps,
                t,
                mean_l2: pairwise_mean(&l2s),
                se_l2: standard_error(&l2s),
                mean_h1: pairwise_mean(&h1s),
                se_h1: standard_error(&h1s),
                rate_l2: theoretical_rate_l2(t, &plan.schedule, &plan.counts, &knobs.mu, knobs.mu0, knobs.gamma)?,
                rate_h1: theoretical_rate_h1(t, &plan.schedule, &plan.counts, &knobs.mu, knobs.mu0, knobs.gamma)?,
                schedule: plan.schedule.clone(),
            });
        }
        rows.extend(cell_rows);
    }
    Ok(ExperimentReport {
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        rows,
        summary,
    })
}

/// Estimator-only convergence study (no PDE): per grid, the Monte Carlo mean
/// of the empirical MISE of H-hat against the truth u0 recipe, its
/// theoretical bound, and their ratio, as CSV.
pub fn run_convergence_table(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let knobs = cfg.knobs();
    let truth_h = truth::u0_field(cfg)?;
    let mut out = String::from("n,mean_mise,bound,ratio\n");
    for (ci, counts) in cfg.counts.iter().enumerate() {
        let beta = beta_schedule(counts, knobs.alpha0)?;
        let mut est_cfg = EstimatorConfig::new(beta, knobs.mu.clone(), knobs.mu0)?;
        est_cfg.c_mu = cfg.schedule.c_mu;
        let modes = ModeSet::new(cfg.dimension, beta)?;
        let needed = 2 * modes.max_component() as usize;
        if counts.iter().any(|&n| n < needed) {
            return Err(Error::ConfigInvalid(vec![format!(
                "counts {counts:?} too coarse for beta_n = {beta} (need n_k >= {needed})"
            )]));
        }
        let grid = DesignGrid::new(counts)?;
        let h_values: Result<Vec<f64>> = grid.points().iter().map(|x| truth_h.synthesize(x)).collect();
        let h_values = h_values?;
        let mut mises = Vec::with_capacity(cfg.replicates);
        for r in 0..cfg.replicates as u64 {
            let nspec = NoiseSpec::new(cfg.noise.v_max, cfg.noise.vartheta, 0.0, cfg.seed)?
                .with_replicate(r)
                .with_cell(ci as u64);
            let data = sample_final_observations(&h_values, &grid, &nspec)?;
            let obs = GridObservations::new(grid.clone(), data, vec![vec![0.0]; grid.len()], vec![0.0])?;
            let h_hat = reconstruct_final(&obs, &est_cfg)?;
            mises.push(empirical_mise(&h_hat, &truth_h)?);
        }
        let mean = pairwise_mean(&mises);
        let bound = mise_bound_final(&est_cfg, counts, truth_h.sobolev_norm(knobs.mu0), cfg.noise.v_max)?;
        let n: u64 = counts.iter().map(|&c| c as u64).product();
        out.push_str(&format!(
            "{},{},{},{}\n",
            n,
            format_f64(mean),
            format_f64(bound),
            format_f64(mean / bound)
        ));
    }
    Ok(out)
}

/// Artifacts of one replicate of one study cell; what the single-shot CLI
/// subcommands write out.
pub struct CellArtifacts {
    pub observations: GridObservations,
    pub lambda_eps: CoefficientPath,
    pub h_hat: SpectralField,
    pub g_hat: SourcePath,
    pub reconstruction: Trajectory,
    pub truth_trajectory: Trajectory,
    pub schedule: RegularizationSchedule,
}

/// Run the full pipeline for one cell (indices into counts and eps lists)
/// and one replicate.
pub fn run_single_cell(cfg: &ExperimentConfig, counts_index: usize, eps_index: usize, replicate: u64) -> Result<CellArtifacts> {
    cfg.validate()?;
    if counts_index >= cfg.counts.len() || eps_index >= cfg.eps.len() {
        return Err(Error::invalid("cell index out of range"));
    }
    let cells = plan_cells(cfg)?;
    let plan = cells
        .into_iter()
        .find(|c| c.cell_id == (counts_index * cfg.eps.len() + eps_index) as u64)
        .expect("cell exists by the index check above");
    let truth_data = TruthData::prepare(cfg)?;
    let error_times = cfg.error_times_or_default();
    let ctx = CellContext::new(cfg, &truth_data, &plan, &error_times)?;
    let (observations, lambda_eps) = ctx.sample(replicate)?;
    let (h_hat, g_hat) = ctx.reconstruct(&observations)?;
    let reconstruction = ctx.backward(&h_hat, g_hat.clone(), lambda_eps.clone())?;
    Ok(CellArtifacts {
        observations,
        lambda_eps,
        h_hat,
        g_hat,
        reconstruction,
        truth_trajectory: truth_data.trajectory,
        schedule: plan.schedule,
    })
}

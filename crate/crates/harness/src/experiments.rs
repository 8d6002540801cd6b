//! Dispatch from a validated config to the engines, with seed averaging and
//! the matching theory attached to each row.

use miniamp_core::denoisers::{ChannelKind as CoreChannel, ChannelSpec, PriorSpec};
use miniamp_core::glm_amp::{
    adf, amp_offline_gaussian, gamp, mini_amp, mini_gamp, vb_mean_field, AmpOptions, GlmProblem, VbOptions,
};
use miniamp_core::lowrank::{
    gmm_stream_cluster, minibatch_kmeans, permutation_matched_losses, ClusterOptions, ClusterTruth, LowRankOptions,
};
use miniamp_core::replica::{mmse_recursion, phase_diagram, scan_landscape, GridSpec, Phase};
use miniamp_core::state_evolution::{
    se_adf_ode, se_lowrank, se_mini, se_offline, CentroidPrior, LowRankMode, LowRankSeOptions, SeOptions,
};
use miniamp_core::synthetic::Design;
use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::{Engine, ExperimentConfig, ExperimentKind, PriorKind, SeMode};
use crate::error::{HarnessError, Result};
use crate::generate::{generate_glm, generate_gmm};
use crate::ingest::ingest_matrix;
use crate::record::{Keys, ResultRecord, RowSink, Stats};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub config_hash: String,
    pub experiment: String,
    pub rows: Vec<ResultRecord>,
    pub warnings: Vec<String>,
}

/// Spacing of the theory-only reference curves in `alpha`.
const CURVE_STEP: f64 = 0.05;

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    let mut ctx = Ctx { cfg, sink: RowSink::new(&hash, &cfg.name), warnings: Vec::new() };
    match cfg.kind {
        ExperimentKind::GlmStream => glm_stream(&mut ctx)?,
        ExperimentKind::GlmOffline => glm_offline(&mut ctx)?,
        ExperimentKind::SeSweep => se_sweep(&mut ctx)?,
        ExperimentKind::Landscape => landscape(&mut ctx)?,
        ExperimentKind::PhaseDiagram => phase(&mut ctx)?,
        ExperimentKind::ClusterStream => cluster(&mut ctx)?,
        ExperimentKind::TmaxStudy => tmax(&mut ctx)?,
    }
    ctx.warnings.sort();
    ctx.warnings.dedup();
    Ok(ExperimentOutput { config_hash: hash, experiment: cfg.name.clone(), rows: ctx.sink.rows, warnings: ctx.warnings })
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    sink: RowSink,
    warnings: Vec<String>,
}

impl Ctx<'_> {
    /// Runs `f` for every seed in parallel, in seed order. Failed seeds become
    /// `failure` rows; more than half failing aborts the experiment.
    fn over_seeds<T: Send>(&mut self, series: &str, param: f64, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
        let seeds = &self.cfg.seeds;
        let results: Vec<(u64, Result<T>)> = seeds.par_iter().map(|&s| (s, f(s))).collect();
        let total = results.len();
        let mut ok = Vec::with_capacity(total);
        let mut failures = Vec::new();
        for (seed, r) in results {
            match r {
                Ok(v) => ok.push(v),
                Err(e @ HarnessError::Numerical(_)) => {
                    let batch = match &e {
                        HarnessError::Numerical(miniamp_core::Error::Divergence { batch, .. }) => *batch as f64 + 1.0,
                        _ => f64::NAN,
                    };
                    self.sink.per_seed(Keys { series, param: Some(param), ..Default::default() }, seed, "failure", batch);
                    failures.push(format!("seed {seed}: {e}"));
                }
                Err(e) => return Err(e),
            }
        }
        if 2 * failures.len() > total {
            return Err(HarnessError::TooManyFailures {
                failed: failures.len(),
                total,
                first: failures.swap_remove(0),
            });
        }
        self.warnings.extend(failures.into_iter().map(|f| format!("{series}: {f}")));
        Ok(ok)
    }

    fn amp_options(&self, t_max: usize) -> AmpOptions {
        AmpOptions { t_max, tol: self.cfg.tol(), damping: self.cfg.algorithm.damping, record_iterates: false }
    }

    fn stream_name(&self, alpha_b: f64) -> String {
        format!("{}/alpha_b={alpha_b}", self.cfg.name)
    }
}

/// Per-batch columns of a seeds x batches table.
fn column_stats(per_seed: &[Vec<f64>], k: usize) -> Stats {
    let vals: Vec<f64> = per_seed.iter().filter_map(|v| v.get(k).copied()).collect();
    Stats::of(&vals)
}

fn gaussian_channel(ch: &ChannelSpec) -> bool {
    ch.kind == CoreChannel::Gaussian
}

fn glm_stream(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let prior = cfg.prior()?;
    let channel = cfg.channel()?;
    let theory_ch = cfg.theory_channel()?;
    let n = cfg.n();
    let engines = cfg.algorithm.engines.clone();
    let opts = ctx.amp_options(cfg.t_max());
    let mut alpha_top: f64 = 0.0;
    for &ab in &cfg.geometry.alpha_b {
        let b = cfg.batches_for(ab)?;
        let rows = cfg.batch_rows(ab);
        alpha_top = alpha_top.max(b as f64 * ab);
        let name = ctx.stream_name(ab);
        let runs = ctx.over_seeds("data", ab, |seed| {
            let inst = generate_glm(&name, seed, n, rows, b, &prior, &channel, Design::Gaussian);
            let truth = Some(inst.x.view());
            let batches = inst.batches();
            let mut out = Vec::new();
            for e in &engines {
                let (mse, iters, warnings) = match e {
                    Engine::MiniAmp => {
                        let r = if gaussian_channel(&channel) {
                            mini_amp(&batches, &prior, &channel, &opts, truth)?
                        } else {
                            mini_gamp(&batches, &prior, &channel, &opts, truth)?
                        };
                        let it = r.report.iterations.iter().map(|&i| i as f64).collect();
                        (r.report.batch_mse, it, r.report.warnings)
                    }
                    Engine::Vb => {
                        let vb = VbOptions { t_max: opts.t_max, tol: opts.tol, ..VbOptions::default() };
                        let r = vb_mean_field(&batches, &prior, &vb, truth)?;
                        let it = r.report.iterations.iter().map(|&i| i as f64).collect();
                        (r.report.batch_mse, it, r.report.warnings)
                    }
                    Engine::Adf => {
                        let r = adf(inst.phi.view(), inst.y.view(), &prior, &channel, truth, rows)?;
                        (r.mse_trace.iter().skip(1).map(|p| p.1).collect(), Vec::new(), Vec::new())
                    }
                    Engine::Kmeans => unreachable!("rejected by validation"),
                };
                out.push((mse, iters, warnings));
            }
            Ok(out)
        })?;
        let se = if engines.contains(&Engine::MiniAmp) {
            Some(se_mini(&prior, &theory_ch, ab, b, &SeOptions::default())?.batch_mse())
        } else {
            None
        };
        let ode = if engines.contains(&Engine::Adf) && theory_ch.is_bayes_optimal() {
            let per = (ab / 0.005).ceil().max(1.0);
            let pts = se_adf_ode(&prior, &theory_ch, b as f64 * ab, ab / per)?;
            Some((1..=b).map(|k| pts[k * per as usize].mse).collect::<Vec<_>>())
        } else {
            None
        };
        for (ei, e) in engines.iter().enumerate() {
            let series = match e {
                Engine::MiniAmp => "mini_amp",
                Engine::Vb => "vb",
                Engine::Adf => "adf",
                Engine::Kmeans => unreachable!(),
            };
            let mse: Vec<Vec<f64>> = runs.iter().map(|r| r[ei].0.clone()).collect();
            let iters: Vec<Vec<f64>> = runs.iter().map(|r| r[ei].1.clone()).collect();
            for r in &runs {
                ctx.warnings.extend(r[ei].2.iter().map(|w| format!("{series}: {w}")));
            }
            let theory = match e {
                Engine::MiniAmp => se.as_ref(),
                Engine::Adf => ode.as_ref(),
                _ => None,
            };
            for k in 0..b {
                let keys = Keys { series, param: Some(ab), batch: Some(k + 1), alpha: Some((k + 1) as f64 * ab) };
                ctx.sink.aggregate(keys, "mse", column_stats(&mse, k), theory.map(|t| t[k]));
                if !iters.iter().all(|v| v.is_empty()) {
                    ctx.sink.aggregate(keys, "iterations", column_stats(&iters, k), None);
                }
            }
        }
        if cfg.algorithm.reference_curves && gaussian_channel(&theory_ch) && theory_ch.delta > 0.0 && theory_ch.is_bayes_optimal() {
            let steps = mmse_recursion(&prior, theory_ch.delta, ab, b, &grid(cfg))?;
            for (k, st) in steps.iter().enumerate() {
                let keys = Keys { series: "mmse", param: Some(ab), batch: Some(k + 1), alpha: Some((k + 1) as f64 * ab) };
                ctx.sink.exact(keys, "mse", st.mmse);
            }
        }
    }
    if cfg.algorithm.reference_curves {
        reference_curves(ctx, &prior, &theory_ch, alpha_top)?;
    }
    Ok(())
}

fn grid(cfg: &ExperimentConfig) -> GridSpec {
    GridSpec { points: cfg.algorithm.grid_points, ..GridSpec::default() }
}

/// Offline state evolution and the fully online limit on a regular grid.
fn reference_curves(ctx: &mut Ctx, prior: &PriorSpec, ch: &ChannelSpec, alpha_top: f64) -> Result<()> {
    let steps = (alpha_top / CURVE_STEP).round() as usize;
    let alphas: Vec<f64> = (1..=steps).map(|i| i as f64 * CURVE_STEP).collect();
    let offline: Vec<Result<f64>> = alphas
        .par_iter()
        .map(|&a| Ok(se_offline(prior, ch, a, &SeOptions::default())?.final_mse()))
        .collect();
    for (&a, e) in alphas.iter().zip(offline) {
        ctx.sink.exact(Keys { series: "offline", alpha: Some(a), ..Default::default() }, "se_mse", e?);
    }
    if ch.is_bayes_optimal() && steps > 0 {
        let pts = se_adf_ode(prior, ch, alpha_top, CURVE_STEP / 10.0)?;
        for i in 1..=steps {
            let p = &pts[(10 * i).min(pts.len() - 1)];
            ctx.sink.exact(Keys { series: "online", alpha: Some(i as f64 * CURVE_STEP), ..Default::default() }, "se_mse", p.mse);
        }
    }
    Ok(())
}

fn glm_offline(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let prior = cfg.prior()?;
    let channel = cfg.channel()?;
    let theory_ch = cfg.theory_channel()?;
    let n = cfg.n();
    let opts = ctx.amp_options(cfg.t_max());
    for &alpha in &cfg.geometry.alpha {
        let rows = (alpha * n as f64).round() as usize;
        let name = format!("{}/alpha={alpha}", cfg.name);
        let runs = ctx.over_seeds("amp", alpha, |seed| {
            let inst = generate_glm(&name, seed, n, rows, 1, &prior, &channel, Design::Gaussian);
            let problem = GlmProblem::new(inst.phi, inst.y, prior, channel)?;
            let (_, report) = if gaussian_channel(&channel) {
                amp_offline_gaussian(&problem, &opts, Some(inst.x.view()))?
            } else {
                gamp(&problem, &opts, Some(inst.x.view()))?
            };
            Ok((report.batch_mse[0], report.iterations[0] as f64))
        })?;
        let theory = se_offline(&prior, &theory_ch, alpha, &SeOptions::default())?.final_mse();
        let keys = Keys { series: "amp", param: Some(alpha), batch: Some(1), alpha: Some(alpha) };
        let mse: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let its: Vec<f64> = runs.iter().map(|r| r.1).collect();
        ctx.sink.aggregate(keys, "mse", Stats::of(&mse), Some(theory));
        ctx.sink.aggregate(keys, "iterations", Stats::of(&its), None);
    }
    Ok(())
}

fn se_sweep(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let prior = cfg.prior()?;
    let ch = cfg.theory_channel()?;
    let opts = SeOptions::default();
    for &ab in &cfg.geometry.alpha_b {
        let b = cfg.batches_for(ab)?;
        let traj = se_mini(&prior, &ch, ab, b, &opts)?;
        for (k, p) in traj.finals().iter().enumerate() {
            let keys = Keys { series: "mini", param: Some(ab), batch: Some(k + 1), alpha: Some((k + 1) as f64 * ab) };
            ctx.sink.exact(keys, "se_mse", p.mse);
            ctx.sink.exact(keys, "se_variance", p.variance);
        }
    }
    let alphas = cfg.geometry.alpha.clone();
    let offline: Vec<Result<_>> =
        alphas.par_iter().map(|&a| Ok(se_offline(&prior, &ch, a, &opts)?.finals()[0])).collect();
    for (&a, p) in alphas.iter().zip(offline) {
        let p = p?;
        let keys = Keys { series: "offline", param: Some(a), batch: Some(1), alpha: Some(a) };
        ctx.sink.exact(keys, "se_mse", p.mse);
        ctx.sink.exact(keys, "se_variance", p.variance);
    }
    if cfg.algorithm.engines.contains(&Engine::Adf) && ch.is_bayes_optimal() {
        let top = cfg.geometry.alpha_max.or_else(|| alphas.iter().copied().reduce(f64::max)).unwrap_or(0.0);
        let steps = (top / CURVE_STEP).round() as usize;
        let pts = se_adf_ode(&prior, &ch, top, CURVE_STEP / 10.0)?;
        for i in 1..=steps {
            let p = &pts[(10 * i).min(pts.len() - 1)];
            ctx.sink.exact(Keys { series: "online", alpha: Some(i as f64 * CURVE_STEP), ..Default::default() }, "se_mse", p.mse);
        }
    }
    Ok(())
}

fn landscape(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let prior = cfg.prior()?;
    let ch = cfg.theory_channel()?;
    let delta = ch.delta;
    let grid = grid(cfg);
    for &ab in &cfg.geometry.alpha_b {
        let b = cfg.batches_for(ab)?;
        let se = se_mini(&prior, &ch, ab, b, &SeOptions::default())?.batch_mse();
        let mmse = mmse_recursion(&prior, delta, ab, b, &grid)?;
        // Landscape seen by AMP: precision accumulated along its own trajectory.
        let mut lambdas = Vec::with_capacity(b);
        let mut lambda = 0.0;
        for e in &se {
            lambdas.push(lambda);
            lambda += ab / (delta + e);
        }
        let scans: Vec<Result<_>> =
            lambdas.par_iter().map(|&l| Ok(scan_landscape(&prior, delta, ab, l, &grid)?)).collect();
        for (k, scan) in scans.into_iter().enumerate() {
            let scan = scan?;
            let alpha = Some((k + 1) as f64 * ab);
            let batch = Some(k + 1);
            for (e, v) in scan.e.iter().zip(&scan.values) {
                ctx.sink.exact(Keys { series: "irs", param: Some(*e), batch, alpha }, "irs", *v);
            }
            for m in &scan.minima {
                ctx.sink.exact(Keys { series: "minima", param: Some(m.e), batch, alpha }, "irs", m.value);
            }
            let keys = Keys { series: "summary", param: Some(ab), batch, alpha };
            ctx.sink.exact(keys, "lambda", scan.lambda);
            ctx.sink.exact(keys, "local_minima", scan.minima.len() as f64);
            ctx.sink.exact(keys, "global_min_e", scan.global.e);
            ctx.sink.exact(keys, "se_mse", se[k]);
            ctx.sink.exact(keys, "mmse", mmse[k].mmse);
        }
    }
    Ok(())
}

fn phase(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let prior = cfg.prior()?;
    let ch = cfg.theory_channel()?;
    let b = cfg.geometry.num_batches.expect("validated");
    let grid = grid(cfg);
    let cells: Vec<Result<_>> = cfg
        .geometry
        .alpha_b
        .par_iter()
        .map(|&ab| Ok(phase_diagram(&prior, ch.delta, &[ab], b, &grid, &SeOptions::default())?))
        .collect();
    for pd in cells {
        for c in pd?.cells {
            let keys = Keys { series: "grid", param: Some(c.alpha_b), batch: Some(c.batch), alpha: Some(c.batch as f64 * c.alpha_b) };
            ctx.sink.exact(keys, "mmse", c.mmse);
            ctx.sink.exact(keys, "amp_mse", c.amp_mse);
            let code = match c.phase {
                Phase::Optimal => 0.0,
                Phase::Suboptimal => 1.0,
                Phase::Zero => 2.0,
            };
            ctx.sink.exact(keys, "phase", code);
        }
    }
    Ok(())
}

fn cluster_options(cfg: &ExperimentConfig, prior: PriorSpec) -> ClusterOptions {
    ClusterOptions {
        rank: cfg.model.rank,
        prior_u: prior,
        delta: cfg.model.delta,
        learn_noise: cfg.algorithm.learn_noise,
        init_batches: cfg.algorithm.init_batches,
        amp: LowRankOptions { t_max: cfg.t_max(), tol: cfg.tol() },
    }
}

fn cluster(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    if cfg.data.is_some() {
        return cluster_data(ctx);
    }
    let prior = cfg.prior()?;
    let n = cfg.n();
    let rank = cfg.model.rank;
    let delta0 = cfg.model.delta0.unwrap_or(cfg.model.delta);
    let opts = cluster_options(cfg, prior);
    let with_kmeans = cfg.algorithm.engines.contains(&Engine::Kmeans);
    let with_amp = cfg.algorithm.engines.contains(&Engine::MiniAmp);
    for &ab in &cfg.geometry.alpha_b {
        let b = cfg.batches_for(ab)?;
        let cols = cfg.batch_rows(ab);
        let name = ctx.stream_name(ab);
        let runs = ctx.over_seeds("data", ab, |seed| {
            let inst = generate_gmm(&name, seed, n, cols, b, rank, &prior, delta0);
            let views = inst.views();
            let mut amp = None;
            if with_amp {
                let mut rng = stream_rng(&name, seed, "algorithm", 0);
                let truth = ClusterTruth { u: &inst.u, labels: &inst.labels };
                let out = gmm_stream_cluster(&views, &opts, Some(truth), &mut rng)?;
                let cm: Vec<f64> = out.batches.iter().map(|r| r.centroid_mse.unwrap_or(f64::NAN)).collect();
                let ll: Vec<f64> = out.batches.iter().map(|r| r.label_loss.unwrap_or(f64::NAN)).collect();
                amp = Some((cm, ll, out.warnings));
            }
            let mut km = None;
            if with_kmeans {
                let mut rng = stream_rng(&name, seed, "kmeans", 0);
                let out = minibatch_kmeans(&views, rank, &mut rng)?;
                let est: Vec<usize> = out.labels.concat();
                let truth: Vec<usize> = inst.labels.concat();
                km = Some(permutation_matched_losses(&out.u_hat(), &est, &inst.u, &truth)?);
            }
            Ok((amp, km))
        })?;
        let theory = if with_amp && cfg.model.prior == PriorKind::Gaussian {
            let cp = CentroidPrior::new(ndarray::Array1::from_elem(rank, cfg.model.mean), cfg.model.sigma2)?;
            let mode = match cfg.algorithm.se_mode {
                SeMode::Ansatz => LowRankMode::Ansatz,
                SeMode::Full => LowRankMode::FullMatrix,
            };
            let so = LowRankSeOptions { mode, initial_overlap: cfg.algorithm.initial_overlap, ..Default::default() };
            match se_lowrank(&cp, cfg.model.delta, ab, b, &so) {
                Ok(t) => Some(t.finals().iter().map(|o| (o.centroid_mse, o.label_error)).collect::<Vec<_>>()),
                Err(miniamp_core::Error::Unsupported(m)) => {
                    ctx.warnings.push(format!("no low-rank theory: {m}"));
                    None
                }
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };
        if with_amp {
            let cm: Vec<Vec<f64>> = runs.iter().map(|r| r.0.as_ref().unwrap().0.clone()).collect();
            let ll: Vec<Vec<f64>> = runs.iter().map(|r| r.0.as_ref().unwrap().1.clone()).collect();
            for r in &runs {
                ctx.warnings.extend(r.0.as_ref().unwrap().2.iter().cloned());
            }
            for k in 0..b {
                let keys = Keys { series: "mini_amp", param: Some(ab), batch: Some(k + 1), alpha: Some((k + 1) as f64 * ab) };
                let th = theory.as_ref().map(|t| t[k]);
                ctx.sink.aggregate(keys, "centroid_mse", column_stats(&cm, k), th.map(|t| t.0));
                ctx.sink.aggregate(keys, "label_loss", column_stats(&ll, k), th.map(|t| t.1));
            }
        }
        if with_kmeans {
            let cm: Vec<f64> = runs.iter().map(|r| r.1.unwrap().0).collect();
            let ll: Vec<f64> = runs.iter().map(|r| r.1.unwrap().1).collect();
            let keys = Keys { series: "kmeans", param: Some(ab), batch: Some(b), alpha: Some(b as f64 * ab) };
            ctx.sink.aggregate(keys, "centroid_mse", Stats::of(&cm), None);
            ctx.sink.aggregate(keys, "label_loss", Stats::of(&ll), None);
        }
    }
    Ok(())
}

/// Clustering of a user matrix (one record per row); each seed presents the
/// records in a different order.
fn cluster_data(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let data = cfg.data.as_ref().expect("checked by caller");
    let records = ingest_matrix(&data.path, data.format)?;
    if records.nrows() == 0 || records.ncols() == 0 {
        return Err(HarnessError::Config(format!("{} holds no data", data.path.display())));
    }
    let y: Array2<f64> = records.t().as_standard_layout().into_owned();
    let prior = cfg.prior()?;
    let opts = cluster_options(cfg, prior);
    let m = y.ncols();
    let runs = ctx.over_seeds("data", data.batch_size as f64, |seed| {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut stream_rng(&cfg.name, seed, "order", 0));
        let shuffled = y.select(ndarray::Axis(1), &order);
        let views: Vec<_> = (0..m)
            .step_by(data.batch_size)
            .map(|s| shuffled.slice(s![.., s..(s + data.batch_size).min(m)]))
            .collect();
        let mut rng = stream_rng(&cfg.name, seed, "algorithm", 0);
        let out = gmm_stream_cluster(&views, &opts, None, &mut rng)?;
        let its: Vec<f64> = out.batches.iter().map(|r| r.iterations as f64).collect();
        let deltas: Vec<f64> = out.batches.iter().map(|r| r.delta).collect();
        Ok((its, deltas))
    })?;
    let its: Vec<Vec<f64>> = runs.iter().map(|r| r.0.clone()).collect();
    let deltas: Vec<Vec<f64>> = runs.iter().map(|r| r.1.clone()).collect();
    let n = y.nrows() as f64;
    for k in 0..m.div_ceil(data.batch_size) {
        let seen = ((k + 1) * data.batch_size).min(m) as f64;
        let keys = Keys { series: "mini_amp", param: Some(data.batch_size as f64), batch: Some(k + 1), alpha: Some(seen / n) };
        ctx.sink.aggregate(keys, "iterations", column_stats(&its, k), None);
        ctx.sink.aggregate(keys, "delta", column_stats(&deltas, k), None);
    }
    Ok(())
}

fn tmax(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let prior = cfg.prior()?;
    let channel = cfg.channel()?;
    let theory_ch = cfg.theory_channel()?;
    let n = cfg.n();
    let budgets = cfg.algorithm.t_max_list.clone();
    for &ab in &cfg.geometry.alpha_b {
        let b = cfg.batches_for(ab)?;
        let rows = cfg.batch_rows(ab);
        let name = ctx.stream_name(ab);
        let option_list: Vec<AmpOptions> =
            budgets.iter().map(|&t| ctx.amp_options(if t == 0 { cfg.t_max() } else { t })).collect();
        let runs = ctx.over_seeds("data", ab, |seed| {
            let inst = generate_glm(&name, seed, n, rows, b, &prior, &channel, Design::Gaussian);
            let batches = inst.batches();
            option_list
                .iter()
                .map(|o| Ok(mini_amp(&batches, &prior, &channel, o, Some(inst.x.view()))?.report.batch_mse))
                .collect::<Result<Vec<_>>>()
        })?;
        for (ti, &t) in budgets.iter().enumerate() {
            let se_opts = if t == 0 { SeOptions::default() } else { SeOptions { t_max: t, ..SeOptions::default() } };
            let se = se_mini(&prior, &theory_ch, ab, b, &se_opts)?.batch_mse();
            let series = if t == 0 { "converged".to_string() } else { format!("t_max={t}") };
            let mse: Vec<Vec<f64>> = runs.iter().map(|r| r[ti].clone()).collect();
            for k in 0..b {
                let keys = Keys { series: &series, param: Some(t as f64), batch: Some(k + 1), alpha: Some((k + 1) as f64 * ab) };
                ctx.sink.aggregate(keys, "mse", column_stats(&mse, k), Some(se[k]));
            }
        }
    }
    Ok(())
}

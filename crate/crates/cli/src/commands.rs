//! The subcommands. Each writes its CSVs into the configured output dir and
//! echoes the effective config next to them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use inversion_ad::epsnet::{load_model, save_model, train_eps_with, EpochLog, EpsilonModel, MlpEpsModel};
use inversion_ad::metrics::MetricsReport;
use inversion_ad::schedule::{NoiseSchedule, SubsetPolicy, TimestepSubset};
use inversion_ad::scoring::{fit_location_stats, ScoreMode};
use inversion_ad::synthbench::{make_dataset, read_ften, write_ften, Dataset, TEST_FILE, TRAIN_FILE};
use log::info;

use crate::config::RunConfig;
use crate::error::{config_err, file_err, CliResult};
use crate::pipeline::{Evaluator, Scored};

pub const GRID_STEPS: [usize; 6] = [3, 5, 10, 50, 100, 1000];
pub const RECON_RATIOS: [f64; 5] = [0.1, 0.2, 0.4, 0.6, 0.8];
pub const SCHEDULE_STEPS: [usize; 3] = [3, 10, 100];
pub const HIST_BINS: usize = 20;

pub const MODEL_FILE: &str = "model.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const NFE_FILE: &str = "nfe_log.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const ABLATE_SCORING_FILE: &str = "ablate_scoring.csv";
pub const ABLATE_SCORING_SCORES_FILE: &str = "ablate_scoring_scores.csv";
pub const ABLATE_SCORING_HIST_FILE: &str = "ablate_scoring_hist.csv";
pub const ABLATE_SCHEDULE_FILE: &str = "ablate_schedule.csv";
pub const LATENTS_FILE: &str = "latents.ften";

/// Rows of labelled cells over a fixed set of `S` columns; `None` is "n/a".
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub corner: String,
    pub columns: Vec<usize>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl Table {
    pub fn row(&self, name: &str) -> Option<&[Option<f64>]> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, v)| &v[..])
    }

    pub fn cell(&self, name: &str, steps: usize) -> Option<f64> {
        let col = self.columns.iter().position(|&s| s == steps)?;
        self.row(name)?[col]
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.corner.clone();
        for s in &self.columns {
            write!(out, ",{s}").unwrap();
        }
        out.push('\n');
        for (name, cells) in &self.rows {
            out.push_str(name);
            for c in cells {
                match c {
                    Some(v) => write!(out, ",{v:.6}").unwrap(),
                    None => out.push_str(",n/a"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(file_err(path))
}

pub fn load_data(cfg: &RunConfig) -> CliResult<Dataset<f64>> {
    match &cfg.data.dir {
        Some(dir) => {
            for f in [TRAIN_FILE, TEST_FILE] {
                if !dir.join(f).is_file() {
                    return config_err(format!("{} is missing {f}", dir.display()));
                }
            }
            Ok(Dataset::read_dir(dir)?)
        }
        None => Ok(make_dataset(&cfg.data.bench)?),
    }
}

/// Loads the model and checks its schedule against the config.
pub fn load_trained(cfg: &RunConfig) -> CliResult<(MlpEpsModel<f64>, NoiseSchedule<f64>)> {
    let path = cfg.model_path();
    if !path.is_file() {
        return config_err(format!("model file {} does not exist", path.display()));
    }
    let (model, schedule) = load_model::<f64>(&path)?;
    let want = cfg.schedule.build()?;
    if schedule != want {
        return config_err(format!(
            "model schedule (T={}, β=[{}, {}]) differs from config (T={}, β=[{}, {}])",
            schedule.len(),
            schedule.beta_start(),
            schedule.beta_end(),
            want.len(),
            want.beta_start(),
            want.beta_end()
        ));
    }
    Ok((model, schedule))
}

fn evaluator<'a>(cfg: &RunConfig, data: &'a Dataset<f64>) -> CliResult<Evaluator<'a>> {
    Evaluator::new(&data.test, (cfg.out_height, cfg.out_width), cfg.fpr_cap, cfg.seed)
}

fn inversion_mode(cfg: &RunConfig) -> ScoreMode {
    if ScoreMode::INVERSION.contains(&cfg.score_mode) {
        cfg.score_mode
    } else {
        ScoreMode::Combined
    }
}

pub fn cmd_gen_data(cfg: &RunConfig) -> CliResult<()> {
    cfg.echo()?;
    let data = make_dataset::<f64>(&cfg.data.bench)?;
    data.write_dir(&cfg.output_dir)?;
    info!(
        "wrote {} training and {} test samples to {}",
        data.train.len(),
        data.test.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

pub fn loss_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,loss\n");
    for l in logs {
        writeln!(out, "{},{}", l.epoch, l.loss).unwrap();
    }
    out
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    cfg.echo()?;
    let data = load_data(cfg)?;
    let schedule = cfg.schedule.build()?;
    let (model, logs) = train_eps_with(&data.train, &schedule, &cfg.train, |l| {
        info!("epoch {} loss {:.6} lr {:.3e}", l.epoch, l.loss, l.lr);
    })?;
    let path = cfg.model_path();
    save_model(&path, &model, &schedule)?;
    write_file(&cfg.output_dir, LOSS_FILE, &loss_csv(&logs))?;
    info!("saved {} parameters to {}", model.num_params(), path.display());
    Ok(())
}

/// Per-sample scores for `cfg.score_mode` on the test set.
pub fn eval_scores(cfg: &RunConfig, data: &Dataset<f64>) -> CliResult<Scored> {
    let ev = evaluator(cfg, data)?;
    if cfg.score_mode == ScoreMode::Mahalanobis {
        return ev.mahalanobis(&fit_location_stats(&data.train)?);
    }
    let (model, schedule) = load_trained(cfg)?;
    let ev = ev.with_model(&model, &schedule)?;
    let subset = cfg.subset()?;
    match cfg.score_mode {
        ScoreMode::Recon => match ev.reconstruction(&subset, cfg.recon_ratio)? {
            Some(s) => Ok(s),
            None => config_err(format!(
                "recon_ratio {} selects no step of a {}-step subset",
                cfg.recon_ratio,
                subset.len()
            )),
        },
        mode => ev.inversion(&subset, mode),
    }
}

pub struct EvalOutput {
    pub report: MetricsReport,
    pub metrics_csv: String,
    pub scores_csv: String,
    pub nfe_csv: String,
}

pub fn eval(cfg: &RunConfig, data: &Dataset<f64>) -> CliResult<EvalOutput> {
    let scored = eval_scores(cfg, data)?;
    let report = evaluator(cfg, data)?.report(&scored)?;
    let metrics_csv = format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row());
    let mut scores_csv = String::from("id,label,score,mode\n");
    let mut nfe_csv = String::from("id,nfe\n");
    for (i, (s, r)) in data.test.iter().zip(&scored.results).enumerate() {
        writeln!(scores_csv, "{i},{},{},{}", s.label as u8, r.score, r.mode).unwrap();
        writeln!(nfe_csv, "{i},{}", scored.nfe[i]).unwrap();
    }
    Ok(EvalOutput {
        report,
        metrics_csv,
        scores_csv,
        nfe_csv,
    })
}

pub fn cmd_eval(cfg: &RunConfig) -> CliResult<()> {
    cfg.echo()?;
    let data = load_data(cfg)?;
    let out = eval(cfg, &data)?;
    write_file(&cfg.output_dir, METRICS_FILE, &out.metrics_csv)?;
    write_file(&cfg.output_dir, SCORES_FILE, &out.scores_csv)?;
    write_file(&cfg.output_dir, NFE_FILE, &out.nfe_csv)?;
    info!("{}: {}", MetricsReport::CSV_HEADER, out.report.csv_row());
    Ok(())
}

fn feasible(cfg: &RunConfig, steps: usize) -> bool {
    steps <= cfg.schedule.timesteps
}

/// Image AU-ROC of the reconstruction baseline over `r` and of inversion,
/// across [`GRID_STEPS`].
pub fn grid_table(cfg: &RunConfig, ev: &Evaluator) -> CliResult<Table> {
    let mut rows: Vec<(String, Vec<Option<f64>>)> = RECON_RATIOS
        .iter()
        .map(|r| (format!("recon_{}", (r * 100.0).round() as usize), Vec::new()))
        .collect();
    let mut inversion = Vec::new();
    for &s in &GRID_STEPS {
        if !feasible(cfg, s) {
            rows.iter_mut().for_each(|(_, v)| v.push(None));
            inversion.push(None);
            continue;
        }
        let subset = TimestepSubset::new(cfg.schedule.timesteps, s, cfg.subset.policy)?;
        for (row, &r) in rows.iter_mut().zip(&RECON_RATIOS) {
            let cell = match ev.reconstruction(&subset, r)? {
                Some(scored) => Some(ev.image_auroc(&scored)?),
                None => None,
            };
            row.1.push(cell);
        }
        let auroc = ev.image_auroc(&ev.inversion(&subset, inversion_mode(cfg))?)?;
        info!("S={s}: inversion AU-ROC {auroc:.4}");
        inversion.push(Some(auroc));
    }
    rows.push(("inversion".to_string(), inversion));
    Ok(Table {
        corner: "method".to_string(),
        columns: GRID_STEPS.to_vec(),
        rows,
    })
}

pub fn cmd_grid(cfg: &RunConfig) -> CliResult<()> {
    cfg.echo()?;
    let data = load_data(cfg)?;
    let (model, schedule) = load_trained(cfg)?;
    let ev = evaluator(cfg, &data)?.with_model(&model, &schedule)?;
    write_file(&cfg.output_dir, GRID_FILE, &grid_table(cfg, &ev)?.to_csv())
}

pub struct ScoringAblation {
    pub table: Table,
    pub scores_csv: String,
    pub hist_csv: String,
}

fn histogram(out: &mut String, mode: ScoreMode, steps: usize, scores: &[f64], labels: &[bool]) {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / HIST_BINS as f64;
    let mut counts = [[0usize; 2]; HIST_BINS];
    for (&s, &l) in scores.iter().zip(labels) {
        let b = if width > 0.0 {
            (((s - lo) / width) as usize).min(HIST_BINS - 1)
        } else {
            0
        };
        counts[b][l as usize] += 1;
    }
    for (b, [normal, anomalous]) in counts.iter().enumerate() {
        let a = lo + width * b as f64;
        let z = if b + 1 == HIST_BINS {
            hi
        } else {
            lo + width * (b + 1) as f64
        };
        writeln!(out, "{mode},{steps},{b},{a},{z},{normal},{anomalous}").unwrap();
    }
}

/// Image AU-ROC of each inversion scoring mode across [`GRID_STEPS`], plus
/// raw scores and normal/anomalous histograms per cell.
pub fn ablate_scoring(cfg: &RunConfig, ev: &Evaluator) -> CliResult<ScoringAblation> {
    let labels = ev.labels();
    let mut rows: Vec<(String, Vec<Option<f64>>)> = ScoreMode::INVERSION
        .iter()
        .map(|m| (m.name().to_string(), Vec::new()))
        .collect();
    let mut scores_csv = String::from("mode,steps,id,label,score\n");
    let mut hist_csv = String::from("mode,steps,bin,lo,hi,normal,anomalous\n");
    for &s in &GRID_STEPS {
        if !feasible(cfg, s) {
            rows.iter_mut().for_each(|(_, v)| v.push(None));
            continue;
        }
        let subset = TimestepSubset::new(cfg.schedule.timesteps, s, cfg.subset.policy)?;
        let (latents, nfe) = ev.invert_all(&subset)?;
        for (row, &mode) in rows.iter_mut().zip(&ScoreMode::INVERSION) {
            let scored = Scored {
                results: ev.score_latents(&latents, mode)?,
                nfe: nfe.clone(),
            };
            let scores = scored.scores();
            row.1.push(Some(ev.image_auroc(&scored)?));
            for (i, (v, l)) in scores.iter().zip(&labels).enumerate() {
                writeln!(scores_csv, "{mode},{s},{i},{},{v}", *l as u8).unwrap();
            }
            histogram(&mut hist_csv, mode, s, &scores, &labels);
        }
    }
    Ok(ScoringAblation {
        table: Table {
            corner: "mode".to_string(),
            columns: GRID_STEPS.to_vec(),
            rows,
        },
        scores_csv,
        hist_csv,
    })
}

pub fn cmd_ablate_scoring(cfg: &RunConfig) -> CliResult<()> {
    cfg.echo()?;
    let data = load_data(cfg)?;
    let (model, schedule) = load_trained(cfg)?;
    let ev = evaluator(cfg, &data)?.with_model(&model, &schedule)?;
    let out = ablate_scoring(cfg, &ev)?;
    write_file(&cfg.output_dir, ABLATE_SCORING_FILE, &out.table.to_csv())?;
    write_file(&cfg.output_dir, ABLATE_SCORING_SCORES_FILE, &out.scores_csv)?;
    write_file(&cfg.output_dir, ABLATE_SCORING_HIST_FILE, &out.hist_csv)
}

/// mAD of inversion scoring for every subset policy over [`SCHEDULE_STEPS`].
pub fn ablate_schedule(cfg: &RunConfig, ev: &Evaluator) -> CliResult<Table> {
    let mut rows = Vec::new();
    for policy in SubsetPolicy::ALL {
        let mut cells = Vec::new();
        for &s in &SCHEDULE_STEPS {
            if !feasible(cfg, s) {
                cells.push(None);
                continue;
            }
            let subset = TimestepSubset::new(cfg.schedule.timesteps, s, policy)?;
            let scored = ev.inversion(&subset, inversion_mode(cfg))?;
            cells.push(Some(ev.report(&scored)?.mad));
        }
        rows.push((policy.name().to_string(), cells));
    }
    Ok(Table {
        corner: "policy".to_string(),
        columns: SCHEDULE_STEPS.to_vec(),
        rows,
    })
}

pub fn cmd_ablate_schedule(cfg: &RunConfig) -> CliResult<()> {
    cfg.echo()?;
    let data = load_data(cfg)?;
    let (model, schedule) = load_trained(cfg)?;
    let ev = evaluator(cfg, &data)?.with_model(&model, &schedule)?;
    write_file(
        &cfg.output_dir,
        ABLATE_SCHEDULE_FILE,
        &ablate_schedule(cfg, &ev)?.to_csv(),
    )
}

/// Inverts every tensor of `cfg.input` and writes the latents as FTEN.
pub fn cmd_invert(cfg: &RunConfig) -> CliResult<()> {
    let Some(input) = &cfg.input else {
        return config_err("invert needs an input FTEN file");
    };
    if !input.is_file() {
        return config_err(format!("input {} does not exist", input.display()));
    }
    cfg.echo()?;
    let (model, schedule) = load_trained(cfg)?;
    let subset = cfg.subset()?;
    let features = read_ften::<f64>(input)?;
    let latents = features
        .iter()
        .enumerate()
        .map(|(i, z)| {
            if z.shape() != model.sample_shape() {
                return config_err(format!(
                    "tensor {i} has shape {:?}, model expects {:?}",
                    z.shape(),
                    model.sample_shape()
                ));
            }
            Ok(inversion_ad::diffusion::invert(&model, &schedule, z, &subset)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_ften(cfg.output_dir.join(LATENTS_FILE), &latents)?;
    info!("inverted {} tensors with S={}", latents.len(), subset.len());
    Ok(())
}

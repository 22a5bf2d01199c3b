//! Subcommand bodies. Each returns the text printed on success.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cellcast_core::baselines::fnn_train;
use cellcast_core::checkpoint::{decode_fnn, encode_fnn, load_model, save_model};
use cellcast_core::data::{
    build_all_series, calibrate_series, parse_cdr, synth_traffic, write_series_store, LoadSeries,
    SynthConfig, BINS_PER_DAY, BIN_MS,
};
use cellcast_core::experiment::{
    fnn_predictions, forecast_table, previous_value_predictions, render_forecast_table, subsample,
    ForecastRow, TradeoffTable, BASELINE_LABEL,
};
use cellcast_core::model::init_model;
use cellcast_core::prompting::{OperatorPreference, Vocabulary};
use cellcast_core::training::{evaluate, finetune_berto, history_to_lines, train, Evaluation};
use cellcast_core::LossSpec;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::engine::{Engine, TimeRange, BERTO_CKPT, BERT_MSE_CKPT, FNN_CKPT};

pub const EVALUATE_RESULTS: &str = "evaluate.json";
pub const SIMULATE_RESULTS: &str = "simulate.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    BertMse,
    Fnn,
}

/// Stored output of `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationRun {
    pub time_range: Option<TimeRange>,
    pub table: TradeoffTable,
}

fn write_series(out: &Path, series: &[LoadSeries]) -> anyhow::Result<()> {
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let f = File::create(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_series_store(BufWriter::new(f), series)?;
    Ok(())
}

/// CDR records to a calibrated series store. The calibration level of each
/// cell comes from its first `train_days` only.
pub fn ingest(
    cdr: &Path,
    out: &Path,
    train_days: usize,
    percentile: f64,
    max_missing: f64,
) -> anyhow::Result<String> {
    let f = File::open(cdr).with_context(|| format!("cannot open {}", cdr.display()))?;
    let records = parse_cdr(BufReader::new(f))?;
    let (series, excluded) = build_all_series(&records, max_missing);
    if series.is_empty() {
        bail!(
            "no cell in {} passed the missing-data filter",
            cdr.display()
        );
    }
    let origin = series.iter().map(|s| s.start_ms).min().unwrap_or(0);
    let train_end = origin + (train_days * BINS_PER_DAY) as i64 * BIN_MS;
    let calibrated = calibrate_series(&series, train_end, percentile)?;
    write_series(out, &calibrated)?;
    Ok(format!(
        "wrote {} series to {} ({} records, {} cells excluded)",
        calibrated.len(),
        out.display(),
        records.len(),
        excluded.len()
    ))
}

pub fn synth(cfg: &SynthConfig, out: &Path) -> anyhow::Result<String> {
    let series = synth_traffic(cfg)?;
    write_series(out, &series)?;
    Ok(format!(
        "wrote {} synthetic series of {} days to {}",
        series.len(),
        cfg.days,
        out.display()
    ))
}

fn prepare_output(cfg: &RunConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))
}

pub fn train_model(cfg: &RunConfig, which: ModelChoice) -> anyhow::Result<String> {
    prepare_output(cfg)?;
    let data = cfg.dataset()?;
    let vocab = Vocabulary::standard();
    match which {
        ModelChoice::Fnn => {
            let out = fnn_train(&data.split.train, cfg.fnn.hidden, &cfg.fnn.train)?;
            let path = cfg.artifact(FNN_CKPT);
            std::fs::write(&path, encode_fnn(&out.weights, "fnn"))?;
            let last = out.epoch_losses.last().copied().unwrap_or(f64::NAN);
            Ok(format!(
                "fnn: {} epochs, final train MSE {last:.4}, saved {}",
                out.epoch_losses.len(),
                path.display()
            ))
        }
        ModelChoice::BertMse => {
            let s = &cfg.sampling;
            let tr = subsample(&data.split.train, s.train_samples, s.seed);
            let val = subsample(&data.split.validation, s.validation_samples, s.seed + 1);
            let init = init_model(&cfg.model, cfg.model_seed)?;
            let out = train(init, &tr, &val, &vocab, LossSpec::Mse, &cfg.train)?;
            let path = cfg.artifact(BERT_MSE_CKPT);
            save_model(&path, &out.weights, &vocab, BASELINE_LABEL)?;
            std::fs::write(
                cfg.artifact("bert_mse.history.jsonl"),
                history_to_lines(&out.history),
            )?;
            let best = &out.history[out.best_epoch];
            Ok(format!(
                "bert_mse: {} samples, best epoch {} (validation MSE {:.4}), saved {}",
                tr.len(),
                out.best_epoch,
                best.eval_mse,
                path.display()
            ))
        }
    }
}

pub fn finetune(cfg: &RunConfig, from: Option<&Path>) -> anyhow::Result<String> {
    prepare_output(cfg)?;
    let vocab = Vocabulary::standard();
    let from: PathBuf = from.map_or_else(|| cfg.artifact(BERT_MSE_CKPT), Path::to_path_buf);
    let (start, _) = load_model(&from, &vocab)
        .with_context(|| format!("loading starting checkpoint {}", from.display()))?;
    let data = cfg.dataset()?;
    let s = &cfg.sampling;
    let tr = subsample(&data.split.train, s.train_samples, s.seed + 4);
    let val = subsample(&data.split.validation, s.validation_samples, s.seed + 1);
    let out = finetune_berto(
        start,
        &tr,
        &val,
        &vocab,
        &OperatorPreference::ALL,
        cfg.orientation,
        &cfg.finetune,
    )?;
    let path = cfg.artifact(BERTO_CKPT);
    save_model(&path, &out.weights, &vocab, "berto")?;
    std::fs::write(
        cfg.artifact("berto.history.jsonl"),
        history_to_lines(&out.history),
    )?;
    Ok(format!(
        "berto: {} samples, orientation {}, best epoch {}, saved {}",
        tr.len(),
        cfg.orientation,
        out.best_epoch,
        path.display()
    ))
}

fn require(path: &Path, hint: &str) -> anyhow::Result<()> {
    if !path.exists() {
        bail!(
            "missing checkpoint {}; run `cellcast {hint}` first",
            path.display()
        );
    }
    Ok(())
}

/// Test-set MSE of the previous-value, FNN and MSE-trained encoder
/// forecasters, ascending.
pub fn evaluate_models(cfg: &RunConfig) -> anyhow::Result<String> {
    let vocab = Vocabulary::standard();
    let bert_path = cfg.artifact(BERT_MSE_CKPT);
    let fnn_path = cfg.artifact(FNN_CKPT);
    require(&bert_path, "train")?;
    require(&fnn_path, "train --model fnn")?;
    let (bert, _) = load_model(&bert_path, &vocab)
        .with_context(|| format!("loading {}", bert_path.display()))?;
    let (fnn, _) = decode_fnn(&std::fs::read(&fnn_path)?)
        .with_context(|| format!("loading {}", fnn_path.display()))?;

    let data = cfg.dataset()?;
    let test = &data.split.test;
    let y: Vec<f64> = test.iter().map(|s| s.target).collect();
    let rows = forecast_table(vec![
        (
            "previous_value".to_string(),
            Evaluation::from_predictions(previous_value_predictions(test)?, &y),
        ),
        (
            "fnn".to_string(),
            Evaluation::from_predictions(fnn_predictions(&fnn, test)?, &y),
        ),
        (
            BASELINE_LABEL.to_string(),
            evaluate(&bert, test, None, &vocab)?,
        ),
    ]);
    prepare_output(cfg)?;
    std::fs::write(
        cfg.artifact(EVALUATE_RESULTS),
        serde_json::to_string_pretty(&rows)?,
    )?;
    Ok(render_forecast_table(&rows))
}

/// One row for `preference`, or all five in order when none is given.
pub fn simulate_preferences(
    cfg: &RunConfig,
    preference: Option<&str>,
    range: Option<TimeRange>,
) -> anyhow::Result<String> {
    let prefs = match preference {
        Some(p) => vec![Engine::parse_preference(p)?],
        None => OperatorPreference::ALL.to_vec(),
    };
    let engine = Engine::load(cfg)?;
    let table = engine.table(&prefs, range)?;
    let text = table.to_text();
    prepare_output(cfg)?;
    let run = SimulationRun {
        time_range: range,
        table,
    };
    std::fs::write(
        cfg.artifact(SIMULATE_RESULTS),
        serde_json::to_string_pretty(&run)?,
    )?;
    Ok(text)
}

/// Render whatever `evaluate` and `simulate` stored in the output directory.
pub fn report(cfg: &RunConfig) -> anyhow::Result<String> {
    let mut out = String::new();
    let eval_path = cfg.artifact(EVALUATE_RESULTS);
    if eval_path.exists() {
        let rows: Vec<ForecastRow> = serde_json::from_str(&std::fs::read_to_string(&eval_path)?)
            .with_context(|| format!("reading {}", eval_path.display()))?;
        out.push_str("## forecast accuracy (test MSE)\n");
        out.push_str(&render_forecast_table(&rows));
    }
    let sim_path = cfg.artifact(SIMULATE_RESULTS);
    if sim_path.exists() {
        let run: SimulationRun = serde_json::from_str(&std::fs::read_to_string(&sim_path)?)
            .with_context(|| format!("reading {}", sim_path.display()))?;
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str("## preference trade-off\n");
        if let Some(r) = run.time_range {
            out.push_str(&format!("# time range: [{}, {})\n", r.start, r.end));
        }
        out.push_str(&run.table.to_text());
    }
    if out.is_empty() {
        bail!(
            "no stored results in {}; run `cellcast evaluate` or `cellcast simulate` first",
            cfg.output_dir.display()
        );
    }
    Ok(out)
}

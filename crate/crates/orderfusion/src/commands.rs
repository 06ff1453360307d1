//! Subcommand implementations. Each writes its outputs and a manifest into `out`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use orderfusion_core::baselines::{
    feature_last_price, feature_vwap15, lqr_fit, Mlp, NaiveVariant,
};
use orderfusion_core::eval::{self, MetricReport};
use orderfusion_core::market::{
    build_samples, build_unlabeled_sample, fit_scaler, MarketConfig, RobustScaler, Sample,
};
use orderfusion_core::model::ModelConfig;
use orderfusion_core::pipeline::{
    chronological_split, fold_split, forecast_prices, naive_forecasts, prepare, prepare_split,
    Split,
};
use orderfusion_core::synth::gen_market;
use orderfusion_core::train::{
    self, budget_subset, from_table, predict_all, rolling_folds, train_forecaster, Dataset,
    RollingSpec,
};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{apply_variant, Market, Settings, SplitSpec};
use crate::error::{CliError, Result};
use crate::io::{self, ResultRow};
use crate::manifest::RunManifest;

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub market: Option<Market>,
    pub index: Option<u8>,
    pub out: PathBuf,
}

impl Common {
    pub fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(m) = self.market {
            s.market = m;
        }
        if let Some(i) = self.index {
            s.index = i;
        }
        s.resolve()
    }
}

/// Tracks inputs and outputs of one invocation.
struct Run {
    manifest: RunManifest,
    out: PathBuf,
    started: Instant,
}

impl Run {
    fn start(command: &str, common: &Common, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(&common.out).map_err(|e| CliError::io(&common.out, e))?;
        let mut manifest = RunManifest::new(command, common.config.as_deref(), seed);
        if let Some(p) = &common.config {
            manifest.add_input(p)?;
        }
        info!("{command}: writing to {}", common.out.display());
        Ok(Run {
            manifest,
            out: common.out.clone(),
            started: Instant::now(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.add_input(path)
    }

    fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.manifest.outputs.push(p.clone());
        p
    }

    fn finish(mut self) -> Result<RunManifest> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        self.manifest.write(&self.out)?;
        Ok(self.manifest)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn load_samples(run: &mut Run, trades: &Path, market: &MarketConfig) -> Result<Vec<Sample>> {
    run.input(trades)?;
    let records = io::parse_trades(trades)?;
    let (samples, report) = build_samples(&records, market);
    info!(
        "{} trades, {} samples, {} deliveries without index trades",
        report.trades, report.samples, report.dropped_no_label
    );
    if samples.is_empty() {
        return Err(CliError::Data("no labelled samples in the trade file".into()));
    }
    Ok(samples)
}

fn split_samples(samples: &[Sample], spec: &SplitSpec) -> Result<(Split, u32)> {
    match spec {
        SplitSpec::Fractions { train, val } => Ok((chronological_split(samples, *train, *val)?, 0)),
        SplitSpec::Rolling { start, fold } => {
            let folds = rolling_folds(*start, &RollingSpec::default())?;
            let f = folds
                .get((*fold as usize).wrapping_sub(1))
                .ok_or_else(|| CliError::Usage(format!("fold must be 1..={}", folds.len())))?;
            let split = fold_split(samples, f);
            if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
                return Err(CliError::Data(format!("fold {fold} has an empty partition")));
            }
            Ok((split, *fold))
        }
    }
}

#[derive(Debug, Serialize)]
struct ReportDoc<'a> {
    aql: f64,
    aqcr: f64,
    aiw: f64,
    rmse: f64,
    mae: f64,
    r2: Option<f64>,
    n_samples: usize,
    quantiles: &'a [f64],
    symmetric_pairs: &'a [(f64, f64)],
}

fn write_report(path: &Path, r: &MetricReport) -> Result<()> {
    write_json(
        path,
        &ReportDoc {
            aql: r.aql,
            aqcr: r.aqcr,
            aiw: r.aiw,
            rmse: r.rmse,
            mae: r.mae,
            r2: r.r2,
            n_samples: r.n_samples,
            quantiles: &r.quantiles,
            symmetric_pairs: &r.symmetric_pairs,
        },
    )
}

fn result_row(model: &str, fold: u32, s: &Settings, r: &MetricReport, note: &str) -> ResultRow {
    ResultRow {
        model: model.into(),
        fold,
        index: s.index,
        seed: s.seed,
        aql: r.aql,
        aqcr: r.aqcr,
        aiw: r.aiw,
        rmse: r.rmse,
        mae: r.mae,
        r2: r.r2,
        n_samples: r.n_samples,
        note: note.into(),
    }
}

pub fn synth(common: &Common) -> Result<RunManifest> {
    let s = common.settings()?;
    let mut run = Run::start("synth", common, s.seed)?;
    let market = gen_market(&s.synth)?;
    info!("{} trades, {} labels", market.trades.len(), market.labels.len());
    io::write_trades(&run.output("trades.csv"), &market.trades)?;
    io::write_labels(&run.output("labels.csv"), &market.labels)?;
    run.finish()
}

#[derive(Debug, Serialize)]
struct IngestDoc {
    market: &'static str,
    index: u8,
    delta_c_minutes: u32,
    trades: usize,
    deliveries: usize,
    samples: usize,
    dropped_no_label: usize,
    notes: Vec<&'static str>,
}

pub fn ingest(common: &Common, trades: &Path) -> Result<RunManifest> {
    let s = common.settings()?;
    let mut run = Run::start("ingest", common, s.seed)?;
    run.input(trades)?;
    let market = s.market_config()?;
    let records = io::parse_trades(trades)?;
    let (samples, report) = build_samples(&records, &market);
    let labels: Vec<_> = samples
        .iter()
        .map(|x| orderfusion_core::synth::LabelRow {
            delivery_start: x.delivery_start,
            index_x: s.index,
            label: x.label,
        })
        .collect();
    io::write_labels(&run.output("labels.csv"), &labels)?;
    write_json(
        &run.output("ingest_report.json"),
        &IngestDoc {
            market: s.market.name(),
            index: s.index,
            delta_c_minutes: market.delta_c_minutes(),
            trades: report.trades,
            deliveries: report.deliveries,
            samples: report.samples,
            dropped_no_label: report.dropped_no_label,
            notes: vec!["the exhaustive 384-feature baseline set is not computed"],
        },
    )?;
    run.finish()
}

struct Trained {
    checkpoint: Checkpoint,
    test_report: MetricReport,
    test_scored: (Vec<Sample>, Vec<Vec<f64>>),
    histories: Vec<Vec<train::EpochLog>>,
    fold: u32,
}

fn fit_and_test(s: &Settings, model: &ModelConfig, samples: &[Sample]) -> Result<Trained> {
    let (split, fold) = split_samples(samples, &s.split)?;
    let p = prepare_split(&split, model)?;
    info!(
        "training on {} samples, validating on {}, testing on {}",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    let out = train_forecaster(
        model,
        Dataset::new(&p.train.inputs, &p.train.targets)?,
        Dataset::new(&p.val.inputs, &p.val.targets)?,
        &s.train,
    )?;
    let forecasts = forecast_prices(&out.forecaster, &p.test.inputs, &p.scalers)?;
    let test_report = eval::report(&p.test.labels, &forecasts, &model.quantiles)?;
    info!("test aql {:.4}, aqcr {:.2}%", test_report.aql, test_report.aqcr);
    Ok(Trained {
        checkpoint: Checkpoint {
            market: s.market_config()?,
            config: model.clone(),
            scalers: p.scalers,
            forecaster: out.forecaster,
        },
        test_report,
        test_scored: (split.test, forecasts),
        histories: out.histories,
        fold,
    })
}

fn write_histories(run: &mut Run, model: &ModelConfig, histories: &[Vec<train::EpochLog>]) -> Result<()> {
    if let [h] = histories {
        return io::write_training_log(&run.output("training_log.csv"), h);
    }
    for (tau, h) in model.quantiles.iter().zip(histories) {
        let name = format!("training_log_{}.csv", io::quantile_column(*tau));
        io::write_training_log(&run.output(&name), h)?;
    }
    Ok(())
}

fn write_scored(run: &mut Run, taus: &[f64], samples: &[Sample], forecasts: &[Vec<f64>]) -> Result<()> {
    let deliveries: Vec<_> = samples.iter().map(|x| x.delivery_start).collect();
    let y: Vec<f64> = samples.iter().map(|x| x.label).collect();
    io::write_plot_csv(&run.output("plot.csv"), &deliveries, &y, forecasts, taus)
}

pub fn train_cmd(common: &Common, trades: &Path) -> Result<RunManifest> {
    let s = common.settings()?;
    let mut run = Run::start("train", common, s.seed)?;
    let samples = load_samples(&mut run, trades, &s.market_config()?)?;
    let t = fit_and_test(&s, &s.model, &samples)?;
    t.checkpoint.save(&run.output("checkpoint.json"))?;
    write_histories(&mut run, &s.model, &t.histories)?;
    write_report(&run.output("metrics.json"), &t.test_report)?;
    write_scored(&mut run, &s.model.quantiles, &t.test_scored.0, &t.test_scored.1)?;
    run.finish()
}

pub fn ablate(common: &Common, trades: &Path, variant: &str) -> Result<RunManifest> {
    let s = common.settings()?;
    let mut model = s.model.clone();
    apply_variant(&mut model, variant)?;
    // re-resolve so a random mask receives its derived seed
    let s = Settings { model, ..s }.resolve()?;
    let mut run = Run::start("ablate", common, s.seed)?;
    let samples = load_samples(&mut run, trades, &s.market_config()?)?;
    let t = fit_and_test(&s, &s.model, &samples)?;
    let row = result_row(variant, t.fold, &s, &t.test_report, "");
    io::write_results(&run.output("ablation_results.csv"), &[row])?;
    write_histories(&mut run, &s.model, &t.histories)?;
    run.finish()
}

/// Samples of every delivery in the trade file with trades before its forecast time.
fn scoring_samples(trades: &[orderfusion_core::market::TradeRecord], market: &MarketConfig) -> Vec<Sample> {
    let mut deliveries: Vec<_> = trades.iter().map(|t| t.delivery_start).collect();
    deliveries.sort();
    deliveries.dedup();
    let mut out = Vec::new();
    for d in deliveries {
        let product: Vec<_> = trades.iter().filter(|t| t.delivery_start == d).cloned().collect();
        let mut sample = build_unlabeled_sample(&product, d, market);
        if let Ok(label) = orderfusion_core::market::compute_index_label(&product, d, market) {
            sample.label = label;
        }
        out.push(sample);
    }
    out
}

fn score(ck: &Checkpoint, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    let p = prepare(samples, &ck.scalers, &ck.config)?;
    Ok(forecast_prices(&ck.forecaster, &p.inputs, &ck.scalers)?)
}

pub fn predict(common: &Common, checkpoint: &Path, trades: &Path) -> Result<RunManifest> {
    let s = common.settings()?;
    let mut run = Run::start("predict", common, s.seed)?;
    run.input(checkpoint)?;
    run.input(trades)?;
    let ck = Checkpoint::load(checkpoint)?;
    let records = io::parse_trades(trades)?;
    let samples = scoring_samples(&records, &ck.market);
    let forecasts = score(&ck, &samples)?;
    write_scored(&mut run, &ck.config.quantiles, &samples, &forecasts)?;
    run.finish()
}

pub fn evaluate(common: &Common, checkpoint: &Path, trades: &Path) -> Result<RunManifest> {
    let s = common.settings()?;
    let mut run = Run::start("evaluate", common, s.seed)?;
    run.input(checkpoint)?;
    let ck = Checkpoint::load(checkpoint)?;
    let samples = load_samples(&mut run, trades, &ck.market)?;
    let forecasts = score(&ck, &samples)?;
    let y: Vec<f64> = samples.iter().map(|x| x.label).collect();
    let report = eval::report(&y, &forecasts, &ck.config.quantiles)?;
    write_report(&run.output("metrics.json"), &report)?;
    write_scored(&mut run, &ck.config.quantiles, &samples, &forecasts)?;
    run.finish()
}

#[derive(Debug, Clone, Serialize)]
struct GridRow {
    hidden_dim: usize,
    interaction_degree: usize,
    cutoff_exponent: u32,
    val_aql: f64,
    best: bool,
}

fn validation_aql(s: &Settings, model: &ModelConfig, split: &Split) -> Result<f64> {
    let p = prepare_split(split, model)?;
    let out = train_forecaster(
        model,
        Dataset::new(&p.train.inputs, &p.train.targets)?,
        Dataset::new(&p.val.inputs, &p.val.targets)?,
        &s.train,
    )?;
    let preds = forecast_prices(&out.forecaster, &p.val.inputs, &p.scalers)?;
    Ok(train::aql(&p.val.labels, &preds, &model.quantiles)?)
}

pub fn gridsearch(common: &Common, trades: &Path, jobs: usize) -> Result<RunManifest> {
    let s = common.settings()?;
    let mut run = Run::start("gridsearch", common, s.seed)?;
    let samples = load_samples(&mut run, trades, &s.market_config()?)?;
    let (split, _) = split_samples(&samples, &s.split)?;
    let cells = budget_subset(&s.grid.cells(&s.model), s.grid_budget);
    if cells.is_empty() {
        return Err(CliError::Usage("the search space is empty".into()));
    }
    info!("evaluating {} cells with {} jobs", cells.len(), jobs.max(1));
    let losses: Vec<Result<f64>> = if jobs <= 1 {
        cells.iter().map(|c| validation_aql(&s, c, &split)).collect()
    } else {
        let chunk = cells.len().div_ceil(jobs);
        std::thread::scope(|scope| {
            let handles: Vec<_> = cells
                .chunks(chunk)
                .map(|part| {
                    let (s, split) = (&s, &split);
                    scope.spawn(move || part.iter().map(|c| validation_aql(s, c, split)).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("grid worker panicked"))
                .collect()
        })
    };
    let table = cells
        .into_iter()
        .zip(losses)
        .map(|(c, l)| l.map(|l| (c, l)))
        .collect::<Result<Vec<_>>>()?;
    let result = from_table(table);
    let rows: Vec<GridRow> = result
        .table
        .iter()
        .enumerate()
        .map(|(i, (c, l))| GridRow {
            hidden_dim: c.hidden_dim,
            interaction_degree: c.interaction_degree,
            cutoff_exponent: c.cutoff_exponent,
            val_aql: *l,
            best: i == result.best,
        })
        .collect();
    let path = run.output("grid_results.csv");
    let mut wtr = csv::Writer::from_path(&path).map_err(|e| CliError::Data(e.to_string()))?;
    for r in &rows {
        wtr.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
    }
    wtr.flush().map_err(|e| CliError::io(&path, e))?;
    let (best, loss) = result.best();
    info!("best cell: F={} K={} alpha={} (val aql {loss:.4})", best.hidden_dim, best.interaction_degree, best.cutoff_exponent);
    let cfg = format!(
        "hidden_dim = {}\ninteraction_degree = {}\ncutoff_exponent = {}\n",
        best.hidden_dim, best.interaction_degree, best.cutoff_exponent
    );
    let p = run.output("best.cfg");
    std::fs::write(&p, cfg).map_err(|e| CliError::io(&p, e))?;
    run.finish()
}

type FeatureFn = fn(&Sample) -> Option<f64>;

/// Feature values and labels of the samples where the feature is defined.
fn feature_rows(samples: &[Sample], f: FeatureFn) -> (Vec<Sample>, Vec<f64>) {
    samples
        .iter()
        .filter_map(|x| f(x).map(|v| (x.clone(), v)))
        .unzip()
}

fn feature_baselines(s: &Settings, split: &Split, fold: u32) -> Result<Vec<ResultRow>> {
    let taus = &s.model.quantiles;
    let features: [(&str, FeatureFn); 2] = [("vwap15", feature_vwap15), ("last_price", feature_last_price)];
    let mut rows = Vec::new();
    for (name, f) in features {
        let (train_s, train_x) = feature_rows(&split.train, f);
        let (val_s, val_x) = feature_rows(&split.val, f);
        let (test_s, test_x) = feature_rows(&split.test, f);
        if train_s.is_empty() || val_s.is_empty() || test_s.is_empty() {
            return Err(CliError::Data(format!("feature {name} undefined on a whole partition")));
        }
        let xs = RobustScaler::fit(&train_x)?;
        let ys = fit_scaler(&train_s)?.label;
        let scale_x = |v: &[f64]| v.iter().map(|x| vec![xs.transform(*x)]).collect::<Vec<_>>();
        let scale_y = |v: &[Sample]| v.iter().map(|x| ys.transform(x.label)).collect::<Vec<_>>();
        let (tx, vx, sx) = (scale_x(&train_x), scale_x(&val_x), scale_x(&test_x));
        let (ty, vy) = (scale_y(&train_s), scale_y(&val_s));
        let test_y: Vec<f64> = test_s.iter().map(|x| x.label).collect();
        let unscale = |f: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            f.into_iter()
                .map(|r| r.into_iter().map(|z| ys.inverse(z)).collect())
                .collect()
        };

        let lqr = lqr_fit(&tx, &ty, taus, &s.lqr)?;
        let lqr_f = unscale(sx.iter().map(|r| lqr.predict(r)).collect());
        let lqr_r = eval::report(&test_y, &lqr_f, taus)?;

        let mlp = train::train(
            Mlp::new(s.mlp_config(1))?,
            Dataset::new(&tx, &ty)?,
            Dataset::new(&vx, &vy)?,
            &s.train,
        )?;
        let mlp_f = unscale(predict_all(&mlp.best, &sx)?);
        let mlp_r = eval::report(&test_y, &mlp_f, taus)?;

        let lqr_better = lqr_r.aql <= mlp_r.aql;
        let note = |better: bool| if better { "better" } else { "" };
        rows.push(result_row(&format!("{name}_lqr"), fold, s, &lqr_r, note(lqr_better)));
        rows.push(result_row(&format!("{name}_mlp"), fold, s, &mlp_r, note(!lqr_better)));
    }
    Ok(rows)
}

pub fn baseline(common: &Common, trades: &Path) -> Result<RunManifest> {
    let s = common.settings()?;
    let mut run = Run::start("baseline", common, s.seed)?;
    let samples = load_samples(&mut run, trades, &s.market_config()?)?;
    let (split, fold) = split_samples(&samples, &s.split)?;
    let mut rows = Vec::new();
    for v in NaiveVariant::ALL {
        let scored = naive_forecasts(&split, v, &s.model.quantiles)?;
        if scored.labels.is_empty() {
            return Err(CliError::Data(format!("{}: no test sample has history", v.name())));
        }
        let r = eval::report(&scored.labels, &scored.forecasts, &s.model.quantiles)?;
        let note = if scored.skipped > 0 {
            format!("skipped {}", scored.skipped)
        } else {
            String::new()
        };
        rows.push(result_row(v.name(), fold, &s, &r, &note));
    }
    rows.extend(feature_baselines(&s, &split, fold)?);
    io::write_results(&run.output("baseline_results.csv"), &rows)?;
    run.finish()
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub model: String,
    pub index: u8,
    pub runs: usize,
    pub aql: String,
    pub aqcr: String,
    pub aiw: String,
    pub rmse: String,
    pub mae: String,
    pub r2: String,
}

/// Aggregates result rows into `mean ± std` per (model, index) across folds and seeds.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(u8, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.index, r.model.clone())).or_default().push(r);
    }
    let cell = |g: &[&ResultRow], f: fn(&ResultRow) -> Option<f64>| {
        let v: Vec<f64> = g.iter().filter_map(|r| f(r)).collect();
        if v.is_empty() {
            return "n/a".to_string();
        }
        let (m, sd) = mean_std(&v);
        format!("{m:.2} ± {sd:.2}")
    };
    groups
        .into_iter()
        .map(|((index, model), g)| SummaryRow {
            model,
            index,
            runs: g.len(),
            aql: cell(&g, |r| Some(r.aql)),
            aqcr: cell(&g, |r| Some(r.aqcr)),
            aiw: cell(&g, |r| Some(r.aiw)),
            rmse: cell(&g, |r| Some(r.rmse)),
            mae: cell(&g, |r| Some(r.mae)),
            r2: cell(&g, |r| r.r2),
        })
        .collect()
}

pub fn report(common: &Common, inputs: &[PathBuf]) -> Result<RunManifest> {
    if inputs.is_empty() {
        return Err(CliError::Usage("report needs at least one results CSV".into()));
    }
    let mut run = Run::start("report", common, common.seed.unwrap_or(0))?;
    let mut rows = Vec::new();
    for p in inputs {
        run.input(p)?;
        rows.extend(io::read_results(p)?);
    }
    let summary = summarize(&rows);
    let path = run.output("report.csv");
    let mut wtr = csv::Writer::from_path(&path).map_err(|e| CliError::Data(e.to_string()))?;
    for r in &summary {
        wtr.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
    }
    wtr.flush().map_err(|e| CliError::io(&path, e))?;

    let mut md = String::from("| index | model | runs | AQL | AQCR | AIW | RMSE | MAE | R² |\n|---|---|---|---|---|---|---|---|---|\n");
    for r in &summary {
        md.push_str(&format!(
            "| ID{} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            r.index, r.model, r.runs, r.aql, r.aqcr, r.aiw, r.rmse, r.mae, r.r2
        ));
    }
    let p = run.output("report.md");
    std::fs::write(&p, md).map_err(|e| CliError::io(&p, e))?;
    run.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }

    fn row(model: &str, aql: f64) -> ResultRow {
        ResultRow {
            model: model.into(),
            fold: 1,
            index: 1,
            seed: 0,
            aql,
            aqcr: 0.0,
            aiw: 1.0,
            rmse: 1.0,
            mae: 1.0,
            r2: None,
            n_samples: 10,
            note: String::new(),
        }
    }

    #[test]
    fn summary_groups_by_model_and_index() {
        let rows = [row("a", 1.0), row("a", 3.0), row("b", 2.0)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].model, "a");
        assert_eq!(s[0].runs, 2);
        assert_eq!(s[0].aql, "2.00 ± 1.41");
        assert_eq!(s[1].r2, "n/a");
    }
}

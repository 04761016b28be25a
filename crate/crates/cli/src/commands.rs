use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use resfed_core::data::{generate_synthetic, load_csv, CsvSchema, SyntheticSpec, TimeSeriesDataset};
use resfed_core::metrics::{evaluate_series, mean_over_series, EvalReport};
use resfed_core::pipeline::ScoringInput;
use resfed_core::mdrs::ScoreSeries;
use resfed_core::Reservoir;
use serde::Serialize;

use crate::config::{self, Metric, Mode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::run::{self, OutputLock, FINGERPRINT_PREFIX};

pub fn train(config: RunConfig) -> CliResult<()> {
    if config.mode == Mode::Incfed {
        log::warn!("`train` runs centralized; use `fed` for the federated mode");
    }
    let r = run::resolve(config)?;
    let out = r.config.output_dir.clone();
    let _lock = OutputLock::acquire(&out)?;
    let outcome = run::execute(&r, Mode::Centralized, None)?;
    run::write_model(&out, &r, Mode::Centralized, &outcome.model)?;
    if let Some(report) = &outcome.evaluation.report {
        log::info!("test mean auc_roc {:.4}", report.mean_auc_roc);
    }
    log::info!("model written to {}", out.join(run::MODEL_FILE).display());
    Ok(())
}

pub fn fed(config: RunConfig) -> CliResult<()> {
    let r = run::resolve(config)?;
    let out = r.config.output_dir.clone();
    let _lock = OutputLock::acquire(&out)?;
    let messages = out.join("messages");
    let outcome = run::execute(&r, Mode::Incfed, Some(messages.clone()))?;
    if r.config.exchange == config::ExchangeMode::Memory {
        run::write_messages(&messages, &outcome.messages)?;
    }
    run::write_model(&out, &r, Mode::Incfed, &outcome.model)?;
    let report = outcome.federation.expect("federated outcome has a report");
    for round in &report.rounds {
        log::info!(
            "round {}: {} payloads, {} bytes",
            round.round,
            round.payload_bytes.len(),
            round.total_payload_bytes
        );
    }
    #[derive(Serialize)]
    struct FedReport<'a> {
        config_fingerprint: &'a str,
        method: resfed_core::Method,
        n_clients: usize,
        feature_dim: usize,
        rounds: &'a [resfed_core::federation::RoundLog],
    }
    run::write_json(
        &out.join("rounds.json"),
        &FedReport {
            config_fingerprint: &r.fingerprint,
            method: report.method,
            n_clients: report.n_clients,
            feature_dim: report.feature_dim,
            rounds: &report.rounds,
        },
    )?;
    Ok(())
}

/// Scores the configured test series, or the given CSV files, with the
/// model in `model_dir`.
pub fn score(config: RunConfig, model_dir: Option<PathBuf>, inputs: &[PathBuf], out: Option<PathBuf>) -> CliResult<()> {
    let model_dir = model_dir.unwrap_or_else(|| config.output_dir.clone());
    let manifest = run::read_manifest(&model_dir)?;
    let model = run::read_model(&model_dir, &manifest)?;
    let r = run::resolve(config)?;
    if r.fingerprint != manifest.config_fingerprint {
        return Err(CliError::Config(format!(
            "model in {} was built from a different configuration",
            model_dir.display()
        )));
    }
    let reservoir = Reservoir::new(manifest.reservoir.clone())?;
    let series: Vec<(String, ScoreSeries)> = if inputs.is_empty() {
        let scores = run::score_all(&reservoir, &model, &r.dataset)?;
        r.dataset.test.iter().map(|s| s.id.clone()).zip(scores).collect()
    } else {
        let schema = r.config.data.as_ref().map(|d| d.schema.clone()).unwrap_or_default();
        let loaded = load_csv(inputs, &[], &schema)?;
        if loaded.channels.len() != manifest.channels.len() {
            return Err(CliError::Config(format!(
                "inputs have {} channels, the model expects {}",
                loaded.channels.len(),
                manifest.channels.len()
            )));
        }
        let mut out = Vec::with_capacity(inputs.len());
        for (path, data) in inputs.iter().zip(&loaded.train) {
            let data = match &manifest.normalization {
                Some(n) => n.apply(data)?,
                None => data.clone(),
            };
            let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let scores = ScoringInput::prepare(&reservoir, model.method(), &data)?.score(&model)?;
            out.push((id, scores));
        }
        out
    };
    let dir = out.unwrap_or_else(|| model_dir.join("scores"));
    let _lock = OutputLock::acquire(&dir)?;
    for (id, s) in &series {
        run::write_scores(&dir, id, s, &r.fingerprint)?;
    }
    log::info!("{} score files written to {}", series.len(), dir.display());
    Ok(())
}

struct ScoreFile {
    fingerprint: Option<String>,
    scores: Vec<f64>,
}

fn read_score_file(path: &Path) -> CliResult<ScoreFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut fingerprint = None;
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(fp) = line.strip_prefix(FINGERPRINT_PREFIX) {
            fingerprint = Some(fp.trim().to_owned());
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() || line.starts_with("timestep") {
            continue;
        }
        let value = line
            .rsplit(',')
            .next()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| CliError::data(path, format!("line {}: bad score row `{line}`", i + 1)))?;
        scores.push(value);
    }
    Ok(ScoreFile { fingerprint, scores })
}

/// Labels from the last column of each row; a non-numeric first row is a
/// header.
fn read_label_file(path: &Path) -> CliResult<Vec<bool>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cell = line.rsplit(',').next().unwrap_or("").trim();
        match cell.parse::<f64>() {
            Ok(v) if v == 0.0 || v == 1.0 => labels.push(v == 1.0),
            _ if i == 0 => continue,
            _ => return Err(CliError::data(path, format!("line {}: label `{cell}` is not 0 or 1", i + 1))),
        }
    }
    Ok(labels)
}

fn csv_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn write_eval_csv(path: &Path, report: &EvalReport, metrics: &[Metric]) -> CliResult<()> {
    let mut text = String::from("series_id");
    for m in metrics {
        text.push_str(match m {
            Metric::AucRoc => ",auc_roc",
            Metric::AucPr => ",auc_pr",
        });
    }
    text.push('\n');
    let row = |text: &mut String, id: &str, roc: f64, pr: f64| {
        text.push_str(id);
        for m in metrics {
            let v = match m {
                Metric::AucRoc => roc,
                Metric::AucPr => pr,
            };
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    };
    for s in &report.per_series {
        row(&mut text, &s.series_id, s.auc_roc, s.auc_pr);
    }
    row(&mut text, "mean", report.mean_auc_roc, report.mean_auc_pr);
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Evaluates score files against labels from a directory or from the
/// configured dataset.
pub fn eval(
    scores_dir: &Path,
    labels_dir: Option<&Path>,
    config: Option<RunConfig>,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let files = csv_files(scores_dir)?;
    if files.is_empty() {
        return Err(CliError::data(scores_dir, "no score files"));
    }
    let mut fingerprint: Option<String> = None;
    let mut loaded = Vec::new();
    for path in &files {
        let f = read_score_file(path)?;
        match (&fingerprint, &f.fingerprint) {
            (_, None) => return Err(CliError::data(path, "score file has no config fingerprint")),
            (None, Some(fp)) => fingerprint = Some(fp.clone()),
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::Config(format!(
                    "{} comes from a different configuration than the other score files",
                    path.display()
                )))
            }
            _ => {}
        }
        loaded.push((stem(path), f.scores));
    }
    let fingerprint = fingerprint.expect("at least one file");

    let (labels, metrics): (BTreeMap<String, Vec<bool>>, Vec<Metric>) = match (labels_dir, config) {
        (Some(dir), config) => {
            let mut map = BTreeMap::new();
            for (id, _) in &loaded {
                map.insert(id.clone(), read_label_file(&dir.join(format!("{id}.csv")))?);
            }
            (map, config.map(|c| c.metrics).unwrap_or_else(|| vec![Metric::AucRoc, Metric::AucPr]))
        }
        (None, Some(config)) => {
            let r = run::resolve(config)?;
            if r.fingerprint != fingerprint {
                return Err(CliError::Config("scores were produced under a different configuration".into()));
            }
            let map = r.dataset.test.iter().map(|s| (s.id.clone(), s.labels.clone())).collect();
            (map, r.config.metrics)
        }
        (None, None) => return Err(CliError::Config("eval needs --labels or --config".into())),
    };

    let mut per_series = Vec::new();
    let mut skipped = Vec::new();
    for (id, scores) in &loaded {
        let l = labels
            .get(id)
            .ok_or_else(|| CliError::data(scores_dir, format!("no labels for series {id}")))?;
        if l.len() != scores.len() {
            return Err(CliError::data(
                scores_dir,
                format!("series {id}: {} scores but {} labels", scores.len(), l.len()),
            ));
        }
        match evaluate_series(id.clone(), scores, l) {
            Ok(m) => per_series.push(m),
            Err(resfed_core::Error::UndefinedMetric(why)) => {
                log::warn!("skipping series {id}: {why}");
                skipped.push(id.clone());
            }
            Err(e) => return Err(e.into()),
        }
    }
    if per_series.is_empty() {
        return Err(CliError::data(scores_dir, "no series has both normal and anomalous labels"));
    }
    let report = mean_over_series(per_series)?;
    let out = out.unwrap_or_else(|| scores_dir.parent().map(Path::to_path_buf).unwrap_or_default());
    let _lock = OutputLock::acquire(&out)?;
    write_eval_csv(&out.join("eval.csv"), &report, &metrics)?;
    #[derive(Serialize)]
    struct EvalFile<'a> {
        config_fingerprint: &'a str,
        skipped: &'a [String],
        #[serde(flatten)]
        report: &'a EvalReport,
    }
    run::write_json(
        &out.join("eval.json"),
        &EvalFile {
            config_fingerprint: &fingerprint,
            skipped: &skipped,
            report: &report,
        },
    )?;
    println!(
        "mean auc_roc {:.4}  mean auc_pr {:.4}  ({} series, {} skipped)",
        report.mean_auc_roc,
        report.mean_auc_pr,
        report.per_series.len(),
        skipped.len()
    );
    Ok(())
}

fn write_dataset_csvs(out: &Path, ds: &TimeSeriesDataset) -> CliResult<(Vec<String>, Vec<String>)> {
    let write = |path: &Path, data: &nalgebra::DMatrix<f64>, labels: Option<&[bool]>| -> CliResult<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(path, e.to_string()))?;
        let mut header = ds.channels.clone();
        if labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header).map_err(|e| CliError::data(path, e.to_string()))?;
        for t in 0..data.ncols() {
            let mut row: Vec<String> = data.column(t).iter().map(|v| v.to_string()).collect();
            if let Some(l) = labels {
                row.push(if l[t] { "1".into() } else { "0".into() });
            }
            w.write_record(&row).map_err(|e| CliError::data(path, e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    };
    let (train_dir, test_dir) = (out.join("train"), out.join("test"));
    for d in [&train_dir, &test_dir] {
        fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
    }
    let mut train_names = Vec::new();
    let mut test_names = Vec::new();
    for (s, train) in ds.test.iter().zip(&ds.train) {
        let name = format!("train/{}.csv", s.id);
        write(&out.join(&name), train, None)?;
        train_names.push(name);
        let name = format!("test/{}.csv", s.id);
        write(&out.join(&name), &s.data, Some(&s.labels))?;
        test_names.push(name);
    }
    Ok((train_names, test_names))
}

/// Writes a synthetic dataset as CSV files plus a ready-to-run config.
pub fn synth(spec: SyntheticSpec, out: &Path) -> CliResult<()> {
    let _lock = OutputLock::acquire(out)?;
    let ds = generate_synthetic(&spec)?;
    let (train, test) = write_dataset_csvs(out, &ds)?;
    let mut data = toml::Table::new();
    data.insert("train".into(), toml::Value::Array(train.into_iter().map(toml::Value::String).collect()));
    data.insert(
        "test".into(),
        toml::Value::Array(
            test.into_iter()
                .map(|p| {
                    let mut t = toml::Table::new();
                    t.insert("data".into(), toml::Value::String(p));
                    toml::Value::Table(t)
                })
                .collect(),
        ),
    );
    let schema = CsvSchema {
        label_column: Some(resfed_core::data::ChannelRef::Name("label".into())),
        ..CsvSchema::default()
    };
    data.insert(
        "schema".into(),
        toml::Value::try_from(schema).map_err(|e| CliError::Config(e.to_string()))?,
    );
    let mut root = toml::Table::new();
    root.insert("output_dir".into(), toml::Value::String("run".into()));
    root.insert("data".into(), toml::Value::Table(data));
    let text = toml::to_string(&root).map_err(|e| CliError::Config(e.to_string()))?;
    let path = out.join("config.toml");
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    let spec_path = out.join("synthetic.json");
    run::write_json(&spec_path, &spec)?;
    log::info!("{} series written to {}", ds.test.len(), out.display());
    Ok(())
}

/// Config keys a sweep name stands for.
fn sweep_keys(name: &str, table: &toml::Table) -> Vec<String> {
    match name {
        "clients" => vec!["n_clients".into()],
        "subsample" => vec!["reservoir.subsample_size".into()],
        "seed" => {
            let mut keys = vec!["reservoir.seed".to_string()];
            if table.contains_key("synthetic") {
                keys.push("synthetic.seed".into());
            }
            keys
        }
        other => vec![other.to_string()],
    }
}

pub struct SweepAxis {
    pub name: String,
    pub values: Vec<String>,
}

pub fn parse_sweep(raw: &str) -> CliResult<SweepAxis> {
    let (name, values) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("sweep `{raw}` is not name=v1,v2,...")))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_owned()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(CliError::Config(format!("sweep `{raw}` has no values")));
    }
    Ok(SweepAxis {
        name: name.trim().to_owned(),
        values,
    })
}

/// Runs every combination of the axes and writes long-format CSVs.
pub fn sweep(config_path: &Path, overrides: &[String], axes: &[SweepAxis], out: Option<PathBuf>) -> CliResult<()> {
    if axes.is_empty() {
        return Err(CliError::Config("sweep needs at least one --sweep axis".into()));
    }
    let mut base = config::read_table(config_path)?;
    for raw in overrides {
        let (k, v) = config::parse_override(raw)?;
        config::set_path(&mut base, &k, v)?;
    }
    let anchor = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base_config = config::from_table(base.clone(), &anchor)?;
    let out = out.unwrap_or_else(|| base_config.output_dir.join("sweep"));
    let _lock = OutputLock::acquire(&out)?;

    let mut combos: Vec<Vec<usize>> = vec![vec![]];
    for axis in axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                (0..axis.values.len()).map(move |i| {
                    let mut c = c.clone();
                    c.push(i);
                    c
                })
            })
            .collect();
    }

    let names: Vec<&str> = axes.iter().map(|a| a.name.as_str()).collect();
    let mut long = format!("{},method,mode,series_id,auc_roc,auc_pr\n", names.join(","));
    let mut summary = format!(
        "{},method,mode,mean_auc_roc,mean_auc_pr,n_series,n_skipped,payload_bytes_per_round\n",
        names.join(",")
    );
    for combo in combos {
        let mut table = base.clone();
        let mut labels = Vec::new();
        for (axis, &i) in axes.iter().zip(&combo) {
            let raw = &axis.values[i];
            for key in sweep_keys(&axis.name, &base) {
                let (k, v) = config::parse_override(&format!("{key}={raw}"))?;
                config::set_path(&mut table, &k, v)?;
            }
            labels.push(raw.clone());
        }
        let c = config::from_table(table, &anchor)?;
        let mode = c.mode;
        let r = run::resolve(c)?;
        let outcome = run::execute(&r, mode, None)?;
        let prefix = labels.join(",");
        let method = r.config.method.name();
        let mode_name = match mode {
            Mode::Centralized => "centralized",
            Mode::Incfed => "incfed",
        };
        let payload = outcome
            .federation
            .as_ref()
            .and_then(|f| f.rounds.last())
            .map(|l| l.total_payload_bytes.to_string())
            .unwrap_or_default();
        match &outcome.evaluation.report {
            Some(report) => {
                for s in &report.per_series {
                    long.push_str(&format!(
                        "{prefix},{method},{mode_name},{},{},{}\n",
                        s.series_id, s.auc_roc, s.auc_pr
                    ));
                }
                summary.push_str(&format!(
                    "{prefix},{method},{mode_name},{},{},{},{},{payload}\n",
                    report.mean_auc_roc,
                    report.mean_auc_pr,
                    report.per_series.len(),
                    outcome.evaluation.skipped.len()
                ));
                log::info!("{prefix}: mean auc_roc {:.4}", report.mean_auc_roc);
            }
            None => {
                summary.push_str(&format!(
                    "{prefix},{method},{mode_name},,,0,{},{payload}\n",
                    outcome.evaluation.skipped.len()
                ));
            }
        }
    }
    for (name, text) in [("sweep.csv", &long), ("sweep_summary.csv", &summary)] {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

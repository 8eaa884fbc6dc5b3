use std::path::Path;

use serde_json::{json, Value};

use fractamine::experiment::{self, ComparisonTable, ExperimentConfig};
use fractamine::multifractal::{self, HurstProfile, MfaError, ScaleSpec};
use fractamine::nn::{checkpoint, ModelConfig, ModelError, TrainConfig, TrainError};
use fractamine::series::{self, CorpusSpec, LabeledDataset, Series, SeriesError, SeriesFormat};
use fractamine::{ActivationKind, ActivationSpec, Execution, Method, MfaConfig, FORMAT_VERSION};

use crate::args::{
    AnalyzeArgs, CompareArgs, CompareModeArg, CorpusFlags, MfaFlags, ModelFlags, SynthCommand,
    Toggle, TrainArgs,
};
use crate::output::{ensure_dir, num, sibling_manifest, write_csv, write_json, Manifest};

/// Error with its process exit code: 2 for usage or input problems, 1 for
/// everything else.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            error: anyhow::anyhow!("{e}"),
        }
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 1,
            error: anyhow::anyhow!("{e}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn input_error(path: &Path, e: SeriesError) -> Failure {
    match e {
        // The I/O variant already names the path.
        SeriesError::Io { .. } => Failure::usage(e),
        other => Failure::usage(format!("{}: {other}", path.display())),
    }
}

fn train_error(e: TrainError) -> Failure {
    match e {
        TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteParams { .. } => {
            Failure::internal(e)
        }
        TrainError::Model(ModelError::MissingParam(_)) => Failure::internal(e),
        _ => Failure::usage(e),
    }
}

pub fn parse_q_list(text: &str) -> Outcome<Vec<f64>> {
    text.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|q| q.is_finite())
                .ok_or_else(|| {
                    Failure::usage(format!("--q: cannot parse {t:?} as a finite number"))
                })
        })
        .collect()
}

pub fn parse_scales(text: &str) -> Outcome<ScaleSpec> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || {
        Failure::usage(format!(
            "--scales expects min:max:count with positive integers, got {text:?}"
        ))
    };
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<usize> = parts
        .iter()
        .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    if v[0] == 0 || v[1] < v[0] || v[2] == 0 {
        return Err(bad());
    }
    Ok(ScaleSpec::Range {
        min: v[0],
        max: v[1],
        count: v[2],
    })
}

fn parse_method(text: &str) -> Outcome<Method> {
    text.parse::<Method>().map_err(Failure::usage)
}

fn mfa_config(flags: &MfaFlags) -> Outcome<MfaConfig> {
    let mut method = parse_method(&flags.method)?;
    match (flags.denoise, method) {
        (Some(Toggle::On), Method::MfDfa) => {
            return Err(Failure::usage(
                "--denoise on is only defined for fs-mfa and mf-dhv",
            ));
        }
        (Some(Toggle::On), _) => method = Method::FsMfa,
        (Some(Toggle::Off), Method::FsMfa) => method = Method::MfDhv,
        _ => {}
    }
    let mut cfg = MfaConfig::with_method(method);
    if let Some(q) = &flags.q {
        cfg.q_grid = parse_q_list(q)?;
    }
    if let Some(s) = &flags.scales {
        cfg.scales = parse_scales(s)?;
    }
    if let Some(w) = flags.vol_window {
        cfg.vol_window = w;
    }
    cfg.dfa_poly_order = flags.dfa_order;
    Ok(cfg)
}

fn mfa_failure(e: MfaError) -> Failure {
    match e {
        MfaError::Denoise(_) => Failure::internal(e),
        _ => Failure::usage(e),
    }
}

pub fn analyze(a: AnalyzeArgs) -> Outcome {
    let cfg = mfa_config(&a.mfa)?;
    let s = series::load_series(&a.input, SeriesFormat::from_path(&a.input))
        .map_err(|e| input_error(&a.input, e))?;
    let profile =
        multifractal::hurst_profile_with(&s, &cfg, Execution::Parallel).map_err(mfa_failure)?;
    let report = profile.report();
    match &a.out {
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(Failure::internal)?
            );
            Ok(())
        }
        Some(dir) => write_analysis(dir, &a.input, s.len(), &profile),
    }
}

fn write_analysis(dir: &Path, input: &Path, n: usize, p: &HurstProfile) -> Outcome {
    ensure_dir(dir)?;
    let config = json!({ "input": input.display().to_string(), "n": n, "mfa": p.config });

    let denoise = json!({
        "format_version": FORMAT_VERSION,
        "config": config,
        "applied": p.denoise.is_some(),
        "diagnostics": p.denoise,
    });
    write_json(&dir.join("denoise.json"), &denoise)?;

    let t = &p.table;
    let fluct = json!({
        "format_version": FORMAT_VERSION,
        "config": config,
        "q": t.q,
        "scales": t.scales,
        "log_scales": t.scales.iter().map(|&s| (s as f64).ln()).collect::<Vec<_>>(),
        "logF": t.log_f,
        "windows": t.windows,
        "zero_windows": t.zero_windows,
        "dropped": t.dropped,
    });
    write_json(&dir.join("fluctuation.json"), &fluct)?;
    let mut rows = Vec::new();
    for (q, row) in t.q.iter().zip(&t.log_f) {
        for (s, lf) in t.scales.iter().zip(row) {
            rows.push(format!("{q},{s},{},{}", (*s as f64).ln(), num(*lf)));
        }
    }
    write_csv(
        &dir.join("fluctuation.csv"),
        &config,
        &[],
        Some("q,scale,ln_scale,ln_F"),
        &rows,
    )?;

    write_json(&dir.join("hurst.json"), &p.report())?;
    let rows: Vec<String> = p
        .records
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.q, r.h, r.intercept, r.r_squared, r.n_scales
            )
        })
        .collect();
    write_csv(
        &dir.join("hurst.csv"),
        &config,
        &[],
        Some("q,H,intercept,r2,n_scales"),
        &rows,
    )?;

    let outputs = [
        "denoise.json",
        "fluctuation.json",
        "fluctuation.csv",
        "hurst.json",
        "hurst.csv",
    ];
    write_json(
        &dir.join("manifest.json"),
        &Manifest::new("analyze", config, &outputs),
    )?;
    Ok(())
}

fn corpus_spec(c: &CorpusFlags, seed: u64) -> CorpusSpec {
    CorpusSpec {
        n_docs: c.docs,
        n_classes: c.classes,
        n_tokens: c.tokens,
        dim: c.dim,
        separation: c.separation,
        seed: c.corpus_seed.unwrap_or(seed),
    }
}

fn write_series(out: &Path, s: &Series, config: &Value) -> Outcome {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    match SeriesFormat::from_path(out) {
        SeriesFormat::Json => write_json(
            out,
            &json!({ "format_version": FORMAT_VERSION, "config": config, "values": s.values() }),
        )?,
        SeriesFormat::Csv => {
            let rows: Vec<String> = s.values().iter().map(f64::to_string).collect();
            write_csv(out, config, &[], None, &rows)?
        }
    }
    Ok(())
}

pub fn synth(cmd: SynthCommand) -> Outcome {
    let generated = |r: Result<Series, SeriesError>| r.map_err(Failure::usage);
    let (out, config) = match &cmd {
        SynthCommand::Noise { n, seed, out } => {
            let config = json!({ "kind": "noise", "n": n, "seed": seed });
            write_series(
                out,
                &generated(series::synth_gaussian_noise(*n, *seed))?,
                &config,
            )?;
            (out.clone(), config)
        }
        SynthCommand::Fgn {
            hurst,
            n,
            seed,
            out,
        } => {
            let config = json!({ "kind": "fgn", "hurst": hurst, "n": n, "seed": seed });
            write_series(
                out,
                &generated(series::synth_fgn(*n, *hurst, *seed))?,
                &config,
            )?;
            (out.clone(), config)
        }
        SynthCommand::Cascade { levels, p, out } => {
            if *levels > 30 {
                return Err(Failure::usage(format!(
                    "--levels {levels} is too large (max 30)"
                )));
            }
            let config = json!({ "kind": "cascade", "levels": levels, "p": p });
            write_series(
                out,
                &generated(series::synth_binomial_cascade(*levels, *p))?,
                &config,
            )?;
            (out.clone(), config)
        }
        SynthCommand::Corpus {
            corpus,
            tagged,
            out,
        } => {
            let spec = corpus_spec(corpus, 0);
            let ds = if *tagged {
                series::synth_tagged_corpus(&spec)
            } else {
                series::synth_embedded_corpus(&spec)
            }
            .map_err(Failure::usage)?;
            let config = json!({ "kind": "corpus", "tagged": tagged, "spec": spec });
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                ensure_dir(parent)?;
            }
            series::save_dataset(out, &ds, &config).map_err(Failure::internal)?;
            (out.clone(), config)
        }
    };
    let name = out
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    write_json(
        &sibling_manifest(&out),
        &Manifest::new("synth", config, &[&name]),
    )?;
    Ok(())
}

fn activation(m: &ModelFlags) -> Outcome<ActivationSpec> {
    let kind: ActivationKind = m.activation.parse().map_err(Failure::usage)?;
    match kind.default_spec() {
        ActivationSpec::Sital { gamma, eta } => {
            ActivationSpec::sital(m.gamma.unwrap_or(gamma), m.eta.unwrap_or(eta))
                .map_err(Failure::usage)
        }
        spec if m.gamma.is_some() || m.eta.is_some() => Err(Failure::usage(format!(
            "--gamma/--eta apply to sital only, not {}",
            spec.kind().as_str()
        ))),
        spec => Ok(spec),
    }
}

/// Dataset plus a description of where it came from.
fn dataset(m: &ModelFlags) -> Outcome<(LabeledDataset, Value)> {
    match &m.data {
        Some(path) => {
            let ds = series::load_dataset(path).map_err(|e| input_error(path, e))?;
            Ok((ds, json!({ "path": path.display().to_string() })))
        }
        None => {
            let spec = corpus_spec(&m.corpus, m.seed);
            let ds = if m.tagging {
                series::synth_tagged_corpus(&spec)
            } else {
                series::synth_embedded_corpus(&spec)
            }
            .map_err(Failure::usage)?;
            Ok((ds, json!({ "synthetic": spec, "tagged": m.tagging })))
        }
    }
}

fn experiment_config(m: &ModelFlags, ds: &LabeledDataset) -> Outcome<ExperimentConfig> {
    if ds.is_empty() {
        return Err(Failure::usage("dataset has no documents"));
    }
    let dim = ds.dim().unwrap_or(1);
    let mut model = if m.full_scale {
        ModelConfig::full_scale(dim, 1)
    } else {
        ModelConfig::desk(dim, 1)
    };
    if m.tagging {
        model = model.tagging();
    }
    if let Some(h) = m.hidden {
        model.hidden = h;
        model.attention_dim = h;
        model.dense = h;
    }
    if let Some(f) = m.filters {
        model.filters = f;
    }
    if let Some(b) = m.blocks {
        model.blocks = b;
    }
    model.activation = activation(m)?;
    model.features.method = parse_method(&m.method)?;
    if let Some(q) = &m.q {
        model.features.q_grid = parse_q_list(q)?;
    }
    let model = fractamine::nn::train::config_for(ds, &model).map_err(train_error)?;
    let train = TrainConfig {
        epochs: m.epochs,
        lr_weights: m.lr,
        lr_activation: m.lr_act,
        batch_size: m.batch_size,
        seed: m.seed,
        target_accuracy: m.target_accuracy,
        ..TrainConfig::default()
    };
    train.validate().map_err(train_error)?;
    if m.repeats == 0 {
        return Err(Failure::usage("--repeats must be at least 1"));
    }
    Ok(ExperimentConfig {
        model,
        train,
        repeats: m.repeats,
    })
}

pub fn train(t: TrainArgs) -> Outcome {
    let m = &t.model;
    let (ds, source) = dataset(m)?;
    let cfg = experiment_config(m, &ds)?;
    let (report, models) =
        experiment::run_experiment_models(&ds, &cfg, Execution::Parallel).map_err(train_error)?;

    let dir = &m.out;
    ensure_dir(dir)?;
    let config = json!({ "data": source, "experiment": cfg, "config_hash": report.config_hash });
    let mut outputs = vec!["metrics.json".to_string(), "history.json".to_string()];
    for (r, model) in models.iter().enumerate() {
        let name = format!("checkpoint_r{r}.json");
        checkpoint::save(model, &dir.join(&name)).map_err(Failure::internal)?;
        outputs.push(name);
        outputs.push(format!("checkpoint_r{r}.bin"));
    }

    let per_run: Vec<Value> = report
        .runs
        .iter()
        .map(|r| json!({ "repeat": r.repeat, "seed": r.seed, "train": r.train, "val": r.val, "test": r.test }))
        .collect();
    let metrics = json!({
        "format_version": FORMAT_VERSION,
        "config": config,
        "mean_test": report.mean_test,
        "mean_val": report.mean_val,
        "runs": per_run,
    });
    write_json(&dir.join("metrics.json"), &metrics)?;
    let history: Vec<Value> = report
        .runs
        .iter()
        .map(|r| json!({ "repeat": r.repeat, "seed": r.seed, "epochs": r.history }))
        .collect();
    write_json(
        &dir.join("history.json"),
        &json!({ "format_version": FORMAT_VERSION, "config": config, "runs": history }),
    )?;
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_json(
        &dir.join("manifest.json"),
        &Manifest::new("train", config, &names),
    )?;
    println!(
        "test accuracy {:.4}, test macro-F1 {:.4} (mean over {} run{})",
        report.mean_test.accuracy,
        report.mean_test.macro_f1,
        report.runs.len(),
        if report.runs.len() == 1 { "" } else { "s" }
    );
    Ok(())
}

pub fn compare(c: CompareArgs) -> Outcome {
    let m = &c.model;
    let (ds, source) = dataset(m)?;
    let cfg = experiment_config(m, &ds)?;
    let table = match c.mode {
        CompareModeArg::Activations => {
            experiment::compare_activations(&ds, &cfg, Execution::Parallel)
        }
        CompareModeArg::Mfa => experiment::compare_mfa(&ds, &cfg, Execution::Parallel),
    }
    .map_err(train_error)?;
    write_comparison(&m.out, &table, json!({ "data": source, "experiment": cfg }))
}

fn write_comparison(dir: &Path, table: &ComparisonTable, config: Value) -> Outcome {
    ensure_dir(dir)?;
    write_json(&dir.join("table.json"), table)?;
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.variant,
                r.method.as_str(),
                r.seed,
                r.repeats,
                r.test_accuracy,
                r.test_macro_f1,
                r.val_accuracy,
                r.val_macro_f1
            )
        })
        .collect();
    let mut notes = table.notes.clone();
    notes.push(format!(
        "config_hash: {}",
        table.rows.first().map_or("", |r| r.config_hash.as_str())
    ));
    notes.push(format!("stationary: {}", table.is_stationary()));
    write_csv(
        &dir.join("table.csv"),
        &config,
        &notes,
        Some("variant,method,seed,repeats,test_accuracy,test_macro_f1,val_accuracy,val_macro_f1"),
        &rows,
    )?;
    let mode = match table.mode {
        experiment::CompareMode::Activations => "compare activations",
        experiment::CompareMode::Mfa => "compare mfa",
    };
    write_json(
        &dir.join("manifest.json"),
        &Manifest::new(mode, config, &["table.json", "table.csv"]),
    )?;
    println!(
        "{} rows, stationary: {}",
        table.rows.len(),
        table.is_stationary()
    );
    Ok(())
}

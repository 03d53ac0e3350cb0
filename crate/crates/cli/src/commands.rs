//! One function per subcommand. Each returns the one-line summary printed on
//! success.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use vitalsign::evaluation::{
    cross_validate, metrics_csv, prepare_fold, roc_csv, roc_curve, Balance, CvConfig,
};
use vitalsign::features::{Feature, N_FEATURES};
use vitalsign::imbalance::OversampleConfig;
use vitalsign::models::{predictor_importance, ModelDocument, ModelKind, ModelSpec, TrainedModel};
use vitalsign::pipeline::{feature_table, load_records, preprocess_records, FeatureTable};
use vitalsign::preprocess::{PreprocessConfig, Signal};
use vitalsign::record_io::{
    load_manifest, save_manifest, save_record, CohortManifest, ManifestEntry,
};
use vitalsign::rng::derive_seed;
use vitalsign::synth::{default_config, generate_cohort, write_cohort, SynthConfig};

use crate::failure::Failure;
use crate::{
    BalanceArgs, BalanceMethod, Command, EvaluateArgs, ExtractArgs, ImportanceArgs, PreprocessArgs,
    RocArgs, SynthArgs, TrainArgs,
};

type Outcome = Result<String, Failure>;

pub fn run(command: &Command) -> Outcome {
    match command {
        Command::Synth(a) => synth(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Importance(a) => importance(a),
        Command::Roc(a) => roc(a),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn load_table(path: &Path) -> Result<FeatureTable, Failure> {
    FeatureTable::parse(&read_file(path)?).map_err(|e| Failure::from(e).at(path))
}

fn load_model(path: &Path) -> Result<ModelDocument, Failure> {
    ModelDocument::from_json(&read_file(path)?).map_err(|e| Failure::from(e).at(path))
}

fn balance_of(args: &BalanceArgs) -> Balance {
    match args.balance {
        BalanceMethod::None => Balance::None,
        BalanceMethod::Asuwo => Balance::Asuwo(OversampleConfig {
            target_ratio: args.target_ratio,
            k_majority: args.k_majority,
            k_intra: args.k_intra,
            linkage_threshold_quantile: args.linkage_quantile,
            seed: 0,
        }),
    }
}

/// Normalizes, balances and fits on every row of `table`.
fn fit(
    table: &FeatureTable,
    kind: ModelKind,
    normalize: bool,
    balance: &Balance,
    seed: u64,
) -> Result<(ModelDocument, usize), Failure> {
    let y = table.labels();
    let all: Vec<usize> = (0..y.len()).collect();
    let fold = prepare_fold(
        &table.x,
        &y,
        &all,
        &[],
        normalize,
        balance,
        derive_seed(seed, 1),
    )?;
    let model = ModelSpec::default_for(kind)
        .with_seed(derive_seed(seed, 2))
        .train(&fold.x_train, &fold.y_train)?;
    let n_synthetic = fold.synthetic.iter().filter(|s| **s).count();
    Ok((
        ModelDocument::new(model, normalize.then_some(fold.normalizer)),
        n_synthetic,
    ))
}

fn synth(a: &SynthArgs) -> Outcome {
    let cfg = SynthConfig {
        n_survived: a.n_survived,
        n_passed: a.n_passed,
        seed: a.seed,
        rates_hz: a.rates_hz.clone(),
        duration_s: a.duration_s,
        ..default_config()
    };
    let (manifest, records) = generate_cohort(&cfg).map_err(Failure::Usage)?;
    let path = write_cohort(&a.out, &manifest, &records)?;
    Ok(format!(
        "synth: {} records ({} survived, {} passed away) -> {}",
        records.len(),
        a.n_survived,
        a.n_passed,
        path.display()
    ))
}

fn preprocess(a: &PreprocessArgs) -> Outcome {
    let window = if a.one_hour_window {
        PreprocessConfig::one_hour_window(a.target_hz)
    } else {
        a.window
    };
    let cfg = PreprocessConfig {
        window,
        target_hz: a.target_hz,
        first_hour_only: a.first_hour_only,
    };
    let manifest = load_manifest(&a.manifest)?;
    let records = load_records(&a.manifest, &manifest)?;
    let signals = preprocess_records(&records, &cfg)?;
    info!("preprocessed {} records", signals.len());

    let entries: Vec<ManifestEntry> = manifest
        .entries
        .iter()
        .map(|e| ManifestEntry {
            record_path: PathBuf::from("records").join(format!(
                "{}.{}",
                e.patient_id,
                a.format.extension()
            )),
            ..e.clone()
        })
        .collect();
    fs::create_dir_all(a.out.join("records")).map_err(|e| Failure::io(&a.out, e))?;
    entries.par_iter().zip(&signals).try_for_each(|(e, s)| {
        save_record(
            &a.out.join(&e.record_path),
            &s.to_record(&e.patient_id, 0.0),
            a.format,
        )
    })?;
    let out_manifest = a.out.join("manifest.csv");
    save_manifest(&out_manifest, &CohortManifest::new(entries)?)?;
    let samples: usize = signals.iter().map(Signal::len).sum();
    Ok(format!(
        "preprocess: {} records, {samples} samples at {} Hz (window {window}) -> {}",
        signals.len(),
        a.target_hz,
        out_manifest.display()
    ))
}

fn extract(a: &ExtractArgs) -> Outcome {
    let manifest = load_manifest(&a.manifest)?;
    let records = load_records(&a.manifest, &manifest)?;
    let signals = records
        .iter()
        .map(|r| {
            Signal::from_record(r).ok_or_else(|| {
                Failure::Data(format!(
                    "record {} has missing samples; run `preprocess` first",
                    r.patient_id
                ))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let table = feature_table(&manifest, &signals)?;
    write_file(&a.out, table.to_csv())?;
    Ok(format!(
        "extract: {} x {N_FEATURES} features -> {}",
        table.len(),
        a.out.display()
    ))
}

fn train(a: &TrainArgs) -> Outcome {
    let table = load_table(&a.data)?;
    let (doc, n_synthetic) = fit(
        &table,
        a.model,
        a.normalize,
        &balance_of(&a.balance),
        a.seed,
    )?;
    write_file(&a.out, doc.to_json())?;
    Ok(format!(
        "train: {} on {} rows (+{n_synthetic} synthetic) -> {}",
        a.model,
        table.len(),
        a.out.display()
    ))
}

fn resolve_models(names: &[String]) -> Result<Vec<ModelKind>, Failure> {
    let mut kinds = Vec::new();
    for name in names.iter().map(|n| n.trim()).filter(|n| !n.is_empty()) {
        let add: Vec<ModelKind> = if name.eq_ignore_ascii_case("all") {
            ModelKind::ALL.to_vec()
        } else {
            vec![name.parse().map_err(|e| Failure::Usage(format!("{e}")))?]
        };
        for k in add {
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
    }
    if kinds.is_empty() {
        return Err(Failure::Usage("no models selected".into()));
    }
    Ok(kinds)
}

fn evaluate(a: &EvaluateArgs) -> Outcome {
    let kinds = resolve_models(&a.models)?;
    let table = load_table(&a.data)?;
    let y = table.labels();
    let balance = balance_of(&a.balance);
    let cv = CvConfig {
        k: a.folds,
        seed: a.seed,
        stratified: a.stratified,
        threshold: a.threshold,
        normalize: a.normalize,
    };

    let mut reports = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let r = cross_validate(&table.x, &y, &ModelSpec::default_for(kind), &balance, &cv)?;
        info!("{kind}: mean F1 {:.3}, AUC {:.3}", r.mean_f1, r.auc);
        write_file(
            &a.out.join(format!("roc_{kind}.csv")),
            roc_csv(&r.roc_points),
        )?;
        reports.push(r);
    }
    let json = serde_json::to_string_pretty(&reports).expect("reports always serialize");
    write_file(&a.out.join("report.json"), json + "\n")?;
    write_file(&a.out.join("metrics.csv"), metrics_csv(&reports))?;

    let best = reports
        .iter()
        .max_by(|p, q| p.mean_f1.total_cmp(&q.mean_f1))
        .expect("at least one model");
    Ok(format!(
        "evaluate: {} model(s), {} folds; best mean F1 {} {:.3} (AUC {:.3}) -> {}",
        reports.len(),
        a.folds,
        best.model,
        best.mean_f1,
        best.auc,
        a.out.display()
    ))
}

fn feature_name(j: usize, n: usize) -> String {
    if n == N_FEATURES {
        Feature::ALL[j].name().to_string()
    } else {
        format!("f{}", j + 1)
    }
}

fn importance(a: &ImportanceArgs) -> Outcome {
    let doc = match &a.model {
        Some(path) => load_model(path)?,
        None => {
            fit(
                &load_table(&a.data)?,
                ModelKind::DecisionTree,
                a.normalize,
                &balance_of(&a.balance),
                a.seed,
            )?
            .0
        }
    };
    let TrainedModel::DecisionTree(tree) = &doc.model else {
        return Err(Failure::Usage(format!(
            "importance needs a decision_tree model, got {}",
            doc.model.kind()
        )));
    };
    let n = tree.feature_count;
    let scores = predictor_importance(&tree.root, n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));

    let mut csv = String::from("rank,feature,importance\n");
    for (rank, &j) in order.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{}", rank + 1, feature_name(j, n), scores[j]);
    }
    write_file(&a.out, csv)?;
    let top: Vec<String> = order.iter().take(3).map(|&j| feature_name(j, n)).collect();
    Ok(format!(
        "importance: top features {} -> {}",
        top.join(", "),
        a.out.display()
    ))
}

fn roc(a: &RocArgs) -> Outcome {
    let doc = load_model(&a.model)?;
    let table = load_table(&a.data)?;
    let scores = table
        .x
        .rows()
        .map(|r| doc.score_raw(r))
        .collect::<Result<Vec<_>, _>>()?;
    let points = roc_curve(&scores, &table.labels())?;
    write_file(&a.out, roc_csv(&points))?;
    Ok(format!(
        "roc: {} on {} rows, AUC {:.4} -> {}",
        doc.model.kind(),
        table.len(),
        vitalsign::evaluation::auc(&points),
        a.out.display()
    ))
}

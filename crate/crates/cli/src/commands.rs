use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mlgcn::checkpoint;
use mlgcn::cpd::cpd_check;
use mlgcn::dataset::{Dataset, Sample, MANIFEST_FILE};
use mlgcn::gradcheck::gradcheck_with;
use mlgcn::graph::Graph;
use mlgcn::laplacian::{build_affinity_with, build_laplacian};
use mlgcn::model::{ModelConfig, ModelState, PoolingMode};
use mlgcn::skeleton::{build_trajectory_graph, extract_trajectories, read_skeleton_csv};
use mlgcn::synthetic::{generate, SyntheticConfig};
use mlgcn::train::{self as engine, EpochRecord};
use mlgcn::{MlgcnError, Result};
use serde::Serialize;

use crate::config::{IngestFormat, RunConfig};
use crate::{SplitArg, SweepOver};

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| MlgcnError::io(path, e))
}

/// Creates the output directory and records the merged configuration.
fn prepare_out(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.out).map_err(|e| MlgcnError::io(&config.out, e))?;
    write_file(&config.out.join(EFFECTIVE_CONFIG), &config.to_toml())
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string(value).expect("report serializes"));
}

fn sequence_files(dir: &Path, extensions: &[String], out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| MlgcnError::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| MlgcnError::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            sequence_files(&path, extensions, out)?;
        } else if path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.iter().any(|x| x == e))
        {
            out.push(path);
        }
    }
    Ok(())
}

fn ingest_csv(config: &RunConfig) -> Result<Dataset> {
    let ingest = &config.ingest;
    let input = ingest
        .input
        .as_deref()
        .ok_or_else(|| MlgcnError::Usage("no input directory: pass --input or set ingest.input".into()))?;
    let mut class_dirs: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| MlgcnError::io(input, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(MlgcnError::Ingest(format!("{} has no class sub-directories", input.display())));
    }
    let mut class_names = Vec::new();
    let mut samples = Vec::new();
    for (class, dir) in class_dirs.iter().enumerate() {
        let class_name = dir.file_name().expect("read_dir entry").to_string_lossy().into_owned();
        let mut files = Vec::new();
        sequence_files(dir, &ingest.extensions, &mut files)?;
        for file in files {
            let text = fs::read_to_string(&file).map_err(|e| MlgcnError::io(&file, e))?;
            let seq = read_skeleton_csv(&text, &ingest.layout, &file)?;
            let trajectories = extract_trajectories(&seq).map_err(|e| MlgcnError::Ingest(format!("{}: {e}", file.display())))?;
            let graph = build_trajectory_graph(&trajectories, ingest.graph, seq.total_frames(), ingest.layout.joints)
                .map_err(|e| MlgcnError::Ingest(format!("{}: {e}", file.display())))?;
            let relative = file.strip_prefix(input).unwrap_or(&file).with_extension("");
            let name = relative
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("_");
            samples.push(Sample {
                name,
                graph,
                class,
                split: None,
            });
        }
        class_names.push(class_name);
    }
    let mut data = Dataset::new(class_names, samples)?;
    data.num_labels = ingest.layout.joints;
    data.label_names = (1..=ingest.layout.joints).map(|j| format!("joint_{j}")).collect();
    Ok(data)
}

pub fn ingest(config: &RunConfig) -> Result<()> {
    let data = match config.ingest.format {
        IngestFormat::Csv => ingest_csv(config)?,
        IngestFormat::Synthetic => generate(&SyntheticConfig {
            seed: config.seed,
            ..config.ingest.synthetic
        })?,
    };
    let created = !config.out.exists();
    let saved = prepare_out(config).and_then(|()| data.save(&config.out));
    if let Err(e) = saved {
        // leave no partial dataset behind
        if created {
            let _ = fs::remove_dir_all(&config.out);
        } else {
            for s in &data.samples {
                let _ = fs::remove_file(config.out.join(format!("{}.graph", s.name)));
            }
            let _ = fs::remove_file(config.out.join(MANIFEST_FILE));
        }
        return Err(e);
    }
    print_json(&serde_json::json!({
        "graphs": data.len(),
        "classes": data.class_names,
        "num_labels": data.num_labels,
        "feature_dim": data.feature_dim,
        "manifest": config.out.join(MANIFEST_FILE),
    }));
    Ok(())
}

#[derive(Debug, Serialize)]
struct VariantSummary {
    variant: String,
    description: String,
    epochs: usize,
    final_train_loss: f64,
    final_train_acc: f64,
    final_test_acc: Option<f64>,
    best_test_acc: Option<f64>,
}

fn train_variant(data: &Dataset, config: &RunConfig, model: &ModelConfig, dir: &Path, variant: &str, description: String) -> Result<VariantSummary> {
    fs::create_dir_all(dir).map_err(|e| MlgcnError::io(dir, e))?;
    let train_config = config.train_config();
    let shape = engine::shape_for(data);
    let (train_idx, test_idx) = data.split_indices(train_config.test_fraction, config.seed)?;
    let train_set = engine::prepare_all(data, &train_idx, model, &shape)?;
    let test_set = engine::prepare_all(data, &test_idx, model, &shape)?;

    let metrics_path = dir.join(METRICS_FILE);
    let file = fs::File::create(&metrics_path).map_err(|e| MlgcnError::io(&metrics_path, e))?;
    let mut writer = BufWriter::new(file);
    let outcome = engine::train(model, &train_config, shape, &train_set, &test_set, Some(&mut writer))?;
    writer.flush().map_err(|e| MlgcnError::io(&metrics_path, e))?;

    checkpoint::save(&outcome.state, &dir.join(CHECKPOINT_FILE))?;
    if !test_set.is_empty() {
        let report = engine::evaluate(&outcome.state, &test_set)?;
        write_file(&dir.join("eval_test.csv"), &report.to_csv(&data.class_names))?;
    }
    let last: &EpochRecord = outcome.history.last().expect("at least one epoch");
    Ok(VariantSummary {
        variant: variant.to_string(),
        description,
        epochs: outcome.history.len(),
        final_train_loss: last.train_loss,
        final_train_acc: last.train_acc,
        final_test_acc: last.test_acc,
        best_test_acc: outcome.history.iter().filter_map(|r| r.test_acc).reduce(f64::max),
    })
}

fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    Dataset::load(config.data_path()?)
}

pub fn train(config: &RunConfig, pooling: Option<&str>) -> Result<()> {
    let mut config = config.clone();
    match pooling {
        Some("sweep") => return sweep(&config, SweepOver::Pooling),
        Some(name) => {
            config.model.pooling = PoolingMode::parse(name).ok_or_else(|| {
                let modes: Vec<&str> = PoolingMode::ALL.iter().map(|m| m.as_str()).collect();
                MlgcnError::Usage(format!("unknown pooling mode `{name}`; expected sweep or one of {}", modes.join(", ")))
            })?;
        }
        None => {}
    }
    let data = load_dataset(&config)?;
    prepare_out(&config)?;
    let description = config.model.pooling.as_str().to_string();
    let summary = train_variant(&data, &config, &config.model, &config.out, "model", description)?;
    print_json(&summary);
    Ok(())
}

pub fn sweep(config: &RunConfig, over: SweepOver) -> Result<()> {
    let data = load_dataset(config)?;
    prepare_out(config)?;
    let mut variants: Vec<(String, String, ModelConfig)> = Vec::new();
    match over {
        SweepOver::Pooling => {
            for mode in PoolingMode::ALL {
                let model = ModelConfig {
                    pooling: mode,
                    ..config.model.clone()
                };
                variants.push((mode.as_str().to_string(), mode.as_str().to_string(), model));
            }
        }
        SweepOver::Laplacian => {
            for (i, entry) in config.model.menu.iter().enumerate() {
                let model = ModelConfig {
                    menu: vec![*entry],
                    multilap_widths: Vec::new(),
                    ..config.model.clone()
                };
                variants.push((format!("single_{}", i + 1), entry.to_string(), model));
            }
            variants.push(("multilap".into(), format!("{} laplacians", config.model.menu.len()), config.model.clone()));
        }
    }
    let mut csv = String::from("variant,description,epochs,final_train_loss,final_train_acc,final_test_acc,best_test_acc\n");
    for (variant, description, model) in &variants {
        let summary = train_variant(&data, config, model, &config.out.join(variant), variant, description.clone())?;
        let opt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v}"));
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            summary.variant,
            summary.description,
            summary.epochs,
            summary.final_train_loss,
            summary.final_train_acc,
            opt(summary.final_test_acc),
            opt(summary.best_test_acc)
        );
        print_json(&summary);
    }
    write_file(&config.out.join("sweep_summary.csv"), &csv)
}

/// Verifies a checkpoint can read a dataset, naming the tensor that cannot.
fn check_compatible(state: &ModelState, data: &Dataset) -> Result<()> {
    let input_channels = state.conv[0].in_channels();
    if input_channels != data.feature_dim {
        return Err(MlgcnError::shape(
            "eval",
            format!("tensor theta[1] takes {input_channels} input channels, dataset has {}-dim node features", data.feature_dim),
        ));
    }
    if state.classifier_bias.len() != data.num_classes() {
        return Err(MlgcnError::shape(
            "eval",
            format!(
                "tensor classifier_bias has {} classes, dataset declares {}",
                state.classifier_bias.len(),
                data.num_classes()
            ),
        ));
    }
    if data.num_labels > state.shape.num_labels {
        return Err(MlgcnError::shape(
            "eval",
            format!(
                "tensor classifier_weight was sized for {} node labels, dataset uses {}",
                state.shape.num_labels, data.num_labels
            ),
        ));
    }
    let flattens = matches!(state.config.pooling, PoolingMode::None | PoolingMode::Featprop);
    if flattens && data.max_nodes() > state.shape.max_nodes {
        return Err(MlgcnError::shape(
            "eval",
            format!(
                "tensor classifier_weight holds {} nodes, dataset has a graph with {}",
                state.shape.max_nodes,
                data.max_nodes()
            ),
        ));
    }
    Ok(())
}

pub fn eval(config: &RunConfig, checkpoint_path: &Path, split: SplitArg, seed: Option<u64>) -> Result<()> {
    let state = checkpoint::load(checkpoint_path)?;
    let data = load_dataset(config)?;
    check_compatible(&state, &data)?;
    let indices = match split {
        SplitArg::All => (0..data.len()).collect(),
        SplitArg::Train | SplitArg::Test => {
            let (train, test) = data.split_indices(config.train.test_fraction, seed.unwrap_or(state.seed))?;
            if split == SplitArg::Train {
                train
            } else {
                test
            }
        }
    };
    let samples = engine::prepare_all(&data, &indices, &state.config, &state.shape)?;
    let report = engine::evaluate(&state, &samples)?;
    prepare_out(config)?;
    write_file(&config.out.join("eval.csv"), &report.to_csv(&data.class_names))?;
    print_json(&serde_json::json!({
        "split": format!("{split:?}").to_lowercase(),
        "total": report.total,
        "correct": report.correct,
        "accuracy": report.accuracy,
        "class_mean_accuracy": report.class_mean_accuracy,
        "per_class": report.per_class,
        "mean_loss": report.mean_loss,
    }));
    Ok(())
}

pub fn gradcheck(config: &RunConfig, strict: bool) -> Result<ExitCode> {
    let gc = &config.gradcheck;
    let report = gradcheck_with(&config.model, config.seed, gc.jacobian.into(), gc.step, gc.tolerance)?;
    prepare_out(config)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&config.out.join("gradcheck.json"), &format!("{text}\n"))?;
    print_json(&report);
    if strict && !report.passed {
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn certify(config: &RunConfig, graph_files: &[PathBuf]) -> Result<()> {
    let menu = &config.model.menu;
    if menu.is_empty() {
        return Err(MlgcnError::Usage("laplacian menu is empty".into()));
    }
    let graphs: Vec<(String, Graph)> = if graph_files.is_empty() {
        load_dataset(config)?.samples.into_iter().map(|s| (s.name, s.graph)).collect()
    } else {
        graph_files
            .iter()
            .map(|p| Graph::load(p).map(|g| (p.display().to_string(), g)))
            .collect::<Result<_>>()?
    };
    let tol = config.certify.tolerance;
    let mut rows = String::from("graph,entry,descriptor,min_centered_eigenvalue,is_cpd,symmetrized\n");
    let mut cpd_counts = vec![0usize; menu.len()];
    for (name, graph) in &graphs {
        for (j, d) in menu.iter().enumerate() {
            let affinity = build_affinity_with(graph, d.kind, d.power, d.scale_multiplier, d.rebinarize)?;
            let laplacian = build_laplacian(&affinity, d.family)?;
            let report = cpd_check(laplacian.values.view(), tol)?;
            cpd_counts[j] += usize::from(report.is_cpd);
            let _ = writeln!(
                rows,
                "{name},{},{d},{:e},{},{}",
                j + 1,
                report.min_centered_eigenvalue,
                report.is_cpd,
                report.symmetrized
            );
        }
    }
    let mut summary = String::from("entry,descriptor,graphs,cpd_graphs,precondition_holds\n");
    for (j, d) in menu.iter().enumerate() {
        let _ = writeln!(
            summary,
            "{},{d},{},{},{}",
            j + 1,
            graphs.len(),
            cpd_counts[j],
            cpd_counts[j] == graphs.len()
        );
    }
    prepare_out(config)?;
    write_file(&config.out.join("certify.csv"), &rows)?;
    write_file(&config.out.join("certify_summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

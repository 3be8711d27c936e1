//! Skeleton text to trained, reloaded model.

use std::path::Path;

use mlgcn::checkpoint;
use mlgcn::dataset::{Dataset, Sample};
use mlgcn::model::{self, ModelConfig};
use mlgcn::skeleton::{build_trajectory_graph, extract_trajectories, read_skeleton_csv, CsvLayout, GraphBuildConfig};
use mlgcn::train::{self, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LAYOUT: CsvLayout = CsvLayout {
    persons: 1,
    joints: 4,
    dim: 2,
    frame_column: true,
    delimiter: ',',
};

/// Joint 1 drifts right for class 0 and left for class 1; the rest jitter.
fn sequence_text(class: usize, rng: &mut ChaCha8Rng) -> String {
    let direction = if class == 0 { 1.0 } else { -1.0 };
    let frames = rng.random_range(8..16);
    let mut text = String::new();
    for t in 0..frames {
        let mut row = vec![t.to_string()];
        for joint in 0..LAYOUT.joints {
            let drift = if joint == 0 { direction * t as f64 * 0.3 } else { 0.0 };
            row.push(format!("{:.4}", joint as f64 + drift + rng.random_range(-0.05..0.05)));
            row.push(format!("{:.4}", rng.random_range(-0.05..0.05)));
        }
        text.push_str(&row.join(","));
        text.push('\n');
    }
    text
}

fn skeleton_dataset() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples = (0..24)
        .map(|i| {
            let class = i % 2;
            let seq = read_skeleton_csv(&sequence_text(class, &mut rng), &LAYOUT, Path::new("seq.csv")).unwrap();
            let trajs = extract_trajectories(&seq).unwrap();
            let graph = build_trajectory_graph(&trajs, GraphBuildConfig::default(), seq.total_frames(), LAYOUT.joints).unwrap();
            Sample {
                name: format!("seq{i}"),
                graph,
                class,
                split: None,
            }
        })
        .collect();
    Dataset::new(vec!["right".into(), "left".into()], samples).unwrap()
}

#[test]
fn skeletons_train_and_checkpoints_reload() {
    let data = skeleton_dataset();
    assert_eq!(data.max_nodes(), LAYOUT.joints);
    let dir = tempfile::tempdir().unwrap();
    let manifest = data.save(dir.path()).unwrap();
    let data = Dataset::load(&manifest).unwrap();

    let config = ModelConfig::default();
    let tc = TrainConfig {
        epochs: 15,
        batch_size: 6,
        seed: 2,
        ..TrainConfig::default()
    };
    let shape = train::shape_for(&data);
    let (tr, te) = data.split_indices(tc.test_fraction, tc.seed).unwrap();
    let train_set = train::prepare_all(&data, &tr, &config, &shape).unwrap();
    let test_set = train::prepare_all(&data, &te, &config, &shape).unwrap();
    let out = train::train(&config, &tc, shape, &train_set, &test_set, None).unwrap();
    let first = out.history.first().unwrap().train_loss;
    let last = out.history.last().unwrap().train_loss;
    assert!(last < first, "loss {first} -> {last}");

    let path = dir.path().join("model.ckpt");
    checkpoint::save(&out.state, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    for (sample, _) in &test_set {
        let (a, _) = model::forward(sample, &out.state).unwrap();
        let (b, _) = model::forward(sample, &back).unwrap();
        assert_eq!(a, b);
    }
    let before = train::evaluate(&out.state, &test_set).unwrap();
    let after = train::evaluate(&back, &test_set).unwrap();
    assert_eq!(before.confusion, after.confusion);
}

#[test]
fn loss_decreases_over_ten_synthetic_epochs() {
    use mlgcn::synthetic::{generate, SyntheticConfig};
    let config = ModelConfig::default();
    let mut decreasing = 0;
    for seed in 0..5 {
        let data = generate(&SyntheticConfig { graphs: 60, seed, ..SyntheticConfig::default() }).unwrap();
        let tc = TrainConfig { epochs: 10, seed, ..TrainConfig::default() };
        let shape = train::shape_for(&data);
        let (tr, te) = data.split_indices(tc.test_fraction, seed).unwrap();
        let train_set = train::prepare_all(&data, &tr, &config, &shape).unwrap();
        let test_set = train::prepare_all(&data, &te, &config, &shape).unwrap();
        let out = train::train(&config, &tc, shape, &train_set, &test_set, None).unwrap();
        decreasing += usize::from(out.history[9].train_loss < out.history[0].train_loss);
    }
    assert!(decreasing >= 4, "loss fell for {decreasing}/5 seeds");
}

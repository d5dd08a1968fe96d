use daan::attention::{cam_argmax, compute_cam, feature_cell_center};
use daan::autograd::{ParamMode, Tape};
use daan::data::synth::{
    parse_synth_id, sample_factors, shape_bbox, synth_generate, synth_test_sets, SynthConfig,
};
use daan::data::{Dataset, Domain};
use daan::metrics::evaluate_model;
use daan::model::ModelConfig;
use daan::trainer::{Method, TrainConfig, Trainer};
use ndarray::{Array2, Array3, Ix2, Ix4};

fn main() {
    match std::env::args().nth(1).as_deref() {
        Some("cam") => cam_check(),
        Some("mtl") => mtl_check(),
        _ => bench(),
    }
}

fn data() -> (SynthConfig, Dataset, Dataset, Dataset) {
    let synth = SynthConfig::default();
    let (source, target) = synth_generate(&synth).unwrap();
    let (_, target_test) = synth_test_sets(&synth).unwrap();
    (synth, source, target, target_test)
}

fn bench() {
    let lr: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.02);
    let seed: u64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(7);
    let (synth, source, mut target, target_test) = data();
    for s in &mut target.samples {
        s.labels = None;
    }
    let schema = synth.schema().unwrap();

    for method in [Method::SourceOnly, Method::DaanL, Method::DaanLFA] {
        let config = TrainConfig { method, seed, learning_rate: lr, ..TrainConfig::desk() };
        let mut trainer =
            Trainer::new(config, ModelConfig::desk(), &schema, Some(&synth)).unwrap();
        let (_, history) = trainer.fit(&source, &target, None).unwrap();
        let last = history.last().unwrap();
        let (acc, f1) = evaluate_model(&trainer.model, &target_test, 50).unwrap().macro_average();
        println!(
            "lr {:<5} seed {} {:<12} target acc {:.4} f1 {:.4}   (task_s {:.3}, task_s2t {:.3} at end)",
            lr,
            seed,
            method.name(),
            acc,
            f1,
            last.task_source,
            last.task_translated
        );
    }
}

/// Criterion-10 rehearsal: train LFA, then check how often the true shape
/// class's CAM argmax lands inside the renderer's bounding box.
fn cam_check() {
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(7);
    let (synth, source, mut target, target_test) = data();
    for s in &mut target.samples {
        s.labels = None;
    }
    let schema = synth.schema().unwrap();
    let config = TrainConfig { seed, ..TrainConfig::desk() };
    let mut trainer = Trainer::new(config, ModelConfig::desk(), &schema, Some(&synth)).unwrap();
    trainer.fit(&source, &target, None).unwrap();
    let model = &trainer.model;

    let weight_matrix: Array2<f32> = {
        let mut tape = Tape::new(&model.store);
        let w = model.heads.stacked_weights(&mut tape, &model.store, ParamMode::Frozen);
        tape.value(w).clone().into_dimensionality::<Ix2>().unwrap()
    };
    let shape_offset = schema.group_offset(schema.group_by_name("shape").unwrap().0);
    let style = synth.style_of(Domain::Target);

    let mut inside_200 = 0usize;
    let mut inside_all = 0usize;
    let n = target_test.samples.len();
    for (pos, sample) in target_test.samples.iter().enumerate() {
        let (domain, index) = parse_synth_id(&sample.id).unwrap();
        assert_eq!(domain, Domain::Target);
        let factors = sample_factors(&synth, domain, index);
        let (i0, j0, i1, j1) = shape_bbox(&synth, &factors, style);

        let mut tape = Tape::new(&model.store);
        let x = model.input(&mut tape, &target_test.stack_images(&[pos])).unwrap();
        let feats = model.extract(&mut tape, x, ParamMode::Frozen).unwrap();
        let spatial4 =
            tape.value(feats.spatial).clone().into_dimensionality::<Ix4>().unwrap();
        let spatial: Array3<f32> = spatial4.index_axis_move(ndarray::Axis(0), 0);

        let row: Vec<f32> = weight_matrix.row(shape_offset + factors.shape).to_vec();
        let cam = compute_cam(&spatial, &row).unwrap();
        let cell = cam_argmax(&cam);
        let (py, px) = feature_cell_center(cell, cam.dim().0, synth.image_size);
        let inside = py >= i0 && py <= i1 && px >= j0 && px <= j1;
        if inside {
            inside_all += 1;
            if pos < 200 {
                inside_200 += 1;
            }
        }
    }
    println!(
        "seed {seed}: CAM argmax inside bbox {inside_200}/200 on first 200 ({:.1}%), {inside_all}/{n} overall ({:.1}%)",
        inside_200 as f64 / 2.0,
        100.0 * inside_all as f64 / n as f64
    );
}

/// Criterion-8 rehearsal: Target Only with grouped vs flat heads, 3 seeds.
fn mtl_check() {
    let (synth, source, target, target_test) = data();
    let schema = synth.schema().unwrap();
    let mut medians = Vec::new();
    for multitask in [true, false] {
        let mut f1s = Vec::new();
        for seed in [7u64, 8, 9] {
            let config = TrainConfig {
                method: Method::TargetOnly,
                multitask,
                seed,
                ..TrainConfig::desk()
            };
            let mut trainer =
                Trainer::new(config, ModelConfig::desk(), &schema, Some(&synth)).unwrap();
            trainer.fit(&source, &target, None).unwrap();
            let (acc, f1) =
                evaluate_model(&trainer.model, &target_test, 50).unwrap().macro_average();
            println!(
                "multitask {:<5} seed {} target acc {:.4} f1 {:.4}",
                multitask, seed, acc, f1
            );
            f1s.push(f1);
        }
        f1s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push(f1s[1]);
        println!("multitask {:<5} median f1 {:.4}", multitask, f1s[1]);
    }
    println!(
        "grouped {:.4} vs flat {:.4}  (margin {:+.4}, need >= -0.005)",
        medians[0],
        medians[1],
        medians[0] - medians[1]
    );
}

//! End-to-end run on generated face-like images: train the small CNN, score
//! held-out faces, correlate predictions with synthetic ratings, explain one
//! face with Grad-CAM and embed the held-out feature maps with t-SNE.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use psyman_core::embedding::write_embedding_csv;
use psyman_core::gradcam::write_ppm;
use psyman_core::mininet::save_params;
use psyman_core::stats::{predictive_power, silhouette};
use psyman_core::tensor_io::{write_ratings_csv, write_tensor_file};
use psyman_core::tsne::{run_tsne, TsneConfig};
use psyman_core::{MiniNet32, RatingsTable64, Tensor32, ToolkitRng};

use crate::commands::cam_overlay;
use crate::manifest::Invocation;
use crate::{ensure, svg, write_output, CliError, Context, DemoArgs};

pub const IMAGE_SIZE: usize = 16;
pub const TRAIN_PER_CLASS: usize = 16;
pub const HELD_OUT_PER_CLASS: usize = 16;
pub const TRAIN_STEPS: usize = 600;
pub const LEARNING_RATE: f32 = 0.05;
pub const ATTRIBUTES: [&str; 2] = ["happy", "sad"];
const CAM_ALPHA: f64 = 0.5;

/// Grayscale face: light oval head, two dark eyes and a bright mouth that
/// curves up (class 0, smiling) or down (class 1, frowning). Each face is
/// shifted by up to one pixel and carries uniform pixel noise.
pub fn face(rng: &mut ToolkitRng, class: usize) -> Tensor32 {
    let s = IMAGE_SIZE as f64;
    let dx = rng.below(3) as f64 - 1.0;
    let dy = rng.below(3) as f64 - 1.0;
    let (cx, cy) = ((s - 1.0) / 2.0 + dx, (s - 1.0) / 2.0 + dy);
    let mut px = vec![0.0f64; IMAGE_SIZE * IMAGE_SIZE];
    for r in 0..IMAGE_SIZE {
        for c in 0..IMAGE_SIZE {
            let (x, y) = (c as f64 - cx, r as f64 - cy);
            let head = (x / 6.5).powi(2) + (y / 7.5).powi(2) <= 1.0;
            px[r * IMAGE_SIZE + c] = if head { 0.5 } else { 0.1 };
        }
    }
    for ex in [-3.0, 3.0] {
        for (ox, oy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            let c = (cx + ex - 0.5 + ox).round() as usize;
            let r = (cy - 3.0 + oy).round() as usize;
            px[r * IMAGE_SIZE + c] = 0.05;
        }
    }
    for k in -4i32..=4 {
        let t = k as f64 / 4.0;
        let bend = 2.0 * t * t;
        let y = if class == 0 { 4.0 - bend } else { 2.0 + bend };
        let r = (cy + y).round() as usize;
        let c = (cx + k as f64).round() as usize;
        px[r * IMAGE_SIZE + c] = 0.95;
    }
    let data = px
        .into_iter()
        .map(|v| (v + 0.1 * (rng.uniform() - 0.5)).clamp(0.0, 1.0) as f32)
        .collect();
    Tensor32::new(vec![IMAGE_SIZE, IMAGE_SIZE], data).expect("face dims")
}

/// Human-style 1-9 ratings for a face: high `happy` for smiles, high `sad`
/// for frowns, each with rater noise.
fn ratings(rng: &mut ToolkitRng, class: usize) -> [f64; 2] {
    let happy = if class == 0 { 7.5 } else { 2.5 };
    let mut noisy = |v: f64| (v + 1.5 * rng.gaussian()).clamp(1.0, 9.0);
    let h = noisy(happy);
    let s = noisy(10.0 - happy);
    [h, s]
}

fn stage<T>(name: &str, r: Result<T, CliError>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("stage {name}: {m}")),
        CliError::Internal(m) => CliError::Internal(format!("stage {name}: {m}")),
    })
}

fn table(ids: &[String], rows: &[[f64; 2]]) -> Result<RatingsTable64, CliError> {
    let values = Array2::from_shape_vec((rows.len(), 2), rows.concat()).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(RatingsTable64::new(ids.to_vec(), ATTRIBUTES.map(String::from).to_vec(), values)?)
}

fn emit(outputs: &mut Vec<PathBuf>, dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let p = dir.join(name);
    write_output(&p, bytes)?;
    outputs.push(p);
    Ok(())
}

/// Runs every stage into `dir` and returns the artifact paths.
pub fn run_pipeline(dir: &Path, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    let mut rng = ToolkitRng::new(seed);
    let mut outputs = Vec::new();

    let per_class = TRAIN_PER_CLASS + HELD_OUT_PER_CLASS;
    let mut train = Vec::new();
    let mut held_out = Vec::new();
    for k in 0..2 * per_class {
        let class = k % 2;
        let img = face(&mut rng, class);
        if k < 2 * TRAIN_PER_CLASS {
            train.push((img, class));
        } else {
            held_out.push((img, class, ratings(&mut rng, class)));
        }
    }
    println!(
        "data\t{} training and {} held-out faces, {IMAGE_SIZE}x{IMAGE_SIZE}",
        train.len(),
        held_out.len()
    );

    let init_seed = rng.next_u64();
    let (net, losses) = stage("train", {
        MiniNet32::init(init_seed, IMAGE_SIZE, 2)
            .and_then(|net| net.train_steps(&train, LEARNING_RATE, TRAIN_STEPS))
            .context("mininet")
    })?;
    let first = losses[0];
    let last = *losses.last().expect("at least one step");
    stage(
        "train",
        ensure(last.is_finite() && last < first, || format!("loss went from {first} to {last}")),
    )?;
    let mut pst = Vec::new();
    let mut index = Vec::new();
    stage("train", save_params(&net, &mut pst, &mut index).context("save"))?;
    emit(&mut outputs, dir, "mininet.pst", &pst)?;
    emit(&mut outputs, dir, "mininet.index.csv", &index)?;

    let ids: Vec<String> = (0..held_out.len()).map(|i| format!("face{i:02}")).collect();
    let mut predicted = Vec::new();
    let mut correct = 0;
    for (img, class, _) in &held_out {
        let trace = stage("predict", net.forward(img).context("forward"))?;
        let p: Vec<f64> = trace.probs.iter().map(|&v| v as f64).collect();
        let guess = if p[1] > p[0] { 1 } else { 0 };
        correct += usize::from(guess == *class);
        predicted.push([1.0 + 8.0 * p[0], 1.0 + 8.0 * p[1]]);
    }
    let accuracy = correct as f64 / held_out.len() as f64;
    println!(
        "train\t{TRAIN_STEPS} steps\tloss {first:.4} -> {last:.4}\theld-out accuracy {accuracy:.3}"
    );

    let human: Vec<[f64; 2]> = held_out.iter().map(|h| h.2).collect();
    let pred_table = stage("power", table(&ids, &predicted))?;
    let truth_table = stage("power", table(&ids, &human))?;
    let power = stage("power", predictive_power(&pred_table, &truth_table).context("pearson"))?;
    stage(
        "power",
        ensure(power.coefficients.iter().all(|r| (-1.0..=1.0).contains(r)), || {
            format!("coefficients {:?} leave [-1, 1]", power.coefficients)
        }),
    )?;
    for (name, t) in [("predictions.csv", &pred_table), ("ratings.csv", &truth_table)] {
        let mut buf = Vec::new();
        write_ratings_csv(t, &mut buf)?;
        emit(&mut outputs, dir, name, &buf)?;
    }
    let mut buf = Vec::new();
    power.write_csv(&mut buf)?;
    emit(&mut outputs, dir, "power.csv", &buf)?;
    let summary: Vec<String> = power
        .attribute_names
        .iter()
        .zip(&power.coefficients)
        .map(|(n, r)| format!("{n} {r:.4}"))
        .collect();
    println!("power\t{}", summary.join("\t"));

    let (img, _, _) = held_out.iter().find(|h| h.1 == 0).expect("a smiling face");
    let input = stage("gradcam", net.cam_input(img, 0, ATTRIBUTES[0]).context("cam input"))?;
    let (act, grad) = (input.activations().clone(), input.gradients().clone());
    let (rgb, cam) = stage("gradcam", cam_overlay(act.clone(), grad.clone(), img, CAM_ALPHA, ATTRIBUTES[0]))?;
    for (name, t) in [("cam_activations.pst", &act), ("cam_gradients.pst", &grad), ("cam_image.pst", img)] {
        let p = dir.join(name);
        stage("gradcam", write_tensor_file(t, &p).context(p.display()))?;
        outputs.push(p);
    }
    let mut ppm = Vec::new();
    write_ppm(&rgb, &mut ppm)?;
    emit(&mut outputs, dir, "gradcam.ppm", &ppm)?;
    let mass: f32 = cam.map().data().iter().sum();
    println!(
        "gradcam\ttarget {}\tcam {}x{}\tmass {mass:.4}\tmax {:.4}",
        ATTRIBUTES[0],
        cam.height(),
        cam.width(),
        cam.map().max()
    );

    let n_feat = act.len();
    let mut flat = Vec::with_capacity(held_out.len() * n_feat);
    for (img, _, _) in &held_out {
        let trace = stage("tsne", net.forward(img).context("forward"))?;
        flat.extend(trace.conv2_act.data().iter().map(|&v| v as f64));
    }
    let features = Array2::from_shape_vec((held_out.len(), n_feat), flat).map_err(|e| CliError::Internal(e.to_string()))?;
    let cfg = TsneConfig {
        perplexity: 8.0,
        iterations: 600,
        seed: rng.next_u64(),
        ..TsneConfig::default()
    };
    let emb = stage("tsne", run_tsne(features.view(), &cfg).context("embedding"))?;
    let kl_after_exaggeration = emb.trace[cfg.exaggeration_iters - 1];
    stage(
        "tsne",
        ensure(emb.final_objective.is_finite() && emb.coords.iter().all(|v| v.is_finite()), || {
            "non-finite embedding".into()
        }),
    )?;
    let classes: Vec<usize> = held_out.iter().map(|h| h.1).collect();
    let sil = stage("tsne", silhouette(emb.coords.view(), &classes).context("silhouette"))?;
    let happy: Vec<f64> = human.iter().map(|h| h[0]).collect();
    let mut buf = Vec::new();
    write_embedding_csv(emb.coords.view(), &ids, &happy, &mut buf)?;
    emit(&mut outputs, dir, "embedding.csv", &buf)?;
    let plot = svg::scatter(emb.coords.view(), &ids, &happy, (0.0, 0.0), "tsne of held-out feature maps, coloured by happy");
    emit(&mut outputs, dir, "embedding.svg", plot.as_bytes())?;
    println!(
        "tsne\t{} points\tKL {kl_after_exaggeration:.4} -> {:.4}\tsilhouette {sil:.4}",
        emb.n_points(),
        emb.final_objective
    );
    Ok(outputs)
}

pub fn demo(a: &DemoArgs, seed: u64) -> Result<(), CliError> {
    let temp;
    let dir = match &a.out {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| CliError::Data(format!("{}: {e}", d.display())))?;
            d.clone()
        }
        None => {
            temp = tempfile::tempdir().map_err(|e| CliError::Data(format!("temporary directory: {e}")))?;
            temp.path().to_path_buf()
        }
    };
    let outputs = run_pipeline(&dir, seed)?;
    let mut inv = Invocation::new("demo", seed);
    inv.output_flag("out", &dir);
    inv.outputs = outputs;
    inv.manifest_paths = vec![dir.join("manifest.json")];
    inv.write_manifests()?;
    println!("done\t{} artifacts", inv.outputs.len() + 1);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faces_stay_in_unit_range_and_differ_by_class() {
        let mut rng = ToolkitRng::new(1);
        let smile = face(&mut rng, 0);
        let frown = face(&mut rng, 1);
        assert_eq!(smile.dims(), [IMAGE_SIZE, IMAGE_SIZE]);
        for t in [&smile, &frown] {
            assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_ne!(smile, frown);
    }
}

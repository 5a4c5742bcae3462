use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::Parser;
use ndarray::Array2;
use psyman_core::cluster::{correlation_dissimilarity, leaf_order, reorder, ward_linkage};
use psyman_core::embedding::write_embedding_csv;
use psyman_core::gradcam::{compute_cam, overlay, upsample_bilinear, write_ppm, Cam, CamInput};
use psyman_core::stats::{correlation_matrix, predictive_power};
use psyman_core::stress_embed::{run_stress, StressConfig};
use psyman_core::tensor_io::{read_ratings_file, read_tensor_file};
use psyman_core::tsne::{run_tsne, TsneConfig};
use psyman_core::{Embedding64, RatingsTable64, Tensor32};

use crate::manifest::{absolute, file_digest, Invocation, RunManifest};
use crate::{ensure, svg, write_output, Cli, CliError, Context, EmbedArgs, GradcamArgs, HeatmapArgs, Method};
use crate::{PowerArgs, ReplayArgs};

fn read_table(path: &Path) -> Result<RatingsTable64, CliError> {
    read_ratings_file(path, None).context(path.display())
}

fn read_pst(path: &Path) -> Result<Tensor32, CliError> {
    read_tensor_file(path).context(path.display())
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{ext}"))
}

pub fn power(a: &PowerArgs, seed: u64) -> Result<(), CliError> {
    let pred = read_table(&a.pred)?;
    let truth = read_table(&a.truth)?;
    let table = predictive_power(&pred, &truth).context("predictions vs ratings")?;
    ensure(table.coefficients.iter().all(|r| (-1.0..=1.0).contains(r)), || {
        "a coefficient left [-1, 1]".into()
    })?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    write_output(&a.out, &csv)?;
    for (name, r) in table.attribute_names.iter().zip(&table.coefficients) {
        println!("{name}\t{r:.6}");
    }

    let mut inv = Invocation::new("power", seed);
    inv.input("pred", &a.pred);
    inv.input("truth", &a.truth);
    inv.output_flag("out", &a.out);
    inv.outputs.push(a.out.clone());
    inv.write_manifests()?;
    Ok(())
}

pub fn heatmap(a: &HeatmapArgs, seed: u64) -> Result<(), CliError> {
    let ratings = read_table(&a.ratings)?;
    if ratings.n_attributes() < 2 {
        return Err(CliError::Data(format!(
            "{}: heatmap needs at least 2 attributes, found {}",
            a.ratings.display(),
            ratings.n_attributes()
        )));
    }
    let corr = correlation_matrix(&ratings).context(a.ratings.display())?;
    let den = ward_linkage(correlation_dissimilarity(&corr).view())?;
    den.check().map_err(|e| CliError::Internal(e.to_string()))?;
    let order = leaf_order(&den)?;
    let shown = reorder(&corr, &order)?;
    shown.check().map_err(|e| CliError::Internal(e.to_string()))?;

    let dendrogram = a.dendrogram.clone().unwrap_or_else(|| with_extension(&a.out, "dendrogram.csv"));
    write_output(&a.out, svg::heatmap(&shown).as_bytes())?;
    let mut merges = Vec::new();
    den.write_csv(&mut merges)?;
    write_output(&dendrogram, &merges)?;
    println!("order\t{}", shown.names.join(","));

    let mut inv = Invocation::new("heatmap", seed);
    inv.input("ratings", &a.ratings);
    inv.output_flag("out", &a.out);
    inv.output_flag("dendrogram", &dendrogram);
    inv.outputs.extend([a.out.clone(), dendrogram]);
    inv.write_manifests()?;
    Ok(())
}

/// `azimuth,elevation` in degrees.
pub fn parse_view(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Data(format!("--view expects azimuth,elevation in degrees, got {s:?}"));
    let (az, el) = s.split_once(',').ok_or_else(bad)?;
    let az: f64 = az.trim().parse().map_err(|_| bad())?;
    let el: f64 = el.trim().parse().map_err(|_| bad())?;
    if !az.is_finite() || !el.is_finite() {
        return Err(bad());
    }
    Ok((az, el))
}

struct Features {
    ids: Vec<String>,
    data: Array2<f64>,
    /// CSV rows carry image ids; `.pst` rows are matched to labels by position.
    keyed: bool,
}

fn read_features(path: &Path) -> Result<Features, CliError> {
    if path.extension().is_some_and(|e| e == "pst") {
        let t = read_pst(path)?;
        let &[n, d] = t.dims() else {
            return Err(CliError::Data(format!(
                "{}: features must be a 2D tensor [points, features], got {:?}",
                path.display(),
                t.dims()
            )));
        };
        let data = Array2::from_shape_vec((n, d), t.data().iter().map(|&v| v as f64).collect())
            .map_err(|e| CliError::Internal(e.to_string()))?;
        Ok(Features {
            ids: (0..n).map(|i| i.to_string()).collect(),
            data,
            keyed: false,
        })
    } else {
        let t = read_table(path)?;
        Ok(Features {
            ids: t.image_ids().to_vec(),
            data: t.values().clone(),
            keyed: true,
        })
    }
}

/// One value per feature row from the chosen labels column.
fn label_values(features: &mut Features, a: &EmbedArgs) -> Result<Vec<f64>, CliError> {
    let Some(path) = &a.labels else {
        if let Some(name) = &a.attribute {
            return Err(CliError::Data(format!("--attribute {name} needs --labels")));
        }
        return Ok(vec![0.0; features.ids.len()]);
    };
    let labels = read_table(path)?;
    let col = match &a.attribute {
        Some(name) => labels.attribute_index(name).ok_or_else(|| {
            CliError::Data(format!(
                "{}: no attribute {name:?}; available: {}",
                path.display(),
                labels.attribute_names().join(", ")
            ))
        })?,
        None if labels.n_attributes() == 1 => 0,
        None => {
            return Err(CliError::Data(format!(
                "{}: choose one of {} with --attribute",
                path.display(),
                labels.attribute_names().join(", ")
            )))
        }
    };
    let column = labels.column(col);
    if features.keyed {
        let index: HashMap<&str, usize> = labels.image_ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        features
            .ids
            .iter()
            .map(|id| {
                index.get(id.as_str()).map(|&i| column[i]).ok_or_else(|| {
                    CliError::Data(format!("image {id:?} has features but no row in {}", path.display()))
                })
            })
            .collect()
    } else {
        if labels.n_images() != features.ids.len() {
            return Err(CliError::Data(format!(
                "{} feature rows but {} label rows in {}",
                features.ids.len(),
                labels.n_images(),
                path.display()
            )));
        }
        features.ids = labels.image_ids().to_vec();
        Ok(column)
    }
}

pub fn embed(a: &EmbedArgs, seed: u64) -> Result<(), CliError> {
    let view = parse_view(&a.view)?;
    let mut features = read_features(&a.features)?;
    let values = label_values(&mut features, a)?;
    let (iterations, lr) = match a.method {
        Method::Tsne => (a.iterations.unwrap_or(1000), a.lr.unwrap_or(200.0)),
        Method::Stress => (a.iterations.unwrap_or(2000), a.lr.unwrap_or(1e-2)),
    };
    if a.neighbors.is_some() && a.method != Method::Stress {
        return Err(CliError::Data("--neighbors applies to --method stress only".into()));
    }
    let emb: Embedding64 = match a.method {
        Method::Tsne => {
            let cfg = TsneConfig {
                perplexity: a.perplexity,
                out_dims: a.dims,
                iterations,
                learning_rate: lr,
                seed,
                ..TsneConfig::default()
            };
            run_tsne(features.data.view(), &cfg).context("tsne")?
        }
        Method::Stress => {
            let cfg = StressConfig {
                out_dims: a.dims,
                iterations,
                learning_rate: lr,
                neighbor_k: a.neighbors,
                seed,
            };
            run_stress(features.data.view(), &cfg).context("stress")?
        }
    };
    ensure(emb.coords.iter().all(|v| v.is_finite()), || "embedding has non-finite coordinates".into())?;

    let svg_path = a.svg.clone().unwrap_or_else(|| with_extension(&a.out, "svg"));
    let mut csv = Vec::new();
    write_embedding_csv(emb.coords.view(), &features.ids, &values, &mut csv)?;
    write_output(&a.out, &csv)?;
    let title = format!("{} {}D, coloured by {}", a.method.name(), a.dims, a.attribute.as_deref().unwrap_or("label"));
    write_output(&svg_path, svg::scatter(emb.coords.view(), &features.ids, &values, view, &title).as_bytes())?;
    println!(
        "{}\t{} points\tobjective {:.6}",
        a.method.name(),
        emb.n_points(),
        emb.final_objective
    );

    let mut inv = Invocation::new("embed", seed);
    inv.input("features", &a.features);
    if let Some(p) = &a.labels {
        inv.input("--labels", p);
    }
    inv.flag("method", a.method.name());
    inv.flag("dims", a.dims);
    inv.flag("perplexity", a.perplexity);
    inv.flag("iterations", iterations);
    inv.flag("lr", lr);
    inv.flag("view", &a.view);
    if let Some(k) = a.neighbors {
        inv.flag("neighbors", k);
    }
    if let Some(name) = &a.attribute {
        inv.flag("attribute", name);
    }
    inv.output_flag("out", &a.out);
    inv.output_flag("svg", &svg_path);
    inv.outputs.extend([a.out.clone(), svg_path]);
    inv.write_manifests()?;
    Ok(())
}

/// Grad-CAM, upsampled to the image and blended over it. Returns the RGB
/// overlay `[3, H, W]` and the unscaled map.
pub fn cam_overlay(
    activations: Tensor32,
    gradients: Tensor32,
    image: &Tensor32,
    alpha: f64,
    target: &str,
) -> Result<(Tensor32, Cam<f32>), CliError> {
    let input = CamInput::new(activations, gradients, target)?;
    let cam = compute_cam(&input);
    ensure(cam.map().data().iter().all(|&v| v >= 0.0 && v.is_finite()), || {
        "cam has negative or non-finite entries".into()
    })?;
    let gray = match image.dims() {
        &[h, w] | &[1, h, w] => image.clone().reshape(vec![h, w])?,
        d => return Err(CliError::Data(format!("image must be [H, W] or [1, H, W], got {d:?}"))),
    };
    let (h, w) = (gray.dims()[0], gray.dims()[1]);
    let up = upsample_bilinear(&cam, h, w)?;
    Ok((overlay(&gray, &up, alpha as f32)?, cam))
}

pub fn gradcam(a: &GradcamArgs, seed: u64) -> Result<(), CliError> {
    let act = read_pst(&a.activations)?;
    let grad = read_pst(&a.gradients)?;
    let image = read_pst(&a.image)?;
    if act.dims() != grad.dims() {
        return Err(CliError::Data(format!(
            "activation dims {:?} ({}) differ from gradient dims {:?} ({})",
            act.dims(),
            a.activations.display(),
            grad.dims(),
            a.gradients.display()
        )));
    }
    let (rgb, cam) = cam_overlay(act, grad, &image, a.alpha, &a.target)?;
    let mut ppm = Vec::new();
    write_ppm(&rgb, &mut ppm)?;
    write_output(&a.out, &ppm)?;
    println!(
        "gradcam\t{}\tcam {}x{} max {:.6}\toverlay {}x{}",
        a.target,
        cam.height(),
        cam.width(),
        cam.map().max(),
        rgb.dims()[1],
        rgb.dims()[2]
    );

    let mut inv = Invocation::new("gradcam", seed);
    inv.input("activations", &a.activations);
    inv.input("gradients", &a.gradients);
    inv.input("image", &a.image);
    inv.flag("alpha", a.alpha);
    inv.flag("target", &a.target);
    inv.output_flag("out", &a.out);
    inv.outputs.push(a.out.clone());
    inv.write_manifests()?;
    Ok(())
}

pub fn replay(a: &ReplayArgs) -> Result<(), CliError> {
    let m = RunManifest::read(&a.manifest)?;
    if m.command == "replay" {
        return Err(CliError::Data("a replay manifest cannot itself be replayed".into()));
    }
    for input in &m.inputs {
        let now = file_digest(Path::new(&input.path))?;
        if now != input.fnv1a64 {
            return Err(CliError::Data(format!(
                "input {} changed: digest {now}, manifest records {}",
                input.path, input.fnv1a64
            )));
        }
    }
    let base = absolute(a.manifest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")))?;
    let argv = std::iter::once("psyman".to_string()).chain(m.argv(&base));
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Data(format!("manifest arguments: {e}")))?;
    crate::dispatch(cli)?;
    for out in &m.outputs {
        let now = file_digest(&base.join(&out.path))?;
        ensure(now == out.fnv1a64, || {
            format!("replayed {} has digest {now}, manifest records {}", out.path, out.fnv1a64)
        })?;
    }
    println!("replay\t{}\t{} outputs reproduced", m.command, m.outputs.len());
    Ok(())
}

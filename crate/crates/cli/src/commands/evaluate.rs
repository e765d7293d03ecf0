use std::path::PathBuf;

use serde_json::json;
use shapeaug::augment::{interpolation_outliers, random_pairs};
use shapeaug::geometry::VoxelGrid;
use shapeaug::grasp::derive_seed;

use super::{Ctx, AE_CHECKPOINT, AE_CRITIC_CHECKPOINT, CORPUS_MANIFEST};
use crate::error::{CliError, Result};
use crate::io::{load_checkpoint, sha256_file, write_json, Corpus};
use crate::report::Recorder;

pub fn run(ctx: &Ctx, corpus: Option<PathBuf>, a: Option<PathBuf>, b: Option<PathBuf>) -> Result<()> {
    let mut rec = Recorder::start("evaluate");
    let cfg = &ctx.config;
    let corpus_path = ctx.or_default(corpus, CORPUS_MANIFEST);
    let a_path = ctx.or_default(a, AE_CHECKPOINT);
    let b_path = ctx.or_default(b, AE_CRITIC_CHECKPOINT);
    let model_a = load_checkpoint(&a_path)?;
    let model_b = load_checkpoint(&b_path)?;
    if model_a.config.resolution != model_b.config.resolution {
        return Err(CliError::config(format!(
            "checkpoints differ in resolution ({} vs {})",
            model_a.config.resolution, model_b.config.resolution
        )));
    }
    let corpus = Corpus::load(&corpus_path)?;
    for p in [&corpus_path, &a_path, &b_path] {
        rec.input(p);
    }
    let grids = corpus.voxelize(model_a.config.resolution)?;
    let refs: Vec<&VoxelGrid> = grids.iter().collect();
    let pairs = random_pairs(grids.len(), cfg.evaluate.pairs, derive_seed(cfg.seed, "evaluate"))?;
    let alphas = &cfg.evaluate.alphas;
    let iso = cfg.augment.iso_level;
    let rows_a = interpolation_outliers(&model_a, &refs, &pairs, alphas, iso, ctx.jobs)?;
    let rows_b = interpolation_outliers(&model_b, &refs, &pairs, alphas, iso, ctx.jobs)?;
    let rows: Vec<_> = rows_a
        .iter()
        .zip(&rows_b)
        .map(|(ra, rb)| {
            json!({
                "alpha": ra.alpha,
                "a": { "mean_outlier_percentage": ra.mean_outlier_percentage, "empty": ra.empty },
                "b": { "mean_outlier_percentage": rb.mean_outlier_percentage, "empty": rb.empty },
            })
        })
        .collect();
    let result = json!({
        "seed": cfg.seed,
        "config": cfg.to_value(),
        "checkpoint_a": { "path": ctx.label(&a_path), "sha256": sha256_file(&a_path)? },
        "checkpoint_b": { "path": ctx.label(&b_path), "sha256": sha256_file(&b_path)? },
        "pairs": pairs.len(),
        "rows": rows,
    });
    let out_path = ctx.path("evaluate/outliers.json");
    write_json(&out_path, &result)?;
    rec.output(&out_path);
    rec.finish(&ctx.out, cfg.seed, cfg.to_value(), json!({ "rows": result["rows"] }))?;
    Ok(())
}

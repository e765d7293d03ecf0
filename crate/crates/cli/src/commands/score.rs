use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::json;
use shapeaug::geometry::pca_project;
use shapeaug::grasp::{derive_seed, graspness, rarity, RarityConfig, ScoreEntry, ScoreTable};
use shapeaug::latent::LatentVector;
use shapeaug::parallel::parallel_map;

use super::{encode_all, Ctx, AE_CRITIC_CHECKPOINT, CORPUS_MANIFEST, SCORES};
use crate::error::{CliError, Result};
use crate::io::{load_checkpoint, write_json, Corpus};
use crate::report::{histogram_svg, scatter_svg, Histogram, Recorder};

const BINS: usize = 10;
const ORACLE_TOLERANCE: f64 = 1e-9;

/// All-pairs rarity written straight from the definitions, for cross-checking.
fn brute_force_rarity(latents: &[LatentVector], config: &RarityConfig) -> Vec<f64> {
    let n = latents.len();
    let k = config.k;
    let neighbours: Vec<Vec<(f64, usize)>> = (0..n)
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let sq: f64 = latents[i].values().iter().zip(latents[j].values()).map(|(a, b)| (a - b).powi(2)).sum();
                    (sq.sqrt(), j)
                })
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            d
        })
        .collect();
    let density: Vec<f64> = neighbours
        .iter()
        .map(|nb| k as f64 / nb.iter().map(|(d, _)| d.max(config.distance_floor)).sum::<f64>())
        .collect();
    (0..n)
        .map(|i| neighbours[i].iter().map(|&(_, j)| density[j]).sum::<f64>() / (k as f64 * density[i]))
        .collect()
}

pub fn run(ctx: &Ctx, corpus: Option<PathBuf>, checkpoint: Option<PathBuf>, svg: bool, oracle: bool) -> Result<()> {
    let mut rec = Recorder::start("score");
    let cfg = &ctx.config;
    let corpus_path = ctx.or_default(corpus, CORPUS_MANIFEST);
    let ckpt_path = ctx.or_default(checkpoint, AE_CRITIC_CHECKPOINT);
    let model = load_checkpoint(&ckpt_path)?;
    let corpus = Corpus::load(&corpus_path)?;
    rec.input(&corpus_path);
    rec.input(&ckpt_path);
    let ids = corpus.ids();
    if cfg.rarity.k >= ids.len() {
        return Err(CliError::config(format!(
            "rarity.k = {} needs more than {} shapes",
            cfg.rarity.k,
            ids.len()
        )));
    }

    let latents = encode_all(&model, &corpus.voxelize(model.config.resolution)?)?;
    let rarity_scores = rarity(&latents, &cfg.rarity)?;
    let indices: Vec<usize> = (0..ids.len()).collect();
    let grasp = parallel_map(&indices, ctx.jobs, |&i| graspness(&corpus.meshes[i], &cfg.grasp, derive_seed(cfg.seed, &ids[i])))
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let table: ScoreTable = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            (id.clone(), ScoreEntry { rarity: rarity_scores[i], graspness: grasp[i].graspness, n_grasps: grasp[i].n_grasps })
        })
        .collect();
    for (id, s) in &table {
        if s.n_grasps == 0 {
            rec.warn(format!("{id}: no antipodal grasp found"));
        }
    }

    let g: Vec<f64> = grasp.iter().map(|s| s.graspness).collect();
    let histograms = BTreeMap::from([
        ("rarity", Histogram::over_range(&rarity_scores, BINS)),
        ("graspness", Histogram::new(&g, BINS, 0.0, 1.0)),
    ]);
    let pca = pca_project(&latents, 2)?;
    let points: Vec<_> = ids
        .iter()
        .zip(&pca.coords)
        .zip(&g)
        .map(|((id, c), g)| json!({ "id": id, "x": c[0], "y": c[1], "graspness": g }))
        .collect();
    let mut summary = json!({
        "seed": cfg.seed,
        "config": cfg.to_value(),
        "checkpoint": ctx.label(&ckpt_path),
        "histograms": histograms,
        "pca": { "eigenvalues": &pca.eigenvalues[..2.min(pca.eigenvalues.len())], "points": points },
    });

    if oracle {
        let reference = brute_force_rarity(&latents, &cfg.rarity);
        let worst = reference
            .iter()
            .zip(&rarity_scores)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        summary["oracle"] = json!({ "rarity_max_abs_diff": worst, "tolerance": ORACLE_TOLERANCE });
        if !(worst <= ORACLE_TOLERANCE) {
            return Err(CliError::data(format!("rarity disagrees with the brute-force oracle by {worst:e}")));
        }
    }

    let scores_path = ctx.path(SCORES);
    write_json(&scores_path, &table)?;
    let summary_path = ctx.path("scores/summary.json");
    write_json(&summary_path, &summary)?;
    rec.output(&scores_path);
    rec.output(&summary_path);
    if svg {
        let dir = ctx.path("scores");
        for (name, h) in &histograms {
            let p = dir.join(format!("{name}_histogram.svg"));
            std::fs::write(&p, histogram_svg(&format!("{name} histogram"), h))?;
            rec.output(&p);
        }
        let pts: Vec<(f64, f64, f64)> = pca.coords.iter().zip(&g).map(|(c, g)| (c[0], c[1], *g)).collect();
        let p = dir.join("latent_pca.svg");
        std::fs::write(&p, scatter_svg("latent PCA, colored by graspness", &pts))?;
        rec.output(&p);
    }
    let report_summary = json!({ "shapes": ids.len(), "histograms": summary["histograms"], "oracle": summary.get("oracle") });
    rec.finish(&ctx.out, cfg.seed, cfg.to_value(), report_summary)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn oracle_agrees_with_library_rarity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let latents: Vec<LatentVector> = (0..40)
            .map(|_| LatentVector::new((0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let cfg = RarityConfig::default();
        let a = rarity(&latents, &cfg).unwrap();
        let b = brute_force_rarity(&latents, &cfg);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

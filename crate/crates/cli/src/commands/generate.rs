use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::json;
use shapeaug::augment::{
    augment_dataset, form_generation_pairs, generate_shapes, select_by, DatasetManifest, ManifestEntry, Metric,
    Provenance,
};
use shapeaug::grasp::ScoreTable;
use shapeaug::latent::LatentVector;

use super::{encode_all, Ctx, AE_CRITIC_CHECKPOINT, CORPUS_MANIFEST, SCORES};
use crate::error::{CliError, Result};
use crate::io::{load_checkpoint, read_json, sha256_file, write_json, write_mesh, Corpus};
use crate::report::Recorder;

pub fn run(ctx: &Ctx, corpus: Option<PathBuf>, scores: Option<PathBuf>, checkpoint: Option<PathBuf>) -> Result<()> {
    let mut rec = Recorder::start("generate");
    let cfg = &ctx.config;
    let aug = &cfg.augment;
    let corpus_path = ctx.or_default(corpus, CORPUS_MANIFEST);
    let scores_path = ctx.or_default(scores, SCORES);
    let ckpt_path = ctx.or_default(checkpoint, AE_CRITIC_CHECKPOINT);
    let model = load_checkpoint(&ckpt_path)?;
    let digest = sha256_file(&ckpt_path)?;
    let corpus = Corpus::load(&corpus_path)?;
    let table: ScoreTable = read_json(&scores_path)?;
    for p in [&corpus_path, &scores_path, &ckpt_path] {
        rec.input(p);
    }
    let ids = corpus.ids();
    if let Some(id) = ids.iter().find(|id| !table.contains_key(*id)) {
        return Err(CliError::data(format!("score table has no entry for {id}")));
    }

    let grids = corpus.grids_by_id(model.config.resolution)?;
    let mut pairs = Vec::new();
    let mut selection = BTreeMap::new();
    for metric in Metric::ALL {
        let values: BTreeMap<String, f64> = ids
            .iter()
            .map(|id| {
                let s = &table[id];
                (id.clone(), if metric == Metric::Rarity { s.rarity } else { s.graspness })
            })
            .collect();
        let selected: Vec<String> = select_by(&values, aug.t, aug.direction(metric))?.into_iter().collect();
        let sel_grids: Vec<_> = selected.iter().map(|id| grids[id].clone()).collect();
        let latents: Vec<(String, LatentVector)> =
            selected.iter().cloned().zip(encode_all(&model, &sel_grids)?).collect();
        let metric_pairs = form_generation_pairs(&latents, aug.n, aug.k, metric)?;
        selection.insert(metric.name(), json!({ "selected": selected, "pairs": metric_pairs.len() }));
        pairs.extend(metric_pairs);
    }

    let output = generate_shapes(&model, &pairs, &aug.alphas, &grids, aug, &digest, ctx.jobs)?;
    let generated: Vec<ManifestEntry> = output
        .shapes
        .iter()
        .map(|s| ManifestEntry {
            id: s.id.clone(),
            mesh: format!("meshes/{}.obj", s.id),
            provenance: Provenance::Generated {
                parent_a: s.pair.a.clone(),
                parent_b: s.pair.b.clone(),
                metric: s.pair.metric,
                neighbor_rank: s.pair.neighbor_rank,
                alpha: s.alpha,
                outlier_percentage: s.outlier_percentage,
            },
            scores: None,
        })
        .collect();
    let originals: Vec<ManifestEntry> = corpus
        .manifest
        .entries
        .iter()
        .map(|e| ManifestEntry {
            id: e.id.clone(),
            mesh: format!("meshes/{}.obj", e.id),
            provenance: Provenance::Original,
            scores: Some(table[&e.id]),
        })
        .collect();
    let original = DatasetManifest::new(cfg.seed, cfg.to_value(), originals);
    let manifest = augment_dataset(&original, &generated, aug.ratio, cfg.seed, cfg.to_value())?;

    let dir = ctx.path("augmented");
    let meshes: BTreeMap<&str, _> = corpus
        .manifest
        .entries
        .iter()
        .map(|e| e.id.as_str())
        .zip(&corpus.meshes)
        .chain(output.shapes.iter().map(|s| (s.id.as_str(), &s.mesh)))
        .collect();
    for e in &manifest.entries {
        write_mesh(&dir.join(&e.mesh), meshes[e.id.as_str()])?;
    }
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    let pairs_path = dir.join("pairs.json");
    write_json(&pairs_path, &json!({ "seed": cfg.seed, "config": cfg.to_value(), "selection": selection, "pairs": pairs }))?;
    let rejections_path = dir.join("rejections.json");
    write_json(&rejections_path, &json!({ "seed": cfg.seed, "rejections": output.rejections }))?;
    for p in [&manifest_path, &pairs_path, &rejections_path] {
        rec.output(p);
    }

    let summary = json!({
        "originals": corpus.manifest.entries.len(),
        "selection": selection,
        "candidates": pairs.len() * aug.alphas.len(),
        "generated": output.shapes.len(),
        "rejected": output.rejections.len(),
        "appended": manifest.entries.len() - corpus.manifest.entries.len(),
    });
    rec.finish(&ctx.out, cfg.seed, cfg.to_value(), summary)?;
    Ok(())
}

use std::path::PathBuf;

use serde_json::json;
use shapeaug::latent::{sidecar_path, train, Model, TrainConfig, TrainingReport};

use super::{Ctx, AE_CHECKPOINT, AE_CRITIC_CHECKPOINT, CORPUS_MANIFEST};
use crate::error::{CliError, Result};
use crate::io::{write_json, Corpus};
use crate::report::Recorder;
use crate::TrainMode;

fn phase_summary(report: &TrainingReport, phase: u8) -> serde_json::Value {
    let epochs: Vec<_> = report.epochs.iter().filter(|e| e.phase == phase).collect();
    match epochs.last() {
        Some(last) => json!({ "epochs": epochs.len(), "final": last }),
        None => json!({ "epochs": 0 }),
    }
}

pub fn run(ctx: &Ctx, mode: TrainMode, corpus: Option<PathBuf>, init: Option<PathBuf>) -> Result<()> {
    let mut rec = Recorder::start(match mode {
        TrainMode::Ae => "train-ae",
        TrainMode::AeCritic => "train-ae-critic",
    });
    let corpus_path = ctx.or_default(corpus, CORPUS_MANIFEST);
    let corpus = Corpus::load(&corpus_path)?;
    rec.input(&corpus_path);
    let cfg = &ctx.config;
    let grids = corpus.voxelize(cfg.model.resolution)?;

    let (mut model, train_cfg, out_rel) = match (mode, init) {
        (TrainMode::Ae, Some(_)) => return Err(CliError::usage("--init only applies to ae-critic mode")),
        (TrainMode::Ae, None) => (
            Model::new(cfg.model.clone(), cfg.seed)?,
            TrainConfig { phase2_epochs: 0, ..cfg.train.clone() },
            AE_CHECKPOINT,
        ),
        (TrainMode::AeCritic, None) => (Model::new(cfg.model.clone(), cfg.seed)?, cfg.train.clone(), AE_CRITIC_CHECKPOINT),
        (TrainMode::AeCritic, Some(path)) => {
            if !path.is_file() {
                return Err(CliError::data(format!("checkpoint {} not found", path.display())));
            }
            let (model, meta) = Model::load(&path).map_err(|e| CliError::from(e).context(path.display()))?;
            if meta.config != cfg.model {
                return Err(CliError::config(format!(
                    "checkpoint {} was trained with a different model config (resolution {} vs {})",
                    path.display(),
                    meta.config.resolution,
                    cfg.model.resolution
                )));
            }
            rec.input(&path);
            (model, TrainConfig { phase1_epochs: 0, ..cfg.train.clone() }, AE_CRITIC_CHECKPOINT)
        }
    };

    let report = train(&mut model, &grids, &train_cfg, cfg.seed)?;
    let ckpt = ctx.path(out_rel);
    std::fs::create_dir_all(ckpt.parent().expect("checkpoint has a directory"))?;
    model.save(&ckpt, cfg.seed)?;
    let report_path = ckpt.with_extension("training.json");
    write_json(&report_path, &json!({ "seed": cfg.seed, "config": cfg.to_value(), "training": report }))?;
    for p in [&ckpt, &sidecar_path(&ckpt), &report_path] {
        rec.output(p);
    }
    let summary = json!({
        "mode": format!("{mode:?}"),
        "learning_rates": {
            "phase1": train_cfg.phase1_learning_rate,
            "ae": train_cfg.ae_learning_rate,
            "critic": train_cfg.critic_learning_rate,
        },
        "phase1": phase_summary(&report, 1),
        "phase2": phase_summary(&report, 2),
    });
    rec.finish(&ctx.out, cfg.seed, cfg.to_value(), summary)?;
    Ok(())
}

use std::collections::BTreeSet;
use std::path::Path;

use serde_json::json;
use shapeaug::augment::{DatasetManifest, ManifestEntry, Provenance};
use shapeaug::corpus::toy_corpus;
use shapeaug::geometry::{load_mesh, TriangleMesh};

use super::{Ctx, CORPUS_MANIFEST};
use crate::error::{CliError, Result};
use crate::io::{write_json, write_mesh};
use crate::report::Recorder;

fn write_corpus(ctx: &Ctx, shapes: &[(String, TriangleMesh)], rec: &mut Recorder) -> Result<DatasetManifest> {
    let manifest_path = ctx.path(CORPUS_MANIFEST);
    let root = manifest_path.parent().expect("manifest has a directory");
    let mut entries = Vec::with_capacity(shapes.len());
    for (id, mesh) in shapes {
        let rel = format!("meshes/{id}.obj");
        write_mesh(&root.join(&rel), mesh)?;
        entries.push(ManifestEntry { id: id.clone(), mesh: rel, provenance: Provenance::Original, scores: None });
    }
    let manifest = DatasetManifest::new(ctx.config.seed, ctx.config.to_value(), entries);
    write_json(&manifest_path, &manifest)?;
    rec.output(&manifest_path);
    Ok(manifest)
}

pub fn toy(ctx: &Ctx) -> Result<()> {
    let mut rec = Recorder::start("corpus");
    let shapes: Vec<(String, TriangleMesh)> = toy_corpus(ctx.config.corpus.count, ctx.config.seed)
        .into_iter()
        .map(|s| (s.id, s.mesh))
        .collect();
    for (id, mesh) in &shapes {
        if !mesh.is_watertight() {
            rec.warn(format!("{id} is not watertight"));
        }
    }
    let manifest = write_corpus(ctx, &shapes, &mut rec)?;
    let summary = json!({ "source": "toy", "shapes": manifest.entries.len() });
    rec.finish(&ctx.out, ctx.config.seed, ctx.config.to_value(), summary)?;
    Ok(())
}

fn sanitize(stem: &str) -> String {
    stem.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn import(ctx: &Ctx, input: &Path) -> Result<()> {
    let mut rec = Recorder::start("corpus");
    let mut files: Vec<_> = std::fs::read_dir(input)
        .map_err(|e| CliError::data(format!("reading {}: {e}", input.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::data(format!("no .obj files in {}", input.display())));
    }
    let mut shapes = Vec::new();
    let mut failures = Vec::new();
    let mut ids = BTreeSet::new();
    for path in &files {
        let id = sanitize(&path.file_stem().unwrap_or_default().to_string_lossy());
        if !ids.insert(id.clone()) {
            failures.push(format!("{}: duplicate id {id}", path.display()));
            continue;
        }
        match load_mesh(path) {
            Ok(mesh) if mesh.is_empty() => failures.push(format!("{}: mesh is empty", path.display())),
            Ok(mesh) => {
                rec.input(path);
                if !mesh.is_watertight() {
                    rec.warn(format!("{} is not watertight", path.display()));
                }
                let mesh = match ctx.config.corpus.import_physical_size {
                    Some(size) => {
                        let (lo, hi) = mesh.bounding_box().expect("non-empty mesh");
                        let center = (lo + hi) / 2.0;
                        let scale = size / mesh.max_extent();
                        mesh.map_vertices(|v| (v - center) * scale)
                    }
                    None => mesh,
                };
                shapes.push((id, mesh));
            }
            Err(e) => failures.push(format!("{}: {e}", path.display())),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::data(format!("{} of {} files could not be imported", failures.len(), files.len()))
            .with_details(failures));
    }
    let manifest = write_corpus(ctx, &shapes, &mut rec)?;
    let summary = json!({ "source": "import", "input": input.display().to_string(), "shapes": manifest.entries.len() });
    rec.finish(&ctx.out, ctx.config.seed, ctx.config.to_value(), summary)?;
    Ok(())
}

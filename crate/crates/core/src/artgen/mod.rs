//! The artificial caption/image dataset.

pub mod glyphs;
pub mod render;
pub mod spec;

use std::sync::Arc;

pub use render::{render_image, render_with_geometry, RenderConfig};
pub use spec::{enumerate_specs, realize_caption, CaptionSpec, Color, Numeral, Shape, SPEC_COUNT};

use crate::dataset::{count_labels, Dataset, DatasetKind, GroundedPair, Manifest, SplitBundle, DATASET_FORMAT_VERSION};
use crate::error::Result;
use crate::exec::Exec;
use crate::grammar::classify_agreement;
use crate::splits::{plan_splits, SplitSizes};

pub fn grounded_pair(spec: &CaptionSpec, cfg: &RenderConfig) -> Result<GroundedPair> {
    let (tokens, annotation) = realize_caption(spec);
    let label = classify_agreement(&annotation)?;
    let index = spec.index();
    Ok(GroundedPair {
        ordinal: index,
        id: index.to_string(),
        spec: Some(*spec),
        tokens,
        image: Some(Arc::new(render_image(spec, cfg)?)),
        annotation,
        label,
        verb_forms: None,
    })
}

/// Renders all 28,800 pairs and plans the splits.
pub fn build_dataset(seed: u64, sizes: SplitSizes, cfg: &RenderConfig, exec: Exec) -> Result<Dataset> {
    cfg.geometry()?;
    let specs = enumerate_specs();
    let pairs = exec
        .map(&specs, |s| grounded_pair(s, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<_> = pairs.iter().map(|p| p.label).collect();
    let splits = plan_splits(&labels, seed, sizes)?;
    Ok(Dataset {
        manifest: Manifest {
            format_version: DATASET_FORMAT_VERSION,
            kind: DatasetKind::Artificial,
            seed,
            canvas_size: cfg.canvas_size,
            render: Some(*cfg),
            sizes,
            counts: count_labels(&labels),
            splits,
        },
        pairs,
    })
}

pub fn build_splits(seed: u64, sizes: SplitSizes, injection_rate: f64) -> Result<SplitBundle> {
    build_dataset(seed, sizes, &RenderConfig::default(), Exec::default())?.bundle(injection_rate, None)
}

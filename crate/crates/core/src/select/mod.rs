//! Scene selection: caption every image, embed the captions, cluster the
//! base-action captions and keep one representative per cluster, then add
//! every toy-play and feed image and sort by event number.

pub mod kmeans;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kmeans::{dot, kmeans_cosine, norm, normalized, ClusterError, Clustering, MAX_ITERATIONS};

use crate::error::{PipelineError, Stage};
use crate::memory::{ActionKind, MemoryFolder, StoredFolder};
use crate::providers::{with_retry, Captioner, Embedder, ImageRef, ProviderError};

/// Upper bound on the number of clusters when none is configured.
pub const DEFAULT_K: usize = 5;

/// Allowed deviation of an embedding's L2 norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionedImage {
    pub image_file: String,
    pub event_number: u32,
    pub action: ActionKind,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddedCaption {
    pub source: CaptionedImage,
    pub vector: Vec<f64>,
}

/// Selected scenes in strictly ascending event order, no file twice.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ImageList {
    entries: Vec<CaptionedImage>,
}

impl ImageList {
    /// Sorts by event number and drops repeated image files.
    pub fn new(mut entries: Vec<CaptionedImage>) -> Self {
        entries.sort_by_key(|e| e.event_number);
        let mut seen = BTreeSet::new();
        entries.retain(|e| seen.insert(e.image_file.clone()));
        ImageList { entries }
    }

    pub fn entries(&self) -> &[CaptionedImage] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn image_files(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.image_file.clone()).collect()
    }

    pub fn event_numbers(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.event_number).collect()
    }
}

/// Captions every image referenced by a record, in event order.
///
/// Images are captioned concurrently; the result order does not depend on
/// completion order. A failing image is retried once. An unavailable
/// provider aborts the stage.
pub fn caption_images(
    stored: &StoredFolder,
    captioner: &dyn Captioner,
) -> Result<Vec<CaptionedImage>, PipelineError> {
    let results: Vec<Result<CaptionedImage, PipelineError>> = stored
        .folder
        .records
        .par_iter()
        .map(|record| {
            let image = ImageRef::new(&stored.dir, &record.image_file);
            let provider_error = |source| PipelineError::Provider {
                stage: Stage::Select,
                provider: captioner.name().to_string(),
                subject: record.image_file.clone(),
                source,
            };
            let caption = with_retry(|| captioner.caption(&image)).map_err(provider_error)?;
            let caption = caption.trim().to_string();
            if caption.is_empty() {
                return Err(provider_error(ProviderError::Failed(
                    "empty caption".into(),
                )));
            }
            Ok(CaptionedImage {
                image_file: record.image_file.clone(),
                event_number: record.event_number,
                action: record.action,
                caption,
            })
        })
        .collect();

    // an outage outranks per-image failures
    if let Some(outage) = results.iter().position(|r| {
        matches!(
            r,
            Err(PipelineError::Provider {
                source: ProviderError::Unavailable(_),
                ..
            })
        )
    }) {
        return Err(results.into_iter().nth(outage).unwrap().unwrap_err());
    }
    results.into_iter().collect()
}

/// Embeds each caption and scales it to unit length.
pub fn embed(
    captions: &[CaptionedImage],
    embedder: &dyn Embedder,
) -> Result<Vec<EmbeddedCaption>, PipelineError> {
    if captions.is_empty() {
        return Err(PipelineError::invalid(Stage::Select, "nothing to embed"));
    }
    let mut out: Vec<EmbeddedCaption> = Vec::with_capacity(captions.len());
    for caption in captions {
        let raw = with_retry(|| embedder.embed(&caption.caption)).map_err(|source| {
            PipelineError::Provider {
                stage: Stage::Select,
                provider: embedder.name().to_string(),
                subject: caption.image_file.clone(),
                source,
            }
        })?;
        let vector = normalized(&raw).ok_or_else(|| {
            PipelineError::invalid(
                Stage::Select,
                format!(
                    "zero embedding for {} (caption {:?})",
                    caption.image_file, caption.caption
                ),
            )
        })?;
        if let Some(first) = out.first() {
            if first.vector.len() != vector.len() {
                return Err(PipelineError::invalid(
                    Stage::Select,
                    format!(
                        "embedding dimension changed from {} to {} at {}",
                        first.vector.len(),
                        vector.len(),
                        caption.image_file
                    ),
                ));
            }
        }
        out.push(EmbeddedCaption {
            source: caption.clone(),
            vector,
        });
    }
    Ok(out)
}

/// Clusters embedded captions; see [`kmeans_cosine`].
pub fn cluster(
    items: &[EmbeddedCaption],
    k: usize,
    seed: u64,
) -> Result<Clustering, PipelineError> {
    let vectors: Vec<Vec<f64>> = items.iter().map(|e| e.vector.clone()).collect();
    kmeans_cosine(&vectors, k, seed)
        .map_err(|e| PipelineError::invalid(Stage::Select, e.to_string()))
}

/// One representative per cluster, plus every additional-action image.
///
/// The representative is the member most similar to its centroid, ties to
/// the lower event number. `captions` must cover the folder's toy-play and
/// feed images.
pub fn select_representatives(
    clustering: &Clustering,
    items: &[EmbeddedCaption],
    captions: &[CaptionedImage],
    folder: &MemoryFolder,
) -> Result<ImageList, PipelineError> {
    if clustering.assignments.len() != items.len() {
        return Err(PipelineError::invalid(
            Stage::Select,
            format!(
                "clustering covers {} items, got {}",
                clustering.assignments.len(),
                items.len()
            ),
        ));
    }
    let mut chosen = Vec::with_capacity(clustering.k);
    for cluster in 0..clustering.k {
        let centroid = &clustering.centroids[cluster];
        let best = clustering
            .members(cluster)
            .map(|i| (dot(&items[i].vector, centroid), &items[i].source))
            .fold(
                None::<(f64, &CaptionedImage)>,
                |best, (sim, item)| match best {
                    Some((s, b))
                        if s > sim || (s == sim && b.event_number <= item.event_number) =>
                    {
                        Some((s, b))
                    }
                    _ => Some((sim, item)),
                },
            );
        if let Some((_, item)) = best {
            chosen.push(item.clone());
        }
    }
    for record in folder.additional_records() {
        let caption = captions
            .iter()
            .find(|c| c.image_file == record.image_file)
            .ok_or_else(|| {
                PipelineError::invalid(
                    Stage::Select,
                    format!(
                        "no caption for {} image {}",
                        record.action, record.image_file
                    ),
                )
            })?;
        chosen.push(caption.clone());
    }
    Ok(ImageList::new(chosen))
}

/// Everything the select stage produced, for inspection and auditing.
#[derive(Debug, Clone, Serialize)]
pub struct Selection {
    pub captions: Vec<CaptionedImage>,
    pub clustering: Option<Clustering>,
    pub images: ImageList,
}

/// Clusters used for `requested` and `base_count` base-action images.
pub fn effective_k(requested: Option<usize>, base_count: usize) -> usize {
    requested.unwrap_or(DEFAULT_K).min(base_count)
}

/// Runs the whole select stage on a folder.
pub fn select_scenes(
    stored: &StoredFolder,
    captioner: &dyn Captioner,
    embedder: &dyn Embedder,
    k: Option<usize>,
    seed: u64,
) -> Result<Selection, PipelineError> {
    if k == Some(0) {
        return Err(PipelineError::invalid(
            Stage::Select,
            "k must be at least 1",
        ));
    }
    let captions = caption_images(stored, captioner)?;
    let base: Vec<CaptionedImage> = captions
        .iter()
        .filter(|c| !c.action.is_additional())
        .cloned()
        .collect();
    let k = effective_k(k, base.len());
    let (clustering, images) = if k == 0 {
        let images = select_representatives(
            &Clustering {
                k: 0,
                assignments: Vec::new(),
                centroids: Vec::new(),
                seed,
                iterations: 0,
                cost_history: vec![0.0],
            },
            &[],
            &captions,
            &stored.folder,
        )?;
        (None, images)
    } else {
        let items = embed(&base, embedder)?;
        let clustering = cluster(&items, k, seed)?;
        let images = select_representatives(&clustering, &items, &captions, &stored.folder)?;
        (Some(clustering), images)
    };
    Ok(Selection {
        captions,
        clustering,
        images,
    })
}

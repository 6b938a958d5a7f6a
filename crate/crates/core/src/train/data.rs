use std::collections::BTreeMap;

use rayon::prelude::*;

use super::objective::TrainExample;
use crate::dsp::wav::read_wav;
use crate::error::Result;
use crate::metrics::check_speakers;
use crate::mixer::Manifest;
use crate::model::SpeakerEmbedding;

/// Reads every manifest clip into memory. With `embeddings`, each example
/// carries its target speaker's embedding and a speaker without one is a
/// usage error.
pub fn load_examples(
    manifest: &Manifest,
    embeddings: Option<&BTreeMap<String, SpeakerEmbedding>>,
) -> Result<Vec<TrainExample>> {
    if let Some(map) = embeddings {
        check_speakers(manifest, map)?;
    }
    manifest
        .entries
        .par_iter()
        .map(|e| {
            Ok(TrainExample {
                noisy: read_wav(manifest.clip_path(e))?.cast(),
                clean: read_wav(manifest.clean_path(e))?.cast(),
                embedding: embeddings.map(|m| m[&e.target_speaker].clone()),
            })
        })
        .collect()
}

//! Reading episode logs and exporting training samples.

use std::path::Path;

use super::jsonl::{read_jsonl, JsonlWriter};
use super::play::{
    samples_from_record, EpisodeRecord, TrainingSample, RECORD_SCHEMA, SAMPLE_SCHEMA,
};
use super::HarnessError;

pub fn read_records(path: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    read_jsonl(path, Some(RECORD_SCHEMA), |_: &EpisodeRecord| Ok(()))
}

pub fn read_samples(path: &Path) -> Result<Vec<TrainingSample>, HarnessError> {
    read_jsonl(path, Some(SAMPLE_SCHEMA), |s: &TrainingSample| {
        if !s.advantage.is_finite() {
            return Err("advantage is not finite".into());
        }
        Ok(())
    })
}

/// Write one sample per (player, stage) of every logged episode. Returns
/// the number of samples written.
pub fn export_batch(episodes: &Path, out: &Path) -> Result<usize, HarnessError> {
    let records = read_records(episodes)?;
    let mut w = JsonlWriter::create(out)?;
    for rec in &records {
        for s in samples_from_record(rec) {
            w.append(&s)?;
        }
    }
    w.finish()
}

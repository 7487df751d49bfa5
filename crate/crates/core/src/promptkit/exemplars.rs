use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::Digest;
use crate::error::{Error, Result};
use crate::types::{ExpertOutput, InstanceRecord, Split};

/// A solved training item shown to the coordinator before the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub record: InstanceRecord,
    pub outputs: Vec<ExpertOutput>,
    pub gold_text: String,
}

impl Exemplar {
    pub fn new(record: InstanceRecord, outputs: Vec<ExpertOutput>) -> Result<Self> {
        if record.split != Split::Train {
            return Err(Error::usage(format!(
                "exemplar `{}` is from the {} split, not train",
                record.id, record.split
            )));
        }
        let gold_text = record
            .gold_text()
            .ok_or_else(|| Error::usage(format!("exemplar `{}` has no gold answer", record.id)))?;
        Ok(Exemplar {
            record,
            outputs,
            gold_text,
        })
    }
}

/// Stable 64-bit seed from a base seed, a purpose label and an instance id.
pub fn derive_seed(seed: u64, label: &str, id: &str) -> u64 {
    let d = Digest::of_parts([&seed.to_le_bytes()[..], label.as_bytes(), id.as_bytes()]);
    u64::from_le_bytes(d.0[..8].try_into().expect("8 bytes"))
}

/// Draw `k` training records uniformly without replacement, skipping
/// `exclude_id` and records without a gold answer. Draw order is kept.
///
/// ChaCha8 is used for the stream so a seed gives the same draw on every
/// platform.
pub fn sample_exemplars(
    train: &[InstanceRecord],
    k: usize,
    seed: u64,
    exclude_id: &str,
) -> Result<Vec<InstanceRecord>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let pool: Vec<&InstanceRecord> = train
        .iter()
        .filter(|r| r.id != exclude_id && r.split == Split::Train && r.gold_text().is_some())
        .collect();
    if k > pool.len() {
        return Err(Error::usage(format!(
            "asked for {k} exemplars but only {} training records are available",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

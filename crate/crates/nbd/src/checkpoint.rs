//! Model checkpoints: one JSON document with a format tag, the full model
//! (config header plus nested parameter arrays), and the recorded final
//! train loss. JSON float round-tripping is exact, so reloads are
//! bit-faithful.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceModel;
use crate::error::{NbdError, Result};

pub const CHECKPOINT_FORMAT: &str = "nbd-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model: DivergenceModel,
    pub final_train_loss: Option<f64>,
}

pub fn save_checkpoint(
    path: &Path,
    model: &DivergenceModel,
    final_train_loss: Option<f64>,
) -> Result<()> {
    let doc = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        model: model.clone(),
        final_train_loss,
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &doc)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let doc: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if doc.format != CHECKPOINT_FORMAT {
        return Err(NbdError::Config(format!("unknown checkpoint format `{}`", doc.format)));
    }
    doc.model.validate()?;
    Ok(doc)
}

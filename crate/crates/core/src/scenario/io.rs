use std::path::Path;

use super::{CliDataset, DatasetMeta};
use crate::container::{self, Magic, PayloadReader, PayloadWriter};
use crate::error::{Error, FormatError, Result};

pub const DATASET_MAGIC: &Magic = b"CLIDSET\0";
pub const DATASET_FORMAT_VERSION: u32 = 1;

pub fn encode_dataset(ds: &CliDataset) -> Vec<u8> {
    let meta = serde_json::to_string(&ds.meta).expect("dataset metadata serializes");
    let mut w = PayloadWriter::default();
    w.u64(ds.n_tx() as u64)
        .u64(ds.n_rx() as u64)
        .u64(ds.n_samples() as u64)
        .u64(ds.split_index as u64)
        .f64(ds.m1)
        .f64(ds.m2);
    for s in ds.tx.iter().chain(&ds.rx) {
        w.complexes(s);
    }
    container::encode(DATASET_MAGIC, DATASET_FORMAT_VERSION, &meta, &w.finish())
}

pub fn decode_dataset(bytes: &[u8]) -> Result<CliDataset, FormatError> {
    let body = container::decode(bytes, DATASET_MAGIC, DATASET_FORMAT_VERSION)?;
    let meta: DatasetMeta =
        serde_json::from_str(body.meta).map_err(|e| FormatError::Metadata(e.to_string()))?;
    let mut r = PayloadReader::new(body.payload);
    let n_tx = r.usize()?;
    let n_rx = r.usize()?;
    let n = r.usize()?;
    let split_index = r.usize()?;
    let m1 = r.f64()?;
    let m2 = r.f64()?;
    if split_index > n {
        return Err(FormatError::Payload(format!("split {split_index} beyond {n} samples")));
    }
    let tx = (0..n_tx).map(|_| r.complexes(n)).collect::<Result<Vec<_>, _>>()?;
    let rx = (0..n_rx).map(|_| r.complexes(n)).collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(CliDataset {
        tx,
        rx,
        m1,
        m2,
        split_index,
        meta,
    })
}

pub fn save_dataset(ds: &CliDataset, path: &Path) -> Result<()> {
    container::write_atomic(path, &encode_dataset(ds))
}

pub fn load_dataset(path: &Path) -> Result<CliDataset> {
    let bytes = container::read_file(path)?;
    decode_dataset(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

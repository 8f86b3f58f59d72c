//! CIFAR-10 binary batch format.
//!
//! Each record is 3073 bytes: one label byte followed by 3072 pixel
//! bytes in channel-major order (red plane, green plane, blue plane),
//! each plane row-major 32x32. A batch file holds 10,000 records.

use std::path::Path;

use crate::data::{Dataset, LabeledImage, Split};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const IMAGE_DIM: usize = 32;
pub const NUM_CLASSES: usize = 10;
pub const RECORD_BYTES: usize = 1 + 3 * IMAGE_DIM * IMAGE_DIM;
pub const RECORDS_PER_FILE: usize = 10_000;
pub const FILE_BYTES: usize = RECORD_BYTES * RECORDS_PER_FILE;

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

/// Decodes one record. Pixel (c, y, x) lives at byte `1 + c*1024 + y*32 + x`
/// and is scaled to [0, 1].
pub fn parse_record(file: &str, index: usize, record: &[u8]) -> Result<LabeledImage> {
    debug_assert_eq!(record.len(), RECORD_BYTES);
    let label = record[0] as usize;
    if label >= NUM_CLASSES {
        return Err(Error::CorruptRecord {
            file: file.to_string(),
            index,
            label: record[0],
        });
    }
    let pixels = Tensor::from_fn(Shape::new(1, 3, IMAGE_DIM, IMAGE_DIM), |_, c, y, x| {
        record[1 + c * IMAGE_DIM * IMAGE_DIM + y * IMAGE_DIM + x] as f32 / 255.0
    });
    LabeledImage::new(pixels, label)
}

/// Encodes an image back into the record layout, rounding pixels to u8.
/// Exact inverse of `parse_record` for images that came from records.
pub fn encode_record(img: &LabeledImage) -> Vec<u8> {
    let mut out = vec![0u8; RECORD_BYTES];
    out[0] = img.label as u8;
    let s = img.pixels.shape();
    let data = img.pixels.as_slice();
    for c in 0..3 {
        for y in 0..s.h {
            for x in 0..s.w {
                let v = data[(c * s.h + y) * s.w + x];
                out[1 + c * s.h * s.w + y * s.w + x] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Reads one batch file, validating its exact size.
pub fn read_batch_file(path: &Path) -> Result<Vec<LabeledImage>> {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let bytes = std::fs::read(path).map_err(|e| Error::Ingestion {
        file: name.clone(),
        reason: e.to_string(),
    })?;
    if bytes.len() != FILE_BYTES {
        return Err(Error::Ingestion {
            file: name,
            reason: format!("file is {} bytes, expected {}", bytes.len(), FILE_BYTES),
        });
    }
    let mut images = Vec::with_capacity(RECORDS_PER_FILE);
    for (i, record) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        images.push(parse_record(&name, i, record)?);
    }
    Ok(images)
}

/// Writes images in the batch format. Test and tooling helper; accepts
/// any record count.
pub fn write_batch_file(path: &Path, images: &[LabeledImage]) -> Result<()> {
    let mut bytes = Vec::with_capacity(images.len() * RECORD_BYTES);
    for img in images {
        bytes.extend_from_slice(&encode_record(img));
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Loads the standard five train batches and one test batch from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut train = Vec::with_capacity(5 * RECORDS_PER_FILE);
    for file in TRAIN_FILES {
        train.extend(read_batch_file(&dir.join(file))?);
    }
    let test = read_batch_file(&dir.join(TEST_FILE))?;
    Ok((
        Dataset::new(train, Split::Train, NUM_CLASSES),
        Dataset::new(test, Split::Test, NUM_CLASSES),
    ))
}

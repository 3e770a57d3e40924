//! Output helpers shared by the subcommands.

use std::path::{Path, PathBuf};

use geodr::error::{Error, Result};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::ExtendedColorType;
use geodr::BinaryField;

/// Facies 1 white, facies 0 black, binary PGM.
pub fn write_pgm(field: &BinaryField, path: &Path) -> Result<()> {
    let pixels: Vec<u8> = field.as_slice().iter().map(|&v| v * 255).collect();
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .encode(pixels.as_slice(), field.nx() as u32, field.ny() as u32, ExtendedColorType::L8)
    .map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// `path` with `suffix` appended to its file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

/// CSV with header `metric,value`.
pub fn write_summary(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "value"])?;
    for (k, v) in rows {
        w.write_record([k.as_str(), &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::netpbm::{read_pgm, read_ppm, write_pgm, write_ppm, GrayImage, RgbImage};
use super::raster::{rasterize_quad, QuadAnnotation};
use super::resize::{resize_image, resize_mask};
use super::synth::SyntheticSample;
use super::Sample;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// Mask pixels at or above this 8-bit value are foreground.
pub const MASK_THRESHOLD: u8 = 128;

const QUADS_FILE: &str = "quads.csv";
const QUADS_HEADER: [&str; 9] = ["stem", "x0", "y0", "x1", "y1", "x2", "y2", "x3", "y3"];

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Matched pairs, ordered by stem.
    pub samples: Vec<Sample>,
    /// Stems that had an image without a mask or a mask without an image.
    pub unmatched: Vec<String>,
}

/// `stem -> path` for every file in `dir` with the given extension.
fn stems(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_owned(), path);
            }
        }
    }
    Ok(out)
}

fn parse_quads(path: &Path) -> Result<BTreeMap<String, QuadAnnotation>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?;
    if headers.iter().ne(QUADS_HEADER) {
        return Err(Error::format(
            path,
            format!("header must be {}", QUADS_HEADER.join(",")),
        ));
    }
    let mut out = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let bad = |msg: String| Error::format(path, format!("row {}: {msg}", line + 2));
        let coords = record
            .iter()
            .skip(1)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("{f:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let corners = [0, 2, 4, 6].map(|k| (coords[k], coords[k + 1]));
        let quad = QuadAnnotation::new(corners).map_err(|e| bad(e.to_string()))?;
        out.insert(record[0].to_owned(), quad);
    }
    Ok(out)
}

enum MaskSource {
    File(PathBuf),
    Quad(QuadAnnotation),
}

/// Loads `root/images/<stem>.ppm` paired with `root/masks/<stem>.pgm`, or
/// with rows of `root/quads.csv` when there is no `masks/` directory.
/// Images are resized bilinearly and masks by nearest neighbour to `hw`.
pub fn load_dataset(root: impl AsRef<Path>, hw: (usize, usize)) -> Result<Dataset> {
    let root = root.as_ref();
    let images = stems(&root.join("images"), "ppm")?;
    let masks_dir = root.join("masks");
    let quads_path = root.join(QUADS_FILE);
    let masks: BTreeMap<String, MaskSource> = if masks_dir.is_dir() || !quads_path.is_file() {
        stems(&masks_dir, "pgm")?
            .into_iter()
            .map(|(s, p)| (s, MaskSource::File(p)))
            .collect()
    } else {
        parse_quads(&quads_path)?
            .into_iter()
            .map(|(s, q)| (s, MaskSource::Quad(q)))
            .collect()
    };

    let image_stems: BTreeSet<&String> = images.keys().collect();
    let mask_stems: BTreeSet<&String> = masks.keys().collect();
    let unmatched = image_stems
        .symmetric_difference(&mask_stems)
        .map(|s| s.to_string())
        .collect();
    let matched: Vec<&String> = image_stems.intersection(&mask_stems).copied().collect();
    if matched.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no image/mask pairs under {}",
            root.display()
        )));
    }

    let samples = matched
        .par_iter()
        .map(|&stem| {
            let rgb = read_ppm(&images[stem])?;
            let full_mask = match &masks[stem] {
                MaskSource::File(p) => {
                    let g = read_pgm(p)?;
                    if (g.width, g.height) != (rgb.width, rgb.height) {
                        return Err(Error::format(
                            p,
                            format!(
                                "mask is {}x{} but image is {}x{}",
                                g.width, g.height, rgb.width, rgb.height
                            ),
                        ));
                    }
                    g.to_mask(MASK_THRESHOLD)
                }
                MaskSource::Quad(q) => rasterize_quad(q, (rgb.height, rgb.width))?,
            };
            let image = resize_image(&rgb.to_tensor(), hw)?;
            let mask = resize_mask(&full_mask, hw)?;
            Sample::new(stem.clone(), image, mask)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset { samples, unmatched })
}

/// Writes `images/`, `masks/` and `quads.csv` under `root`.
pub fn write_dataset(root: impl AsRef<Path>, samples: &[SyntheticSample]) -> Result<()> {
    let root = root.as_ref();
    for sub in ["images", "masks"] {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut csv = QUADS_HEADER.join(",");
    csv.push('\n');
    for s in samples {
        let id = &s.sample.id;
        write_ppm(
            root.join("images").join(format!("{id}.ppm")),
            &RgbImage::from_tensor(&s.sample.image)?,
        )?;
        write_pgm(
            root.join("masks").join(format!("{id}.pgm")),
            &GrayImage::from_unit_tensor(&s.sample.mask)?,
        )?;
        csv.push_str(id);
        for (x, y) in s.quad.corners() {
            csv.push_str(&format!(",{x},{y}"));
        }
        csv.push('\n');
    }
    write_atomic(&root.join(QUADS_FILE), csv.as_bytes())
}

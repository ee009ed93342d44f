//! Sample sets on disk: a directory of PGM images, a single PGM, or a CSV
//! of points with an `x0,x1,...` header.

use std::fs;
use std::path::{Path, PathBuf};

use flowbridge::domains::{load_pgm, save_pgm};
use flowbridge::{SampleSet, Tensor};

use crate::Failure;

pub struct Loaded {
    /// Output-space samples: images in [0, 1], points as stored.
    pub set: SampleSet,
    /// One file per image, or the single CSV the points came from.
    pub files: Vec<PathBuf>,
    pub images: bool,
}

pub fn load_set(path: &Path) -> Result<Loaded, Failure> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
            .collect();
        if files.is_empty() {
            return Err(Failure::data(format!("no .pgm images in {}", path.display())));
        }
        files.sort();
        let images = files.iter().map(|f| load_pgm(f)).collect::<flowbridge::Result<Vec<_>>>()?;
        let shape = images[0].shape().to_vec();
        if let Some((f, im)) = files.iter().zip(&images).find(|(_, im)| im.shape() != shape.as_slice()) {
            return Err(Failure::data(format!(
                "{} is {:?}, expected {:?} like the other images",
                f.display(),
                im.shape(),
                shape
            )));
        }
        let rows: Vec<&[f32]> = images.iter().map(Tensor::data).collect();
        let set = SampleSet::from_samples(&rows, &shape, dir_name(path))?;
        return Ok(Loaded { set, files, images: true });
    }
    if !path.exists() {
        return Err(Failure::data(format!("{}: no such file or directory", path.display())));
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => {
            let im = load_pgm(path)?;
            let set = SampleSet::from_samples(&[im.data()], im.shape(), dir_name(path))?;
            Ok(Loaded { set, files: vec![path.to_path_buf()], images: true })
        }
        Some("csv") => Ok(Loaded { set: read_points(path)?, files: vec![path.to_path_buf()], images: false }),
        _ => Err(Failure::data(format!("{}: expected a directory, a .pgm or a .csv", path.display()))),
    }
}

fn dir_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn read_points(path: &Path) -> Result<SampleSet, Failure> {
    let bad = |e: csv::Error| Failure::data(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(bad)?;
    let dim = reader.headers().map_err(bad)?.len();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(bad)?;
        let row = record
            .iter()
            .map(|v| v.trim().parse::<f32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::data(format!("{} row {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Failure::data(format!("{}: no samples", path.display())));
    }
    Ok(SampleSet::from_samples(&rows, &[dim], dir_name(path))?)
}

pub fn write_rows<'a>(path: &Path, rows: impl Iterator<Item = &'a [f32]>, dim: usize) -> Result<(), Failure> {
    let bad = |e: csv::Error| Failure::data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(bad)?;
    w.write_record((0..dim).map(|i| format!("x{i}"))).map_err(bad)?;
    for row in rows {
        w.write_record(row.iter().map(f32::to_string)).map_err(bad)?;
    }
    w.flush().map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn write_points(path: &Path, set: &SampleSet) -> Result<(), Failure> {
    write_rows(path, set.iter(), set.dim())
}

pub fn write_image(path: &Path, shape: &[usize], data: &[f32]) -> Result<(), Failure> {
    let clamped: Vec<f32> = data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(save_pgm(&Tensor::new(shape.to_vec(), clamped)?, path)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

//! Per-video text exports of propagation weights, segment weights, and
//! embeddings.
//!
//! For a video `id` the files are `id.gva.csv` and `id.gav.csv` (`T x T`
//! grids, omitted when propagation is off), `id.phi.csv` (one weight per
//! line, weak supervision only), and `id.emb.csv` with the header
//! `modality,segment,label,e0,...` followed by one `v` and one `a` row per
//! segment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use psp_core::config::ModelConfig;
use psp_core::data::VideoSample;
use psp_core::model::infer;
use psp_core::params::ModelParams;
use psp_core::tensor::{Real, Tensor};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, FormatError, Result};
use crate::runconfig::Precision;

/// What gets exported for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub video_id: String,
    pub gamma_va: Option<Tensor<f64>>,
    pub gamma_av: Option<Tensor<f64>>,
    pub phi: Option<Vec<f64>>,
    pub v_psp: Tensor<f64>,
    pub a_psp: Tensor<f64>,
    /// True class of each segment.
    pub labels: Vec<usize>,
}

/// Runs inference and collects the exported quantities.
pub fn artifacts<F: Real>(
    params: &ModelParams<Tensor<F>>,
    cfg: &ModelConfig,
    sample: &VideoSample,
) -> Result<Artifacts> {
    let (g, fwd) = infer(params, sample, cfg)?;
    let widen = |v| g.value(v).cast::<f64>();
    Ok(Artifacts {
        video_id: sample.video_id.clone(),
        gamma_va: fwd.psp.gamma_va.map(widen),
        gamma_av: fwd.psp.gamma_av.map(widen),
        phi: fwd.weak.map(|w| g.value(w.phi).data().iter().map(|x| x.as_f64()).collect()),
        v_psp: widen(fwd.psp.v_psp),
        a_psp: widen(fwd.psp.a_psp),
        labels: sample.segment_classes(),
    })
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn grid_text(t: &Tensor<f64>) -> String {
    (0..t.rows())
        .map(|r| join(t.row(r).iter().copied()) + "\n")
        .collect()
}

fn write(path: PathBuf, text: String, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes one video's files into `dir` and returns their paths.
pub fn write_artifacts(a: &Artifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let id = &a.video_id;
    let mut written = Vec::new();
    if let Some(g) = &a.gamma_va {
        write(dir.join(format!("{id}.gva.csv")), grid_text(g), &mut written)?;
    }
    if let Some(g) = &a.gamma_av {
        write(dir.join(format!("{id}.gav.csv")), grid_text(g), &mut written)?;
    }
    if let Some(phi) = &a.phi {
        let text = phi.iter().map(|p| format!("{p}\n")).collect();
        write(dir.join(format!("{id}.phi.csv")), text, &mut written)?;
    }
    let d = a.v_psp.cols();
    let mut emb = String::from("modality,segment,label");
    for k in 0..d {
        let _ = write!(emb, ",e{k}");
    }
    emb.push('\n');
    for (name, m) in [("v", &a.v_psp), ("a", &a.a_psp)] {
        for t in 0..m.rows() {
            let _ = writeln!(emb, "{name},{t},{},{}", a.labels[t], join(m.row(t).iter().copied()));
        }
    }
    write(dir.join(format!("{id}.emb.csv")), emb, &mut written)?;
    Ok(written)
}

fn export_typed<F: Real>(
    checkpoint: &Checkpoint,
    data: &[VideoSample],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let params = checkpoint.params_as::<F>();
    let mut written = Vec::new();
    for sample in data {
        let a = artifacts(&params, &checkpoint.model, sample)?;
        written.extend(write_artifacts(&a, dir)?);
    }
    Ok(written)
}

/// Exports every video of `data` with a checkpoint's weights.
pub fn export_artifacts(
    checkpoint: &Checkpoint,
    data: &[VideoSample],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    match checkpoint.precision {
        Precision::F32 => export_typed::<f32>(checkpoint, data, dir),
        Precision::F64 => export_typed::<f64>(checkpoint, data, dir),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn numbers(path: &Path, line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.trim().parse::<f64>().map_err(|_| {
                Error::format(
                    path,
                    FormatError::Text {
                        line,
                        msg: format!("'{f}' is not a number"),
                    },
                )
            })
        })
        .collect()
}

/// Parses a `.gva.csv` or `.gav.csv` grid.
pub fn read_grid(path: &Path) -> Result<Tensor<f64>> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        rows.push(numbers(path, i + 1, &fields)?);
    }
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::format(
            path,
            FormatError::Text {
                line: rows.len(),
                msg: "grid is empty or ragged".into(),
            },
        ));
    }
    Ok(Tensor::from_rows(&rows))
}

/// Parses a `.phi.csv` file.
pub fn read_phi(path: &Path) -> Result<Vec<f64>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        out.extend(numbers(path, i + 1, &[line])?);
    }
    Ok(out)
}

/// One row of an `.emb.csv` file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    /// `'v'` or `'a'`.
    pub modality: char,
    pub segment: usize,
    pub label: usize,
    pub values: Vec<f64>,
}

/// Parses an `.emb.csv` file.
pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let text = read(path)?;
    let bad = |line: usize, msg: &str| {
        Error::format(
            path,
            FormatError::Text {
                line,
                msg: msg.to_string(),
            },
        )
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.starts_with("modality,segment,label") => {}
        _ => return Err(bad(1, "missing header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(bad(i + 1, "too few fields"));
        }
        let modality = match fields[0] {
            "v" => 'v',
            "a" => 'a',
            _ => return Err(bad(i + 1, "modality must be v or a")),
        };
        let segment = fields[1].parse().map_err(|_| bad(i + 1, "bad segment index"))?;
        let label = fields[2].parse().map_err(|_| bad(i + 1, "bad label"))?;
        out.push(EmbeddingRow {
            modality,
            segment,
            label,
            values: numbers(path, i + 1, &fields[3..])?,
        });
    }
    Ok(out)
}

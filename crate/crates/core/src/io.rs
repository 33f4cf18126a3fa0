//! File formats: predictions CSV (and its JSON-Lines mirror), ground-truth
//! CSV and the `ImageId,PredictionString` submission CSV.
//!
//! All writers emit UTF-8, LF line endings and six-decimal fixed-point
//! numbers, so identical sets always serialize to identical bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detections::{Detection, DetectionSet, GroundTruth, GroundTruthSet};
use crate::error::{Error, Result};
use crate::geometry::BBox;

pub const PREDICTIONS_HEADER: [&str; 7] = ["image_id", "label", "score", "xmin", "ymin", "xmax", "ymax"];
pub const GROUND_TRUTH_HEADER: [&str; 6] = ["image_id", "label", "xmin", "ymin", "xmax", "ymax"];
pub const SUBMISSION_HEADER: [&str; 2] = ["ImageId", "PredictionString"];

/// Fixed six-decimal rendering used by every writer.
pub fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn is_jsonl(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl") | Some("ndjson"))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(rdr)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

struct RowCtx<'a> {
    name: &'a str,
    line: u64,
}

impl RowCtx<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> Error {
        Error::Parse { path: self.name.to_string(), line: self.line, field: field.to_string(), message: message.into() }
    }

    fn field<'r>(&self, rec: &'r csv::StringRecord, header: &[&str], idx: usize) -> Result<&'r str> {
        rec.get(idx).ok_or_else(|| {
            self.err(header[idx], format!("missing column (expected {} fields, got {})", header.len(), rec.len()))
        })
    }

    fn number(&self, rec: &csv::StringRecord, header: &[&str], idx: usize) -> Result<f64> {
        let raw = self.field(rec, header, idx)?.trim();
        let v: f64 = raw.parse().map_err(|_| self.err(header[idx], format!("not a number: {raw:?}")))?;
        if !v.is_finite() {
            return Err(self.err(header[idx], format!("not finite: {raw:?}")));
        }
        Ok(v)
    }

    fn bbox(&self, c: [f64; 4], first_col: &str) -> Result<BBox> {
        BBox::new(c[0], c[1], c[2], c[3]).map_err(|e| self.err(first_col, e.to_string()))
    }

    fn label(&self, raw: &str, field: &str) -> Result<String> {
        let l = raw.trim();
        if l.is_empty() {
            return Err(self.err(field, "empty label"));
        }
        Ok(l.to_string())
    }
}

/// Reads rows after checking the header. An entirely empty input is
/// accepted as an empty table.
fn for_each_row<R: Read>(
    rdr: R,
    name: &str,
    header: &[&str],
    mut f: impl FnMut(&RowCtx<'_>, &csv::StringRecord) -> Result<()>,
) -> Result<()> {
    let mut rdr = csv_reader(rdr);
    let mut saw_header = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse { path: name.into(), line, field: "<row>".into(), message: e.to_string() }
        })?;
        let ctx = RowCtx { name, line: rec.position().map_or(0, |p| p.line()) };
        if !saw_header {
            saw_header = true;
            let got: Vec<&str> = rec.iter().map(str::trim).collect();
            if got != header {
                return Err(ctx.err("<header>", format!("expected `{}`, got `{}`", header.join(","), got.join(","))));
            }
            continue;
        }
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if rec.len() > header.len() {
            return Err(ctx.err("<row>", format!("expected {} fields, got {}", header.len(), rec.len())));
        }
        f(&ctx, &rec)?;
    }
    Ok(())
}

/// Parses a predictions CSV from any reader. `name` is used in error
/// messages only.
pub fn parse_predictions_csv<R: Read>(rdr: R, name: &str, source_tag: &str) -> Result<DetectionSet> {
    let h = &PREDICTIONS_HEADER;
    let mut rows = Vec::new();
    for_each_row(rdr, name, h, |ctx, rec| {
        let image = ctx.field(rec, h, 0)?.trim();
        if image.is_empty() {
            return Err(ctx.err("image_id", "empty image id"));
        }
        let label = ctx.label(ctx.field(rec, h, 1)?, "label")?;
        let score = ctx.number(rec, h, 2)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(ctx.err("score", format!("score {score} outside [0, 1]")));
        }
        let c = [ctx.number(rec, h, 3)?, ctx.number(rec, h, 4)?, ctx.number(rec, h, 5)?, ctx.number(rec, h, 6)?];
        let bbox = ctx.bbox(c, "xmin")?;
        rows.push((image.to_string(), Detection { bbox, label, score, source: source_tag.to_string() }));
        Ok(())
    })?;
    Ok(DetectionSet::from_detections(rows))
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRecord {
    image_id: String,
    label: String,
    score: f64,
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
}

/// Parses the JSON-Lines mirror of the predictions CSV: one object per line
/// with the same seven fields. Blank lines are skipped.
pub fn parse_predictions_jsonl<R: Read>(rdr: R, name: &str, source_tag: &str) -> Result<DetectionSet> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(rdr).lines().enumerate() {
        let ctx = RowCtx { name, line: i as u64 + 1 };
        let line = line.map_err(|e| ctx.err("<row>", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: PredictionRecord = serde_json::from_str(&line).map_err(|e| ctx.err("<json>", e.to_string()))?;
        if r.image_id.is_empty() {
            return Err(ctx.err("image_id", "empty image id"));
        }
        let label = ctx.label(&r.label, "label")?;
        if !r.score.is_finite() || !(0.0..=1.0).contains(&r.score) {
            return Err(ctx.err("score", format!("score {} outside [0, 1]", r.score)));
        }
        let bbox = ctx.bbox([r.xmin, r.ymin, r.xmax, r.ymax], "xmin")?;
        rows.push((r.image_id, Detection { bbox, label, score: r.score, source: source_tag.to_string() }));
    }
    Ok(DetectionSet::from_detections(rows))
}

/// Reads a predictions file, choosing the JSON-Lines parser for `.jsonl`
/// or `.ndjson` paths and CSV otherwise. Every detection gets `source_tag`.
pub fn read_predictions(path: impl AsRef<Path>, source_tag: &str) -> Result<DetectionSet> {
    let path = path.as_ref();
    let f = open(path)?;
    let name = path.display().to_string();
    if is_jsonl(path) {
        parse_predictions_jsonl(f, &name, source_tag)
    } else {
        parse_predictions_csv(f, &name, source_tag)
    }
}

pub fn write_predictions_csv<W: Write>(ds: &DetectionSet, w: W) -> Result<()> {
    let mut wtr = csv_writer(w);
    let io_err = |e: csv::Error| Error::io("<predictions>", e.into());
    wtr.write_record(PREDICTIONS_HEADER).map_err(io_err)?;
    for (image, dets) in ds.iter() {
        for d in dets {
            let [x0, y0, x1, y1] = d.bbox.coords();
            wtr.write_record([
                image.to_string(),
                d.label.clone(),
                fmt6(d.score),
                fmt6(x0),
                fmt6(y0),
                fmt6(x1),
                fmt6(y1),
            ])
            .map_err(io_err)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<predictions>", e))
}

pub fn write_predictions_jsonl<W: Write>(ds: &DetectionSet, mut w: W) -> Result<()> {
    let round6 = |v: f64| (v * 1e6).round() / 1e6;
    for (image, dets) in ds.iter() {
        for d in dets {
            let [x0, y0, x1, y1] = d.bbox.coords();
            let r = PredictionRecord {
                image_id: image.to_string(),
                label: d.label.clone(),
                score: round6(d.score),
                xmin: round6(x0),
                ymin: round6(y0),
                xmax: round6(x1),
                ymax: round6(y1),
            };
            let line = serde_json::to_string(&r).map_err(|e| Error::io("<predictions>", e.into()))?;
            writeln!(w, "{line}").map_err(|e| Error::io("<predictions>", e))?;
        }
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))
}

/// Writes predictions in the format selected by the path's extension.
pub fn write_predictions(ds: &DetectionSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let w = create(path)?;
    let res = if is_jsonl(path) { write_predictions_jsonl(ds, w) } else { write_predictions_csv(ds, w) };
    res.map_err(|e| relabel_io(e, path))
}

fn relabel_io(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

/// One row per image: `ImageId,PredictionString`, where the prediction
/// string repeats `label score xmin ymin xmax ymax` in score-descending
/// order. Labels containing whitespace cannot be represented and are
/// rejected.
pub fn write_submission_to<W: Write>(ds: &DetectionSet, w: W) -> Result<()> {
    let mut wtr = csv_writer(w);
    let io_err = |e: csv::Error| Error::io("<submission>", e.into());
    wtr.write_record(SUBMISSION_HEADER).map_err(io_err)?;
    for (image, dets) in ds.iter() {
        let mut parts = Vec::with_capacity(dets.len());
        for d in dets {
            if d.label.chars().any(char::is_whitespace) {
                return Err(Error::Usage(format!(
                    "label {:?} contains whitespace and cannot be written to a prediction string",
                    d.label
                )));
            }
            let [x0, y0, x1, y1] = d.bbox.coords();
            parts.push(format!("{} {} {} {} {} {}", d.label, fmt6(d.score), fmt6(x0), fmt6(y0), fmt6(x1), fmt6(y1)));
        }
        wtr.write_record([image, parts.join(" ").as_str()]).map_err(io_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<submission>", e))
}

pub fn write_submission(ds: &DetectionSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_submission_to(ds, create(path)?).map_err(|e| relabel_io(e, path))
}

/// Parses a submission CSV back into a detection set. Images with an empty
/// prediction string are kept with no detections.
pub fn parse_submission<R: Read>(rdr: R, name: &str, source_tag: &str) -> Result<DetectionSet> {
    let h = &SUBMISSION_HEADER;
    let mut set = DetectionSet::new();
    for_each_row(rdr, name, h, |ctx, rec| {
        let image = ctx.field(rec, h, 0)?.trim();
        if image.is_empty() {
            return Err(ctx.err("ImageId", "empty image id"));
        }
        let tokens: Vec<&str> = ctx.field(rec, h, 1)?.split_whitespace().collect();
        if !tokens.len().is_multiple_of(6) {
            return Err(ctx.err("PredictionString", format!("{} tokens is not a multiple of 6", tokens.len())));
        }
        let mut dets = Vec::with_capacity(tokens.len() / 6);
        for group in tokens.chunks(6) {
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ctx.err("PredictionString", format!("not a number: {s:?}")))
            };
            let score = num(group[1])?;
            if !(0.0..=1.0).contains(&score) {
                return Err(ctx.err("PredictionString", format!("score {score} outside [0, 1]")));
            }
            let bbox =
                ctx.bbox([num(group[2])?, num(group[3])?, num(group[4])?, num(group[5])?], "PredictionString")?;
            dets.push(Detection { bbox, label: group[0].to_string(), score, source: source_tag.to_string() });
        }
        set.extend_image(image, dets);
        Ok(())
    })?;
    Ok(set)
}

pub fn read_submission(path: impl AsRef<Path>, source_tag: &str) -> Result<DetectionSet> {
    let path = path.as_ref();
    parse_submission(open(path)?, &path.display().to_string(), source_tag)
}

pub fn parse_ground_truth_csv<R: Read>(rdr: R, name: &str) -> Result<GroundTruthSet> {
    let h = &GROUND_TRUTH_HEADER;
    let mut rows = Vec::new();
    for_each_row(rdr, name, h, |ctx, rec| {
        let image = ctx.field(rec, h, 0)?.trim();
        if image.is_empty() {
            return Err(ctx.err("image_id", "empty image id"));
        }
        let label = ctx.label(ctx.field(rec, h, 1)?, "label")?;
        let c = [ctx.number(rec, h, 2)?, ctx.number(rec, h, 3)?, ctx.number(rec, h, 4)?, ctx.number(rec, h, 5)?];
        let bbox = ctx.bbox(c, "xmin")?;
        rows.push((image.to_string(), GroundTruth { bbox, label }));
        Ok(())
    })?;
    Ok(GroundTruthSet::from_boxes(rows))
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruthSet> {
    let path = path.as_ref();
    parse_ground_truth_csv(open(path)?, &path.display().to_string())
}

pub fn write_ground_truth_csv<W: Write>(gt: &GroundTruthSet, w: W) -> Result<()> {
    let mut wtr = csv_writer(w);
    let io_err = |e: csv::Error| Error::io("<ground truth>", e.into());
    wtr.write_record(GROUND_TRUTH_HEADER).map_err(io_err)?;
    for (image, boxes) in gt.iter() {
        for g in boxes {
            let [x0, y0, x1, y1] = g.bbox.coords();
            wtr.write_record([image.to_string(), g.label.clone(), fmt6(x0), fmt6(y0), fmt6(x1), fmt6(y1)])
                .map_err(io_err)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<ground truth>", e))
}

pub fn write_ground_truth(gt: &GroundTruthSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_ground_truth_csv(gt, create(path)?).map_err(|e| relabel_io(e, path))
}

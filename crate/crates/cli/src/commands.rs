use std::fs;
use std::path::Path;

use boxfuse_core::io::{read_ground_truth, read_predictions, write_ground_truth, write_predictions, write_submission};
use boxfuse_core::simulation::{
    run_ablation_seeds, score_methods, simulate_run, summarize, write_ablation_csv, write_summary_csv, AblationMethod,
};
use boxfuse_core::{ensemble as fuse, evaluate, suppress_set, DetectionSet, Error, Result, Suppressor};
use log::{info, warn};

use crate::args::{EnsembleArgs, EvalArgs, NmsArgs, SimulateArgs, SoftNmsArgs};

fn source_tag(path: &Path) -> String {
    path.file_stem().map_or_else(|| "input".to_string(), |s| s.to_string_lossy().into_owned())
}

fn read(path: &Path) -> Result<DetectionSet> {
    let ds = read_predictions(path, &source_tag(path))?;
    info!("{}: {} detections in {} images", path.display(), ds.num_detections(), ds.num_images());
    Ok(ds)
}

fn suppress(input: &Path, out: &Path, suppressor: Suppressor) -> Result<()> {
    suppressor.validate()?;
    let ds = read(input)?;
    let kept = suppress_set(&ds, &suppressor);
    info!("kept {} of {} detections", kept.num_detections(), ds.num_detections());
    write_predictions(&kept, out)
}

pub fn nms(a: &NmsArgs) -> Result<()> {
    suppress(&a.input, &a.out, Suppressor::Hard { iou_threshold: a.iou })
}

pub fn softnms(a: &SoftNmsArgs) -> Result<()> {
    suppress(&a.input, &a.out, Suppressor::Soft(a.soft.params()))
}

pub fn ensemble(a: &EnsembleArgs) -> Result<()> {
    let params = a.voting.params(a.divide_by_sources.then_some(a.inputs.len()));
    params.validate()?;
    let sets = a.inputs.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
    let fused = fuse(&sets, &params)?;
    info!("fused into {} detections", fused.num_detections());
    write_predictions(&fused, &a.out)?;
    if let Some(path) = &a.submission {
        write_submission(&fused, path)?;
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let params = a.params();
    params.validate()?;
    let pred = read(&a.pred)?;
    let gt = read_ground_truth(&a.gt)?;
    let report = evaluate(&pred, &gt, &params);
    if !report.unscored_labels.is_empty() {
        warn!(
            "{} predicted label(s) absent from the ground truth, not scored: {}",
            report.unscored_labels.len(),
            report.unscored_labels.join(", ")
        );
    }
    if report.classes.is_empty() {
        warn!("no ground-truth classes to score; mAP is 0");
    }
    if let Some(out) = &a.out {
        report.write_csv_file(out)?;
    }
    print!("{}", report.summary());
    println!("mAP={:.6}", report.map);
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = a.config();
    let params = a.ablation_params();
    cfg.validate()?;
    params.validate()?;
    if a.num_seeds == 0 {
        return Err(Error::Usage("--num-seeds must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..a.num_seeds)
        .map(|i| {
            a.seed
                .checked_add(i)
                .ok_or_else(|| Error::Usage(format!("--seed {} + --num-seeds {} overflows", a.seed, a.num_seeds)))
        })
        .collect::<Result<_>>()?;

    let dir = &a.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;

    let run = simulate_run(&cfg, &params.soft_nms)?;
    write_ground_truth(&run.ground_truth, dir.join("ground_truth.csv"))?;
    for (d, ds) in run.raw.iter().enumerate() {
        write_predictions(ds, dir.join(format!("det{d}.csv")))?;
    }
    info!("wrote ground truth and {} detector files to {}", run.raw.len(), dir.display());

    let mut rows = score_methods(&run, a.seed, &AblationMethod::ALL, &params);
    rows.extend(run_ablation_seeds(&cfg, &seeds[1..], &AblationMethod::ALL, &params)?);
    let summary = summarize(&rows);
    let create = |name: &str| {
        let path = dir.join(name);
        fs::File::create(&path).map(std::io::BufWriter::new).map_err(|e| Error::Io { path, source: e })
    };
    write_ablation_csv(&rows, create("ablation.csv")?)?;
    write_summary_csv(&summary, create("ablation_summary.csv")?)?;

    println!("{:<22} {:>10} {:>10}", "method", "mean_map", "stddev");
    for s in &summary {
        println!("{:<22} {:>10.6} {:>10.6}", s.method.name(), s.mean, s.stddev);
    }
    Ok(())
}

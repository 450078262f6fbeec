//! Files written by pipeline runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::corpus::Corpus;
use super::run::{run_annotate, run_evaluate, run_train, AnnotationOutput, Evaluation, SweepRow, TrainedEnsemble};
use super::split::stratified_split;
use super::store::EmbeddingStore;
use super::RunConfig;
use crate::error::{Result, SafeError};
use crate::metrics::MetricReport;
use crate::pen::{load_checkpoint, save_checkpoint, Architecture, PenParams};

fn json<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| SafeError::Format(e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| SafeError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| SafeError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, v: &T) -> Result<()> {
    write_text(path, &(json(v)? + "\n"))
}

pub fn write_resolved_config(dir: &Path, config: &RunConfig) -> Result<()> {
    write_text(&dir.join("resolved_config.json"), &(config.to_json() + "\n"))
}

pub fn annotation_summary(out: &AnnotationOutput) -> String {
    let [h, u, x] = out.counts();
    let mut s = String::new();
    let _ = writeln!(s, "patches={}", out.records.len());
    let _ = writeln!(s, "unlabeled={}", h + u + x);
    let _ = writeln!(s, "inferred.healthy={h}");
    let _ = writeln!(s, "inferred.unhealthy={u}");
    let _ = writeln!(s, "inferred.undecided={x}");
    let _ = writeln!(
        s,
        "d_rate={}",
        out.d_rate().map_or_else(|| "NA".to_string(), |d| format!("{d:.6}"))
    );
    s
}

/// `annotations.jsonl` plus the `annotations_summary.txt` sidecar.
pub fn write_annotations(dir: &Path, out: &AnnotationOutput) -> Result<()> {
    let mut body = String::new();
    for r in &out.records {
        body.push_str(&serde_json::to_string(r).map_err(|e| SafeError::Format(e.to_string()))?);
        body.push('\n');
    }
    write_text(&dir.join("annotations.jsonl"), &body)?;
    write_text(&dir.join("annotations_summary.txt"), &annotation_summary(out))
}

pub fn read_annotations(path: &Path) -> Result<AnnotationOutput> {
    let text = fs::read_to_string(path).map_err(|e| SafeError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        records.push(serde_json::from_str(line).map_err(|e| SafeError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(AnnotationOutput { records })
}

/// `<name>.txt` (key=value) and `<name>.json`.
pub fn write_report(dir: &Path, name: &str, report: &MetricReport) -> Result<()> {
    write_text(&dir.join(format!("{name}.txt")), &report.to_key_value())?;
    write_json(&dir.join(format!("{name}.json")), report)
}

pub fn write_evaluation(dir: &Path, eval: &Evaluation) -> Result<()> {
    let mut kv = eval.report.to_key_value();
    let _ = writeln!(kv, "db_index={:.6}", eval.quality.db_index);
    let _ = writeln!(kv, "db_degenerate={}", eval.quality.db_degenerate);
    for (c, v) in &eval.quality.wd_per_class {
        let _ = writeln!(kv, "wd.{}={v:.6}", c.to_string().to_lowercase());
    }
    write_text(&dir.join("metrics.txt"), &kv)?;
    write_json(&dir.join("metrics.json"), eval)
}

pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<()> {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    let mut tsv = String::from("k\ttau\tacc\tbacc\td_rate\tauprc\tf1_healthy\tf1_unhealthy\tmr_healthy\tmr_unhealthy\n");
    for r in rows {
        let m = &r.report;
        let _ = writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.k,
            r.tau,
            fmt(m.acc),
            fmt(m.bacc),
            fmt(m.d_rate),
            fmt(m.auprc),
            fmt(m.healthy.f1),
            fmt(m.unhealthy.f1),
            fmt(m.healthy.mr),
            fmt(m.unhealthy.mr)
        );
    }
    write_text(&dir.join("sweep.tsv"), &tsv)?;
    write_json(&dir.join("sweep.json"), rows)
}

pub fn checkpoint_path(dir: &Path, m: usize) -> std::path::PathBuf {
    dir.join(format!("model_{m}.pen"))
}

pub fn store_path(dir: &Path, m: usize) -> std::path::PathBuf {
    dir.join(format!("store_{m}.emb"))
}

/// Writes checkpoints, embedding stores, loss traces and the fold plan.
pub fn save_ensemble(dir: &Path, ensemble: &TrainedEnsemble) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SafeError::io(dir, e))?;
    for (m, model) in ensemble.models.iter().enumerate() {
        save_checkpoint(&model.params, &checkpoint_path(dir, m))?;
        model.store.save(&store_path(dir, m))?;
        write_json(&dir.join(format!("trace_{m}.json")), &model.trace)?;
    }
    write_json(&dir.join("folds.json"), &ensemble.plan)
}

/// Loads `models` checkpoints (checked against `arch`) and their stores.
pub fn load_ensemble(dir: &Path, models: usize, arch: &Architecture) -> Result<(Vec<PenParams>, Vec<EmbeddingStore>)> {
    let mut params = Vec::with_capacity(models);
    let mut stores = Vec::with_capacity(models);
    for m in 0..models {
        let p = load_checkpoint(&checkpoint_path(dir, m), Some(arch))?;
        let s = EmbeddingStore::load(&store_path(dir, m))?;
        if s.dim != p.architecture().embed_dim {
            return Err(SafeError::ArchitectureMismatch(format!(
                "store {m} holds {}-dimensional embeddings, model {m} produces {}",
                s.dim,
                p.architecture().embed_dim
            )));
        }
        params.push(p);
        stores.push(s);
    }
    Ok((params, stores))
}

/// Files produced by [`full_run`].
#[derive(Debug, Clone)]
pub struct FullRun {
    pub ensemble: TrainedEnsemble,
    pub annotations: AnnotationOutput,
    pub evaluation: Evaluation,
}

/// Split, train, annotate and evaluate, writing every artifact under `dir`.
pub fn full_run(config: &RunConfig, corpus: &Corpus, dir: &Path) -> Result<FullRun> {
    config.validate()?;
    write_resolved_config(dir, config)?;
    let split = stratified_split(&corpus.image_labels(), config.test_fraction, config.split_seed)?;
    write_json(&dir.join("split.json"), &split)?;
    let ensemble = run_train(config, corpus, &split)?;
    save_ensemble(dir, &ensemble)?;
    let (params, spaces) = (ensemble.params(), ensemble.spaces());
    let annotations = run_annotate(&config.ensemble, &params, &spaces, corpus)?;
    write_annotations(dir, &annotations)?;
    let evaluation = run_evaluate(config, &params, &spaces, corpus, &split)?;
    write_evaluation(dir, &evaluation)?;
    Ok(FullRun {
        ensemble,
        annotations,
        evaluation,
    })
}

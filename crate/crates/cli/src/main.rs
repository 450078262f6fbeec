//! `safe`: extract patches, train embedding ensembles, annotate, evaluate,
//! sweep, run the downstream harness, and generate synthetic corpora.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use safe_core::pipeline::output::{
    load_ensemble, read_annotations, save_ensemble, write_annotations, write_evaluation, write_json,
    write_resolved_config, write_sweep, write_text,
};
use safe_core::pipeline::run::{embedding_quality, evaluate_queries};
use safe_core::pipeline::{
    gen_synthetic, held_out_queries, load_manifest, run_annotate, run_downstream, run_sweep, run_train,
    stratified_split, Corpus, EmbeddingStore, Evaluation, Protocol, RunConfig, Split, SynthSpec,
};
use safe_core::{Result, SafeError};

#[derive(Parser)]
#[command(name = "safe", version, about = "Weakly-supervised patch annotation with an embedding ensemble")]
struct Cli {
    /// JSON run configuration; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Data {
    /// Dataset manifest (JSON Lines).
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct Models {
    /// Directory holding model_<m>.pen and store_<m>.emb.
    #[arg(long)]
    models: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Tile images into patches and report preliminary labels.
    Extract(Data),
    /// Train the embedding ensemble and write checkpoints and stores.
    Train(Data),
    /// Rebuild embedding stores from saved checkpoints.
    Embed {
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        models: Models,
    },
    /// Annotate every unlabeled patch.
    Annotate {
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        models: Models,
    },
    /// Score the ensemble on held-out labeled patches.
    Evaluate {
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        models: Models,
    },
    /// Evaluate a grid of K and tau values without retraining.
    Sweep {
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        models: Models,
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        tau: Vec<f64>,
    },
    /// Train and score the downstream classifier under one labeling protocol.
    Downstream {
        #[command(flatten)]
        data: Data,
        /// annotations.jsonl from `annotate` (needed for with_safe).
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// without_safe or with_safe.
        #[arg(long)]
        protocol: Protocol,
    },
    /// Generate a synthetic corpus.
    Synth {
        /// JSON generator spec; missing fields take defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        images: Option<usize>,
        #[arg(long)]
        spill: Option<f64>,
    },
}

fn read_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_json(&fs::read_to_string(p).map_err(|e| SafeError::Io {
            path: p.clone(),
            source: e,
        })?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_corpus(cfg: &RunConfig, data: &Data) -> Result<(Corpus, Split)> {
    let manifest = load_manifest(&data.manifest)?;
    let corpus = Corpus::from_manifest(&manifest, cfg.patch_size)?;
    let split = stratified_split(&corpus.image_labels(), cfg.test_fraction, cfg.split_seed)?;
    Ok((corpus, split))
}

fn load_spaces(
    cfg: &RunConfig,
    dir: &Path,
) -> Result<(Vec<safe_core::pen::PenParams>, Vec<safe_core::ensemble::EmbeddingSpace>)> {
    let arch = cfg.train.architecture(cfg.patch_size);
    let (params, stores) = load_ensemble(dir, cfg.ensemble.models, &arch)?;
    let spaces = stores.iter().map(EmbeddingStore::to_space).collect::<Result<_>>()?;
    Ok((params, spaces))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = read_config(&cli)?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| SafeError::Io {
        path: out.clone(),
        source: e,
    })?;
    write_resolved_config(&out, &cfg)?;
    match &cli.command {
        Command::Extract(data) => {
            let (corpus, split) = load_corpus(&cfg, data)?;
            let mut lines = String::new();
            let (mut counts, mut discarded) = ([0usize; 3], 0);
            for img in &corpus.images {
                discarded += img.discarded.len();
                for p in &img.patches {
                    counts[p.record.prelim_label as usize] += 1;
                    let row = serde_json::json!({
                        "patch_id": p.patch_id(),
                        "split": if split.is_test(&img.id) { "test" } else { "train" },
                        "prelim_label": p.record.prelim_label,
                        "truth": p.truth,
                    });
                    lines.push_str(&row.to_string());
                    lines.push('\n');
                }
            }
            write_text(&out.join("patches.jsonl"), &lines)?;
            write_text(
                &out.join("extract_summary.txt"),
                &format!(
                    "images={}\nretained={}\ndiscarded={discarded}\nhealthy={}\nunhealthy={}\nunlabeled={}\n",
                    corpus.images.len(),
                    counts.iter().sum::<usize>(),
                    counts[0],
                    counts[1],
                    counts[2]
                ),
            )?;
            write_json(&out.join("split.json"), &split)
        }
        Command::Train(data) => {
            let (corpus, split) = load_corpus(&cfg, data)?;
            write_json(&out.join("split.json"), &split)?;
            let ensemble = run_train(&cfg, &corpus, &split)?;
            save_ensemble(&out, &ensemble)
        }
        Command::Embed { data, models } => {
            let (corpus, split) = load_corpus(&cfg, data)?;
            let arch = cfg.train.architecture(cfg.patch_size);
            let (params, _) = load_ensemble(&models.models, cfg.ensemble.models, &arch)?;
            let pool: Vec<_> = corpus.labeled(&split, false).collect();
            let labels: Vec<_> = pool.iter().map(|p| p.record.prelim_label.class().expect("labeled")).collect();
            let plan = safe_core::pipeline::make_folds(&labels, cfg.n_folds, cfg.ensemble.models, cfg.split_seed)?;
            for (m, p) in params.iter().enumerate() {
                let idx = plan.training_indices(m);
                let records: Vec<_> = idx.iter().map(|&i| &pool[i].record).collect();
                let z = safe_core::pipeline::embed_patches(p, &records)?;
                let rows = idx.iter().zip(z).map(|(&i, v)| (pool[i].patch_id(), labels[i], v)).collect();
                EmbeddingStore::new(m as u32, arch.embed_dim, rows)?
                    .save(&safe_core::pipeline::output::store_path(&out, m))?;
            }
            Ok(())
        }
        Command::Annotate { data, models } => {
            let (corpus, _) = load_corpus(&cfg, data)?;
            let (params, spaces) = load_spaces(&cfg, &models.models)?;
            let annotations = run_annotate(&cfg.ensemble, &params, &spaces, &corpus)?;
            write_annotations(&out, &annotations)
        }
        Command::Evaluate { data, models } => {
            let (corpus, split) = load_corpus(&cfg, data)?;
            let (params, spaces) = load_spaces(&cfg, &models.models)?;
            let queries = held_out_queries(&params, &corpus, &split)?;
            let evaluation = Evaluation {
                report: evaluate_queries(&queries, &spaces, &cfg.ensemble)?,
                quality: embedding_quality(&queries, &spaces, cfg.wd_projections, cfg.split_seed)?,
            };
            write_evaluation(&out, &evaluation)
        }
        Command::Sweep { data, models, k, tau } => {
            let (corpus, split) = load_corpus(&cfg, data)?;
            let (params, spaces) = load_spaces(&cfg, &models.models)?;
            let queries = held_out_queries(&params, &corpus, &split)?;
            let rows = run_sweep(&queries, &spaces, &cfg.ensemble, k, tau)?;
            write_sweep(&out, &rows)
        }
        Command::Downstream {
            data,
            annotations,
            protocol,
        } => {
            let (corpus, split) = load_corpus(&cfg, data)?;
            let inferred = match (annotations, protocol) {
                (Some(p), _) => read_annotations(p)?.inferred(),
                (None, Protocol::WithoutSafe) => Default::default(),
                (None, Protocol::WithSafe) => {
                    return Err(SafeError::InvalidArgument("with_safe needs --annotations".into()))
                }
            };
            let result = run_downstream(&cfg.downstream, &corpus, &split, &inferred, *protocol)?;
            let name = match protocol {
                Protocol::WithoutSafe => "downstream_without_safe",
                Protocol::WithSafe => "downstream_with_safe",
            };
            write_text(&out.join(format!("{name}.txt")), &result.report.to_key_value())?;
            write_json(&out.join(format!("{name}.json")), &result)
        }
        Command::Synth { spec, images, spill } => {
            let mut s: SynthSpec = match spec {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| SafeError::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    serde_json::from_str(&text).map_err(|e| SafeError::Parse {
                        path: p.display().to_string(),
                        line: e.line(),
                        msg: e.to_string(),
                    })?
                }
                None => SynthSpec::default(),
            };
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            if let Some(n) = images {
                s.n_images = *n;
            }
            if let Some(x) = spill {
                s.spill = *x;
            }
            gen_synthetic(&s, &out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

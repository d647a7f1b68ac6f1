//! The `r3mem` command line. [`run`] returns the process exit code:
//! 0 on success, 1 when a task fails, 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::{check_invert, eval_perplexity, eval_reconstruction, pair_perplexity, write_metrics, MetricsRow};
use crate::hierpair::tokenizer::{detokenize, prompt, tokenize};
use crate::hierpair::{build_dataset, load_documents, read_pairs, write_pairs, FilterThresholds, Level};
use crate::revformer::checkpoint;
use crate::revformer::{generate, Direction, ModelConfig, Precision, RevformerParams};
use crate::trainer::{pretrain_base, train, write_loss_log, LossWeights, PretrainConfig, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "r3mem", version, about = "Reversible memory transformer: build pairs, train, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct SeedArg {
    #[arg(long, env = "R3MEM_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decompose documents into context-query pairs (JSONL).
    BuildPairs {
        /// A text file or a directory of .txt files.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.20)]
        min_para_frac: f64,
        #[arg(long, default_value_t = 0.04)]
        min_sent_frac: f64,
    },
    /// Train the plain decoder that becomes the frozen base.
    Pretrain {
        #[arg(long)]
        corpus: PathBuf,
        /// key=value model configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
        #[arg(long, default_value_t = 128)]
        seq_len: usize,
        #[arg(long, default_value_t = 3e-3)]
        lr: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune memory tokens and adapters on pairs.
    Train {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        /// Caps the number of optimizer steps.
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long = "lambda", default_value_t = 0.5)]
        lambda: f64,
        /// Drop the backward term from the objective.
        #[arg(long)]
        no_backward: bool,
        #[arg(long, default_value_t = 2e-3)]
        lr: f64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Segmented perplexity over documents.
    EvalPpl {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        segment_len: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct contexts from queries and score them.
    EvalRecon {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roundtrip random activations through the coupling blocks.
    CheckInvert {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        tol: f64,
        #[arg(long, default_value = "64")]
        precision: Precision,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy generation in either direction.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "fwd")]
        direction: Direction,
        #[arg(long)]
        prompt: String,
        #[arg(long, default_value_t = 64)]
        max_len: usize,
        /// Pair level the prompt is framed with.
        #[arg(long, default_value = "s2e")]
        level: Level,
    },
}

/// Parses `argv` and runs the subcommand.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}

fn load_model(path: &PathBuf) -> Result<RevformerParams<f32>> {
    checkpoint::load(path)
}

fn load_texts(path: &PathBuf) -> Result<Vec<String>> {
    Ok(load_documents(path)?.into_iter().map(|(_, t)| t).collect())
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::BuildPairs {
            input,
            output,
            min_para_frac,
            min_sent_frac,
        } => {
            let docs = load_documents(&input)?;
            let ds = build_dataset(&docs, FilterThresholds { min_para_frac, min_sent_frac })?;
            write_pairs(&output, &ds)?;
            let (n, m, k) = ds.counts();
            println!("{} documents -> {} pairs (d2p {n}, p2s {m}, s2e {k})", docs.len(), ds.len());
        }
        Command::Pretrain {
            corpus,
            config,
            steps,
            seed,
            batch_size,
            seq_len,
            lr,
            out,
        } => {
            let cfg = match config {
                Some(p) => ModelConfig::from_kv(&fs::read_to_string(p)?)?,
                None => ModelConfig::default(),
            };
            let pc = PretrainConfig {
                steps,
                batch_size,
                seq_len: seq_len.min(cfg.window),
                max_lr: lr,
                seed: seed.seed,
                ..Default::default()
            };
            let docs = load_texts(&corpus)?;
            let (params, report) = pretrain_base::<f32>(&cfg, &docs, &pc)?;
            checkpoint::save(&params, &out)?;
            if let (Some(first), Some(last)) = (report.losses.first(), report.losses.last()) {
                println!("pretrained {steps} steps: loss {first:.4} -> {last:.4}");
            }
        }
        Command::Train {
            pairs,
            base,
            epochs,
            max_steps,
            lambda,
            no_backward,
            lr,
            seed,
            out,
            log,
        } => {
            let base = load_model(&base)?;
            let mut params = RevformerParams::attach(base.config.clone(), base.base, seed.seed)?;
            let ds = read_pairs(&pairs)?;
            let tc = TrainConfig {
                epochs,
                max_steps,
                max_lr: lr,
                weights: LossWeights {
                    lambda_cycle: lambda,
                    backward_weight: if no_backward { 0.0 } else { 1.0 },
                },
                seed: seed.seed,
                ..Default::default()
            };
            let report = match params.config.precision {
                Precision::F32 => train(&mut params, &ds.pairs, &tc)?,
                Precision::F64 => {
                    let mut p64 = params.cast::<f64>();
                    let r = train(&mut p64, &ds.pairs, &tc)?;
                    params = p64.cast();
                    r
                }
            };
            checkpoint::save(&params, &out)?;
            write_loss_log(&log, &report.steps)?;
            if report.empty_decodes > 0 {
                eprintln!("note: {} cycle decodes were empty", report.empty_decodes);
            }
            if let Some(last) = report.steps.last() {
                println!("trained {} steps: final total loss {:.4}", last.step, last.loss_total);
            }
        }
        Command::EvalPpl {
            model,
            corpus,
            segment_len,
            out,
        } => {
            let params = load_model(&model)?;
            let docs = load_texts(&corpus)?;
            let p = eval_perplexity(&params, &docs, segment_len)?;
            let cfg = &params.config;
            write_metrics(
                &out,
                &[
                    MetricsRow::new("eval-ppl", "ppl", p.ppl, p.n_docs, cfg),
                    MetricsRow::new("eval-ppl", "mean_nll", p.mean_nll, p.n_tokens, cfg),
                ],
            )?;
            println!("ppl {:.4} over {} tokens", p.ppl, p.n_tokens);
        }
        Command::EvalRecon { model, pairs, out } => {
            let params = load_model(&model)?;
            let ds = read_pairs(&pairs)?;
            if ds.is_empty() {
                return Err(Error::usage("no pairs to evaluate"));
            }
            let r = eval_reconstruction(&params, &ds.pairs)?;
            let fwd = pair_perplexity(&params, &ds.pairs, Direction::Forward)?;
            let bwd = pair_perplexity(&params, &ds.pairs, Direction::Backward)?;
            let cfg = &params.config;
            let n = ds.len();
            write_metrics(
                &out,
                &[
                    MetricsRow::new("eval-recon", "token_f1", r.mean_f1, n, cfg),
                    MetricsRow::new("eval-recon", "exact_match", r.exact_match, n, cfg),
                    MetricsRow::new("eval-recon", "f1_ge_0.9_rate", r.fraction_at_least(0.9), n, cfg),
                    MetricsRow::new("eval-recon", "forward_ppl", fwd.ppl, n, cfg),
                    MetricsRow::new("eval-recon", "backward_nll", bwd.mean_nll, n, cfg),
                ],
            )?;
            println!("token-F1 {:.4}, exact match {:.4}, forward ppl {:.4}", r.mean_f1, r.exact_match, fwd.ppl);
        }
        Command::CheckInvert {
            model,
            trials,
            tol,
            precision,
            seed,
            out,
        } => {
            let params = load_model(&model)?;
            let report = match precision {
                Precision::F32 => check_invert(&params, trials, tol, seed.seed)?,
                Precision::F64 => check_invert(&params.cast::<f64>(), trials, tol, seed.seed)?,
            };
            for (i, e) in report.per_block.iter().enumerate() {
                println!("block {i}: max abs error {e:.3e}");
            }
            println!(
                "whole stack: max abs error {:.3e} (tol {:.1e}) {}",
                report.whole_stack,
                tol,
                if report.pass { "PASS" } else { "FAIL" }
            );
            if let Some(out) = out {
                let cfg = &params.config;
                write_metrics(
                    &out,
                    &[
                        MetricsRow::new("check-invert", "max_abs_error", report.whole_stack, trials, cfg),
                        MetricsRow::new("check-invert", "pass", f64::from(u8::from(report.pass)), trials, cfg),
                    ],
                )?;
            }
            return Ok(report.pass);
        }
        Command::Generate {
            model,
            direction,
            prompt: text,
            max_len,
            level,
        } => {
            let params = load_model(&model)?;
            let ids = generate(&params, direction, &prompt(level, &tokenize(&text)), max_len)?;
            println!("{}", detokenize(&ids));
        }
    }
    Ok(true)
}

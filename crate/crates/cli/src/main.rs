use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use verigate_core::reward::{GateMode, LengthUnit};
use verigate_core::toytask::LexiconParams;
use verigate_cli::config::{AppConfig, RewardOverrides, CONFIG_ENV};
use verigate_cli::gen::LexiconDocument;
use verigate_cli::passk::{cmd_passk, curve_map};
use verigate_cli::score::cmd_score;
use verigate_cli::serve::{serve, serve_stdio};
use verigate_cli::train_cmd::cmd_train;

#[derive(Parser)]
#[command(name = "verigate", version, about = "Gated verifiable rewards for entity translation")]
struct Cli {
    /// TOML config file; defaults apply to anything it leaves out.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Default)]
struct RewardFlags {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_parser = parse_unit)]
    length_unit: Option<LengthUnit>,
}

fn parse_unit(s: &str) -> Result<LengthUnit, String> {
    match s {
        "characters" | "chars" => Ok(LengthUnit::Characters),
        "tokens" => Ok(LengthUnit::Tokens),
        _ => Err(format!("unknown length unit {s:?} (characters|tokens)")),
    }
}

impl RewardFlags {
    fn overrides(&self) -> RewardOverrides {
        RewardOverrides {
            alpha: self.alpha,
            tau: self.tau,
            length_unit: self.length_unit,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Score a JSONL file of rollouts.
    Score {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        reward: RewardFlags,
    },
    /// Run the reward service over TCP, or over stdin/stdout with --stdio.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        #[arg(long)]
        stdio: bool,
        #[command(flatten)]
        reward: RewardFlags,
    },
    /// Compute a pass@k curve from per-problem correct counts.
    Passk {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated k values; powers of two up to n by default.
        #[arg(long)]
        ks: Option<String>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic lexicon and train/test prompt files.
    Gen {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        entities: usize,
        #[arg(long, default_value_t = 3)]
        aliases: usize,
        #[arg(long, default_value_t = 0.75)]
        train_frac: f64,
        #[arg(long, default_value_t = 48)]
        vocab: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy policy and write metrics.csv and policy.json.
    Train {
        #[arg(long, default_value = "full")]
        ablation: GateMode,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = AppConfig::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Score { input, output, reward } => {
            reward.overrides().apply(&mut cfg.reward);
            let summary = cmd_score(&input, &cfg.reward, &output)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Serve { bind, stdio, reward } => {
            reward.overrides().apply(&mut cfg.reward);
            cfg.reward.validate()?;
            if stdio {
                serve_stdio(std::io::stdin().lock(), std::io::stdout().lock(), &cfg.reward)?;
            } else {
                let rt = tokio::runtime::Runtime::new()?;
                rt.block_on(async {
                    let listener = tokio::net::TcpListener::bind(&bind)
                        .await
                        .with_context(|| format!("binding {bind}"))?;
                    eprintln!("listening on {}", listener.local_addr()?);
                    serve(listener, Arc::new(cfg.reward)).await?;
                    anyhow::Ok(())
                })?;
            }
        }
        Command::Passk { input, ks, output } => {
            let curve = cmd_passk(&input, ks.as_deref(), &output)?;
            for (k, e) in curve_map(&curve) {
                println!("pass@{k}\t{e:.6}");
            }
        }
        Command::Gen {
            seed,
            entities,
            aliases,
            train_frac,
            vocab,
            out,
        } => {
            let params = LexiconParams {
                vocab_size: vocab,
                n_entities: entities,
                aliases_per_entity: aliases,
                train_fraction: train_frac,
                ..Default::default()
            };
            let doc = LexiconDocument::generate(seed, params)?;
            doc.write(&out)?;
            println!(
                "wrote {} entities ({} train, {} test) to {}",
                doc.lexicon.len(),
                doc.split.train_ids.len(),
                doc.split.test_ids.len(),
                out.display()
            );
        }
        Command::Train {
            ablation,
            seed,
            steps,
            lexicon,
            out,
        } => {
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(s) = steps {
                cfg.train.steps = s;
            }
            if lexicon.is_some() {
                cfg.train.lexicon = lexicon;
            }
            let run = cmd_train(&cfg, ablation, &out)?;
            let r = &run.report;
            println!(
                "mode {} steps {}: pass@1 {:.4} -> {:.4}, final mean reward {:.4}",
                r.mode, r.steps, r.initial_pass1, r.final_pass1, r.final_mean_reward
            );
        }
    }
    Ok(())
}

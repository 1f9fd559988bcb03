use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use enginecal_cli::commands::{cmd_evaluate, cmd_generate, cmd_report, cmd_size_study, cmd_train, cmd_transfer};
use enginecal_cli::{CliError, Method, Overrides, Regime};

#[derive(Parser)]
#[command(name = "enginecal", version, about = "Engine drive-cycle simulation and surrogate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// Base seed from which every seed stream is derived.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// dnn, lm, rg, knn, dt, a comma-separated list, or all.
    #[arg(long, global = true)]
    method: Option<String>,
    /// train, test1a, test1b, test2 or grid; comma-separated for generate.
    #[arg(long, global = true)]
    regime: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the experiment regimes and write them as CSV.
    Generate,
    /// Fit models on a regime (default: train).
    Train,
    /// Score trained models on a regime (default: test1a).
    Evaluate,
    /// Train one network per configured training size.
    SizeStudy,
    /// Fine-tune the network on out-of-envelope rows.
    Transfer,
    /// Summarize every report as markdown.
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        config: cli.config,
        workers: cli.workers.map(|w| w as usize),
        seed: cli.seed,
        out: cli.out,
    };
    let methods = cli.method.as_deref().map(Method::parse_list).transpose()?;
    let regimes = cli.regime.as_deref().map(Regime::parse_list).transpose()?;
    let single_regime = |default: Regime| -> Result<Regime, CliError> {
        match regimes.as_deref() {
            None => Ok(default),
            Some([r]) => Ok(*r),
            Some(_) => Err(CliError::Usage("this command takes a single regime".into())),
        }
    };
    let config = overrides.resolve()?;
    match cli.command {
        Command::Generate => {
            let list = regimes.clone().unwrap_or_else(|| Regime::EXPERIMENT.to_vec());
            for s in cmd_generate(&config, &list)? {
                println!(
                    "{}: {} cases, {} rows, {} flagged, {:.1} s -> {}",
                    s.regime,
                    s.campaign.cases,
                    s.campaign.rows,
                    s.campaign.flagged_rows,
                    s.seconds,
                    s.path.display()
                );
            }
        }
        Command::Train => {
            let regime = single_regime(Regime::Train)?;
            let methods = methods.unwrap_or_else(|| vec![Method::Dnn]);
            for log in cmd_train(&config, &methods, regime)? {
                let last = log.loss_history.last().map_or(String::new(), |l| format!(", final loss {l:.3e}"));
                println!("{}: {} rows, {:.2} s{last}", log.method, log.rows, log.train_seconds);
            }
        }
        Command::Evaluate => {
            let regime = single_regime(Regime::Test1a)?;
            for r in cmd_evaluate(&config, methods.as_deref(), regime)? {
                for o in &r.outputs {
                    println!("{} {} {}: r = {:.4}, MAPE = {:.3}%", regime.name(), r.model, o.output, o.pearson_r, o.mape);
                }
            }
        }
        Command::SizeStudy => {
            for r in cmd_size_study(&config, &config.size_study.sizes)? {
                let mapes: Vec<String> = r.report.outputs.iter().map(|o| format!("{:.3}", o.mape)).collect();
                println!("size {}: MAPE % [{}]", r.size, mapes.join(", "));
            }
        }
        Command::Transfer => {
            let t = cmd_transfer(&config)?;
            for (b, a) in t.before.outputs.iter().zip(&t.after.outputs) {
                println!("{}: MAPE {:.3}% -> {:.3}%", b.output, b.mape, a.mape);
            }
            println!("frozen layers bit-identical: {}", t.frozen_bit_identical);
        }
        Command::Report => println!("{}", cmd_report(&config)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

mod config;
mod experiments;
mod output;

use clap::Parser;
use config::RunConfig;
use experiments::{find, Verdict, REGISTRY};
use floret::Error;
use output::{ndjson_line, Output};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

/// Run a floret experiment. Every run writes its resolved configuration,
/// its outputs and a manifest to the output directory.
#[derive(Parser, Debug)]
#[command(name = "floret", version)]
struct Cli {
    /// Experiment name; `list` prints all of them.
    command: String,
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory; defaults to $FLORET_OUT/<command> or floret-out/<command>.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::InvalidParams(_) | Error::Arrangement(_) | Error::Domain(_) => 2,
        Error::NotAdmissible(_) | Error::Spec(_) | Error::Invalid(_) | Error::TooFewSamples { .. } => 2,
        Error::Violation(_) => 3,
        _ => 1,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) | Error::Parse(_) => "config",
        Error::InvalidParams(_) => "params",
        Error::Arrangement(_) | Error::Domain(_) | Error::NotAdmissible(_) => "domain",
        Error::Spec(_) | Error::Invalid(_) => "spec",
        Error::Violation(_) => "violation",
        Error::Io(_) => "io",
        _ => "runtime",
    }
}

fn load_config(cli: &Cli) -> floret::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    match &cli.out {
        Some(p) => p.clone(),
        None => {
            let base = std::env::var_os("FLORET_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("floret-out"));
            base.join(&cli.command)
        }
    }
}

fn report_error(cli: &Cli, out: Option<&mut Output>, e: &Error) -> ExitCode {
    let record = json!({ "command": cli.command, "kind": error_kind(e), "message": e.to_string() });
    let line = ndjson_line("floret.error.v1", &record);
    eprint!("{line}");
    if let Some(out) = out {
        // best effort: the error itself is already on stderr
        let _ = out.write("error.json", &line);
    }
    ExitCode::from(exit_code(e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.command == "list" {
        for e in REGISTRY.iter() {
            println!("{:<18} {}", e.name(), e.summary());
        }
        return ExitCode::SUCCESS;
    }
    let Some(exp) = find(&cli.command) else {
        return report_error(
            &cli,
            None,
            &Error::Config(format!("unknown command {:?}; try `floret list`", cli.command)),
        );
    };
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => return report_error(&cli, None, &e),
    };
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global() {
            return report_error(&cli, None, &Error::Invalid(e.to_string()));
        }
    }
    let mut out = match Output::create(&out_dir(&cli)) {
        Ok(o) => o,
        Err(e) => return report_error(&cli, None, &Error::Io(e)),
    };
    if let Err(e) = out.write("config.toml", &cfg.to_toml()) {
        return report_error(&cli, Some(&mut out), &Error::Io(e));
    }
    let result = exp.run(&cfg, &mut out);
    let (verdict, code) = match &result {
        Ok(v) => (v.to_json(), if matches!(v, Verdict::Fail(_)) { ExitCode::from(3) } else { ExitCode::SUCCESS }),
        Err(e) => {
            (json!({ "status": "error", "kind": error_kind(e), "detail": e.to_string() }), ExitCode::from(exit_code(e)))
        }
    };
    let code = match &result {
        Err(e) => {
            report_error(&cli, Some(&mut out), e);
            code
        }
        Ok(v) => {
            if let Verdict::Pass(m) | Verdict::Fail(m) = v {
                println!("{m}");
            }
            code
        }
    };
    if let Err(e) = out.write_manifest(&cli.command, cfg.seed, &cfg.hash(), &verdict) {
        return report_error(&cli, None, &Error::Io(e));
    }
    code
}

use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use xmae::cli::{run, COMMANDS};
use xmae::config::{RunConfig, KEYS};
use xmae::Error;

fn command() -> Command {
    let mut app = Command::new("xmae")
        .about("Cross-modal autoencoder for zero-shot video/text retrieval")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in COMMANDS {
        let mut sub = Command::new(*name).about(*about).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key = value config file; flags override it"),
        );
        for (key, help) in KEYS {
            sub = sub.arg(
                Arg::new(*key)
                    .long(key.replace('_', "-"))
                    .value_name("VALUE")
                    .action(ArgAction::Set)
                    .help(*help),
            );
        }
        app = app.subcommand(sub);
    }
    app
}

fn build_config(m: &ArgMatches) -> Result<RunConfig, Error> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => RunConfig::from_file(path.as_ref())?,
        None => RunConfig::default(),
    };
    let flags: Vec<(&str, &str, String)> = KEYS
        .iter()
        .filter_map(|(k, _)| {
            m.get_one::<String>(k)
                .map(|v| (*k, v.as_str(), format!("--{}", k.replace('_', "-"))))
        })
        .collect();
    cfg.apply(flags)?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let result = build_config(sub).and_then(|cfg| run(name, &cfg));
    match result {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

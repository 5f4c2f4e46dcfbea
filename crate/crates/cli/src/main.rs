use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use gla_core::harness::{
    run_experiment, stage_gen_obs, stage_report, stage_run_gla, stage_simulate, stage_train_forecaster,
    stage_train_rom, ExperimentConfig, Summary, CONFIG_KEYS,
};
use gla_core::Result;

fn cli() -> Command {
    let mut cmd = Command::new("gla")
        .about("Latent assimilation twin experiments on a synthetic Burgers flow")
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .value_name("FILE")
                .global(true)
                .help("key = value configuration file"),
        )
        .arg(
            Arg::new("set")
                .long("set")
                .value_name("KEY=VALUE")
                .action(ArgAction::Append)
                .global(true)
                .help("override one configuration key"),
        )
        .subcommand(Command::new("simulate").about("Integrate Burgers and write the snapshot matrix"))
        .subcommand(Command::new("train-rom").about("Fit the state POD autoencoder and encode the trajectory"))
        .subcommand(
            Command::new("train-forecaster").about("Train the sequence-to-sequence LSTM on the latent trajectory"),
        )
        .subcommand(
            Command::new("gen-obs")
                .about("Sample the observation operator, observe the truth, fit the observation autoencoder"),
        )
        .subcommand(Command::new("run-gla").about("Run free and assimilated forecasts and write the error reports"))
        .subcommand(Command::new("report").about("Summarise existing error reports"))
        .subcommand(Command::new("run").about("Every stage in order"))
        .subcommand(Command::new("config").about("Print the effective configuration"));
    for (key, doc) in CONFIG_KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .global(true)
                .hide_short_help(true)
                .help(*doc),
        );
    }
    cmd
}

fn load_config(m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => ExperimentConfig::read(PathBuf::from(path))?,
        None => ExperimentConfig::default(),
    };
    for (key, _) in CONFIG_KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    for kv in m.get_many::<String>("set").into_iter().flatten() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| gla_core::Error::InvalidArgument(format!("expected KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn print_summary(s: &Summary) {
    println!(
        "steps from {} ({} steps, {} assimilated)",
        s.from_step, s.steps, s.assimilated
    );
    println!("free  mean full rel err   {:.6}", s.free_full);
    println!("gla   mean full rel err   {:.6}", s.gla_full);
    println!("free  mean latent rel err {:.6}", s.free_latent);
    println!("gla   mean latent rel err {:.6}", s.gla_latent);
    println!("full-space reduction      {:.1}%", 100.0 * s.full_reduction());
}

fn run(m: &ArgMatches) -> Result<()> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    let cfg = load_config(sub)?;
    match name {
        "simulate" => {
            let s = stage_simulate(&cfg)?;
            println!("wrote {} x {} snapshots", s.dof(), s.n_state());
        }
        "train-rom" => {
            let model = stage_train_rom(&cfg)?;
            println!(
                "state model: {} POD modes, latent dimension {}",
                model.q_prior(),
                model.latent_dim()
            );
        }
        "train-forecaster" => {
            let f = stage_train_forecaster(&cfg)?;
            println!("forecaster: {} -> {} steps", f.l_input(), f.l_output());
        }
        "gen-obs" => {
            let model = stage_gen_obs(&cfg)?;
            println!(
                "observation model: {} POD modes, latent dimension {}",
                model.q_prior(),
                model.latent_dim()
            );
        }
        "run-gla" => print_summary(&stage_run_gla(&cfg)?.summary),
        "report" => print_summary(&stage_report(&cfg)?),
        "run" => print_summary(&run_experiment(&cfg)?.summary),
        "config" => print!("{}", cfg.to_text()),
        _ => unreachable!("unknown subcommand"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        cli().debug_assert();
    }

    #[test]
    fn flags_and_overrides_apply() {
        let m = cli()
            .try_get_matches_from(["gla", "config", "--burgers.n", "64", "--set", "gla.schedule=400-402"])
            .unwrap();
        let cfg = load_config(m.subcommand().unwrap().1).unwrap();
        assert_eq!(cfg.burgers_n, 64);
        assert_eq!(cfg.get("gla.schedule").unwrap(), "400-402");
    }
}

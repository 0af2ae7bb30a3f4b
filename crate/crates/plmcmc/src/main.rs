use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = plmcmc::Cli::parse();
    if let Err(e) = plmcmc::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SAVVY_LOG", "warn")).init();
    let cli = savvy_cli::Cli::parse();
    std::process::exit(savvy_cli::run(&cli));
}

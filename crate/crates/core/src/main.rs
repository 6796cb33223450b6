use clap::Parser;
use fracimp::cli::{log_filter, run, Cli};

fn main() {
    let cli = Cli::parse();
    let level = log_filter(std::env::var("FRACIMP_LOG").ok().as_deref());
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    let code = run(&cli, &mut std::io::stdout().lock());
    std::process::exit(code);
}

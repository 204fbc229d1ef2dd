use clap::Parser;
use ruleforce_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(err) = ruleforce_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

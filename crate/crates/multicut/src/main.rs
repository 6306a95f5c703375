use clap::Parser;
use multicut::cli;

fn main() {
    std::process::exit(cli::run(cli::Args::parse()));
}

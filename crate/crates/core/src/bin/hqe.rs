use clap::Parser;

fn main() {
    std::process::exit(hqe::cli::run(hqe::cli::Cli::parse()));
}

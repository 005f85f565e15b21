use clap::Parser;

fn main() {
    let args = fitt_sim::cli::Args::parse();
    std::process::exit(fitt_sim::cli::run(args));
}

use clap::Parser;
use mirrorgw::cli::{main_with, RunConfig};

fn main() {
    let config = RunConfig::parse();
    std::process::exit(main_with(&config));
}

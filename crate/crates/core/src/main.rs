use clap::Parser;

fn main() {
    let cli = twospeed::cli::Cli::parse();
    std::process::exit(twospeed::cli::main_with(cli));
}

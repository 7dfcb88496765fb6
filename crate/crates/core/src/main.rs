use clap::Parser;

fn main() {
    let cli = laakso_core::cli::Cli::parse();
    std::process::exit(laakso_core::cli::exit_code(laakso_core::cli::run(cli)));
}

use clap::Parser;

fn main() {
    let cli = multichaos_cli::Cli::parse();
    std::process::exit(multichaos_cli::run(&cli));
}

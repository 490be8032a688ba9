use clap::Parser;

fn main() {
    let cli = ocscape_cli::Cli::parse();
    std::process::exit(ocscape_cli::execute(&cli));
}

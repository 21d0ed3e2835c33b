use clap::Parser;

fn main() {
    let cli = polylink::cli::Cli::parse();
    std::process::exit(polylink::cli::main_with(&cli));
}

use clap::Parser;

fn main() {
    let cli = pabs::Cli::parse();
    std::process::exit(pabs::execute(&cli));
}

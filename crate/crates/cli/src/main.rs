use clap::Parser;

fn main() -> anyhow::Result<()> {
    tilefuse_cli::run(tilefuse_cli::Cli::parse())
}

use clap::Parser;

fn main() -> anyhow::Result<()> {
    msp_cli::commands::run(msp_cli::commands::Cli::parse())
}

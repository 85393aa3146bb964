pub mod algebra;
pub mod check;
pub mod floer;
pub mod flow;
pub mod solve;

use std::path::PathBuf;

use clap::Args;

#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
}

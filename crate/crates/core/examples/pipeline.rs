//! Whole pipeline from a configuration file (or defaults) into a directory.
//!
//! ```text
//! cargo run --release --example pipeline -- config/pipeline.toml
//! ```

use knee_motion::pipeline::{cmd_pipeline, PipelineConfig, Run};

fn main() -> knee_motion::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig {
            out_dir: std::env::temp_dir().join("knee-motion-pipeline"),
            ..PipelineConfig::default()
        },
    };
    let run = Run::new(config)?;
    println!("config hash {}", run.config_hash);
    let outcome = cmd_pipeline(&run)?;
    for (stage, status) in outcome.stages {
        println!("{stage:<22} {status:?}");
    }
    print!(
        "{}",
        std::fs::read_to_string(&outcome.report).map_err(|e| knee_motion::Error::io("reading report", e))?
    );
    Ok(())
}

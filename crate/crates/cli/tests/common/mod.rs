#![allow(dead_code)]

use std::path::Path;

use cellcast_cli::config::RunConfig;

/// Four cells over two weeks and an encoder small enough to train in a
/// fraction of a second.
pub const TINY: &str = r#"
output_dir = "out"

[data]
source = "synth"
num_cells = 4
days = 14

[sampling]
train_samples = 48
validation_samples = 16

[model]
layers = 1
hidden = 8
heads = 2
ffn_dim = 16
head_dims = [8, 1]

[train]
epochs = 1
batch_size = 16

[finetune]
epochs = 1
batch_size = 16

[fnn]
hidden = 4

[fnn.train]
epochs = 1
"#;

pub fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, format!("{extra}\n{TINY}")).unwrap();
    path
}

pub fn tiny(dir: &Path, extra: &str) -> RunConfig {
    RunConfig::load(&write_config(dir, extra)).unwrap()
}

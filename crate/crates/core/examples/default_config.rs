//! Prints the default experiment configuration as TOML. The shipped
//! `configs/default.toml` is generated with:
//!
//! ```text
//! cargo run -p rlft-core --example default_config > configs/default.toml
//! ```

fn main() {
    print!("{}", rlft_core::ExperimentConfig::default().emit());
}

//! Library side of the `sal` command: input handling, the run, split and
//! bench drivers, the pipeline generator and synthetic streams.

pub mod bench;
pub mod check;
pub mod input;
pub mod pipeline;
pub mod run;
pub mod split;
pub mod synth;

/// Environment variable overriding every `--seed`.
pub const SEED_ENV: &str = "SAL_SEED";

/// `SAL_SEED` if set and numeric, else `seed`.
pub fn effective_seed(seed: u64) -> anyhow::Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("{SEED_ENV}=`{s}` is not an unsigned integer")),
        Err(_) => Ok(seed),
    }
}

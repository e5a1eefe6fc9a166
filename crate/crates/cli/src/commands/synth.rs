use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use sleepnet_core::records::save_record;
use sleepnet_core::synthetic::{synthetic_record, SyntheticRecordSpec};

use crate::config::{ConfigError, Split};
use crate::store::create_dir;

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Directory receiving `train/`, `val/` and `test/` record stores.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Records per split as TRAIN,VAL,TEST.
    #[arg(long, value_delimiter = ',', default_value = "3,1,1")]
    pub records: Vec<usize>,
    /// Epochs per record.
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// All channels at 125 Hz without ECG, mains hum or cardiac leakage.
    #[arg(long)]
    pub clean: bool,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    if args.records.len() != 3 || args.epochs == 0 {
        return Err(ConfigError("--records takes TRAIN,VAL,TEST counts and --epochs must be >= 1".into()).into());
    }
    let spec = if args.clean {
        SyntheticRecordSpec::clean_125hz(args.epochs)
    } else {
        SyntheticRecordSpec {
            epochs: args.epochs,
            ..SyntheticRecordSpec::default()
        }
    };
    let mut serial = 0u64;
    for (split, &n) in Split::ALL.iter().zip(&args.records) {
        let dir = args.out.join(split.name());
        create_dir(&dir)?;
        for i in 0..n {
            serial += 1;
            let id = format!("{}{i:03}", split.name());
            let record = synthetic_record(&spec, &id, args.seed.wrapping_mul(1_000_003).wrapping_add(serial));
            save_record(&record, dir.join(&id))?;
        }
    }
    println!("wrote {} records to {}", serial, args.out.display());
    Ok(())
}

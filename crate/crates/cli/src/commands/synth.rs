use std::path::PathBuf;

use clap::Args;
use gridwx_core::synth::{gen_scenario, write_scenario, ScenarioSpec};
use gridwx_core::HourStamp;

use crate::out::OutDir;
use crate::Status;

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Transmission sites with cycle counters.
    #[arg(long, default_value_t = 12)]
    pub sites: usize,
    #[arg(long, default_value_t = 2)]
    pub windfarms: usize,
    #[arg(long, default_value = "2023-10-01T00:00:00Z")]
    pub start: HourStamp,
    #[arg(long, default_value_t = 8760)]
    pub hours: u32,
    #[arg(long, default_value_t = 0.0368)]
    pub base_rate: f64,
    /// Skill weights, one forecast model each.
    #[arg(long, default_value = "0,0.25,0.5,0.75,1", value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    /// Mean event length in hours.
    #[arg(long, default_value_t = 6.0)]
    pub persistence: f64,
    /// Logit-scale noise on forecast probabilities.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 6)]
    pub cadence: u32,
    #[arg(long, default_value_t = 23)]
    pub max_lead: u32,
    /// Skip reanalysis profiles.
    #[arg(long)]
    pub no_profiles: bool,
}

impl SynthArgs {
    pub fn spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            seed: self.seed,
            n_sites: self.sites,
            n_windfarms: self.windfarms,
            start: self.start,
            hours: self.hours,
            base_rate: self.base_rate,
            lambdas: self.lambdas.clone(),
            persistence: self.persistence,
            jitter: self.jitter,
            cadence: self.cadence,
            max_lead: self.max_lead,
            profiles: !self.no_profiles,
            ..ScenarioSpec::default()
        }
    }
}

pub fn run(args: &SynthArgs) -> anyhow::Result<Status> {
    let spec = args.spec();
    spec.validate()?;
    let scenario = gen_scenario(&spec)?;
    let mut out = OutDir::create(&args.out)?;
    let catalog = write_scenario(&scenario, &args.out)?;
    for (path, _) in catalog.hashes() {
        out.record(&path)?;
    }
    out.record("catalog.json")?;
    log::info!("realized base rate {}", scenario.realized_base_rate());
    out.finish("synth", spec.to_metadata(), Default::default())?;
    Ok(Status::Ok)
}

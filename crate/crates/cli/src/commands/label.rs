use anyhow::bail;
use gridwx_core::ingest::write_labels;
use gridwx_core::ingest::FileKind;

use super::write_qc;
use crate::data::{resolve_config, Inputs};
use crate::out::{config_map, OutDir};
use crate::{LabelSource, RunArgs, Status};

pub fn run(source: LabelSource, args: &RunArgs) -> anyhow::Result<Status> {
    let mut inputs = Inputs::open(&args.catalog)?;
    let cfg = resolve_config(args, &inputs.catalog)?;
    let mut out = OutDir::create(&args.out)?;
    let (series, command) = match source {
        LabelSource::Sygivre => {
            if inputs.catalog.files_of(FileKind::Sygivre).next().is_none() {
                bail!("the catalog lists no cycle-counter files");
            }
            let (series, qc): (Vec<_>, Vec<_>) = inputs.sygivre_labels()?.into_iter().unzip();
            out.json("label_qc.json", &qc)?;
            (series, "label sygivre")
        }
        LabelSource::Windfarm => {
            if inputs.catalog.files_of(FileKind::Production).next().is_none() {
                bail!("the catalog lists no production files");
            }
            let (series, qc): (Vec<_>, Vec<_>) = inputs.windfarm_labels(&cfg)?.into_iter().unzip();
            out.json("label_qc.json", &qc)?;
            (series, "label windfarm")
        }
    };
    out.with("labels.csv", |w| Ok(write_labels(w, &series)?))?;
    write_qc(&mut out, inputs.qc())?;
    out.config(&cfg)?;
    out.finish(command, config_map(&cfg), inputs.input_hashes())?;
    Ok(Status::Ok)
}

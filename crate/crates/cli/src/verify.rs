use anyhow::Result;
use toh_core::verify::{run_all, VerifyOptions};

use crate::args::VerifyArgs;
use crate::common::{config_error, Status};

pub fn run(args: VerifyArgs) -> Result<Status> {
    let opts = VerifyOptions {
        enumeration_max_n: args.n,
        q_max_n: args.q_n,
        gammas: args.gammas,
        convergence_steps: args.q_steps,
        jsd_pairs: args.pairs,
        seed: args.seed,
        inject_bug: args.inject_bug,
        ..VerifyOptions::default()
    };
    opts.validate().map_err(config_error)?;
    if opts.inject_bug {
        eprintln!("corrupting H*(initial) before the checks");
    }
    let reports = run_all(&opts);
    for r in &reports {
        print!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    println!("{} of {} suites passed", reports.len() - failed, reports.len());
    Ok(if failed == 0 { Status::Ok } else { Status::Failed })
}

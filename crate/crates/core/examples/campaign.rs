//! Runs the default campaign in memory and prints feature errors and the
//! positioning report.
//!
//! `cargo run --release -p risbench-core --example campaign [config.toml] [seed]`

use std::time::Instant;

use risbench::evaluation::render_table;
use risbench::exec::Exec;
use risbench::features::{expected_path, isolate_mpc, AodSelection};
use risbench::geometry::wrap180;
use risbench::io::pipeline::run_in_memory;
use risbench::io::CampaignConfig;

fn main() -> risbench::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = match args.first() {
        Some(path) => CampaignConfig::load(std::path::Path::new(path))?,
        None => CampaignConfig::builtin(),
    };
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(cfg.seed);
    let t0 = Instant::now();
    let run = run_in_memory(&cfg, &cfg.scenario_ids()?, seed, Exec::Parallel)?;
    println!("campaign: {:.1} s", t0.elapsed().as_secs_f64());

    // Per sweep: overall gain and isolated-path power at each pointing angle.
    let synth = cfg.synth_config();
    for f in &run.features {
        for a in &f.anchors {
            let label = synth.role_for(a.anchor)?.label();
            let (d, aoa) = expected_path(
                cfg.scene(),
                a.anchor,
                f.ue_index,
                synth.ue_array_orientation,
            )?;
            let acqs: Vec<_> = run
                .extracted
                .iter()
                .filter(|e| e.ue_index == f.ue_index && e.role.label() == label)
                .collect();
            let gains: Vec<String> = acqs
                .iter()
                .map(|e| format!("{:.0}", e.acquisition.overall_gain_db))
                .collect();
            let iso: Vec<String> = acqs
                .iter()
                .map(|e| {
                    isolate_mpc(&e.acquisition.mpcs, d, aoa, &cfg.features.isolation)
                        .map_or(" .".into(), |m| format!("{:.0}", m.power_db))
                })
                .collect();
            println!("UE{} {:<5} gain {}", f.ue_index + 1, label, gains.join(" "));
            println!("UE{} {:<5} iso  {}", f.ue_index + 1, label, iso.join(" "));
        }
    }
    println!();
    println!("UE  anchor  gt      coarse           fine             d");
    for f in &run.features {
        for a in &f.anchors {
            println!(
                "{}   {:<6} {:>6.2}  {:<16} {:<16} {}  err coarse {:>5.1} fine {}",
                f.ue_index + 1,
                a.anchor.label(),
                a.ground_truth_aod,
                format!("{:?}", a.coarse.top),
                a.fine
                    .as_ref()
                    .map_or("-".into(), |c| format!("{:?}", c.top)),
                a.distance.map_or("-".into(), |d| format!("{d:.3}")),
                wrap180(a.coarse_aod(AodSelection::Genie) - a.ground_truth_aod).abs(),
                a.fine_aod(AodSelection::Genie)
                    .map_or("-".into(), |v| format!(
                        "{:.1}",
                        wrap180(v - a.ground_truth_aod).abs()
                    )),
            );
        }
    }
    println!();
    print!("{}", render_table(&run.report));
    Ok(())
}

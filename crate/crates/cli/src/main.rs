use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use qostf::constellation::Constellation;
use qostf::harness::{
    compare_curves, diversity_slope, plot_svg, read_csv, run_sweep_with, snr_at_fer, summary, write_csv,
    ExperimentConfig, SweepOptions,
};
use qostf::partitioner::{build_trellis, expand_constellation, min_path_metrics, partition, SubsetRef};
use qostf::transceiver::Transceiver;

#[derive(Parser)]
#[command(name = "qostf", version, about = "QOSTF block/trellis codes for 4-antenna MIMO-OFDM: design and FER simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a FER sweep described by a TOML config and write the curve as CSV.
    Sweep {
        config: PathBuf,
        /// Output CSV (default: config path with a .csv extension).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also render the curve as SVG.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Simulate frames on one thread.
        #[arg(long)]
        serial: bool,
    },
    /// SNR gap `b − a` in dB at a target FER.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-2)]
        target: f64,
    },
    /// Least-squares FER slope and implied diversity order.
    Slope {
        csv: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        lo: f64,
        #[arg(long, default_value_t = 1e-1)]
        hi: f64,
    },
    /// Build the partition trees and the 4-state trellis and report their
    /// distances.
    Design {
        /// Directory for partition, trellis and metric files.
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
        /// Longest error event searched for the path metrics.
        #[arg(long, default_value_t = 8)]
        max_len: usize,
    },
    /// Render one or more CSV curves as log-FER against SNR.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Sweep {
            config,
            out,
            plot,
            serial,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let tx = Transceiver::new(cfg.frame_config()?)?;
            let opts = SweepOptions {
                parallel: !serial,
                ..SweepOptions::default()
            };
            let curve = run_sweep_with(&cfg, &tx, opts)?;
            let out = out.unwrap_or_else(|| config.with_extension("csv"));
            write_csv(&curve, &out)?;
            print!("{}", summary(&curve));
            println!("wrote {}", out.display());
            if let Some(svg) = plot {
                plot_svg(&[curve], &svg)?;
                println!("wrote {}", svg.display());
            }
        }
        Command::Compare { a, b, target } => {
            let (ca, cb) = (read_csv(&a)?, read_csv(&b)?);
            let gap = compare_curves(&ca, &cb, target)?;
            println!(
                "{}: {:.2} dB, {}: {:.2} dB at FER {target:e}",
                ca.label(),
                snr_at_fer(&ca, target)?,
                cb.label(),
                snr_at_fer(&cb, target)?
            );
            println!("gap (b - a) = {gap:.2} dB");
        }
        Command::Slope { csv, lo, hi } => {
            let c = read_csv(&csv)?;
            let fit = diversity_slope(&c, (lo, hi))?;
            println!(
                "{}: {:.2} decades per 10 dB over {} points, implied diversity order {:.2}",
                c.label(),
                fit.decades_per_10db,
                fit.points,
                fit.order
            );
        }
        Command::Design { out_dir, max_len } => design(out_dir, max_len)?,
        Command::Plot { csv, out } => {
            let curves = csv.iter().map(read_csv).collect::<qostf::Result<Vec<_>>>()?;
            plot_svg(&curves, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn design(out_dir: Option<PathBuf>, max_len: usize) -> Result<()> {
    if max_len == 0 {
        bail!("--max-len must be positive");
    }
    let (a, b) = expand_constellation(&Constellation::<f64>::qpsk(0.0))?;
    let trees = [partition(&a, 2)?, partition(&b, 2)?];
    let trellis = build_trellis(&trees[0], &trees[1])?;
    for (name, tree) in ["A", "B"].iter().zip(&trees) {
        let metrics: Vec<String> = tree.levels().iter().map(|l| format!("{:.1}", l.min_metric)).collect();
        println!("family {name}: min CGD*MPD per level {}", metrics.join(" -> "));
    }
    println!("trellis ({} states, {} bits per step):", trellis.num_states(), trellis.bits_per_step());
    let mut rows = String::from("pair,rank,min_cgd,min_energy,min_product\n");
    for s in 0..trellis.num_states() {
        let branches: Vec<String> = (0..trellis.branches_per_state())
            .map(|u| {
                let br = trellis.branch(s, u);
                format!("u={u} -> {} via {}{}", br.next, ["A", "B"][br.subset.family], br.subset.subset)
            })
            .collect();
        println!("  state {s}: {}", branches.join(", "));
    }
    let name = |r: SubsetRef| format!("{}{}", ["A", "B"][r.family], r.subset);
    for fa in 0..2 {
        for fb in 0..2 {
            for i in 0..4u32 {
                for j in 0..4u32 {
                    let (x, y) = (SubsetRef { family: fa, subset: i }, SubsetRef { family: fb, subset: j });
                    let d = trellis.distance(x, y);
                    rows.push_str(&format!(
                        "{}-{},{},{},{},{}\n",
                        name(x),
                        name(y),
                        d.rank,
                        d.cgd,
                        d.energy,
                        d.product
                    ));
                }
            }
        }
    }
    let pm = min_path_metrics(&trellis, max_len);
    match pm.min_delta_h {
        Some(d) => println!("min delta_H over events up to {max_len} steps: {d}"),
        None => println!("no branch-diverging event fits in {max_len} steps"),
    }
    println!(
        "min CGD*MPD: parallel transitions {:.1}, multi-step events (bound) {:.1}",
        pm.parallel_metric, pm.min_event_metric
    );
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, tree) in ["partition-a.txt", "partition-b.txt"].iter().zip(&trees) {
            std::fs::write(dir.join(name), tree.to_text())?;
        }
        std::fs::write(dir.join("trellis.txt"), trellis.to_text())?;
        std::fs::write(dir.join("subset-distances.csv"), rows)?;
        println!("wrote design files to {}", dir.display());
    }
    Ok(())
}

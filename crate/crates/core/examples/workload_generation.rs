//! Correlated filter bitmaps: how close the passing rows sit to the query
//! for each correlation class, and a round trip through the workload file.

use fvs_lab::synth::{self, Distribution};
use fvs_lab::workload::{
    generate_bitmap, generate_workload, mean_normalized_rank, rank_all, read_workload, write_workload, Correlation,
    WorkloadFormat, WorkloadSpec, DEFAULT_TAU,
};
use fvs_lab::DistanceMetric;

fn main() -> fvs_lab::Result<()> {
    let (data, queries) = synth::generate_split(10_000, 20, 16, Distribution::Uniform, DistanceMetric::L2Squared, 2)?;
    let ranked = rank_all(&data, &queries[0])?;

    // 0 = passing rows are the nearest ones, 1 = the farthest.
    println!("{:>16} {:>6} {:>6} {:>6}", "correlation", "1%", "10%", "30%");
    for c in Correlation::ALL {
        let means: Vec<String> = [0.01, 0.1, 0.3]
            .iter()
            .map(|&s| {
                let m: f64 = (0..10)
                    .map(|seed| Ok(mean_normalized_rank(&ranked, &generate_bitmap(&ranked, s, c, seed, DEFAULT_TAU)?)))
                    .sum::<fvs_lab::Result<f64>>()?;
                Ok(format!("{:>6.3}", m / 10.0))
            })
            .collect::<fvs_lab::Result<_>>()?;
        println!("{:>16} {}", c.name(), means.join(" "));
    }
    match generate_bitmap(&ranked, 0.5, Correlation::HighPositive, 0, DEFAULT_TAU) {
        Err(e) => println!("50% high_positive: {e}"),
        Ok(_) => unreachable!("half the rows cannot fit the nearest third"),
    }

    let spec = WorkloadSpec {
        ks: vec![10, 50],
        ..WorkloadSpec::full_grid(4)
    };
    let w = generate_workload(&data, &queries, &spec)?;
    let dir = std::env::temp_dir().join("fvs-lab-workload-example");
    std::fs::create_dir_all(&dir)?;
    for name in ["workload.bin", "workload.jsonl"] {
        let p = dir.join(name);
        write_workload(&w, &p, WorkloadFormat::from_path(&p))?;
        let back = read_workload(&p)?;
        println!(
            "{}: {} records, {} bytes, round trip {}",
            p.display(),
            back.records.len(),
            std::fs::metadata(&p)?.len(),
            if back.records == w.records { "ok" } else { "MISMATCH" }
        );
    }
    Ok(())
}

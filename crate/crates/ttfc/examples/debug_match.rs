// scratch: debug first-point matching
use ttfc::ingest::{map_match};
use ttfc::synthgen::{self, SynthConfig};

fn main() {
    let cfg = SynthConfig {
        grid_rows: 4, grid_cols: 4, n_vehicles: 3, hours: 2.0,
        coverage_rho: 1.0, gps_noise_sigma_m: 0.0, seed: 11,
        ..SynthConfig::default()
    };
    let world = synthgen::generate(&cfg).unwrap();
    for trip in &world.trips {
        let truth = &world.ground_truth.trips[&trip.trip_id];
        let tr = map_match(&world.network, trip, 30.0).unwrap();
        let got: Vec<usize> = tr.iter().map(|t| t.segment_id).collect();
        if got != truth.segments {
            println!("MISMATCH {}", trip.trip_id);
            println!("  got   {:?}", &got[..got.len().min(6)]);
            println!("  truth {:?}", &truth.segments[..truth.segments.len().min(6)]);
            // first two points
            for (k, p) in trip.points.iter().take(3).enumerate() {
                let cands = world.network.project_point(p.lon, p.lat, 30.0);
                println!("  point {k}: cands {:?}",
                    cands.iter().map(|c| (c.segment_id, format!("{:.2e}", c.distance_m), c.fraction)).collect::<Vec<_>>());
            }
            // segment endpoints
            for sid in [got[0], truth.segments[0]] {
                let s = &world.network.segments()[sid];
                println!("  seg {sid}: {} -> {}", s.from, s.to);
            }
            break;
        }
    }
    println!("done");
}

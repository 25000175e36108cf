//! Temporary probe for desk-scale nonlinear-case training behavior.
use std::sync::Arc;

use conservrom::fem::assemble_operators;
use conservrom::fom::{generate_snapshots, CaseTag, ProblemSpec};
use conservrom::mesh::structured_unit_square;
use conservrom::nn::{OptimizerKind, TrainConfig};
use conservrom::numerics::Rng;
use conservrom::rom::{build_rom, error_metrics, Architecture, RomVariant};
use conservrom::tree::build_averaged;

#[test]
#[ignore]
fn probe_case3_training() {
    let ops = Arc::new(assemble_operators(Arc::new(
        structured_unit_square(16).unwrap(),
    )));
    let mut rng = Rng::new(9000);
    let solver = Arc::new(build_averaged(&ops, &ops.mesh.clone(), &mut rng, 10).unwrap());
    let spec = ProblemSpec::new(CaseTag::Forchheimer2D);
    let train = generate_snapshots(&spec, &ops, &mut Rng::new(9001), 200).unwrap();
    let test = generate_snapshots(&spec, &ops, &mut Rng::new(9002), 50).unwrap();
    eprintln!("snapshots done");

    // Flux norm distribution over training samples.
    let mut norms: Vec<f64> = train
        .iter()
        .map(|s| ops.mass_q.quadratic(&s.q, &s.q).unwrap().sqrt())
        .collect();
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eprintln!(
        "train ‖q‖: min {:.3e} q1 {:.3e} med {:.3e} q3 {:.3e} max {:.3e}",
        norms[0],
        norms[50],
        norms[100],
        norms[150],
        norms[199]
    );
    let q0s: Vec<f64> = train
        .iter()
        .map(|s| {
            let q0 = solver.project_homogeneous(&ops, &s.q).unwrap();
            ops.mass_q.quadratic(&q0, &q0).unwrap().sqrt()
        })
        .collect();
    let mut q0sorted = q0s.clone();
    q0sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eprintln!(
        "train ‖q0‖: min {:.3e} med {:.3e} max {:.3e}",
        q0sorted[0], q0sorted[100], q0sorted[199]
    );

    let arch = Architecture::case_default(CaseTag::Forchheimer2D);
    for (epochs, lambda) in [(6000usize, 1.0), (6000, 0.1)] {
        for variant in [RomVariant::PodNN, RomVariant::CurlDlrom, RomVariant::SptDlrom] {
            let cfg = TrainConfig {
                optimizer: OptimizerKind::Lbfgs,
                epochs,
                learning_rate: 1.0,
                lambda,
                seed: 9100,
            };
            let t = std::time::Instant::now();
            let (model, history) =
                build_rom(variant, &train, &ops, &solver, CaseTag::Forchheimer2D, &arch, &cfg)
                    .unwrap();
            let report = error_metrics(&model, &test).unwrap();
            let mut rel: Vec<f64> = report.samples.iter().map(|s| s.rel_l2_flux).collect();
            rel.sort_by(|a, b| a.partial_cmp(b).unwrap());
            eprintln!(
                "epochs {epochs} λ {lambda} {}: loss {:.3e}→{:.3e} ({} epochs run), mean {:.4}, med {:.4}, max {:.4}, {:.0}s",
                variant.as_str(),
                history[0],
                history.last().unwrap(),
                history.len() - 1,
                report.mean_l2_flux,
                rel[rel.len() / 2],
                rel[rel.len() - 1],
                t.elapsed().as_secs_f64(),
            );
        }
    }
}

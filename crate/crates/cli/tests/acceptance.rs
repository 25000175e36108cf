//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities. Criteria 8 and 9 run the full desk-scale
//! pipelines and dominate the runtime.

use std::sync::Arc;
use std::time::Instant;

use conservrom::fem::{self, assemble_operators, OperatorSet};
use conservrom::fom::{
    self, generate_snapshots, mesh_hash, solve_darcy, solve_forchheimer, CaseTag, ProblemSpec,
    Snapshot,
};
use conservrom::kernelmaps::{build_pod, KernelMap};
use conservrom::mesh::{parse_mesh, structured_unit_square};
use conservrom::nn::{
    coefficient_loss, kernel_loss, Activation, CoefficientObjective, DenseNetwork, FeatureLayer,
    FluxRegressionObjective, KernelReconstructionObjective, LayerSpec, LossNorm, NetShape,
    Objective, OptimizerKind, OutputTransform, TrainConfig, Workspace,
};
use conservrom::numerics::Rng;
use conservrom::rom::{
    build_rom, error_metrics, Architecture, PressureMode, RomModel, RomNets, RomVariant,
};
use conservrom::tol;
use conservrom::tree::{build_averaged, build_tree, AveragedSolver, RootChoice};

fn ops_for(n: usize) -> Arc<OperatorSet> {
    Arc::new(assemble_operators(Arc::new(structured_unit_square(n).unwrap())))
}

fn solver_for(ops: &Arc<OperatorSet>, n_trees: usize, seed: u64) -> Arc<AveragedSolver> {
    let mut rng = Rng::new(seed);
    Arc::new(build_averaged(ops, &ops.mesh.clone(), &mut rng, n_trees).unwrap())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn seeded_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_in(-scale, scale)).collect()
}

/// Conservation check of a model output against the analytic source.
fn assert_conservative(model: &RomModel, mu: &[f64]) -> (f64, f64) {
    let (q, _) = model.evaluate(mu).unwrap();
    let (resid, bound) = model.conservation_residual(mu, &q).unwrap();
    assert!(
        resid <= bound,
        "{} at μ={mu:?}: residual {resid:.3e} > bound {bound:.3e}",
        model.variant.as_str()
    );
    (resid, bound)
}

/// A conservative model with freshly initialized, untrained networks.
fn untrained_model(
    variant: RomVariant,
    ops: &Arc<OperatorSet>,
    solver: &Arc<AveragedSolver>,
    snapshots: &[Snapshot],
    arch: &Architecture,
    seed: u64,
) -> RomModel {
    let mut rng = Rng::new(seed);
    let (kernel, nets) = match variant {
        RomVariant::PodNN => {
            let basis = build_pod(snapshots, solver, ops, arch.pod_modes).unwrap();
            let kernel = KernelMap::Pod {
                basis: Arc::new(basis),
                ops: ops.clone(),
            };
            let net = DenseNetwork::init(arch.podnn_shape(2).unwrap(), &mut rng);
            (kernel, RomNets::Single(net))
        }
        RomVariant::CurlDlrom | RomVariant::SptDlrom => {
            let kernel = if variant == RomVariant::CurlDlrom {
                KernelMap::Curl { ops: ops.clone() }
            } else {
                KernelMap::Projection {
                    ops: ops.clone(),
                    solver: solver.clone(),
                }
            };
            let phi = DenseNetwork::init(arch.phi_shape(2).unwrap(), &mut rng);
            let psi =
                DenseNetwork::init(arch.psi_shape(kernel.potential_dim()).unwrap(), &mut rng);
            (kernel, RomNets::LatentDecoder { phi, psi })
        }
        _ => panic!("only conservative variants"),
    };
    let dim = kernel.potential_dim();
    RomModel {
        variant,
        case: CaseTag::Sines2D,
        solver: solver.clone(),
        kernel: Some(kernel),
        nets,
        transform: OutputTransform::identity(dim),
        mesh_hash: mesh_hash(&ops.mesh),
        pressure_mode: PressureMode::FirstTree,
        train_seed: seed,
        config_hash: None,
        ops: ops.clone(),
    }
}

#[test]
fn criterion_01_exact_conservation_trained_and_untrained() {
    let started = Instant::now();
    let ops = ops_for(16);
    let solver = solver_for(&ops, 10, 101);
    let spec = ProblemSpec::new(CaseTag::Sines2D);
    let snapshots = generate_snapshots(&spec, &ops, &mut Rng::new(555), 20).unwrap();
    let arch = Architecture {
        feature: "sine_grid_2".into(),
        pod_modes: 10,
        latent_dim: 10,
        podnn_hidden: vec![32],
        phi_hidden: vec![],
        psi_hidden: vec![32],
        encoder_hidden: vec![],
        blackbox_hidden: vec![32],
    };
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Lbfgs,
        epochs: 30,
        learning_rate: 1.0,
        lambda: 1.0,
        seed: 11,
    };
    let conservative = [
        RomVariant::PodNN,
        RomVariant::CurlDlrom,
        RomVariant::SptDlrom,
    ];
    let mut models = Vec::new();
    for (i, &variant) in conservative.iter().enumerate() {
        let (trained, _) = build_rom(
            variant,
            &snapshots,
            &ops,
            &solver,
            CaseTag::Sines2D,
            &arch,
            &cfg,
        )
        .unwrap();
        models.push(("trained", trained));
        models.push((
            "untrained",
            untrained_model(variant, &ops, &solver, &snapshots, &arch, 900 + i as u64),
        ));
    }

    let mut rng = Rng::new(123_456);
    let mut worst_ratio = 0.0f64;
    for _ in 0..1000 {
        let mu = [rng.uniform_in(1.0, 4.0), rng.uniform_in(1.0, 4.0)];
        for (_, model) in &models {
            let (resid, bound) = assert_conservative(model, &mu);
            worst_ratio = worst_ratio.max(resid / bound);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed <= 120.0, "criterion 1 took {elapsed:.1}s, budget 120s");
    println!(
        "criterion 01 (exact conservation, trained + untrained, 1000 draws): PASS \
         (worst residual/bound = {worst_ratio:.3e}, {elapsed:.1}s)"
    );
}

#[test]
fn criterion_02_structural_operator_suite() {
    let ops = ops_for(16);
    let mesh = &ops.mesh;

    // B·Curl is the zero matrix, entrywise exactly.
    for c in 0..ops.b.n_rows() {
        let mut row = vec![0.0; ops.curl.n_cols()];
        for (e, s) in ops.b.row(c) {
            for (node, v) in ops.curl.row(e) {
                row[node] += s * v;
            }
        }
        assert!(row.iter().all(|&v| v == 0.0), "B·Curl nonzero at cell {c}");
    }

    // B·S_I = I on 100 random sources, single tree.
    let tree = build_tree(&ops, mesh, RootChoice::FirstBoundary).unwrap();
    let mut rng = Rng::new(77);
    for _ in 0..100 {
        let f = seeded_vec(&mut rng, mesh.n_cells(), 1.0);
        let q = tree.apply(&f).unwrap();
        let r = ops.b.spmv(&q).unwrap();
        let resid = r
            .iter()
            .zip(&f)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(resid <= tol::RIGHT_INVERSE * (1.0 + max_abs(&f)));
    }

    // Projection idempotence and kernel annihilation.
    let solver = solver_for(&ops, 3, 5);
    for _ in 0..20 {
        let x = seeded_vec(&mut rng, mesh.n_edges(), 1.0);
        let once = solver.project_homogeneous(&ops, &x).unwrap();
        let twice = solver.project_homogeneous(&ops, &once).unwrap();
        let drift = once
            .iter()
            .zip(&twice)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(drift <= 1e-12 * (1.0 + max_abs(&x)));
        let sib = solver.apply(&ops.b.spmv(&x).unwrap()).unwrap();
        let killed = solver.project_homogeneous(&ops, &sib).unwrap();
        assert!(max_abs(&killed) <= 1e-12 * (1.0 + max_abs(&x)));
    }

    // Averaged right-inverse law for 1, 2, and 10 trees.
    for n_trees in [1, 2, 10] {
        let avg = solver_for(&ops, n_trees, 1000 + n_trees as u64);
        for _ in 0..20 {
            let f = seeded_vec(&mut rng, mesh.n_cells(), 1.0);
            let q = avg.apply(&f).unwrap();
            let r = ops.b.spmv(&q).unwrap();
            let resid = r
                .iter()
                .zip(&f)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(
                resid <= tol::RIGHT_INVERSE * (1.0 + max_abs(&f)),
                "{n_trees} trees: {resid:.3e}"
            );
        }
    }
    println!("criterion 02 (structural operator suite): PASS");
}

#[test]
fn criterion_03_mesh_dimension_lemmas() {
    for n in 1..=32 {
        let mesh = structured_unit_square(n).unwrap();
        assert_eq!(
            mesh.n_nodes(),
            mesh.n_edges() - (mesh.n_cells() - 1),
            "Euler relation fails at n = {n}"
        );
    }
    // Loaded meshes keep the relation (round-trip through the text format).
    let mesh = structured_unit_square(9).unwrap();
    let loaded = parse_mesh(&mesh.to_text()).unwrap();
    assert_eq!(loaded.n_nodes(), loaded.n_edges() - (loaded.n_cells() - 1));

    // Published mesh counts obey the same relation.
    assert_eq!(1265, 3664 - 2400 + 1);

    // Potential-space ordering: nodal dim < edge dim once there are ≥2 cells.
    for n in 1..=8 {
        let mesh = structured_unit_square(n).unwrap();
        assert!(mesh.n_cells() >= 2);
        assert!(
            mesh.n_nodes() < mesh.n_edges(),
            "ordering fails at n = {n}: {} nodes vs {} edges",
            mesh.n_nodes(),
            mesh.n_edges()
        );
    }
    println!("criterion 03 (mesh and dimension relations): PASS");
}

#[test]
fn criterion_04_pod_suite() {
    let ops = ops_for(16);
    let solver = solver_for(&ops, 10, 42);
    let spec = ProblemSpec::new(CaseTag::Sines2D);
    let snapshots = generate_snapshots(&spec, &ops, &mut Rng::new(4040), 60).unwrap();
    let n_modes = 20;
    let basis = build_pod(&snapshots, &solver, &ops, n_modes).unwrap();

    // Orthonormality in the mass inner product.
    for i in 0..n_modes {
        let ci = basis.v.column(i);
        for j in i..n_modes {
            let cj = basis.v.column(j);
            let g = ops.mass_q.quadratic(&ci, &cj).unwrap();
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!(
                (g - expected).abs() <= tol::ORTHONORMALITY,
                "Gram defect at ({i},{j}): {:.3e}",
                (g - expected).abs()
            );
        }
        // Columns lie in the kernel of the divergence.
        let div = ops.b.spmv(&ci).unwrap();
        assert!(max_abs(&div) <= tol::KERNEL * (1.0 + max_abs(&ci)));
    }

    // Truncation-energy identity.
    let map = KernelMap::Pod {
        basis: Arc::new(basis.clone()),
        ops: ops.clone(),
    };
    let mut total = 0.0;
    for s in &snapshots {
        let q0 = solver.project_homogeneous(&ops, &s.q).unwrap();
        let c = map.pod_coefficients(&q0).unwrap();
        let rec = map.apply(&c).unwrap();
        let d: Vec<f64> = q0.iter().zip(&rec).map(|(a, b)| a - b).collect();
        total += ops.mass_q.quadratic(&d, &d).unwrap();
    }
    assert!(
        (total - basis.truncation_energy).abs() <= tol::POD_ENERGY * basis.truncation_energy,
        "energy identity defect: {:.3e} vs {:.3e}",
        total,
        basis.truncation_energy
    );

    // Loss equivalence: the full and coefficient losses differ by a
    // network-independent constant.
    let inputs: Vec<Vec<f64>> = snapshots.iter().map(|s| s.mu.clone()).collect();
    let q0: Vec<Vec<f64>> = snapshots
        .iter()
        .map(|s| solver.project_homogeneous(&ops, &s.q).unwrap())
        .collect();
    let coeffs: Vec<Vec<f64>> = q0.iter().map(|q| map.pod_coefficients(q).unwrap()).collect();
    // The constant, by direct evaluation: (1/N_s) Σ ‖q₀ − VV*q₀‖²_M.
    let mut constant = 0.0;
    for (q, c) in q0.iter().zip(&coeffs) {
        let rec = map.apply(c).unwrap();
        let d: Vec<f64> = q.iter().zip(&rec).map(|(a, b)| a - b).collect();
        constant += ops.mass_q.quadratic(&d, &d).unwrap() / snapshots.len() as f64;
    }
    let shape = NetShape::new(
        FeatureLayer::None,
        2,
        vec![
            LayerSpec::new(2, 16, Activation::LeakyRelu01),
            LayerSpec::new(16, n_modes, Activation::Identity),
        ],
    )
    .unwrap();
    for seed in [1u64, 2, 3] {
        let net = DenseNetwork::init(shape.clone(), &mut Rng::new(seed));
        let full = kernel_loss(&shape, &net.params, &inputs, &q0, &map, &ops.mass_q).unwrap();
        let reduced = coefficient_loss(&shape, &net.params, &inputs, &coeffs);
        assert!(
            ((full - reduced) - constant).abs() <= 1e-8 * constant,
            "seed {seed}: gap {:.6e} vs constant {constant:.6e}",
            full - reduced
        );
    }
    println!(
        "criterion 04 (reduced-basis suite, {} snapshots, {} modes): PASS",
        snapshots.len(),
        n_modes
    );
}

#[test]
fn criterion_05_gradient_suite() {
    let started = Instant::now();
    // 16-edge mesh; every instance stays at or below 500 parameters.
    let ops = ops_for(2);
    let solver = solver_for(&ops, 2, 7);
    let spec = ProblemSpec::new(CaseTag::Sines2D);
    let snapshots = generate_snapshots(&spec, &ops, &mut Rng::new(808), 4).unwrap();
    let inputs: Vec<Vec<f64>> = snapshots.iter().map(|s| s.mu.clone()).collect();
    let q0: Vec<Vec<f64>> = snapshots
        .iter()
        .map(|s| solver.project_homogeneous(&ops, &s.q).unwrap())
        .collect();
    let targets_q: Vec<Vec<f64>> = snapshots.iter().map(|s| s.q.clone()).collect();

    let fd_check = |obj: &mut dyn Objective, params: &[f64], label: &str| {
        assert!(params.len() <= 500, "{label}: {} params", params.len());
        let mut grad = vec![0.0; params.len()];
        obj.eval(params, &mut grad);
        let h = 1e-6;
        let mut scratch = vec![0.0; params.len()];
        for k in 0..params.len() {
            let mut pp = params.to_vec();
            pp[k] += h;
            let fp = obj.eval(&pp, &mut scratch);
            pp[k] -= 2.0 * h;
            let fm = obj.eval(&pp, &mut scratch);
            let fd = (fp - fm) / (2.0 * h);
            let denom = grad[k].abs().max(fd.abs()).max(1e-4);
            assert!(
                (grad[k] - fd).abs() / denom <= tol::GRAD_FD_LOSS,
                "{label}, parameter {k}: analytic {:.6e} vs fd {fd:.6e}",
                grad[k]
            );
        }
    };

    // Reconstruction loss through each kernel map for a single network.
    for map in [
        KernelMap::Curl { ops: ops.clone() },
        KernelMap::Projection {
            ops: ops.clone(),
            solver: solver.clone(),
        },
        KernelMap::Pod {
            basis: Arc::new(build_pod(&snapshots, &solver, &ops, 2).unwrap()),
            ops: ops.clone(),
        },
    ] {
        let dim_r = map.potential_dim();
        let shape = NetShape::new(
            FeatureLayer::None,
            2,
            vec![
                LayerSpec::new(2, 6, Activation::LeakyRelu01),
                LayerSpec::new(6, dim_r, Activation::Identity),
            ],
        )
        .unwrap();
        let net = DenseNetwork::init(shape.clone(), &mut Rng::new(17));
        // Single-network objective: loss through the fixed kernel map.
        struct SingleThroughKernel<'a> {
            shape: &'a NetShape,
            inputs: &'a [Vec<f64>],
            q0: &'a [Vec<f64>],
            map: &'a KernelMap,
            mass: &'a conservrom::numerics::SparseMatrix,
            ws: Workspace,
        }
        impl Objective for SingleThroughKernel<'_> {
            fn n_params(&self) -> usize {
                self.shape.n_params()
            }
            fn eval(&mut self, params: &[f64], grad: &mut [f64]) -> f64 {
                grad.fill(0.0);
                let ns = self.inputs.len() as f64;
                let mut loss = 0.0;
                for (x, q0) in self.inputs.iter().zip(self.q0.iter()) {
                    self.shape.forward(params, x, &mut self.ws);
                    let w = self.map.apply(self.shape.output(&self.ws)).unwrap();
                    let r: Vec<f64> = w.iter().zip(q0.iter()).map(|(a, b)| a - b).collect();
                    let mr = self.mass.spmv(&r).unwrap();
                    loss += r.iter().zip(&mr).map(|(a, b)| a * b).sum::<f64>() / ns;
                    let scaled: Vec<f64> = mr.iter().map(|v| 2.0 * v / ns).collect();
                    let delta = self.map.apply_transpose(&scaled).unwrap();
                    self.shape.backward(params, &self.ws, &delta, grad, false);
                }
                loss
            }
        }
        let mut obj = SingleThroughKernel {
            shape: &shape,
            inputs: &inputs,
            q0: &q0,
            map: &map,
            mass: &ops.mass_q,
            ws: Workspace::for_shape(&shape),
        };
        fd_check(
            &mut obj,
            &net.params,
            &format!("kernel loss / {}", map.variant().as_str()),
        );
        // Sanity: the loss value matches the standalone evaluator.
        let mut g = vec![0.0; shape.n_params()];
        let via_obj = obj.eval(&net.params, &mut g);
        let via_fn = kernel_loss(&shape, &net.params, &inputs, &q0, &map, &ops.mass_q).unwrap();
        assert!((via_obj - via_fn).abs() <= 1e-14 * (1.0 + via_fn));
    }

    // Coefficient loss.
    let pod = KernelMap::Pod {
        basis: Arc::new(build_pod(&snapshots, &solver, &ops, 2).unwrap()),
        ops: ops.clone(),
    };
    let coeffs: Vec<Vec<f64>> = q0.iter().map(|q| pod.pod_coefficients(q).unwrap()).collect();
    let shape = NetShape::new(
        FeatureLayer::None,
        2,
        vec![
            LayerSpec::new(2, 8, Activation::LeakyRelu01),
            LayerSpec::new(8, 2, Activation::Identity),
        ],
    )
    .unwrap();
    let net = DenseNetwork::init(shape.clone(), &mut Rng::new(19));
    let transform = OutputTransform::fit(&coeffs);
    let mut obj = CoefficientObjective::new(&shape, &inputs, &coeffs, &transform);
    fd_check(&mut obj, &net.params, "coefficient loss");

    // Latent-regularized loss, both weights, both high-dimensional kernels.
    for lambda in [0.0, 1.0] {
        for map in [
            KernelMap::Curl { ops: ops.clone() },
            KernelMap::Projection {
                ops: ops.clone(),
                solver: solver.clone(),
            },
        ] {
            let dim_r = map.potential_dim();
            let phi = DenseNetwork::init(
                NetShape::new(
                    FeatureLayer::None,
                    2,
                    vec![
                        LayerSpec::new(2, 3, Activation::LeakyRelu01),
                        LayerSpec::new(3, 2, Activation::LeakyRelu01),
                    ],
                )
                .unwrap(),
                &mut Rng::new(23),
            );
            let psi = DenseNetwork::init(
                NetShape::new(
                    FeatureLayer::None,
                    2,
                    vec![
                        LayerSpec::new(2, 3, Activation::LeakyRelu01),
                        LayerSpec::new(3, dim_r, Activation::Identity),
                    ],
                )
                .unwrap(),
                &mut Rng::new(29),
            );
            let enc = DenseNetwork::init(
                NetShape::new(
                    FeatureLayer::None,
                    16,
                    vec![LayerSpec::new(16, 2, Activation::LeakyRelu01)],
                )
                .unwrap(),
                &mut Rng::new(31),
            );
            let mut obj = KernelReconstructionObjective::new(
                &phi.shape, &psi.shape, &enc.shape, &inputs, &q0, &map, &ops.mass_q, lambda,
            )
            .unwrap();
            let mut params = Vec::new();
            params.extend_from_slice(&phi.params);
            params.extend_from_slice(&psi.params);
            params.extend_from_slice(&enc.params);
            fd_check(
                &mut obj,
                &params,
                &format!("latent loss λ={lambda} / {}", map.variant().as_str()),
            );
        }
    }

    // Black-box losses in both quadratic forms.
    for norm in [LossNorm::L2, LossNorm::Hdiv] {
        let shape = NetShape::new(
            FeatureLayer::None,
            2,
            vec![
                LayerSpec::new(2, 8, Activation::LeakyRelu01),
                LayerSpec::new(8, 16, Activation::Identity),
            ],
        )
        .unwrap();
        let net = DenseNetwork::init(shape.clone(), &mut Rng::new(37));
        let transform = OutputTransform::fit(&targets_q);
        let mut obj =
            FluxRegressionObjective::new(&shape, &inputs, &targets_q, norm, &ops, &transform);
        fd_check(&mut obj, &net.params, &format!("black-box {norm:?} loss"));
    }

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed <= 60.0, "criterion 5 took {elapsed:.1}s, budget 60s");
    println!("criterion 05 (gradient suite, all losses): PASS ({elapsed:.1}s)");
}

#[test]
fn criterion_06_fom_correctness() {
    // Manufactured linear-pressure solution is reproduced exactly.
    let ops = ops_for(8);
    let mesh = &ops.mesh;
    let f = vec![0.0; mesh.n_cells()];
    let g = fem::assemble_rhs_g(mesh, |_| [0.0, 0.0], |x| x[0]);
    let (q, p) = solve_darcy(&ops, &f, &g).unwrap();
    let q_exact = fem::interpolate_rt0(mesh, |_| [-1.0, 0.0]);
    for e in 0..mesh.n_edges() {
        assert!((q[e] - q_exact[e]).abs() <= 1e-10);
    }
    for c in 0..mesh.n_cells() {
        assert!((p[c] - mesh.cell_centroid(c)[0]).abs() <= 1e-10);
    }

    // Nonlinear solves converge for 20 seeded parameter draws, with the
    // residual verified externally.
    let spec = ProblemSpec::new(CaseTag::Forchheimer2D);
    let mut rng = Rng::new(606);
    for draw in 0..20 {
        let mu = [
            rng.uniform_in(0.0, 1.0),
            rng.uniform_in(0.0, 1.0),
            rng.uniform_in(-2.0, 1.0),
            rng.uniform_in(0.0, 2.0),
        ];
        let f = spec.project_source(mesh, &mu);
        let g = spec.assemble_rhs_g(mesh, &mu);
        let (k0, k1) = spec.kappa(&mu).unwrap();
        let sol = solve_forchheimer(&ops, &f, &g, k0, k1).unwrap();
        // External residual check of the converged nonlinear system.
        let coeff = fom::cellwise_coefficient(mesh, &sol.q, k0, k1);
        let mass = fem::assemble_mass_q(mesh, Some(&coeff));
        let mq = mass.spmv(&sol.q).unwrap();
        let btp = ops.b.spmv_transpose(&sol.p).unwrap();
        let res1: f64 = mq
            .iter()
            .zip(&btp)
            .zip(&g)
            .fold(0.0f64, |m, ((a, b), gg)| m.max((a - b - gg).abs()));
        let bq = ops.b.spmv(&sol.q).unwrap();
        let res2: f64 = bq
            .iter()
            .zip(&f)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(
            res1 <= tol::PICARD * (1.0 + max_abs(&g)),
            "draw {draw}: flux-law residual {res1:.3e}"
        );
        assert!(res2 <= tol::PICARD * (1.0 + max_abs(&f)));
    }

    // Weak-nonlinearity limit agrees with the linear solver.
    let g_bc = fem::assemble_rhs_g(mesh, |_| [0.0, 0.0], |x| 0.01 * x[0] * x[1]);
    let sol = solve_forchheimer(&ops, &f, &g_bc, 1.0, 100.0).unwrap();
    let (q_lin, _) = solve_darcy(&ops, &f, &g_bc).unwrap();
    let diff: Vec<f64> = sol.q.iter().zip(&q_lin).map(|(a, b)| a - b).collect();
    let rel = ops.mass_q.quadratic(&diff, &diff).unwrap().sqrt()
        / ops.mass_q.quadratic(&q_lin, &q_lin).unwrap().sqrt();
    assert!(rel <= 1e-4, "weak-nonlinearity deviation {rel:.3e}");

    // Every snapshot of both cases is conservative.
    for (case, count) in [(CaseTag::Sines2D, 10), (CaseTag::Forchheimer2D, 5)] {
        let spec = ProblemSpec::new(case);
        let snaps = generate_snapshots(&spec, &ops, &mut Rng::new(7001), count).unwrap();
        for s in &snaps {
            s.check_conservation(&ops).unwrap();
        }
    }
    println!("criterion 06 (full-order solver correctness): PASS");
}

#[test]
fn criterion_07_pressure_recovery_identity() {
    // Exact flux in, exact pressure out, both flux laws.
    let ops = ops_for(12);
    let solver = solver_for(&ops, 10, 909);

    let spec = ProblemSpec::new(CaseTag::Sines2D);
    let snaps = generate_snapshots(&spec, &ops, &mut Rng::new(7100), 5).unwrap();
    for s in &snaps {
        let aq = ops.mass_q.spmv(&s.q).unwrap();
        let r: Vec<f64> = aq.iter().zip(&s.g_vec).map(|(a, g)| a - g).collect();
        let p = solver.apply_adjoint_first(&r).unwrap();
        let num: f64 = p
            .iter()
            .zip(&s.p)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = s.p.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            num <= tol::PRESSURE_IDENTITY * den,
            "linear case: relative error {:.3e}",
            num / den
        );
    }

    let spec = ProblemSpec::new(CaseTag::Forchheimer2D);
    let snaps = generate_snapshots(&spec, &ops, &mut Rng::new(7200), 5).unwrap();
    for s in &snaps {
        let (k0, k1) = spec.kappa(&s.mu).unwrap();
        let coeff = fom::cellwise_coefficient(&ops.mesh, &s.q, k0, k1);
        let mass = fem::assemble_mass_q(&ops.mesh, Some(&coeff));
        let aq = mass.spmv(&s.q).unwrap();
        let r: Vec<f64> = aq.iter().zip(&s.g_vec).map(|(a, g)| a - g).collect();
        let p = solver.apply_adjoint_first(&r).unwrap();
        let num: f64 = p
            .iter()
            .zip(&s.p)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = s.p.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            num <= tol::PRESSURE_IDENTITY * den,
            "nonlinear case: relative error {:.3e}",
            num / den
        );
    }
    println!("criterion 07 (pressure recovery from exact flux): PASS");
}

/// Desk-scale run shared by criteria 8 and 9.
struct DeskScaleOutcome {
    reports: Vec<(RomVariant, conservrom::rom::EvalReport)>,
    elapsed: f64,
}

fn desk_scale_run(
    case: CaseTag,
    n_train: usize,
    n_test: usize,
    variants: &[RomVariant],
    epochs: usize,
    base_seed: u64,
) -> DeskScaleOutcome {
    let started = Instant::now();
    let ops = ops_for(16);
    let solver = solver_for(&ops, 10, base_seed);
    let spec = ProblemSpec::new(case);
    let train = generate_snapshots(&spec, &ops, &mut Rng::new(base_seed + 1), n_train).unwrap();
    let test = generate_snapshots(&spec, &ops, &mut Rng::new(base_seed + 2), n_test).unwrap();
    let arch = Architecture::case_default(case);
    let mut reports = Vec::new();
    for (i, &variant) in variants.iter().enumerate() {
        let cfg = TrainConfig {
            optimizer: OptimizerKind::Lbfgs,
            epochs,
            learning_rate: 1.0,
            lambda: 1.0,
            seed: base_seed + 100 + i as u64,
        };
        let (model, history) =
            build_rom(variant, &train, &ops, &solver, case, &arch, &cfg).unwrap();
        assert!(
            history.last().unwrap() <= &history[0],
            "{}: loss increased",
            variant.as_str()
        );
        let report = error_metrics(&model, &test).unwrap();
        reports.push((variant, report));
    }
    DeskScaleOutcome {
        reports,
        elapsed: started.elapsed().as_secs_f64(),
    }
}

#[test]
fn criterion_08_desk_scale_sines_reproduction() {
    let variants = RomVariant::ALL;
    let outcome = desk_scale_run(CaseTag::Sines2D, 300, 100, &variants, 500, 8000);

    let mut blackbox_l2_median_ratio = 0.0;
    for (variant, report) in &outcome.reports {
        assert_eq!(report.samples.len(), 100);
        if variant.is_conservative() {
            // (a) mean relative flux error within five percent.
            assert!(
                report.mean_l2_flux <= 0.05,
                "{}: mean L2 flux error {:.4}",
                variant.as_str(),
                report.mean_l2_flux
            );
            // (b) per-sample norm ordering, all 100 samples.
            for s in &report.samples {
                assert!(
                    s.rel_hdiv_flux <= s.rel_l2_flux + 1e-12,
                    "{} sample {}: H(div) {} > L2 {}",
                    variant.as_str(),
                    s.index,
                    s.rel_hdiv_flux,
                    s.rel_l2_flux
                );
            }
            // (c) conservation residuals within the bound.
            for s in &report.samples {
                assert!(s.conservation_residual <= s.residual_bound);
            }
        } else if *variant == RomVariant::BlackboxL2 {
            let mut ratios: Vec<f64> = report
                .samples
                .iter()
                .map(|s| s.conservation_residual / s.residual_bound)
                .collect();
            ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
            blackbox_l2_median_ratio = ratios[ratios.len() / 2];
        }
    }
    // (c) continued: the black-box median residual sits at least three
    // orders of magnitude above the conservative threshold.
    assert!(
        blackbox_l2_median_ratio >= 1e3,
        "black-box median residual only {blackbox_l2_median_ratio:.3e}× the bound"
    );
    assert!(
        outcome.elapsed <= 1800.0,
        "criterion 8 took {:.0}s, budget 1800s",
        outcome.elapsed
    );
    let summary: Vec<String> = outcome
        .reports
        .iter()
        .map(|(v, r)| format!("{}: L2 {:.3}%", v.as_str(), 100.0 * r.mean_l2_flux))
        .collect();
    println!(
        "criterion 08 (desk-scale sinusoidal case): PASS ({}; black-box ratio {:.1e}; {:.0}s)",
        summary.join(", "),
        blackbox_l2_median_ratio,
        outcome.elapsed
    );
}

#[test]
fn criterion_09_desk_scale_forchheimer_reproduction() {
    let variants = [
        RomVariant::PodNN,
        RomVariant::CurlDlrom,
        RomVariant::SptDlrom,
    ];
    let outcome = desk_scale_run(CaseTag::Forchheimer2D, 200, 50, &variants, 500, 9000);
    for (variant, report) in &outcome.reports {
        assert_eq!(report.samples.len(), 50);
        assert!(
            report.mean_l2_flux <= 0.10,
            "{}: mean L2 flux error {:.4}",
            variant.as_str(),
            report.mean_l2_flux
        );
        for s in &report.samples {
            assert!(
                s.rel_hdiv_flux <= s.rel_l2_flux + 1e-12,
                "{} sample {}: H(div) above L2",
                variant.as_str(),
                s.index
            );
            assert!(s.conservation_residual <= s.residual_bound);
        }
    }
    assert!(
        outcome.elapsed <= 2700.0,
        "criterion 9 took {:.0}s, budget 2700s",
        outcome.elapsed
    );
    let summary: Vec<String> = outcome
        .reports
        .iter()
        .map(|(v, r)| format!("{}: L2 {:.3}%", v.as_str(), 100.0 * r.mean_l2_flux))
        .collect();
    println!(
        "criterion 09 (desk-scale nonlinear case): PASS ({}; {:.0}s)",
        summary.join(", "),
        outcome.elapsed
    );
}

#[test]
fn criterion_10_pipeline_determinism() {
    let config = r#"
case = "sines2d"
mesh_n = 8
n_train = 12
n_test = 6
seed = 77
n_trees = 4
variants = ["podnn", "curl_dlrom", "spt_dlrom", "blackbox_l2", "blackbox_hdiv"]

[train]
epochs = 40

[architecture]
feature = "none"
pod_modes = 6
latent_dim = 4
podnn_hidden = [16]
phi_hidden = [8]
psi_hidden = [16]
encoder_hidden = []
blackbox_hidden = [16]
"#;
    let raw: conservrom_cli::RunConfig = toml::from_str(config).unwrap();
    let cfg = conservrom_cli::resolve(raw).unwrap();
    let run = |dir: &std::path::Path| {
        conservrom_cli::cmd_generate(&cfg, dir).unwrap();
        conservrom_cli::cmd_train(&cfg, dir).unwrap();
        conservrom_cli::cmd_evaluate(&cfg, dir, false).unwrap();
        conservrom_cli::cmd_report(&cfg, dir).unwrap();
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(a.path());
    run(b.path());
    for f in [
        "report/summary.tsv",
        "report/per_sample.csv",
        "report/residuals.csv",
        "report/report.tsv",
        "report/quartiles.tsv",
        "models/podnn.ckpt",
        "models/curl_dlrom.ckpt",
        "models/spt_dlrom.ckpt",
        "models/blackbox_l2.ckpt",
        "models/blackbox_hdiv.ckpt",
    ] {
        let bytes_a = std::fs::read(a.path().join(f)).unwrap();
        let bytes_b = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(bytes_a, bytes_b, "file {f} differs between identical runs");
    }
    println!("criterion 10 (end-to-end determinism): PASS");
}

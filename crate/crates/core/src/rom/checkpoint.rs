//! Model checkpoints: one file holding TOML metadata (layer dimensions,
//! activations, feature tag, hashes) followed by the weight/bias and
//! solver blobs in the repo binary matrix format.
//!
//! Layout: `u64` metadata length (little-endian), the metadata bytes, then
//! the blobs in the order listed by the metadata manifest. Writing is
//! deterministic, so retraining with one seed reproduces the file byte for
//! byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::OperatorSet;
use crate::fom::CaseTag;
use crate::kernelmaps::{KernelMap, PodBasis};
use crate::nn::{Activation, DenseNetwork, FeatureLayer, LayerSpec, NetShape, OutputTransform};
use crate::numerics::io;
use crate::numerics::DenseMatrix;
use crate::rom::{PressureMode, RomModel, RomNets, RomVariant};
use crate::tree::{solver_from_matrix, solver_to_matrix};

#[derive(Debug, Serialize, Deserialize)]
struct LayerMeta {
    n_in: usize,
    n_out: usize,
    activation: String,
    learnable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetMeta {
    name: String,
    feature: String,
    input_dim: usize,
    layers: Vec<LayerMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    variant: String,
    case: CaseTag,
    mesh_hash: String,
    pressure_mode: String,
    train_seed: u64,
    rng_algorithm: String,
    config_hash: Option<String>,
    pod_modes: Option<usize>,
    pod_truncation_energy: Option<f64>,
    nets: Vec<NetMeta>,
    /// Blob names in file order.
    blobs: Vec<String>,
}

fn net_meta(name: &str, net: &DenseNetwork) -> NetMeta {
    NetMeta {
        name: name.into(),
        feature: net.shape.feature.as_str().into(),
        input_dim: net.shape.input_dim,
        layers: net
            .shape
            .layers
            .iter()
            .map(|l| LayerMeta {
                n_in: l.n_in,
                n_out: l.n_out,
                activation: l.activation.as_str().into(),
                learnable: l.learnable,
            })
            .collect(),
    }
}

fn shape_from_meta(meta: &NetMeta) -> Result<NetShape> {
    let layers = meta
        .layers
        .iter()
        .map(|l| {
            Ok(LayerSpec {
                n_in: l.n_in,
                n_out: l.n_out,
                activation: Activation::parse(&l.activation)?,
                learnable: l.learnable,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NetShape::new(FeatureLayer::parse(&meta.feature)?, meta.input_dim, layers)
}

pub fn save_checkpoint(path: &Path, model: &RomModel) -> Result<()> {
    let nets: Vec<(&str, &DenseNetwork)> = match &model.nets {
        RomNets::Single(net) => vec![("net", net)],
        RomNets::LatentDecoder { phi, psi } => vec![("phi", phi), ("psi", psi)],
    };
    let mut blobs: Vec<String> = vec!["trees".into()];
    for (name, _) in &nets {
        blobs.push(format!("params_{name}"));
    }
    blobs.push("transform_scale".into());
    blobs.push("transform_shift".into());
    let pod = match &model.kernel {
        Some(KernelMap::Pod { basis, .. }) => {
            blobs.push("pod_basis".into());
            blobs.push("pod_eigenvalues".into());
            Some(basis.clone())
        }
        _ => None,
    };

    let meta = CheckpointMeta {
        variant: model.variant.as_str().into(),
        case: model.case,
        mesh_hash: model.mesh_hash.clone(),
        pressure_mode: model.pressure_mode.as_str().into(),
        train_seed: model.train_seed,
        rng_algorithm: crate::numerics::RNG_ALGORITHM.into(),
        config_hash: model.config_hash.clone(),
        pod_modes: pod.as_ref().map(|b| b.n),
        pod_truncation_energy: pod.as_ref().map(|b| b.truncation_energy),
        nets: nets.iter().map(|(n, net)| net_meta(n, net)).collect(),
        blobs,
    };
    let meta_toml = toml::to_string(&meta)
        .map_err(|e| Error::Format(format!("checkpoint metadata serialization: {e}")))?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(meta_toml.len() as u64).to_le_bytes())?;
    w.write_all(meta_toml.as_bytes())?;
    io::write_dense_to(&mut w, &solver_to_matrix(&model.solver))?;
    for (_, net) in &nets {
        io::write_vector_to(&mut w, &net.params)?;
    }
    io::write_vector_to(&mut w, &model.transform.scale)?;
    io::write_vector_to(&mut w, &model.transform.shift)?;
    if let Some(basis) = pod {
        io::write_dense_to(&mut w, &basis.v)?;
        io::write_vector_to(&mut w, &basis.eigenvalues)?;
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint and wire it to the given operators. The caller is
/// responsible for comparing `mesh_hash` against the active mesh.
pub fn load_checkpoint(path: &Path, ops: &Arc<OperatorSet>) -> Result<RomModel> {
    if !path.exists() {
        return Err(Error::MissingArtifact(format!("checkpoint {}", path.display())));
    }
    let mut r = BufReader::new(File::open(path)?);
    let mut len_buf = [0u8; 8];
    r.read_exact(&mut len_buf)?;
    let meta_len = u64::from_le_bytes(len_buf) as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)?;
    let meta: CheckpointMeta = toml::from_str(
        std::str::from_utf8(&meta_bytes)
            .map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?,
    )
    .map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?;

    let variant = RomVariant::parse(&meta.variant)?;
    let pressure_mode = PressureMode::parse(&meta.pressure_mode)?;

    let trees_matrix = io::read_dense_from(&mut r)?;
    let solver = Arc::new(solver_from_matrix(ops, &ops.mesh, &trees_matrix)?);

    let mut nets = Vec::with_capacity(meta.nets.len());
    for nm in &meta.nets {
        let shape = shape_from_meta(nm)?;
        let params = io::read_vector_from(&mut r)?;
        if params.len() != shape.n_params() {
            return Err(Error::Format(format!(
                "network `{}` parameter blob has {} values, shape wants {}",
                nm.name,
                params.len(),
                shape.n_params()
            )));
        }
        nets.push(DenseNetwork { shape, params });
    }
    let scale = io::read_vector_from(&mut r)?;
    let shift = io::read_vector_from(&mut r)?;
    let transform = OutputTransform { scale, shift };

    let kernel = match variant {
        RomVariant::PodNN => {
            let v: DenseMatrix = io::read_dense_from(&mut r)?;
            let eigenvalues = io::read_vector_from(&mut r)?;
            let n = meta.pod_modes.ok_or_else(|| {
                Error::Format("reduced-basis checkpoint lacks mode count".into())
            })?;
            let truncation_energy = meta.pod_truncation_energy.unwrap_or(0.0);
            Some(KernelMap::Pod {
                basis: Arc::new(PodBasis {
                    n,
                    v,
                    eigenvalues,
                    truncation_energy,
                }),
                ops: ops.clone(),
            })
        }
        RomVariant::CurlDlrom => Some(KernelMap::Curl { ops: ops.clone() }),
        RomVariant::SptDlrom => Some(KernelMap::Projection {
            ops: ops.clone(),
            solver: solver.clone(),
        }),
        RomVariant::BlackboxL2 | RomVariant::BlackboxHdiv => None,
    };

    let nets = match variant {
        RomVariant::CurlDlrom | RomVariant::SptDlrom => {
            let mut it = nets.into_iter();
            let phi = it.next().ok_or_else(|| {
                Error::Format("two-block checkpoint missing the latent map".into())
            })?;
            let psi = it
                .next()
                .ok_or_else(|| Error::Format("two-block checkpoint missing the decoder".into()))?;
            RomNets::LatentDecoder { phi, psi }
        }
        _ => {
            let net = nets
                .into_iter()
                .next()
                .ok_or_else(|| Error::Format("checkpoint holds no network".into()))?;
            RomNets::Single(net)
        }
    };

    Ok(RomModel {
        variant,
        case: meta.case,
        solver,
        kernel,
        nets,
        transform,
        mesh_hash: meta.mesh_hash,
        pressure_mode,
        train_seed: meta.train_seed,
        config_hash: meta.config_hash,
        ops: ops.clone(),
    })
}

//! Scene-level reconstruction driver: affine-depth rectification,
//! per-instance processing, background fitting and extraction, and final
//! scene assembly.

use nalgebra::Point3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{fit_background, BackgroundFit, FitParams, RaySampler, RaySupervisionParams};
use crate::mesh::{marching_cubes, merge_scene, sample_frustum_grid, MergedScene, TriangleMesh};
use crate::pipeline::{
    process_instance, CompletionConfig, InstanceOutcome, InstanceParams, ReconstructionConfig,
};
use crate::scene::{partition_entities, DepthKind, DepthMap, SceneManifest, ScaleShiftFit};

/// Background stage parameters.
#[derive(Debug, Clone)]
pub struct BackgroundParams {
    pub enabled: bool,
    pub fit: FitParams,
    pub sampling: RaySupervisionParams,
    /// Lattice resolution of the extraction grid (cubed).
    pub grid_res: usize,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        Self {
            enabled: true,
            fit: FitParams::default(),
            sampling: RaySupervisionParams::default(),
            grid_res: 256,
        }
    }
}

/// Full reconstruction parameters.
#[derive(Debug, Clone)]
pub struct ReconstructParams {
    pub instance: InstanceParams,
    pub completion: CompletionConfig,
    pub reconstruction: ReconstructionConfig,
    pub background: BackgroundParams,
}

impl Default for ReconstructParams {
    fn default() -> Self {
        Self {
            instance: InstanceParams::default(),
            completion: CompletionConfig::Identity,
            reconstruction: ReconstructionConfig::OracleManifest { cull_to_mask: false },
            background: BackgroundParams::default(),
        }
    }
}

/// Outcome of the background stage.
pub struct BackgroundOutcome {
    pub fit: BackgroundFit,
    pub vertices: usize,
    pub faces: usize,
}

/// A reconstructed scene with per-stage diagnostics.
pub struct SceneReconstruction {
    pub scene: MergedScene,
    pub instances: Vec<InstanceOutcome>,
    pub background: Option<BackgroundOutcome>,
    /// Recorded when the manifest's depth was affine and got rectified.
    pub depth_fit: Option<ScaleShiftFit>,
}

impl SceneReconstruction {
    pub fn skipped_count(&self) -> usize {
        self.instances.iter().filter(|i| i.skipped.is_some()).count()
    }
}

/// Rectifies affine depth against the metric anchor when needed.
pub fn effective_depth(manifest: &SceneManifest) -> Result<(DepthMap, Option<ScaleShiftFit>)> {
    match manifest.depth_kind {
        DepthKind::Metric => Ok((manifest.depth.clone(), None)),
        DepthKind::Affine => {
            let anchor = manifest.metric_anchor.as_ref().ok_or_else(|| Error::Ingest {
                path: "metric_anchor".to_string(),
                message: "affine depth requires a metric anchor to rectify against".to_string(),
            })?;
            let fit = crate::scene::fit_scale_shift(&manifest.depth, anchor)?;
            Ok((manifest.depth.affine_rectified(fit.scale, fit.shift), Some(fit)))
        }
    }
}

/// Reconstructs the whole scene: every thing instance through the hook
/// pipeline (in parallel), the background through SDF fitting and
/// marching-cubes extraction, merged with stable component order.
pub fn reconstruct_scene(
    manifest: &SceneManifest,
    params: &ReconstructParams,
) -> Result<SceneReconstruction> {
    let (depth, depth_fit) = effective_depth(manifest)?;
    let (things, stuff_union) = partition_entities(manifest);

    let instances: Vec<InstanceOutcome> = things
        .par_iter()
        .enumerate()
        .map(|(index, inst)| {
            let mut p = params.instance.clone();
            p.seed = params.instance.seed.wrapping_add(index as u64);
            process_instance(
                inst,
                &manifest.image,
                &depth,
                &manifest.camera,
                &params.completion,
                &params.reconstruction,
                &p,
            )
        })
        .collect();

    let mut parts: Vec<(String, TriangleMesh)> = Vec::new();
    for outcome in &instances {
        if let Some(mesh) = &outcome.mesh {
            parts.push((outcome.id.clone(), mesh.clone()));
        }
    }

    let mut background = None;
    if params.background.enabled && !stuff_union.is_empty() {
        match RaySampler::new(
            &stuff_union,
            &depth,
            &manifest.camera,
            &manifest.image,
            params.background.sampling,
        ) {
            Err(Error::NoBackground) => {}
            Err(e) => return Err(e),
            Ok(sampler) => {
                let fit = fit_background(&sampler, params.background.fit)?;
                let (lo, hi) = sampler.depth_range();
                let band = 2.0 * params.background.sampling.band;
                let near = (lo * (1.0 - band)).max(lo * 0.5).max(1e-6);
                let far = hi * (1.0 + band);
                let res = params.background.grid_res.max(2);
                let grid = sample_frustum_grid(
                    |pts| fit.sdf.forward(pts),
                    &manifest.camera,
                    near,
                    far,
                    (res, res, res),
                )?;
                let mut mesh = marching_cubes(&grid, 0.0);
                if !mesh.vertices.is_empty() {
                    let colors: Vec<[f32; 3]> = mesh
                        .vertices
                        .par_chunks(4096)
                        .map(|chunk| {
                            let pts: Vec<Point3<f64>> = chunk.to_vec();
                            let out = fit.color.forward(&pts);
                            out.chunks(3)
                                .map(|c| [c[0] as f32, c[1] as f32, c[2] as f32])
                                .collect::<Vec<_>>()
                        })
                        .flatten()
                        .collect();
                    mesh.vertex_colors = Some(colors);
                }
                background = Some(BackgroundOutcome {
                    vertices: mesh.vertices.len(),
                    faces: mesh.faces.len(),
                    fit,
                });
                if !mesh.faces.is_empty() {
                    parts.push(("background".to_string(), mesh));
                }
            }
        }
    }

    Ok(SceneReconstruction {
        scene: merge_scene(&parts),
        instances,
        background,
        depth_fit,
    })
}

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::frames::{par_map, thread_pool, write_json};
use crate::SynthArgs;
use lightkp::annotations::save_dataset;
use lightkp::imaging::save_png;
use lightkp::synth::{annotate, render_frame, SeparatedBlobs};

/// Marker file listing the scenes that form the validation split.
pub const VALIDATION_FILE: &str = "validation.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSplit {
    pub scenes: Vec<u64>,
}

pub fn run(cfg: &mut RunConfig, args: SynthArgs) -> anyhow::Result<()> {
    if let Some(out) = args.out {
        cfg.output = Some(out);
    }
    cfg.validate()?;
    let root = cfg.output()?.to_path_buf();
    let generator = SeparatedBlobs {
        width: args.width,
        height: args.height,
        frames: args.frames,
        blobs_per_frame: args.blobs,
        sigma: (args.sigma_min, args.sigma_max),
        amplitude: (args.amplitude_min, args.amplitude_max),
        indirect_probability: args.indirect_probability,
        separation: args.separation,
        noise_sigma: args.noise,
    };
    let validation = args.validation.unwrap_or(args.scenes);
    if validation > args.scenes {
        bail!(
            "validation split of {validation} scenes exceeds {} scenes",
            args.scenes
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scenes = (0..args.scenes)
        .map(|id| generator.generate(id, rng.random()))
        .collect::<lightkp::Result<Vec<_>>>()?;

    let work: Vec<(usize, usize)> = scenes
        .iter()
        .enumerate()
        .flat_map(|(s, scene)| (0..scene.frames.len()).map(move |f| (s, f)))
        .collect();
    let pool = thread_pool(cfg.jobs)?;
    par_map(&pool, &work, |&(s, f)| {
        let scene = &scenes[s];
        let img = render_frame(scene, f)?;
        let path = root.join(scene.image_name(f as u64));
        std::fs::create_dir_all(path.parent().expect("image path has a parent"))
            .with_context(|| format!("creating directory for {}", path.display()))?;
        save_png(&img, &path)?;
        Ok(())
    })?;

    let annotations: Vec<_> = scenes.iter().map(annotate).collect();
    save_dataset(&annotations, &root)?;
    write_json(&root.join("synth.json"), &scenes)?;
    write_json(
        &root.join(VALIDATION_FILE),
        &ValidationSplit {
            scenes: (0..validation).collect(),
        },
    )?;
    println!(
        "wrote {} scenes, {} frames to {}",
        scenes.len(),
        work.len(),
        root.display()
    );
    Ok(())
}

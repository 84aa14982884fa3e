use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::write_many;
use crate::SynthArgs;
use twinlab_core::data::{embeddings_to_csv, patterns_to_json, synth_generate, traits_to_csv};

pub fn synth(mut run: RunConfig, args: SynthArgs) -> Result<(), CliError> {
    let s = &mut run.synth;
    if let Some(v) = args.users {
        s.n_users = v;
    }
    if let Some(v) = args.questions {
        s.n_questions = v;
    }
    if let Some(v) = args.embed_dim {
        s.embed_dim = v;
    }
    if let Some(v) = args.traits {
        s.n_traits = v;
    }
    if let Some(v) = args.extremity_trait_index {
        s.extremity_trait_index = v;
    }
    if let Some(v) = args.trait_effect {
        s.trait_effect = v;
    }
    if let Some(v) = args.noise_sd {
        s.noise_sd = v;
    }

    let ds = synth_generate(&run.synth, run.seed)?;
    let patterns = ds.patterns.as_ref().expect("generator emits patterns");
    let traits = ds
        .ground_truth_traits
        .as_ref()
        .expect("generator emits traits");
    let files = [
        (
            "embeddings.csv",
            embeddings_to_csv(&ds.user_ids, &ds.embeddings).into_bytes(),
        ),
        ("patterns.json", patterns_to_json(patterns).into_bytes()),
        (
            "traits.csv",
            traits_to_csv(&ds.user_ids, traits).into_bytes(),
        ),
    ];
    super::announce(&write_many(&run.out, &files)?);
    Ok(())
}

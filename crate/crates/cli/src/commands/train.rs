use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::write_many;
use crate::TrainArgs;
use twinlab_core::data::{ingest_embeddings, standardize, train_val_split, UserDataset};
use twinlab_core::vae;

pub fn train(mut run: RunConfig, args: TrainArgs) -> Result<(), CliError> {
    let data = super::embeddings_path(&run, args.data)?;
    if let Some(m) = args.model {
        run.variant = m.into();
    }
    let c = &mut run.vae;
    if let Some(v) = args.latent_dim {
        c.latent_dim = v;
    }
    if let Some(v) = args.beta {
        c.beta = v;
    }
    if let Some(v) = args.epochs {
        c.epochs = v;
    }
    if let Some(v) = args.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = args.lr {
        c.learning_rate = v;
    }
    if let Some(v) = args.hier_top_dim {
        c.hier_top_dim = v;
    }

    let (ids, x) = ingest_embeddings(&data)?;
    let mut ds = UserDataset::new(ids, x)?;
    // The model width always follows the data.
    run.vae.input_dim = ds.embed_dim();

    let standardizer = if args.no_standardize {
        None
    } else {
        let (xs, s) = standardize(&ds.embeddings)?;
        ds.embeddings = xs;
        if !s.degenerate.is_empty() {
            eprintln!(
                "warning: {} constant embedding column(s) carry no information and were zeroed",
                s.degenerate.len()
            );
        }
        Some(s)
    };

    let (train_ds, val_ds) = train_val_split(&ds, args.val_fraction, run.seed)?;
    let (mut params, trace) = vae::train(
        &run.vae,
        run.variant,
        run.seed,
        &train_ds.embeddings,
        &val_ds.embeddings,
    )?;
    params.standardizer = standardizer;

    let files = [
        ("model.ckpt", vae::to_bytes(&params)?),
        ("trace.csv", trace.to_csv().into_bytes()),
        ("per_dim_kl.csv", trace.per_dim_kl_csv().into_bytes()),
    ];
    super::announce(&write_many(&run.out, &files)?);
    Ok(())
}

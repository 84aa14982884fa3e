use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::write_atomic;
use crate::EvalArgs;
use twinlab_core::vae;

pub fn eval(run: RunConfig, args: EvalArgs) -> Result<(), CliError> {
    let ckpt = super::checkpoint_path(&run, args.checkpoint);
    let params = super::load_checkpoint(&ckpt)?;
    let data = super::embeddings_path(&run, args.data)?;
    let ds = super::load_inputs(&data, None)?;
    let metrics = vae::evaluate(&params, &ds)?;
    let mut json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    json.push('\n');
    let path = run.out.join("eval.json");
    write_atomic(&path, json.as_bytes())?;
    super::announce(std::slice::from_ref(&path));
    Ok(())
}

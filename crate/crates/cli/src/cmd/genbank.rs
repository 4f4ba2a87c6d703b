use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use faithtrace_conceptgen::{
    attach_embeddings, generate_bank, ChatBackend, GenConfig, GeneratedBank, GeneratedConcept, HttpChatClient,
    HttpConfig, MockScript,
};
use faithtrace_core::modelio::{read_json, write_bank, write_json};
use serde::{Deserialize, Serialize};

use crate::exit::usage;
use crate::manifest::{beside, ManifestBuilder};

/// Environment variable holding the endpoint API key.
pub const API_KEY_ENV: &str = "FAITHTRACE_API_KEY";

#[derive(clap::Args, Debug)]
pub struct GenArgs {
    /// Class name the concepts should describe.
    #[arg(long)]
    class_name: String,
    /// Image for the VLM phase (sent as a base64 attachment).
    #[arg(long)]
    image: Option<PathBuf>,
    /// OpenAI-compatible base URL.
    #[arg(long, required_unless_present = "mock_script")]
    endpoint: Option<String>,
    #[arg(long, default_value = "gpt-3.5-turbo")]
    model: String,
    /// JSON array of canned responses used instead of the endpoint.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    llm_count: usize,
    #[arg(long, default_value_t = 30)]
    vlm_count: usize,
    #[arg(long, default_value_t = 10)]
    batch_size: usize,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    /// Generated concepts with generation metadata.
    #[arg(long)]
    out: PathBuf,
    /// Precomputed text embeddings, one row per kept concept (FTM1).
    #[arg(long, requires = "bank_out")]
    embeddings: Option<PathBuf>,
    /// Concept bank written when --embeddings is given.
    #[arg(long, requires = "embeddings")]
    bank_out: Option<PathBuf>,
    #[arg(long)]
    sample_id: Option<String>,
}

#[derive(clap::Args, Debug)]
pub struct AttachArgs {
    /// Output of `gen-bank --out`.
    #[arg(long)]
    concepts: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    sample_id: Option<String>,
}

/// Contents of `gen-bank --out`.
#[derive(Serialize, Deserialize)]
struct ConceptsFile {
    #[serde(flatten)]
    bank: GeneratedBank,
    model: String,
    /// Sampling parameters sent with each request.
    decoding: String,
}

#[derive(Serialize)]
struct GenConfigEcho<'a> {
    class_name: &'a str,
    endpoint: Option<&'a str>,
    model: &'a str,
    mock: bool,
    llm_target_count: usize,
    vlm_target_count: usize,
    batch_size: usize,
    max_retries: u32,
    timeout_secs: u64,
}

pub fn run_gen(a: GenArgs) -> Result<()> {
    if a.class_name.trim().is_empty() {
        return Err(usage("--class-name is empty"));
    }
    let cfg = GenConfig {
        llm_target_count: a.llm_count,
        vlm_target_count: a.vlm_count,
        batch_size: a.batch_size,
        ..Default::default()
    };
    cfg.validate()?;
    let mut manifest = ManifestBuilder::start(
        "gen-bank",
        GenConfigEcho {
            class_name: &a.class_name,
            endpoint: a.endpoint.as_deref(),
            model: &a.model,
            mock: a.mock_script.is_some(),
            llm_target_count: a.llm_count,
            vlm_target_count: a.vlm_count,
            batch_size: a.batch_size,
            max_retries: a.max_retries,
            timeout_secs: a.timeout_secs,
        },
    )?;
    if let Some(img) = &a.image {
        manifest.input("image", img);
    }

    let mut backend: Box<dyn ChatBackend> = match (&a.mock_script, &a.endpoint) {
        (Some(script), _) => {
            manifest.input("mock_script", script);
            Box::new(MockScript::from_file(script)?)
        }
        (None, Some(endpoint)) => Box::new(HttpChatClient::new(HttpConfig {
            endpoint_url: endpoint.clone(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            model_name: a.model.clone(),
            max_retries: a.max_retries,
            timeout: Duration::from_secs(a.timeout_secs),
            backoff_base: Duration::from_millis(500),
        })?),
        (None, None) => return Err(usage("either --endpoint or --mock-script is required")),
    };

    let generated = generate_bank(&cfg, backend.as_mut(), &a.class_name, a.image.clone())?;
    for w in &generated.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "kept {} concepts in {} rounds ({} requests)",
        generated.concepts.len(),
        generated.rounds,
        generated.requests
    );
    manifest.result("concepts", generated.concepts.len())?;
    manifest.result("rounds", generated.rounds)?;
    manifest.result("requests", generated.requests)?;
    manifest.result("stalled", generated.stalled)?;

    if let (Some(emb), Some(bank_out)) = (&a.embeddings, &a.bank_out) {
        let bank = attach_embeddings(&generated.concepts, emb, None, &a.class_name, a.sample_id.clone())?;
        write_bank(bank_out, &bank)?;
        manifest.input("embeddings", emb).output("bank", bank_out);
    }
    let file = ConceptsFile {
        bank: generated,
        model: if a.mock_script.is_some() {
            "mock".into()
        } else {
            a.model.clone()
        },
        decoding: "endpoint defaults".into(),
    };
    write_json(&a.out, &file)?;
    manifest.output("concepts", &a.out);
    manifest.finish(&beside(&a.out))?;
    Ok(())
}

pub fn run_attach(a: AttachArgs) -> Result<()> {
    let file: ConceptsFile =
        read_json(&a.concepts).with_context(|| format!("reading concepts {}", a.concepts.display()))?;
    let mut manifest = ManifestBuilder::start("attach-embeddings", serde_json::json!({}))?;
    manifest
        .input("concepts", &a.concepts)
        .input("embeddings", &a.embeddings);
    let concepts: &[GeneratedConcept] = &file.bank.concepts;
    let bank = attach_embeddings(
        concepts,
        &a.embeddings,
        None,
        &file.bank.class_name,
        a.sample_id.clone(),
    )?;
    write_bank(&a.out, &bank)?;
    println!("wrote {} concepts to {}", bank.len(), a.out.display());
    manifest.output("bank", &a.out);
    manifest.finish(&beside(&a.out))?;
    Ok(())
}

//! Command-line front end: `stats`, `train`, `eval`, `predict`, and
//! `dump-attention`, plus the flat `key = value` run configuration.
//!
//! Exit codes: 0 success, 2 usage or configuration problems, 3 checkpoint
//! incompatibilities, 4 input-content errors.

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{
    build_vocab, dataset_stats, encode_corpus, load_annotations, tokenize, DatasetFormat, Example,
    Polarity, Vocab,
};
use crate::error::Error;
use crate::lcf::LcfMode;
use crate::metrics::evaluate;
use crate::model::{build, parse_kv_lines, DebertaLcfModel, ModelConfig};
use crate::rng::Rng;
use crate::tensor::Tape;
use crate::train::{train, TrainConfig};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CHECKPOINT: i32 = 3;
pub const EXIT_CONTENT: i32 = 4;

/// A failure carrying the process exit code it should produce.
#[derive(Debug)]
pub struct CmdError {
    pub code: i32,
    pub message: String,
}

type CmdResult<T> = std::result::Result<T, CmdError>;

fn usage_err(message: impl Into<String>) -> CmdError {
    CmdError { code: EXIT_USAGE, message: message.into() }
}

impl From<Error> for CmdError {
    fn from(e: Error) -> CmdError {
        let code = match &e {
            Error::Io(_) | Error::Config(_) => EXIT_USAGE,
            Error::Checkpoint { .. } => EXIT_CHECKPOINT,
            _ => EXIT_CONTENT,
        };
        CmdError { code, message: e.to_string() }
    }
}

// ── Run configuration ────────────────────────────────────────────────

/// Everything a training run needs, with defaults for every field except
/// the dataset path. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train_path: PathBuf,
    pub train_format: DatasetFormat,
    pub min_count: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_rel_distance: usize,
    pub dropout: f64,
    pub alpha: usize,
    pub mode: LcfMode,
    pub p2p: bool,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub patience: Option<usize>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> crate::error::Result<RunConfig> {
        let mut cfg = RunConfig {
            train_path: PathBuf::new(),
            train_format: DatasetFormat::Semeval,
            min_count: 1,
            layers: 2,
            heads: 2,
            d_model: 32,
            d_ff: 64,
            max_rel_distance: 8,
            dropout: 0.1,
            alpha: 5,
            mode: LcfMode::Cdm,
            p2p: false,
            seed: 42,
            epochs: 20,
            batch_size: 16,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            patience: None,
            out_dir: PathBuf::from("train-out"),
        };
        for (key, value) in parse_kv_lines(text)? {
            let bad = |what: &str| {
                Error::Config(format!("{key}: {value:?} is not a valid {what}"))
            };
            match key.as_str() {
                "train_path" => cfg.train_path = PathBuf::from(&value),
                "train_format" => cfg.train_format = DatasetFormat::from_name(&value)?,
                "min_count" => cfg.min_count = value.parse().map_err(|_| bad("count"))?,
                "layers" => cfg.layers = value.parse().map_err(|_| bad("count"))?,
                "heads" => cfg.heads = value.parse().map_err(|_| bad("count"))?,
                "d_model" => cfg.d_model = value.parse().map_err(|_| bad("dimension"))?,
                "d_ff" => cfg.d_ff = value.parse().map_err(|_| bad("dimension"))?,
                "max_rel_distance" => {
                    cfg.max_rel_distance = value.parse().map_err(|_| bad("distance"))?
                }
                "dropout" => cfg.dropout = value.parse().map_err(|_| bad("probability"))?,
                "alpha" => cfg.alpha = value.parse().map_err(|_| bad("threshold"))?,
                "mode" => {
                    cfg.mode = match value.as_str() {
                        "cdm" => LcfMode::Cdm,
                        "cdw" => LcfMode::Cdw,
                        _ => return Err(bad("mode (cdm or cdw)")),
                    }
                }
                "p2p" => cfg.p2p = value.parse().map_err(|_| bad("flag"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "epochs" => cfg.epochs = value.parse().map_err(|_| bad("count"))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("count"))?,
                "lr" => cfg.lr = value.parse().map_err(|_| bad("rate"))?,
                "beta1" => cfg.beta1 = value.parse().map_err(|_| bad("beta"))?,
                "beta2" => cfg.beta2 = value.parse().map_err(|_| bad("beta"))?,
                "eps" => cfg.eps = value.parse().map_err(|_| bad("epsilon"))?,
                "weight_decay" => cfg.weight_decay = value.parse().map_err(|_| bad("decay"))?,
                "patience" => {
                    cfg.patience = if value.is_empty() {
                        None
                    } else {
                        Some(value.parse().map_err(|_| bad("count"))?)
                    }
                }
                "out_dir" => cfg.out_dir = PathBuf::from(&value),
                other => return Err(Error::Config(format!("unknown key {other}"))),
            }
        }
        if cfg.train_path.as_os_str().is_empty() {
            return Err(Error::Config("train_path is required".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> crate::error::Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg = RunConfig::parse(&text)?;
        if !cfg.train_path.exists() {
            return Err(Error::Config(format!(
                "train_path {} does not exist",
                cfg.train_path.display()
            )));
        }
        Ok(cfg)
    }

    /// Serialization that reproduces this configuration exactly when fed
    /// back through [`RunConfig::parse`].
    pub fn to_kv_string(&self) -> String {
        let format = match self.train_format {
            DatasetFormat::Semeval => "semeval",
            DatasetFormat::Twitter => "twitter",
        };
        let mode = match self.mode {
            LcfMode::Cdm => "cdm",
            LcfMode::Cdw => "cdw",
        };
        let patience = self.patience.map(|p| p.to_string()).unwrap_or_default();
        format!(
            "train_path = {}\ntrain_format = {format}\nmin_count = {}\n\
             layers = {}\nheads = {}\nd_model = {}\nd_ff = {}\nmax_rel_distance = {}\n\
             dropout = {}\nalpha = {}\nmode = {mode}\np2p = {}\nseed = {}\n\
             epochs = {}\nbatch_size = {}\nlr = {}\nbeta1 = {}\nbeta2 = {}\neps = {}\n\
             weight_decay = {}\npatience = {patience}\nout_dir = {}\n",
            self.train_path.display(),
            self.min_count,
            self.layers,
            self.heads,
            self.d_model,
            self.d_ff,
            self.max_rel_distance,
            self.dropout,
            self.alpha,
            self.p2p,
            self.seed,
            self.epochs,
            self.batch_size,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
            self.weight_decay,
            self.out_dir.display(),
        )
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            heads: self.heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            max_rel_distance: self.max_rel_distance,
            vocab_size,
            dropout: self.dropout,
            alpha: self.alpha,
            mode: self.mode,
            use_p2p: self.p2p,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
            seed: self.seed,
            patience: self.patience,
        }
    }
}

// ── Flag parsing ─────────────────────────────────────────────────────

fn parse_flags(args: &[String], allowed: &[&str]) -> CmdResult<HashMap<String, String>> {
    let mut flags = HashMap::new();
    let mut i = 0;
    while i < args.len() {
        let Some(name) = args[i].strip_prefix("--") else {
            return Err(usage_err(format!("unexpected argument {}", args[i])));
        };
        if !allowed.contains(&name) {
            return Err(usage_err(format!("unknown flag --{name}")));
        }
        let Some(value) = args.get(i + 1) else {
            return Err(usage_err(format!("flag --{name} needs a value")));
        };
        if flags.insert(name.to_string(), value.clone()).is_some() {
            return Err(usage_err(format!("flag --{name} given twice")));
        }
        i += 2;
    }
    Ok(flags)
}

fn required<'a>(flags: &'a HashMap<String, String>, name: &str) -> CmdResult<&'a str> {
    flags
        .get(name)
        .map(String::as_str)
        .ok_or_else(|| usage_err(format!("missing required flag --{name}")))
}

fn read_dataset(path: &str, format: &str) -> CmdResult<Vec<crate::data::RawAnnotation>> {
    let format = DatasetFormat::from_name(format)?;
    let path = Path::new(path);
    if !path.exists() {
        return Err(usage_err(format!("dataset {} does not exist", path.display())));
    }
    Ok(load_annotations(path, format)?)
}

// ── Commands ─────────────────────────────────────────────────────────

fn cmd_stats(flags: HashMap<String, String>) -> CmdResult<String> {
    let annotations = read_dataset(required(&flags, "dataset")?, required(&flags, "format")?)?;
    let counts = dataset_stats(&annotations);
    Ok(format!(
        "positive {}\nnegative {}\nneutral {}\ntotal {}\n",
        counts.positive,
        counts.negative,
        counts.neutral,
        counts.total()
    ))
}

fn cmd_train(flags: HashMap<String, String>) -> CmdResult<String> {
    let config_path = PathBuf::from(required(&flags, "config")?);
    let cfg = RunConfig::load(&config_path)?;
    let annotations = load_annotations(&cfg.train_path, cfg.train_format)?;
    let vocab = build_vocab(&annotations, cfg.min_count);
    let examples = encode_corpus(&annotations, &vocab)?;
    let model = build(&cfg.model_config(vocab.len()))?;
    let outcome = train(model, &examples, &cfg.train_config())?;

    std::fs::create_dir_all(&cfg.out_dir).map_err(Error::Io)?;
    let ckpt_path = cfg.out_dir.join("model.ckpt");
    save_checkpoint(&outcome.model, &vocab, &ckpt_path)?;

    let mut history = String::from("epoch,loss,train_acc,val_macro_f1\n");
    for h in &outcome.history {
        let _ = writeln!(
            history,
            "{},{},{},{}",
            h.epoch, h.mean_loss, h.train_accuracy, h.val_macro_f1
        );
    }
    std::fs::write(cfg.out_dir.join("history.csv"), &history).map_err(Error::Io)?;
    std::fs::write(cfg.out_dir.join("config.resolved"), cfg.to_kv_string()).map_err(Error::Io)?;

    let last = outcome.history.last().unwrap();
    Ok(format!(
        "examples {}\nepochs_run {}\nbest_epoch {}\nbest_val_macro_f1 {:.4}\n\
         final_loss {:.6}\nfinal_train_acc {:.4}\ncheckpoint {}\n",
        examples.len(),
        outcome.history.len(),
        outcome.best_epoch,
        outcome.best_val_macro_f1,
        last.mean_loss,
        last.train_accuracy,
        ckpt_path.display()
    ))
}

fn load_ckpt(path: &str) -> CmdResult<(DebertaLcfModel, Vocab)> {
    let path = Path::new(path);
    if !path.exists() {
        return Err(usage_err(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(load_checkpoint(path)?)
}

fn cmd_eval(flags: HashMap<String, String>) -> CmdResult<String> {
    let (model, vocab) = load_ckpt(required(&flags, "ckpt")?)?;
    let annotations = read_dataset(required(&flags, "dataset")?, required(&flags, "format")?)?;
    let examples = encode_corpus(&annotations, &vocab)?;
    if examples.is_empty() {
        return Err(CmdError {
            code: EXIT_CONTENT,
            message: "dataset has no usable examples".into(),
        });
    }
    let metrics = evaluate(&model, &examples)?;
    let mut out = metrics.to_kv_lines();
    out.push_str("confusion_rows_true_cols_pred");
    for row in metrics.confusion {
        let _ = write!(out, " {}:{}:{}", row[0], row[1], row[2]);
    }
    out.push('\n');
    Ok(out)
}

/// Locate the aspect in the text (case-insensitive, first occurrence) and
/// build the encoded example for it.
fn example_for_text(text: &str, aspect: &str, vocab: &Vocab) -> CmdResult<(Example, usize)> {
    if aspect.is_empty() {
        return Err(usage_err("aspect must not be empty"));
    }
    let chars: Vec<char> = text.chars().collect();
    let lower: Vec<char> = text.to_lowercase().chars().collect();
    let needle: Vec<char> = aspect.to_lowercase().chars().collect();
    let mut occurrences = Vec::new();
    if lower.len() == chars.len() && needle.len() <= lower.len() {
        for start in 0..=(lower.len() - needle.len()) {
            if lower[start..start + needle.len()] == needle[..] {
                occurrences.push(start);
            }
        }
    }
    let Some(&char_from) = occurrences.first() else {
        return Err(CmdError {
            code: EXIT_CONTENT,
            message: format!("aspect {aspect:?} does not occur in the text"),
        });
    };
    let char_to = char_from + needle.len();
    let tokens = tokenize(text);
    let span = crate::data::char_span_to_token_span(&tokens, char_from, char_to)
        .map_err(CmdError::from)?;
    let ids = vocab.encode(tokens.iter().map(|t| t.text.as_str()));
    Ok((
        Example { tokens: ids, span, label: Polarity::Neutral },
        occurrences.len(),
    ))
}

fn cmd_predict(flags: HashMap<String, String>) -> CmdResult<String> {
    let (model, vocab) = load_ckpt(required(&flags, "ckpt")?)?;
    let text = required(&flags, "text")?;
    let aspect = required(&flags, "aspect")?;
    let (example, occurrences) = example_for_text(text, aspect, &vocab)?;
    let (label, probs) = model.predict(&example)?;
    let mut out = String::new();
    if occurrences > 1 {
        let _ = writeln!(
            out,
            "note: aspect occurs {occurrences} times; using the first occurrence at chars [{}, {})",
            example.span.char_from, example.span.char_to
        );
    }
    let _ = writeln!(out, "polarity {}", label.as_str());
    for (i, p) in probs.iter().enumerate() {
        let _ = writeln!(out, "p_{} {:.6}", Polarity::from_index(i).unwrap().as_str(), p);
    }
    Ok(out)
}

fn write_matrix_csv(path: &Path, t: &crate::tensor::Tensor) -> CmdResult<()> {
    let (rows, cols) = t.dims2().expect("attention matrices are 2-D");
    let mut out = String::new();
    for i in 0..rows {
        for j in 0..cols {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", t.data[i * cols + j]);
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CmdError::from(Error::Io(e)))
}

fn cmd_dump_attention(flags: HashMap<String, String>) -> CmdResult<String> {
    let (model, vocab) = load_ckpt(required(&flags, "ckpt")?)?;
    let text = required(&flags, "text")?;
    let aspect = required(&flags, "aspect")?;
    let out_dir = PathBuf::from(required(&flags, "out")?);
    let (example, _) = example_for_text(text, aspect, &vocab)?;

    let batch = crate::data::batch_of(std::slice::from_ref(&example));
    let mut tape = Tape::new();
    let mut rng = Rng::new(0);
    let (_, trace) = model
        .forward_traced(&mut tape, &batch, &mut rng)
        .map_err(CmdError::from)?;

    std::fs::create_dir_all(&out_dir).map_err(Error::Io)?;
    let mut written = Vec::new();
    for (l, heads) in trace.global_attn.iter().enumerate() {
        for (h, w) in heads.iter().enumerate() {
            let path = out_dir.join(format!("global_l{l}_h{h}.csv"));
            write_matrix_csv(&path, w)?;
            written.push(path);
        }
    }
    for (l, heads) in trace.local_attn.iter().enumerate() {
        for (h, w) in heads.iter().enumerate() {
            let path = out_dir.join(format!("local_l{l}_h{h}.csv"));
            write_matrix_csv(&path, w)?;
            written.push(path);
        }
    }
    for (h, w) in trace.fusion_attn.iter().enumerate() {
        let path = out_dir.join(format!("fusion_h{h}.csv"));
        write_matrix_csv(&path, w)?;
        written.push(path);
    }

    // local-sequence labels for the per-token vectors
    let local_ids: Vec<usize> = batch.tokens[0][..trace.local_len].to_vec();
    let labels = vocab.decode(&local_ids);
    let mut srd_csv = String::from("index,token,srd\n");
    for (i, &s) in trace.srd.values.iter().enumerate() {
        let _ = writeln!(srd_csv, "{i},{},{s}", labels[i]);
    }
    let srd_path = out_dir.join("srd.csv");
    std::fs::write(&srd_path, srd_csv).map_err(Error::Io)?;
    written.push(srd_path);

    let mut lcf_csv = String::from("index,token,weight\n");
    for (i, &w) in trace.lcf_weights.iter().enumerate() {
        let _ = writeln!(lcf_csv, "{i},{},{w}", labels[i]);
    }
    let lcf_path = out_dir.join("lcf_weights.csv");
    std::fs::write(&lcf_path, lcf_csv).map_err(Error::Io)?;
    written.push(lcf_path);

    Ok(format!("wrote {} files to {}\n", written.len(), out_dir.display()))
}

// ── Entry point ──────────────────────────────────────────────────────

pub const USAGE: &str = "usage: deberta-lcf <command> [flags]

commands:
  stats          --dataset PATH --format semeval|twitter
  train          --config PATH
  eval           --ckpt PATH --dataset PATH --format semeval|twitter
  predict        --ckpt PATH --text STRING --aspect STRING
  dump-attention --ckpt PATH --text STRING --aspect STRING --out DIR
";

/// Dispatch a command line (without the program name). Prints the
/// command's output to stdout or its error to stderr, and returns the
/// process exit code.
pub fn run(args: &[String]) -> i32 {
    let Some(verb) = args.first() else {
        eprint!("{USAGE}");
        return EXIT_USAGE;
    };
    let rest = &args[1..];
    let result = match verb.as_str() {
        "stats" => parse_flags(rest, &["dataset", "format"]).and_then(cmd_stats),
        "train" => parse_flags(rest, &["config"]).and_then(cmd_train),
        "eval" => parse_flags(rest, &["ckpt", "dataset", "format"]).and_then(cmd_eval),
        "predict" => parse_flags(rest, &["ckpt", "text", "aspect"]).and_then(cmd_predict),
        "dump-attention" => {
            parse_flags(rest, &["ckpt", "text", "aspect", "out"]).and_then(cmd_dump_attention)
        }
        "--help" | "help" => {
            print!("{USAGE}");
            return EXIT_OK;
        }
        other => Err(usage_err(format!("unknown command {other}\n{USAGE}"))),
    };
    match result {
        Ok(output) => {
            print!("{output}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

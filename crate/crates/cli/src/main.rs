use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use asop_core::attention::{format_attention, DistanceMode};
use asop_core::autodiff::Fault;
use asop_core::data::{read_conll, write_conll, Sentence};
use asop_core::embeddings::{load_pretrained, read_dimension, FeatureConfig};
use asop_core::gradcheck::{self, CheckSize};
use asop_core::labeler::{label_sentence, Lexicon, SeedWords};
use asop_core::optim::LrSchedule;
use asop_core::persist::{load_model, save_model};
use asop_core::trainer::StopMetric;
use asop_core::{evaluate, train, Error, Model, ModelConfig, TrainConfig, Variant, Vocabs};

#[derive(Parser)]
#[command(name = "asop", version, about = "Aspect-specific opinion expression tagger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label a corpus with the rule-based heuristics.
    WeakLabel(WeakLabelArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Tag a corpus with a trained model.
    Tag(TagArgs),
    /// Score predicted labels against gold labels.
    Eval(EvalArgs),
    /// Compare analytic gradients with finite differences on a tiny model.
    GradCheck(GradCheckArgs),
    /// Print per-token attention weights.
    DumpAttention(DumpArgs),
}

#[derive(Args)]
struct WeakLabelArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    seeds: PathBuf,
    #[arg(long)]
    pos_lex: PathBuf,
    #[arg(long)]
    neg_lex: PathBuf,
    #[arg(long)]
    negators: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    LstmAttCrf,
    LstmCrf,
    LstmAtt,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    InverseTime,
    Exponential,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Accuracy,
    F1,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistanceArg {
    Absolute,
    Between,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long, value_enum, default_value = "lstm-att-crf")]
    variant: VariantArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Expected word-vector width; checked against the embedding file.
    #[arg(long)]
    word_dim: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    lr0: f64,
    #[arg(long, default_value_t = 0.05)]
    decay: f64,
    #[arg(long, value_enum, default_value = "inverse-time")]
    schedule: ScheduleArg,
    #[arg(long, default_value_t = 5.0)]
    clip: f64,
    #[arg(long, default_value_t = 0.5)]
    keep_prob: f64,
    #[arg(long, default_value_t = 10)]
    batch_size: usize,
    #[arg(long, default_value_t = 50)]
    max_len: usize,
    /// Hidden units per LSTM direction.
    #[arg(long, default_value_t = 100)]
    hidden: usize,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    /// Run every epoch instead of stopping on a validation plateau.
    #[arg(long)]
    no_early_stopping: bool,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, value_enum, default_value = "accuracy")]
    stop_metric: MetricArg,
    #[arg(long, default_value_t = 25)]
    pos_dim: usize,
    #[arg(long, default_value_t = 25)]
    chunk_dim: usize,
    #[arg(long)]
    no_pos: bool,
    #[arg(long)]
    no_chunk: bool,
    #[arg(long, value_enum, default_value = "absolute")]
    distance: DistanceArg,
    /// Scale attention weights by sentence length.
    #[arg(long)]
    rescale_attention: bool,
    /// Keep pretrained word vectors fixed.
    #[arg(long)]
    freeze_embeddings: bool,
}

#[derive(Args)]
struct TagArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Embedding file whose width must match the model.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SizeArg {
    Tiny,
    Small,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Tanh,
    Sigmoid,
    Matmul,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "tiny")]
    size: SizeArg,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultArg>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
}

enum Failure {
    /// A check ran and did not pass.
    Check(String),
    Usage(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::WeakLabel(a) => weak_label(a),
        Command::Train(a) => run_train(a),
        Command::Tag(a) => tag(a),
        Command::Eval(a) => eval(a),
        Command::GradCheck(a) => grad_check(a),
        Command::DumpAttention(a) => dump_attention(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn weak_label(a: WeakLabelArgs) -> CmdResult {
    let seeds = SeedWords::load(&a.seeds)?;
    let lex = Lexicon::load(&a.pos_lex, &a.neg_lex, a.negators.as_deref())?;
    let input = read_conll(&a.input)?;
    let mut out = Vec::new();
    let mut spans = 0;
    for s in &input {
        let l = label_sentence(s, &seeds, &lex);
        if !l.skipped() {
            spans += l.spans.len();
            out.push(l.sentence);
        }
    }
    write_conll(&out, &a.output)?;
    println!("sentences_in={} sentences_out={} spans={}", input.len(), out.len(), spans);
    Ok(())
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        lr0: a.lr0,
        decay: a.decay,
        schedule: match a.schedule {
            ScheduleArg::InverseTime => LrSchedule::InverseTime,
            ScheduleArg::Exponential => LrSchedule::Exponential,
        },
        clip: a.clip,
        keep_prob: a.keep_prob,
        batch_size: a.batch_size,
        max_len: a.max_len,
        patience: a.patience,
        early_stopping: !a.no_early_stopping,
        max_epochs: a.max_epochs,
        stop_metric: match a.stop_metric {
            MetricArg::Accuracy => StopMetric::TokenAccuracy,
            MetricArg::F1 => StopMetric::F1,
        },
    }
}

fn run_train(a: TrainArgs) -> CmdResult {
    let cfg = train_config(&a);
    cfg.validate()?;
    let word_dim = read_dimension(&a.embeddings)?;
    if let Some(d) = a.word_dim {
        if d != word_dim {
            return Err(Error::Config(format!(
                "--word-dim {d} does not match the {word_dim}-dimensional vectors in {}",
                a.embeddings.display()
            ))
            .into());
        }
    }
    let model_cfg = ModelConfig {
        variant: match a.variant {
            VariantArg::LstmAttCrf => Variant::LstmAttCrf,
            VariantArg::LstmCrf => Variant::LstmCrf,
            VariantArg::LstmAtt => Variant::LstmAtt,
        },
        word_dim,
        hidden: a.hidden,
        layers: a.layers,
        features: FeatureConfig {
            use_pos: !a.no_pos,
            use_chunk: !a.no_chunk,
            pos_dim: a.pos_dim,
            chunk_dim: a.chunk_dim,
        },
        distance: match a.distance {
            DistanceArg::Absolute => DistanceMode::Absolute,
            DistanceArg::Between => DistanceMode::Between,
        },
        rescale_attention: a.rescale_attention,
    };
    model_cfg.validate()?;

    let train_set = read_conll(&a.train)?;
    let dev_set = read_conll(&a.dev)?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Config("training and validation sets must be nonempty".into()).into());
    }
    eprintln!(
        "config variant={} lr0={} decay={} clip={} keep={} batch={} d={} layers={} maxlen={} patience={} max_epochs={} seed={}",
        model_cfg.variant,
        cfg.lr0,
        cfg.decay,
        cfg.clip,
        cfg.keep_prob,
        cfg.batch_size,
        model_cfg.hidden,
        model_cfg.layers,
        cfg.max_len,
        cfg.patience,
        cfg.max_epochs,
        a.seed
    );
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let vocabs = Vocabs::build(train_set.iter().chain(&dev_set))?;
    let mut table = load_pretrained(&a.embeddings, &vocabs.words, &mut rng)?;
    table.trainable = !a.freeze_embeddings;
    let model = Model::new(model_cfg, vocabs, table, &mut rng)?;
    eprintln!("parameters={}", model.store.numel());
    let out = train(model, &train_set, &dev_set, &cfg, &mut rng, |log| eprintln!("{}", log.line()))?;
    save_model(&out.model, &a.model_out)?;
    eprintln!(
        "best_epoch={} dev_acc={:.6} saved={}",
        out.best_epoch,
        out.history[out.best_epoch].dev_acc,
        a.model_out.display()
    );
    Ok(())
}

fn tag(a: TagArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    if let Some(path) = &a.embeddings {
        let d = read_dimension(path)?;
        if d != model.config.word_dim {
            return Err(Error::Config(format!(
                "model expects {}-dimensional word vectors, {} has {d}",
                model.config.word_dim,
                path.display()
            ))
            .into());
        }
    }
    let mut sentences = read_conll(&a.input)?;
    for s in &mut sentences {
        s.labels = Some(model.predict(s)?);
    }
    write_conll(&sentences, &a.output)?;
    eprintln!("tagged {} sentences", sentences.len());
    Ok(())
}

fn labels_of(set: &[Sentence], path: &Path) -> Result<Vec<Vec<u8>>, Error> {
    set.iter()
        .enumerate()
        .map(|(i, s)| {
            s.labels
                .clone()
                .ok_or_else(|| Error::Config(format!("{}: sentence {i} has no LABEL column values", path.display())))
        })
        .collect()
}

fn eval(a: EvalArgs) -> CmdResult {
    let gold_set = read_conll(&a.gold)?;
    let pred_set = read_conll(&a.pred)?;
    if gold_set.len() != pred_set.len() {
        return Err(Error::Config(format!(
            "gold has {} sentences, prediction has {}; sentence {} has no counterpart",
            gold_set.len(),
            pred_set.len(),
            gold_set.len().min(pred_set.len())
        ))
        .into());
    }
    let gold = labels_of(&gold_set, &a.gold)?;
    let pred = labels_of(&pred_set, &a.pred)?;
    let report = evaluate(&gold, &pred)?;
    println!("{report}");
    println!();
    print!("{}", report.key_values());
    Ok(())
}

fn grad_check(a: GradCheckArgs) -> CmdResult {
    let size = match a.size {
        SizeArg::Tiny => CheckSize::Tiny,
        SizeArg::Small => CheckSize::Small,
    };
    let fault = a.inject_fault.map(|f| match f {
        FaultArg::Tanh => Fault::Tanh,
        FaultArg::Sigmoid => Fault::Sigmoid,
        FaultArg::Matmul => Fault::MatMul,
    });
    let r = gradcheck::run(size, a.seed, fault)?;
    println!("checked={}", r.checked);
    println!("max_rel_error={:.3e}", r.max_rel_error);
    println!("worst={}[{}]", r.worst_tensor, r.worst_index);
    if r.passed() {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(Failure::Check(format!(
            "relative error {:.3e} in {}[{}] exceeds {:e}",
            r.max_rel_error,
            r.worst_tensor,
            r.worst_index,
            gradcheck::TOLERANCE
        )))
    }
}

fn dump_attention(a: DumpArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    if !model.config.variant.has_attention() {
        return Err(Error::Config(format!("no attention in this variant ({})", model.config.variant)).into());
    }
    for s in read_conll(&a.input)? {
        let alpha = model.attention_weights(&s)?;
        print!("{}", format_attention(&s.tokens, &alpha));
        println!();
    }
    Ok(())
}

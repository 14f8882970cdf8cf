mod args;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use jointre::checkpoint;
use jointre::data::{parse_corpus, write_corpus};
use jointre::seeds::format_mean_std;
use jointre::training::EpochRecord;
use jointre::{AnnotatedSentence, Model, RunConfig, ScoreReport, TrainObserver, TrainReport, Vocabularies};

use args::{Cli, Command, EvalArgs, ModelArgs, PredictArgs, SeedsArgs, TrainArgs};

/// Relative corpus and vector paths are looked up here when set.
const DATA_DIR_ENV: &str = "JOINTRE_DATA_DIR";

enum Failure {
    Usage(String),
    Lib(jointre::Error),
    Write(PathBuf, std::io::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Lib(jointre::Error::Config(_)) => 1,
            Failure::Lib(jointre::Error::Divergence { .. }) => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Lib(e) => e.fmt(f),
            Failure::Write(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<jointre::Error> for Failure {
    fn from(e: jointre::Error) -> Self {
        Failure::Lib(e)
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Seeds(a) => seeds(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn data_path(path: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn load_corpus(path: &Path) -> Result<Vec<AnnotatedSentence>> {
    Ok(parse_corpus(data_path(path))?)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Failure::Write(path.to_path_buf(), e))
}

/// Defaults, then `--config`, then individual flags.
fn build_config(args: &ModelArgs) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        config.apply_kv_str(&text)?;
    }
    for (key, value) in args.overrides() {
        config.set(key, &value)?;
    }
    config.validate()?;
    Ok(config)
}

struct Progress;

impl TrainObserver for Progress {
    fn epoch(&mut self, e: &EpochRecord) {
        eprintln!(
            "{} epoch {}: loss ner {:.4} rc {:.4}, dev entity {:.2} relation {:.2} average {:.2}",
            e.stage.name(),
            e.epoch,
            e.train_loss_ner,
            e.train_loss_rc,
            e.dev_entity_f1,
            e.dev_relation_f1,
            e.dev_average
        );
    }
}

fn fit(
    config: RunConfig,
    pretrained: Option<&Path>,
    train: &[AnnotatedSentence],
    dev: &[AnnotatedSentence],
    observer: &mut dyn TrainObserver,
) -> Result<(Model, TrainReport)> {
    let mut model = Model::new(config, Vocabularies::build(train))?;
    if let Some(p) = pretrained {
        let found = model.load_pretrained(data_path(p))?;
        eprintln!("pretrained vectors for {found} of {} words", model.vocab.words.len());
    }
    Ok(jointre::train_model(model, train, dev, observer)?)
}

fn save_run(dir: &Path, model: &Model, report: &TrainReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Write(dir.to_path_buf(), e))?;
    checkpoint::save(model, dir.join("model.ckpt"))?;
    write(&dir.join("report.txt"), report.to_text())?;
    write(&dir.join("config.txt"), model.config.to_kv_string())
}

fn train(args: TrainArgs) -> Result<()> {
    let config = build_config(&args.model)?;
    let train = load_corpus(&args.train)?;
    let dev = load_corpus(&args.dev)?;
    let mut progress = Progress;
    let observer: &mut dyn TrainObserver = if args.quiet { &mut () } else { &mut progress };
    let (model, report) = fit(config, args.model.pretrained.as_deref(), &train, &dev, observer)?;
    save_run(&args.out, &model, &report)?;
    print!("{}", report.to_text());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let model = checkpoint::load(&args.checkpoint)?;
    let gold = load_corpus(&args.test)?;
    let report = model.evaluate(&gold)?;
    if args.kv {
        print!("{}", report.to_kv());
    } else {
        print!("{}", report.to_table());
        println!("average {:.2}", report.average());
    }
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = checkpoint::load(&args.checkpoint)?;
    let input = load_corpus(&args.input)?;
    let predictions = model.predict_all(&input)?;
    let out: Vec<AnnotatedSentence> = input
        .into_iter()
        .zip(predictions)
        .map(|(s, p)| AnnotatedSentence {
            tokens: s.tokens,
            entity_tags: p.tags,
            relations: p.relations,
        })
        .collect();
    let text = write_corpus(&out);
    match &args.output {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn seeds(args: SeedsArgs) -> Result<()> {
    if args.n < 2 {
        return Err(Failure::Usage("--seeds needs at least 2 runs".into()));
    }
    let base = build_config(&args.model)?;
    let train = load_corpus(&args.train)?;
    let dev = load_corpus(&args.dev)?;
    let test = load_corpus(&args.test)?;
    let mut scores: Vec<ScoreReport> = Vec::new();
    let mut first_failure = None;
    for seed in args.first_seed..args.first_seed + args.n {
        let mut config = base.clone();
        config.seed = seed;
        let run = fit(config, args.model.pretrained.as_deref(), &train, &dev, &mut ()).and_then(|(model, report)| {
            if let Some(dir) = &args.out {
                save_run(&dir.join(format!("seed-{seed}")), &model, &report)?;
            }
            Ok(model.evaluate(&test)?)
        });
        match run {
            Ok(s) => {
                println!(
                    "seed {seed}: entities ({}) {:.2}, relations {:.2}",
                    s.entity_metric, s.entities.macro_f1, s.relations.macro_f1
                );
                scores.push(s);
            }
            Err(e) => {
                println!("seed {seed}: FAILED: {e}");
                first_failure.get_or_insert(e);
            }
        }
    }
    if let Some(first) = scores.first() {
        let ents: Vec<f64> = scores.iter().map(|s| s.entities.macro_f1).collect();
        let rels: Vec<f64> = scores.iter().map(|s| s.relations.macro_f1).collect();
        if scores.len() < args.n as usize {
            println!("partial results: {} of {} seeds", scores.len(), args.n);
        }
        println!("entities ({}) {}", first.entity_metric, format_mean_std(&ents));
        println!("relations {}", format_mean_std(&rels));
    }
    match first_failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

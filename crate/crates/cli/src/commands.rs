use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use twparse::conllu::{parse_conllu_with, write_conllu, ParseOptions, Sentence, Treebank};
use twparse::distill::{distill_train, load_ensemble, sha256_hex, write_manifest, DistillConfig, DistillMode, Ensemble, ManifestEntry};
use twparse::eval::{
    attachment_scores, pipeline_scores, tagging_scores_treebank, throughput, token_span_f1_treebank, EvalReport,
};
use twparse::lint::{corpus_stats, lint_treebank, Allowlist};
use twparse::parser::{train_parser, ParserConfig, ParserModel};
use twparse::runtime::{SgdConfig, WordVectors};
use twparse::tagger::{jackknife_tags, train_tagger, TaggerConfig, TaggerModel};
use twparse::tokenizer::{train_tokenizer, TokenizerConfig, TokenizerModel};
use twparse::util::default_jobs;

use crate::config::Resolver;
use crate::{Cli, CliError, Command, Hyper, Training};

pub const MODEL_DIR_VAR: &str = "TWPARSE_MODEL_DIR";
pub const MANIFEST_NAME: &str = "ensemble.tsv";

/// Relative model paths are taken under `TWPARSE_MODEL_DIR` when it is set.
fn model_path(p: &Path) -> PathBuf {
    match std::env::var_os(MODEL_DIR_VAR) {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    }
}

fn read_input(path: &str) -> Result<String, CliError> {
    let mut text = String::new();
    if path == "-" {
        std::io::stdin().read_to_string(&mut text).map_err(CliError::data)?;
    } else {
        text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{path}: {e}")))?;
    }
    Ok(text)
}

fn write_output(path: &str, text: &str) -> Result<(), CliError> {
    if path == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(text.as_bytes()).map_err(CliError::data)?;
        out.flush().map_err(CliError::data)
    } else {
        std::fs::write(path, text).map_err(|e| CliError::Data(format!("{path}: {e}")))
    }
}

static PARSE_OPTIONS: OnceLock<ParseOptions> = OnceLock::new();

fn read_treebank(path: &str) -> Result<Treebank, CliError> {
    let opts = PARSE_OPTIONS.get().copied().unwrap_or_default();
    parse_conllu_with(&read_input(path)?, opts).map_err(|e| CliError::Data(format!("{path}: {e}")))
}

fn read_treebank_path(path: &Path) -> Result<Treebank, CliError> {
    read_treebank(&path.to_string_lossy())
}

fn read_vectors(path: Option<&Path>) -> Result<Option<WordVectors>, CliError> {
    path.map(|p| {
        let file = File::open(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        WordVectors::read(BufReader::new(file)).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    })
    .transpose()
}

/// Writes `tb` with the resolved configuration as comments on its first
/// sentence, replacing any left there by an earlier run.
fn write_treebank(path: &str, mut tb: Treebank, r: &Resolver) -> Result<(), CliError> {
    if let Some(first) = tb.sentences.first_mut() {
        first.comments.retain(|c| !c.trim_start().starts_with("twparse."));
        let config = r
            .resolved()
            .iter()
            .map(|(k, v)| format!(" twparse.{k} = {v}"));
        first.comments.splice(0..0, config);
    }
    write_output(path, &write_conllu(&tb))
}

fn sgd(r: &mut Resolver, h: &Hyper) -> Result<SgdConfig, CliError> {
    let d = SgdConfig::default();
    let clip = r.get("clip", h.clip, d.clip.unwrap_or(0.0))?;
    Ok(SgdConfig {
        learning_rate: r.get("learning_rate", h.learning_rate, d.learning_rate)?,
        clip: (clip > 0.0).then_some(clip),
        decay: r.get("decay", h.decay, d.decay)?,
    })
}

fn tokenizer_config(r: &mut Resolver, h: &Hyper) -> Result<TokenizerConfig, CliError> {
    let d = TokenizerConfig::default();
    Ok(TokenizerConfig {
        char_dim: r.get("char_dim", h.char_dim, d.char_dim)?,
        hidden: r.get("hidden", h.hidden, d.hidden)?,
        epochs: r.get("epochs", h.epochs, d.epochs)?,
        dropout: r.get("dropout", h.dropout, d.dropout)?,
        min_char_count: r.get("min_char_count", h.min_char_count, d.min_char_count)?,
        sgd: sgd(r, h)?,
        seed: r.get("seed", h.seed, d.seed)?,
    })
}

fn tagger_config(r: &mut Resolver, h: &Hyper) -> Result<TaggerConfig, CliError> {
    let d = TaggerConfig::default();
    Ok(TaggerConfig {
        word_dim: r.get("word_dim", h.word_dim, d.word_dim)?,
        char_dim: r.get("char_dim", h.char_dim, d.char_dim)?,
        char_hidden: r.get("char_hidden", h.char_hidden, d.char_hidden)?,
        hidden: r.get("hidden", h.hidden, d.hidden)?,
        min_word_count: r.get("min_word_count", h.min_word_count, d.min_word_count)?,
        min_char_count: r.get("min_char_count", h.min_char_count, d.min_char_count)?,
        epochs: r.get("epochs", h.epochs, d.epochs)?,
        dropout: r.get("dropout", h.dropout, d.dropout)?,
        sgd: sgd(r, h)?,
        seed: r.get("seed", h.seed, d.seed)?,
    })
}

fn parser_config(r: &mut Resolver, h: &Hyper) -> Result<ParserConfig, CliError> {
    let d = ParserConfig::default();
    Ok(ParserConfig {
        word_dim: r.get("word_dim", h.word_dim, d.word_dim)?,
        char_dim: r.get("char_dim", h.char_dim, d.char_dim)?,
        char_hidden: r.get("char_hidden", h.char_hidden, d.char_hidden)?,
        upos_dim: r.get("upos_dim", h.upos_dim, d.upos_dim)?,
        hidden: r.get("hidden", h.hidden, d.hidden)?,
        mlp_hidden: r.get("mlp_hidden", h.mlp_hidden, d.mlp_hidden)?,
        action_dim: r.get("action_dim", h.action_dim, d.action_dim)?,
        min_word_count: r.get("min_word_count", h.min_word_count, d.min_word_count)?,
        min_char_count: r.get("min_char_count", h.min_char_count, d.min_char_count)?,
        epochs: r.get("epochs", h.epochs, d.epochs)?,
        dropout: r.get("dropout", h.dropout, d.dropout)?,
        sgd: sgd(r, h)?,
        seed: r.get("seed", h.seed, d.seed)?,
    })
}

/// Training and development treebanks plus optional word vectors.
struct Inputs {
    train: Treebank,
    dev: Option<Treebank>,
    vectors: Option<WordVectors>,
}

fn training_inputs(r: &mut Resolver, t: &Training) -> Result<Inputs, CliError> {
    r.record("train", t.train.display());
    if let Some(d) = &t.dev {
        r.record("dev", d.display());
    }
    if let Some(p) = &t.pretrained {
        r.record("pretrained", p.display());
    }
    Ok(Inputs {
        train: read_treebank_path(&t.train)?,
        dev: t.dev.as_deref().map(read_treebank_path).transpose()?,
        vectors: read_vectors(t.pretrained.as_deref())?,
    })
}

fn load_parser_or_ensemble(model: Option<&Path>, manifest: Option<&Path>) -> Result<Parsing, CliError> {
    match (model, manifest) {
        (Some(m), None) => ParserModel::load(&model_path(m)).map(|m| Parsing::Single(Box::new(m))).map_err(CliError::data),
        (None, Some(m)) => load_ensemble(&model_path(m)).map(Parsing::Ensemble).map_err(CliError::data),
        _ => Err(CliError::Usage("give exactly one of --parser/--model or --manifest".into())),
    }
}

enum Parsing {
    Single(Box<ParserModel>),
    Ensemble(Ensemble),
}

impl Parsing {
    fn parse_treebank(&self, tb: &Treebank, jobs: usize) -> Result<Treebank, CliError> {
        match self {
            Parsing::Single(m) => m.parse_treebank(tb, jobs).map_err(CliError::data),
            Parsing::Ensemble(e) => e.parse_treebank(tb, jobs).map_err(CliError::data),
        }
    }

    fn parse(&self, s: &Sentence) -> Result<Sentence, CliError> {
        match self {
            Parsing::Single(m) => m.greedy_parse(s).map_err(CliError::data),
            Parsing::Ensemble(e) => e.ensemble_parse(s).map_err(CliError::data),
        }
    }
}

fn tokenize_lines(model: &TokenizerModel, text: &str) -> Result<Treebank, CliError> {
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s = model
            .tokenize_sentence(line, &format!("t{}", i + 1))
            .map_err(|e| CliError::Data(format!("line {}: {e}", i + 1)))?;
        sentences.push(s);
    }
    Ok(Treebank::new(sentences))
}

fn text_pairs(tb: &Treebank) -> Result<Vec<(String, Sentence)>, CliError> {
    tb.sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.text()
                .map(|t| (t.to_owned(), s.clone()))
                .ok_or_else(|| CliError::Data(format!("sentence {} has no `# text` comment", i + 1)))
        })
        .collect()
}

fn save_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let name = subcommand_name(&cli.command);
    let mut r = Resolver::new(name, cli.config.as_deref())?;
    let jobs = r.get("jobs", cli.jobs, default_jobs())?.max(1);
    let allow_multi_root = r.get("allow_multi_root", cli.allow_multi_root.then_some(true), false)?;
    let _ = PARSE_OPTIONS.set(ParseOptions { allow_multi_root });
    match cli.command {
        Command::Tokenize { model, io } => {
            r.record("model", model.display());
            r.log();
            let m = TokenizerModel::load(&model_path(&model)).map_err(CliError::data)?;
            let tb = tokenize_lines(&m, &read_input(&io.input)?)?;
            write_treebank(&io.output, tb, &r)
        }
        Command::Tag { model, io } => {
            r.record("model", model.display());
            r.log();
            let m = TaggerModel::load(&model_path(&model)).map_err(CliError::data)?;
            let tb = m.tag_treebank(&read_treebank(&io.input)?, jobs).map_err(CliError::data)?;
            write_treebank(&io.output, tb, &r)
        }
        Command::Parse { model, manifest, io } => {
            record_models(&mut r, model.as_deref(), manifest.as_deref());
            r.log();
            let p = load_parser_or_ensemble(model.as_deref(), manifest.as_deref())?;
            let tb = p.parse_treebank(&read_treebank(&io.input)?, jobs)?;
            write_treebank(&io.output, tb, &r)
        }
        Command::Pipeline {
            tokenizer,
            tagger,
            parser,
            manifest,
            io,
        } => {
            r.record("tokenizer", tokenizer.display());
            r.record("tagger", tagger.display());
            record_models(&mut r, parser.as_deref(), manifest.as_deref());
            r.log();
            let tok = TokenizerModel::load(&model_path(&tokenizer)).map_err(CliError::data)?;
            let tag = TaggerModel::load(&model_path(&tagger)).map_err(CliError::data)?;
            let p = load_parser_or_ensemble(parser.as_deref(), manifest.as_deref())?;
            let tb = tokenize_lines(&tok, &read_input(&io.input)?)?;
            let tb = tag.tag_treebank(&tb, jobs).map_err(CliError::data)?;
            let tb = p.parse_treebank(&tb, jobs)?;
            write_treebank(&io.output, tb, &r)
        }
        Command::TrainTokenizer { training, output } => {
            let cfg = tokenizer_config(&mut r, &training.hyper)?;
            let inputs = training_inputs(&mut r, &training)?;
            r.record("output", output.display());
            r.log();
            let train = text_pairs(&inputs.train)?;
            let dev = inputs.dev.as_ref().map(text_pairs).transpose()?;
            let (m, report) = train_tokenizer(&train, dev.as_deref(), &cfg).map_err(CliError::data)?;
            log::info!("best epoch {} token F1 {:.2}", report.best_epoch, report.best_score);
            let out = model_path(&output);
            m.save(&out).map_err(save_err(&out))
        }
        Command::TrainTagger { training, output } => {
            let cfg = tagger_config(&mut r, &training.hyper)?;
            let inputs = training_inputs(&mut r, &training)?;
            r.record("output", output.display());
            r.log();
            let (m, report) = train_tagger(&inputs.train, inputs.dev.as_ref(), &cfg, inputs.vectors.as_ref())
                .map_err(CliError::data)?;
            log::info!("best epoch {} accuracy {:.2}", report.best_epoch, report.best_score);
            let out = model_path(&output);
            m.save(&out).map_err(save_err(&out))
        }
        Command::TrainParser { training, output } => {
            let cfg = parser_config(&mut r, &training.hyper)?;
            let inputs = training_inputs(&mut r, &training)?;
            r.record("output", output.display());
            r.log();
            let (m, report) = train_parser(&inputs.train, inputs.dev.as_ref(), &cfg, inputs.vectors.as_ref())
                .map_err(CliError::data)?;
            log::info!("best epoch {} LAS {:.2}", report.best_epoch, report.best_score);
            let out = model_path(&output);
            m.save(&out).map_err(save_err(&out))
        }
        Command::TrainEnsemble {
            training,
            members,
            seeds,
            output_dir,
        } => {
            if members == 0 {
                return Err(CliError::Usage("--members must be at least 1".into()));
            }
            let seeds = match seeds.as_deref() {
                Some(text) => parse_seeds(text)?,
                None => (1..=members as u64).collect(),
            };
            if seeds.len() != members {
                return Err(CliError::Usage(format!("--members {members} needs {members} seeds, got {}", seeds.len())));
            }
            let cfg = parser_config(&mut r, &training.hyper)?;
            let inputs = training_inputs(&mut r, &training)?;
            r.record("members", members);
            r.record("seeds", seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
            r.record("output_dir", output_dir.display());
            r.log();
            let dir = model_path(&output_dir);
            std::fs::create_dir_all(&dir).map_err(save_err(&dir))?;
            let (models, summary) = twparse::parser::train_parser_seeds(
                &inputs.train,
                inputs.dev.as_ref(),
                &cfg,
                inputs.vectors.as_ref(),
                &seeds,
                jobs,
            )
            .map_err(CliError::data)?;
            let mut entries = Vec::with_capacity(models.len());
            for (m, seed) in models.iter().zip(&seeds) {
                let name = format!("member-{seed}.model");
                let bytes = m.to_bytes().map_err(CliError::data)?;
                let path = dir.join(&name);
                std::fs::write(&path, &bytes).map_err(save_err(&path))?;
                entries.push(ManifestEntry {
                    path: name.into(),
                    sha256: sha256_hex(&bytes),
                });
            }
            let manifest = dir.join(MANIFEST_NAME);
            let file = File::create(&manifest).map_err(save_err(&manifest))?;
            write_manifest(file, &entries).map_err(save_err(&manifest))?;
            log::info!(
                "member LAS mean {:.2} min {:.2} max {:.2}; manifest {}",
                summary.mean,
                summary.min,
                summary.max,
                manifest.display()
            );
            Ok(())
        }
        Command::Distill {
            manifest,
            training,
            alpha,
            mode,
            output,
        } => {
            let alpha = r.get("alpha", alpha, 1.0)?;
            let mode: DistillMode = r
                .get("mode", mode, "exploration".to_owned())?
                .parse()
                .map_err(|e| CliError::Usage(format!("{e}")))?;
            let config = DistillConfig {
                alpha,
                mode,
                parser: parser_config(&mut r, &training.hyper)?,
                jobs,
            };
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            r.record("manifest", manifest.display());
            let inputs = training_inputs(&mut r, &training)?;
            r.record("output", output.display());
            r.log();
            let ensemble = load_ensemble(&model_path(&manifest)).map_err(CliError::data)?;
            let (m, report) = distill_train(&ensemble, &inputs.train, inputs.dev.as_ref(), &config, inputs.vectors.as_ref()).map_err(CliError::data)?;
            log::info!("best epoch {} LAS {:.2}", report.best_epoch, report.best_score);
            let out = model_path(&output);
            m.save(&out).map_err(save_err(&out))
        }
        Command::Jackknife { folds, hyper, io } => {
            let k = r.get("folds", folds, 10usize)?;
            let cfg = tagger_config(&mut r, &hyper)?;
            r.log();
            let tb = read_treebank(&io.input)?;
            let (tagged, report) = jackknife_tags(&tb, k, &cfg, jobs).map_err(|e| match e {
                twparse::tagger::TaggerError::TooFewFolds(_) => CliError::Usage(e.to_string()),
                other => CliError::data(other),
            })?;
            for (f, acc) in report.fold_accuracy.iter().enumerate() {
                log::info!("fold {f}: accuracy {acc:.2}");
            }
            write_treebank(&io.output, tagged, &r)
        }
        Command::Eval {
            metric,
            gold,
            pred,
            auto_tokens,
            input,
            parser,
            manifest,
            runs,
            json,
        } => {
            r.record("metric", &metric);
            let report = if metric == "speed" {
                let input = input.ok_or_else(|| CliError::Usage("--metric speed needs --input".into()))?;
                let runs = r.get("runs", runs, 3usize)?;
                record_models(&mut r, parser.as_deref(), manifest.as_deref());
                r.log();
                let p = load_parser_or_ensemble(parser.as_deref(), manifest.as_deref())?;
                let tb = read_treebank_path(&input)?.strip_trees();
                let mut failure = None;
                let t = throughput(&tb, runs, |s| {
                    if let Err(e) = p.parse(s) {
                        failure.get_or_insert(e);
                    }
                });
                if let Some(e) = failure {
                    return Err(e);
                }
                t.report()
            } else {
                let (Some(gold), Some(pred)) = (gold, pred) else {
                    return Err(CliError::Usage(format!("--metric {metric} needs --gold and --pred")));
                };
                r.log();
                let (g, p) = (read_treebank_path(&gold)?, read_treebank_path(&pred)?);
                score(&metric, &g, &p, auto_tokens)?
            };
            let text = if json {
                format!("{}\n", report.to_json())
            } else {
                format!("{report}\n{}\n", report.to_key_values())
            };
            write_output("-", &text)
        }
        Command::Lint { input, allowlist } => {
            r.record("input", &input);
            let allow = match &allowlist {
                Some(p) => {
                    r.record("allowlist", p.display());
                    let text = std::fs::read_to_string(p).map_err(save_err(p))?;
                    Allowlist::parse(&text).map_err(CliError::Data)?
                }
                None => Allowlist::default(),
            };
            r.log();
            let report = lint_treebank(&read_treebank(&input)?, &allow, jobs);
            let text: String = report.lines().map(|l| l + "\n").collect();
            write_output("-", &text)?;
            log::info!(
                "{} error(s), {} warning(s), {} allowlisted",
                report.errors,
                report.warnings,
                report.allowed
            );
            if report.passes() {
                Ok(())
            } else {
                Err(CliError::Lint(report.errors))
            }
        }
        Command::Stats { input, json } => {
            r.record("input", &input);
            r.log();
            let stats = corpus_stats(&read_treebank(&input)?);
            let text = if json {
                format!("{}\n", serde_json::to_string(&stats).map_err(CliError::data)?)
            } else {
                format!("{stats}\n")
            };
            write_output("-", &text)
        }
        Command::Anonymize { io } => {
            r.log();
            let text = read_input(&io.input)?;
            let out: String = BufReader::new(text.as_bytes())
                .lines()
                .map(|l| l.map(|l| twparse::lint::anonymize(&l) + "\n"))
                .collect::<Result<_, _>>()
                .map_err(CliError::data)?;
            write_output(&io.output, &out)
        }
    }
}

/// Parses `a,b,c` or the inclusive range `a..b`.
fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = |_| CliError::Usage(format!("bad --seeds `{text}`"));
    if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi): (u64, u64) = (lo.trim().parse().map_err(bad)?, hi.trim().parse().map_err(bad)?);
        if lo > hi {
            return Err(CliError::Usage(format!("empty --seeds range `{text}`")));
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(bad)).collect()
}

fn record_models(r: &mut Resolver, model: Option<&Path>, manifest: Option<&Path>) {
    if let Some(m) = model {
        r.record("parser", m.display());
    }
    if let Some(m) = manifest {
        r.record("manifest", m.display());
    }
}

fn score(metric: &str, gold: &Treebank, pred: &Treebank, auto_tokens: bool) -> Result<EvalReport, CliError> {
    let result = match metric {
        "tok" => token_span_f1_treebank(gold, pred),
        "pos" => tagging_scores_treebank(gold, pred, auto_tokens),
        "las" => attachment_scores(gold, pred),
        "pipeline" => pipeline_scores(gold, pred),
        other => {
            return Err(CliError::Usage(format!(
                "unknown metric `{other}` (expected tok, pos, las, pipeline or speed)"
            )))
        }
    };
    result.map_err(CliError::data)
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Tokenize { .. } => "tokenize",
        Command::Tag { .. } => "tag",
        Command::Parse { .. } => "parse",
        Command::Pipeline { .. } => "pipeline",
        Command::TrainTokenizer { .. } => "train-tokenizer",
        Command::TrainTagger { .. } => "train-tagger",
        Command::TrainParser { .. } => "train-parser",
        Command::TrainEnsemble { .. } => "train-ensemble",
        Command::Distill { .. } => "distill",
        Command::Jackknife { .. } => "jackknife",
        Command::Eval { .. } => "eval",
        Command::Lint { .. } => "lint",
        Command::Stats { .. } => "stats",
        Command::Anonymize { .. } => "anonymize",
    }
}

#[cfg(test)]
mod tests {
    use super::parse_seeds;

    #[test]
    fn seed_lists_and_ranges() {
        assert_eq!(parse_seeds("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_seeds("7, 3,9").unwrap(), vec![7, 3, 9]);
        assert!(parse_seeds("4..1").is_err());
        assert!(parse_seeds("a,b").is_err());
    }
}

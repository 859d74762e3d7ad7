use std::path::{Path, PathBuf};

use jex_core::checkpoint::{load_checkpoint, load_meta, save_checkpoint, save_meta, ModelMeta};
use jex_core::fusion::param_count;
use jex_core::model::ExemplarLookup;
use jex_core::training::{accuracy, build_examples, joint_embeddings, Example, TrainHistory};
use jex_core::vocab::tokenize_truncated;
use jex_core::{
    build_store, evaluate, load_features, load_store, save_store, stage1_train, stage2_train,
    EvalReport, ExemplarStore, ModelParams, TrainConfig, Variant, Vocabulary,
};
use jex_owsplit::split::{build_manifest, scan_leakage, Provenance};
use jex_owsplit::{
    build_answer_dict, load_triplets, AnswerDictionary, Instances, Lexicon, SplitName,
};
use jex_toycorpus::{generate, ToySpec};
use serde::Serialize;

use crate::config::{overlay, to_json, write_json};
use crate::data::{require, DataArgs, Dataset};
use crate::error::{CliError, Result};
use crate::{Cli, Command, Mode, Preset, Stage};

pub const GRID_CHECKPOINT: &str = "grid.jexm";
pub const JEX_CHECKPOINT: &str = "jex.jexm";
pub const STORE_FILE: &str = "store.jexs";
pub const TRAIN_REPORT: &str = "train_report.json";

pub fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Split {
            instances,
            questions,
            annotations,
            lexicon,
        } => split(&cli, instances, questions, annotations, lexicon.as_deref()),
        Command::GenToy => gen_toy(&cli),
        Command::Train {
            data,
            stage,
            init,
            store,
            epochs,
            learning_rate,
        } => {
            let opts = TrainOpts {
                stage: *stage,
                init: init.as_deref(),
                store: store.as_deref(),
                epochs: *epochs,
                learning_rate: *learning_rate,
            };
            train(&cli, data, opts)
        }
        Command::BuildStore { data, model } => build_store_cmd(&cli, data, model),
        Command::Eval {
            data,
            model,
            store,
            split,
            mode,
        } => eval(&cli, data, model, store.as_deref(), *split, *mode),
        Command::Answer {
            model,
            store,
            features,
            question,
        } => answer(&cli, model, store.as_deref(), features, question),
        Command::ParamCount {
            n_q,
            n_v,
            n_e,
            t_q,
            t_v,
            t_e,
        } => {
            let c = param_count(*n_q, *n_v, *n_e, *t_q, *t_v, *t_e);
            let out = serde_json::json!({
                "n_q": n_q, "n_v": n_v, "n_e": n_e,
                "t_q": t_q, "t_v": t_v, "t_e": t_e,
                "naive": c.naive, "tucker": c.tucker,
            });
            emit(cli.out.as_deref(), &out)
        }
    }
}

/// Writes JSON to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            print!("{}", to_json(value));
            Ok(())
        }
    }
}

fn out_path(cli: &Cli, what: &str) -> Result<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| CliError::Usage(format!("--out <{what}> is required")))
}

/// Preset (or `base`), then the `--config` overlay, then `--seed`.
fn resolve_config(cli: &Cli, base: Option<TrainConfig>) -> Result<TrainConfig> {
    let mut cfg = match (cli.preset, base) {
        (Some(Preset::Toy), _) => TrainConfig::toy(),
        (Some(Preset::Paper), _) | (None, None) => TrainConfig::default(),
        (None, Some(b)) => b,
    };
    if let Some(p) = &cli.config {
        cfg = overlay(&cfg, p)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn split(
    cli: &Cli,
    instances: &[PathBuf],
    questions: &[PathBuf],
    annotations: &[PathBuf],
    lexicon: Option<&Path>,
) -> Result<()> {
    if questions.len() != annotations.len() {
        return Err(CliError::Usage(format!(
            "{} question files but {} annotation files",
            questions.len(),
            annotations.len()
        )));
    }
    let sources: Vec<&PathBuf> = instances
        .iter()
        .chain(questions)
        .chain(annotations)
        .collect();
    for p in &sources {
        require(p)?;
    }
    if let Some(l) = lexicon {
        require(l)?;
    }
    let inst = Instances::load(instances)?;
    let mut triplets = Vec::new();
    for (q, a) in questions.iter().zip(annotations) {
        triplets.extend(load_triplets(q, a)?);
    }
    let names: Vec<String> = inst.categories().map(|c| c.name.clone()).collect();
    let names = names.iter().map(String::as_str);
    let lex = match lexicon {
        Some(p) => Lexicon::load(p, names)?,
        None => Lexicon::auto(names),
    };
    let manifest = build_manifest(
        &inst,
        &triplets,
        &lex,
        Provenance::new("jex split", &sources, cli.seed),
    )?;
    let leaks = scan_leakage(&manifest, &triplets, &inst, &lex);
    if !leaks.is_clean() {
        return Err(CliError::Data(format!(
            "trainset leaks unknown concepts: {} visual, {} semantic",
            leaks.visual.len(),
            leaks.semantic.len()
        )));
    }
    eprintln!(
        "unknown: {}; unknown share train {:.4} val {:.4}",
        manifest.unknown_categories.join(", "),
        manifest.stats.unknown_fraction_train,
        manifest.stats.unknown_fraction_val
    );
    emit(cli.out.as_deref(), &manifest)
}

fn gen_toy(cli: &Cli) -> Result<()> {
    let out = out_path(cli, "dir")?;
    let mut spec = ToySpec::default();
    if let Some(p) = &cli.config {
        spec = overlay(&spec, p)?;
    }
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    let corpus = generate(&spec)?;
    corpus.write(&out)?;
    eprintln!(
        "{} scenes, {} questions written to {}",
        corpus.scenes.len(),
        corpus.questions.len(),
        out.display()
    );
    Ok(())
}

struct TrainOpts<'a> {
    stage: Stage,
    init: Option<&'a Path>,
    store: Option<&'a Path>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
}

#[derive(Debug, Serialize)]
struct StageReport {
    stage: u8,
    variant: Variant,
    checkpoint: String,
    examples: usize,
    epoch_loss: Vec<f64>,
    max_attention_sum_error: f64,
    min_attention_weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    store_size: Option<usize>,
}

impl StageReport {
    fn new(
        stage: u8,
        variant: Variant,
        checkpoint: &str,
        examples: usize,
        h: &TrainHistory,
    ) -> Self {
        Self {
            stage,
            variant,
            checkpoint: checkpoint.to_owned(),
            examples,
            epoch_loss: h.epoch_loss.clone(),
            max_attention_sum_error: h
                .attention
                .iter()
                .map(|a| a.max_sum_error)
                .fold(0.0, f64::max),
            min_attention_weight: h
                .attention
                .iter()
                .map(|a| a.min_weight)
                .fold(f64::INFINITY, f64::min),
            train_accuracy: None,
            store_size: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct TrainReport {
    config: TrainConfig,
    stages: Vec<StageReport>,
}

fn save_model(path: &Path, params: &ModelParams, meta: &ModelMeta) -> Result<()> {
    save_checkpoint(path, params)?;
    save_meta(path, meta)?;
    Ok(())
}

fn train(cli: &Cli, data: &DataArgs, opts: TrainOpts) -> Result<()> {
    let out = out_path(cli, "dir")?;
    let resumed = if opts.stage == Stage::Two {
        let init = opts
            .init
            .ok_or_else(|| CliError::Usage("stage 2 needs --init <stage-1 checkpoint>".into()))?;
        let store = opts
            .store
            .ok_or_else(|| CliError::Usage("stage 2 needs --store <exemplar store>".into()))?;
        require(init)?;
        require(store)?;
        let meta = load_meta(init)?;
        let params = load_checkpoint(init)?;
        if params.variant != Variant::Grid {
            return Err(CliError::Usage(format!(
                "{}: stage 2 starts from a grid checkpoint, found {}",
                init.display(),
                params.variant
            )));
        }
        Some((meta, params, load_store(store)?))
    } else {
        None
    };
    let mut cfg = resolve_config(cli, resumed.as_ref().map(|r| r.0.config.clone()))?;
    if let Some(e) = opts.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = opts.learning_rate {
        cfg.learning_rate = lr;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = data.load()?;
    let mut report = TrainReport {
        config: cfg.clone(),
        stages: Vec::new(),
    };

    let grid_out = out.join(GRID_CHECKPOINT);
    let (meta, examples, grid, store): (
        ModelMeta,
        Vec<Example>,
        ModelParams,
        Box<dyn ExemplarLookup>,
    ) = match resumed {
        Some((meta, params, store)) => {
            let ex = ds.examples(
                SplitName::Trainset,
                &meta.vocabulary,
                &meta.answers,
                cfg.max_len,
            )?;
            (meta, ex, params, Box::new(store))
        }
        None => {
            let (meta, ex) = stage1_inputs(&ds, &cfg)?;
            let f = &ex[0].features;
            let dims = cfg.dims(
                meta.vocabulary.len(),
                f.cells(),
                f.channels(),
                meta.answers.len(),
            );
            let s1 = stage1_train(&ex, &dims, &cfg)?;
            save_model(&grid_out, &s1.params, &meta)?;
            save_store(&s1.store, &out.join(STORE_FILE))?;
            let mut r = StageReport::new(1, Variant::Grid, GRID_CHECKPOINT, ex.len(), &s1.history);
            r.train_accuracy = Some(accuracy(&s1.params, None, &ex, &meta.answers)?);
            r.store_size = Some(s1.store.len());
            report.stages.push(r);
            (meta, ex, s1.params, Box::new(s1.store))
        }
    };

    if opts.stage != Stage::One {
        let (jex, history) = stage2_train(&grid, store.as_ref(), &examples, &cfg)?;
        let jex_meta = ModelMeta {
            variant: Variant::Jex,
            config: cfg.clone(),
            ..meta
        };
        save_model(&out.join(JEX_CHECKPOINT), &jex, &jex_meta)?;
        report.stages.push(StageReport::new(
            2,
            Variant::Jex,
            JEX_CHECKPOINT,
            examples.len(),
            &history,
        ));
    }
    write_json(&out.join(TRAIN_REPORT), &report)
}

/// Vocabulary, answer dictionary and examples of the Trainset.
fn stage1_inputs(ds: &Dataset, cfg: &TrainConfig) -> Result<(ModelMeta, Vec<Example>)> {
    let train = ds.split(SplitName::Trainset)?;
    if train.is_empty() {
        return Err(CliError::Data("the trainset is empty".into()));
    }
    let vocabulary = Vocabulary::build(train.iter().map(|t| t.question.as_str()), 1);
    let answers: AnswerDictionary = build_answer_dict(train.iter().copied(), cfg.answers)?;
    let examples = build_examples(&train, &ds.features, &vocabulary, &answers, cfg.max_len)?;
    Ok((
        ModelMeta {
            variant: Variant::Grid,
            vocabulary,
            answers,
            config: cfg.clone(),
        },
        examples,
    ))
}

fn load_model(cli: &Cli, model: &Path) -> Result<(ModelMeta, ModelParams, TrainConfig)> {
    require(model)?;
    let meta = load_meta(model)?;
    let params = load_checkpoint(model)?;
    if params.variant != meta.variant {
        return Err(CliError::Data(format!(
            "{}: checkpoint holds {} but its metadata says {}",
            model.display(),
            params.variant,
            meta.variant
        )));
    }
    let cfg = resolve_config(cli, Some(meta.config.clone()))?;
    Ok((meta, params, cfg))
}

fn open_store(
    variant: Variant,
    store: Option<&Path>,
) -> Result<Option<ExemplarStore<jex_core::exemplar::FileXi>>> {
    match store {
        Some(p) => {
            require(p)?;
            Ok(Some(load_store(p)?))
        }
        None if variant == Variant::Jex => {
            Err(CliError::Usage("the jex variant needs --store".into()))
        }
        None => Ok(None),
    }
}

fn build_store_cmd(cli: &Cli, data: &DataArgs, model: &Path) -> Result<()> {
    let out = out_path(cli, "file")?;
    let (meta, params, cfg) = load_model(cli, model)?;
    let ds = data.load()?;
    let examples = ds.examples(
        SplitName::Trainset,
        &meta.vocabulary,
        &meta.answers,
        cfg.max_len,
    )?;
    let store = build_store(
        &joint_embeddings(&params, &examples)?,
        cfg.sample_rate,
        cfg.rho,
        cfg.seed,
    )?;
    save_store(&store, &out)?;
    eprintln!(
        "{} of {} embeddings stored in {}",
        store.len(),
        examples.len(),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct Metrics {
    #[serde(flatten)]
    report: EvalReport,
    config: TrainConfig,
}

fn eval(
    cli: &Cli,
    data: &DataArgs,
    model: &Path,
    store: Option<&Path>,
    split: SplitName,
    mode: Mode,
) -> Result<()> {
    let (meta, params, cfg) = load_model(cli, model)?;
    let store = open_store(params.variant, store)?;
    let ds = data.load()?;
    let examples = ds.examples(split, &meta.vocabulary, &meta.answers, cfg.max_len)?;
    let lookup = store.as_ref().map(|s| s as &dyn ExemplarLookup);
    let report = evaluate(
        &params,
        lookup,
        &examples,
        &meta.answers,
        mode.into(),
        split.as_str(),
    )?;
    emit(
        cli.out.as_deref(),
        &Metrics {
            report,
            config: cfg,
        },
    )
}

#[derive(Debug, Serialize)]
struct AnswerOutput {
    question: String,
    answer: String,
    variant: Variant,
    alpha_iq: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_e: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exemplar_id: Option<u64>,
}

fn answer(
    cli: &Cli,
    model: &Path,
    store: Option<&Path>,
    features: &Path,
    question: &str,
) -> Result<()> {
    let (meta, params, cfg) = load_model(cli, model)?;
    let store = open_store(params.variant, store)?;
    require(features)?;
    let f = load_features(features)?;
    let tokens = tokenize_truncated(question, &meta.vocabulary, cfg.max_len)?;
    let lookup = store.as_ref().map(|s| s as &dyn ExemplarLookup);
    let p = params.predict_logits(&f, &tokens, lookup, None)?;
    let answer = jex_core::predict(&p.logits, &meta.answers)?.to_owned();
    let jex = params.variant == Variant::Jex;
    emit(
        cli.out.as_deref(),
        &AnswerOutput {
            question: question.to_owned(),
            answer,
            variant: params.variant,
            alpha_iq: p.alpha_iq,
            alpha_e: jex.then_some(p.alpha_e),
            exemplar_id: p.exemplar_id,
        },
    )
}

// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use marco::corpus::{self, preprocess, Cleaned, SourceTag, DEFAULT_MAX_WORDS};
use marco::decoder::{combined_scores, greedy_choice, ModelTriple};
use marco::lm::{load_model, train_ngram, DenoisingLm, NGramParams};
use marco::masker::contextual_mask_with;
use marco::metrics::{self, LexiconToxicity, NGramFluency, OverlapSimilarity, PrecomputedScores, Scorer, ScorerKind, ScorerSet};
use marco::net::serve_model;
use marco::rewriter::{self, Preset, RewriteConfig, SelectionWeights, SweepGrid};
use marco::textcore::{softmax, TokenSequence, Vocabulary, VocabularyBuilder};
use marco::{Error, Execution, Result};
use serde_json::json;

use crate::models::{load_models, load_ngram};
use crate::{ConfigArgs, DecodeStepArgs, EvalArgs, MaskArgs, ReportFormat, RewriteArgs, ServeArgs, SweepArgs, TrainArgs, VocabArgs};

const FILTERED: &str = "FILTERED";

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => Ok(fs::read_to_string(p)?),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Preset or config file first, then individual flags on top.
fn resolve_config(args: &ConfigArgs) -> Result<(RewriteConfig, String)> {
    let (mut config, origin) = match (&args.preset, &args.config) {
        (Some(name), _) => {
            let p: Preset = name.parse()?;
            (p.config(), format!("preset={}", p.name()))
        }
        (None, Some(path)) => (RewriteConfig::load(path)?, format!("config={}", path.display())),
        (None, None) => (Preset::Magr.config(), "preset=magr".to_string()),
    };
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut config.tau, args.tau);
    set(&mut config.alpha1, args.alpha1);
    set(&mut config.alpha2, args.alpha2);
    set(&mut config.temperature, args.temperature);
    set(&mut config.repetition_penalty, args.repetition_penalty);
    if let Some(n) = args.max_len {
        config.max_len = n;
    }
    config.mask_collapse |= args.mask_collapse;
    config.validate()?;
    Ok((config, origin))
}

fn collapse(line: &str) -> String {
    line.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Clean and encode each line; `None` marks filtered or blank lines.
fn encode_lines(vocab: &Vocabulary, text: &str) -> Result<Vec<Option<(String, TokenSequence)>>> {
    text.lines()
        .map(|line| match preprocess(line, DEFAULT_MAX_WORDS) {
            Cleaned::Kept(t) if !t.is_empty() => {
                let seq = TokenSequence::encode(vocab, &t)?;
                Ok(Some((t, seq)))
            }
            _ => Ok(None),
        })
        .collect()
}

pub fn mask(args: MaskArgs) -> Result<()> {
    let (config, _) = resolve_config(&args.config)?;
    let (vocab, models) = load_models(&[&args.expert, &args.antiexpert], args.vocab.as_deref())?;
    let lines = encode_lines(&vocab, &read_input(args.io.input.as_deref())?)?;
    let rows = Execution::default().try_map_range(lines.len(), |i| {
        let Some((text, seq)) = &lines[i] else {
            return Ok::<_, Error>(json!({ "line": i, "filtered": true }).to_string());
        };
        let (masked, profile) = contextual_mask_with(
            seq,
            &models[0],
            &models[1],
            config.tau,
            config.mask_collapse,
            Execution::Sequential,
        )?;
        Ok(json!({
            "line": i,
            "filtered": false,
            "text": text,
            "tokens": seq.tokens(),
            "raw": profile.raw,
            "normalized": profile.normalized,
            "masked": profile.masked_indices,
            "rendering": masked.render(&vocab),
        })
        .to_string())
    })?;
    let mut out = String::new();
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    write_output(args.io.output.as_deref(), &out)
}

pub fn rewrite(args: RewriteArgs) -> Result<()> {
    let (config, origin) = resolve_config(&args.config)?;
    let (vocab, models) = load_models(&[&args.base, &args.expert, &args.antiexpert], args.vocab.as_deref())?;
    let triple = ModelTriple::new(&models[0], &models[1], &models[2]);
    triple.check_vocabulary()?;
    let raw = read_input(args.io.input.as_deref())?;
    let lines = encode_lines(&vocab, &raw)?;
    eprintln!("# marco rewrite {origin} {config}");

    let kept: Vec<TokenSequence> = lines.iter().flatten().map(|(_, s)| s.clone()).collect();
    let mut results = rewriter::rewrite_batch(&kept, triple, &config, Execution::default()).into_iter();
    let mut out = String::new();
    for (line, entry) in raw.lines().zip(&lines) {
        match entry {
            Some((text, _)) => {
                let r = results.next().expect("one result per kept line")?;
                let _ = writeln!(
                    out,
                    "{text}\t{}\t{}",
                    r.masked.render(&vocab),
                    vocab.decode(r.rewrite.tokens())
                );
            }
            None => {
                let _ = writeln!(out, "{}\t{FILTERED}\t{FILTERED}", collapse(line));
            }
        }
    }
    write_output(args.io.output.as_deref(), &out)
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let (template, origin) = resolve_config(&args.config)?;
    let (vocab, models) = load_models(&[&args.base, &args.expert, &args.antiexpert], args.vocab.as_deref())?;
    let triple = ModelTriple::new(&models[0], &models[1], &models[2]);
    triple.check_vocabulary()?;
    let grid = match (&args.grid, &args.config.preset) {
        (Some(path), _) => SweepGrid::load(path)?,
        (None, Some(name)) => SweepGrid::for_preset(name.parse()?),
        (None, None) => SweepGrid::for_preset(Preset::Magr),
    };
    let dev = corpus::load_with_vocabulary(&args.dev, SourceTag::Other, &vocab)?.sequences;
    let fluency_lm = load_ngram(&args.fluency_model)?;
    let toxicity = LexiconToxicity::load(&vocab, &args.lexicon)?;
    let fluency = NGramFluency::new(&fluency_lm);
    let scorers = ScorerSet::new(&toxicity, &fluency, &OverlapSimilarity)?;
    let selection = SelectionWeights {
        toxicity: args.toxicity_weight,
        similarity: args.similarity_weight,
        fluency: args.fluency_weight,
    };
    eprintln!("# marco sweep {origin} points={} dev={}", grid.len(), dev.len());
    let ranked = rewriter::sweep(&dev, triple, &grid, &template, scorers, &selection)?;

    if let (Some(path), Some(best)) = (&args.best_config, ranked.first()) {
        best.config.save(path)?;
    }
    let mut out = String::from(
        "rank\tgrid_index\tscore\ttoxicity\tsimilarity\tfluency\ttau\trepetition_penalty\talpha1\talpha2\ttemperature\n",
    );
    for (rank, e) in ranked.iter().take(args.top.unwrap_or(usize::MAX)).enumerate() {
        let c = &e.config;
        let _ = writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}\t{}",
            rank + 1,
            e.grid_index,
            e.score,
            e.report.mean_toxicity,
            e.report.mean_similarity,
            e.report.mean_fluency,
            c.tau,
            c.repetition_penalty,
            c.alpha1,
            c.alpha2,
            c.temperature
        );
    }
    write_output(args.output.as_deref(), &out)
}

/// Aligned (original, rewrite) text pairs from either input form.
fn eval_pairs(args: &EvalArgs) -> Result<Vec<(String, String)>> {
    if let Some(path) = &args.pairs {
        let text = fs::read_to_string(path)?;
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Format(format!(
                    "{}:{}: expected 3 tab-separated columns, found {}",
                    path.display(),
                    n + 1,
                    cols.len()
                )));
            }
            if cols[1] == FILTERED && cols[2] == FILTERED {
                continue;
            }
            pairs.push((cols[0].to_string(), cols[2].to_string()));
        }
        return Ok(pairs);
    }
    let (o, r) = (args.originals.as_ref().expect("clap"), args.rewrites.as_ref().expect("clap"));
    let (ot, rt) = (fs::read_to_string(o)?, fs::read_to_string(r)?);
    let (ol, rl): (Vec<&str>, Vec<&str>) = (ot.lines().collect(), rt.lines().collect());
    if ol.len() != rl.len() {
        return Err(Error::Input(format!(
            "{} has {} lines but {} has {}",
            o.display(),
            ol.len(),
            r.display(),
            rl.len()
        )));
    }
    Ok(ol.into_iter().zip(rl).map(|(a, b)| (a.to_string(), b.to_string())).collect())
}

fn clean(text: &str) -> String {
    match preprocess(text, usize::MAX) {
        Cleaned::Kept(t) => t,
        Cleaned::Filtered => unreachable!("no length limit"),
    }
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let pairs: Vec<(String, String)> = eval_pairs(&args)?
        .into_iter()
        .map(|(a, b)| (clean(&a), clean(&b)))
        .collect();
    let fluency_lm = args.fluency_model.as_deref().map(load_ngram).transpose()?;
    let vocab = match (&args.vocab, &fluency_lm) {
        (Some(p), _) => Vocabulary::load(p)?,
        (None, Some(lm)) => lm.vocabulary().clone(),
        (None, None) => {
            let mut b = VocabularyBuilder::new();
            for (a, r) in &pairs {
                b.encode(a);
                b.encode(r);
            }
            b.finish()?
        }
    };
    let mut originals = Vec::with_capacity(pairs.len());
    let mut rewrites = Vec::with_capacity(pairs.len());
    for (a, r) in &pairs {
        originals.push(TokenSequence::encode(&vocab, a)?);
        rewrites.push(TokenSequence::encode(&vocab, r)?);
    }

    let precomputed = |kind, path: &Option<PathBuf>| path.as_ref().map(|p| PrecomputedScores::load(kind, p)).transpose();
    let tox_file = precomputed(ScorerKind::Toxicity, &args.toxicity_scores)?;
    let flu_file = precomputed(ScorerKind::Fluency, &args.fluency_scores)?;
    let sim_file = precomputed(ScorerKind::Similarity, &args.similarity_scores)?;
    let lexicon = args.lexicon.as_ref().map(|p| LexiconToxicity::load(&vocab, p)).transpose()?;
    let ngram_fluency = fluency_lm.as_ref().map(NGramFluency::new);

    let toxicity: &dyn Scorer = match (&tox_file, &lexicon) {
        (Some(s), _) => s,
        (None, Some(l)) => l,
        (None, None) => unreachable!("clap requires one toxicity source"),
    };
    let fluency: &dyn Scorer = match (&flu_file, &ngram_fluency) {
        (Some(s), _) => s,
        (None, Some(f)) => f,
        (None, None) => unreachable!("clap requires one fluency source"),
    };
    let similarity: &dyn Scorer = match &sim_file {
        Some(s) => s,
        None => &OverlapSimilarity,
    };
    let report = metrics::evaluate(&originals, &rewrites, ScorerSet::new(toxicity, fluency, similarity)?)?;
    let text = match args.format {
        ReportFormat::Tsv => report.to_tsv(),
        ReportFormat::Json => report.to_json() + "\n",
    };
    write_output(args.output.as_deref(), &text)
}

pub fn vocab(args: VocabArgs) -> Result<()> {
    let mut builder = VocabularyBuilder::new();
    for path in &args.corpus {
        corpus::load_dataset_into(path, SourceTag::Other, &mut builder)?;
    }
    let vocab = builder.finish()?;
    vocab.save(&args.out)?;
    eprintln!("# marco vocab tokens={} checksum={}", vocab.len(), vocab.checksum());
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let source: SourceTag = args.source.parse()?;
    let (vocab, loaded) = match &args.vocab {
        Some(p) => {
            let vocab = Vocabulary::load(p)?;
            let loaded = corpus::load_with_vocabulary(&args.corpus, source, &vocab)?;
            (vocab, loaded)
        }
        None => {
            let (loaded, builder) = corpus::load_dataset(&args.corpus, source)?;
            (builder.finish()?, loaded)
        }
    };
    if let Some(p) = &args.vocab_out {
        vocab.save(p)?;
    }
    let params = NGramParams {
        order: args.order,
        k: args.k,
        copy_weight: args.lambda,
    };
    let model = train_ngram(&vocab, &loaded.sequences, params)?;
    model.save(&args.out)?;
    let filtered = loaded.manifest.iter().filter(|c| matches!(c, Cleaned::Filtered)).count();
    eprintln!(
        "# marco train sequences={} filtered={} tokens={} order={} k={} lambda={}",
        loaded.sequences.len(),
        filtered,
        vocab.len(),
        args.order,
        args.k,
        args.lambda
    );
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let model: Arc<dyn DenoisingLm> = Arc::new(load_model(&args.model)?);
    let handle = serve_model(model, args.bind.as_str())?;
    println!("{}", handle.endpoint());
    io::stdout().flush()?;
    handle.wait();
    Ok(())
}

pub fn decode_step(args: DecodeStepArgs) -> Result<()> {
    let (config, _) = resolve_config(&args.config)?;
    let (vocab, models) = load_models(&[&args.base, &args.expert, &args.antiexpert], args.vocab.as_deref())?;
    let condition = TokenSequence::encode(&vocab, &args.condition)?;
    let masked = vocab.encode(args.masked.as_deref().unwrap_or(&args.condition));
    let prefix = TokenSequence::encode(&vocab, &args.prefix)?;
    let base = models[0].next_token_logprobs(condition.tokens(), prefix.tokens())?;
    let expert = models[1].next_token_logprobs(&masked, prefix.tokens())?;
    let anti = models[2].next_token_logprobs(&masked, prefix.tokens())?;
    let combined = combined_scores(&base, &expert, &anti, &config.weights(), prefix.tokens())?;
    let ensembled = softmax(&combined, 1.0)?;
    let chosen = greedy_choice(&ensembled);
    let line = json!({
        "base": base.values(),
        "expert": expert.values(),
        "antiexpert": anti.values(),
        "combined": combined,
        "ensembled": ensembled.probs(),
        "chosen": chosen,
        "chosen_token": vocab.render(chosen),
    });
    write_output(None, &format!("{line}\n"))
}

//! The library end to end through its public API: CSV in, predictions and
//! scores out, with every on-disk format round-tripped on the way.

use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stance_core::embedding::{load_embeddings, Embedder, EmbeddingStore, SentenceEmbedding};
use stance_core::eval::report;
use stance_core::external::PolarityLexicon;
use stance_core::nn::{load_checkpoint, save_checkpoint, train, Architecture, BranchHyper, Dataset, TrainConfig};
use stance_core::predictions::{align, read_predictions, write_predictions};
use stance_core::statistical::build_vocabulary;
use stance_core::text::normalize;
use stance_core::{load_corpus, split, Block, Execution, FeatureSet, Featurizer, MlpModel, Vocabulary};

const STANCES: &str = "Headline,Body ID,Stance
Police confirm the bridge collapse,1,agree
Bridge collapse was a hoax,1,disagree
Reports say the bridge may have collapsed,1,discuss
Celebrity launches perfume,1,unrelated
Museum confirms stolen painting found,2,agree
Stolen painting story is fake,2,disagree
Painting reportedly found in attic,2,discuss
Stock markets rally on Friday,2,unrelated
Volcano erupts near village,3,agree
Volcano eruption claims are false,3,disagree
Scientists discuss volcano activity,3,discuss
New phone released today,3,unrelated
";

const BODIES: &str = "Body ID,articleBody
1,\"The bridge over the river collapsed on Monday, police said. Officials confirmed the collapse.\"
2,\"A painting stolen decades ago was found in an attic, the museum said.\"
3,\"The volcano erupted overnight, forcing villagers to evacuate, officials said.\"
";

fn small_hyper(block: Block) -> BranchHyper {
    let mut h = BranchHyper::default_for(block);
    h.widths = match block {
        Block::External => vec![6],
        _ => vec![8, 4],
    };
    h
}

#[test]
fn csv_to_scores_through_every_format() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("stances.csv"), STANCES).unwrap();
    fs::write(p.join("bodies.csv"), BODIES).unwrap();
    let corpus = load_corpus(p.join("stances.csv"), p.join("bodies.csv")).unwrap();
    assert_eq!(corpus.len(), 12);

    let (train_c, val_c) = split(&corpus, 0.34, 1).unwrap();
    let train_ids: Vec<u64> = train_c.bodies().keys().copied().collect();
    assert!(val_c.bodies().keys().all(|id| !train_ids.contains(id)));

    let vocab = build_vocabulary(&train_c, 30).unwrap();
    vocab.save(&p.join("vocab.txt")).unwrap();
    let vocab = Vocabulary::load(&p.join("vocab.txt")).unwrap();

    // An embedding store covering every text, written in the binary format.
    let mut store = EmbeddingStore::new(6);
    for (i, pair) in corpus.pairs().iter().enumerate() {
        for text in [pair.headline.as_str(), &*pair.body] {
            let key = normalize(text);
            if store.get(&key).is_none() {
                let v = (0..6).map(|j| ((i * 7 + j) % 5) as f64 - 2.0).collect();
                store.insert(key, SentenceEmbedding(v)).unwrap();
            }
        }
    }
    fs::write(p.join("emb.bin"), store.to_binary()).unwrap();
    let embedder = Embedder::Store(load_embeddings(&p.join("emb.bin")).unwrap());

    let lexicon = PolarityLexicon::default();
    let featurizer = Featurizer::new(&Block::ALL, &vocab, &lexicon, &embedder).unwrap();
    let train_set = featurizer.featurize(&train_c, Execution::default()).unwrap();
    train_set.save(&p.join("train.feat")).unwrap();
    let train_set = FeatureSet::load(&p.join("train.feat")).unwrap();
    assert_eq!(
        train_set.layout.entries(),
        &[(Block::Neural, 12), (Block::Statistical, 60), (Block::External, 50)]
    );
    let val_set = featurizer.featurize(&val_c, Execution::default()).unwrap();

    let arch = Architecture::from_layout(&train_set.layout, small_hyper).unwrap();
    let model = MlpModel::init(&arch, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let config = TrainConfig {
        max_epochs: 5,
        ..TrainConfig::default()
    };
    let out = train(
        model,
        &Dataset::from_features(&train_set).unwrap(),
        &Dataset::from_features(&val_set).unwrap(),
        &config,
        Execution::default(),
    )
    .unwrap();
    assert!(!out.history.is_empty() && out.history.len() <= 5);

    save_checkpoint(&out.model, &p.join("model.ckpt")).unwrap();
    let model = load_checkpoint(&p.join("model.ckpt")).unwrap();
    assert_eq!(model, out.model);

    let matrices = val_set.matrices();
    let views: Vec<_> = matrices.iter().map(|m| m.view()).collect();
    let preds = model.predict(&views, Execution::default()).unwrap();
    write_predictions(&p.join("pred.csv"), val_c.pairs(), &preds).unwrap();
    write_predictions(&p.join("gold.csv"), val_c.pairs(), &val_c.golds().unwrap()).unwrap();

    let gold_rows = read_predictions(&p.join("gold.csv")).unwrap();
    let pred_rows = read_predictions(&p.join("pred.csv")).unwrap();
    let (g, pr) = align(&gold_rows, &pred_rows).unwrap();
    let rep = report(&g, &pr).unwrap();
    assert_eq!(rep.confusion.total(), val_c.len() as u64);
    assert!((0.0..=100.0).contains(&rep.score_official_weighted));
    let perfect = report(&g, &g).unwrap();
    assert_eq!(perfect.score_official_weighted, 100.0);
    assert_eq!(perfect.score_paper_formula, 100.0);
}

#[test]
fn execution_modes_agree_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("stances.csv"), STANCES).unwrap();
    fs::write(p.join("bodies.csv"), BODIES).unwrap();
    let corpus = load_corpus(p.join("stances.csv"), p.join("bodies.csv")).unwrap();
    let vocab = build_vocabulary(&corpus, 40).unwrap();
    let lexicon = PolarityLexicon::default();
    let embedder = Embedder::Fallback { dim: 32, seed: 9 };
    let featurizer = Featurizer::new(&Block::ALL, &vocab, &lexicon, &embedder).unwrap();
    let seq = featurizer.featurize(&corpus, Execution::Sequential).unwrap();
    let par = featurizer.featurize(&corpus, Execution::Parallel).unwrap();
    assert_eq!(seq.to_bytes(), par.to_bytes());
}

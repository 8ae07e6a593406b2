#![allow(dead_code)]

use factscore::afg::{build_afg_prompt, parse_atomic_facts, split_sentences, DemoEntry, SubjectGeneration};
use factscore::afv::build_afv_prompt;
use factscore::backends::mock::MockBackend;
use factscore::backends::{BackendConfig, BackendKind};
use factscore::cli::RunConfig;
use factscore::corpus::{ingest_dump, KbStore};
use factscore::jsonl::write_records;
use factscore::retrieval::{Bm25Params, DemoSelector, KbIndex};
use std::path::{Path, PathBuf};

pub const KB_DUMP: &str = concat!(
    r#"{"title":"Ada Lovelace","text":"Ada Lovelace was an English mathematician and writer. She is known for her work on the Analytical Engine. She was born in London in 1815."}"#,
    "\n",
    r#"{"title":"Alan Turing","text":"Alan Turing was an English mathematician and computer scientist. He was born in Maida Vale, London, in 1912. He worked at Bletchley Park during the Second World War."}"#,
    "\n",
    r#"{"title":"Grace Hopper","text":"Grace Hopper was an American computer scientist and United States Navy rear admiral. She was born in New York City in 1906. She helped develop COBOL."}"#,
    "\n"
);

pub fn demos() -> Vec<DemoEntry> {
    vec![
        DemoEntry {
            sentence: "Marie Curie was a Polish and French physicist.".into(),
            facts: vec![
                "Marie Curie was Polish.".into(),
                "Marie Curie was French.".into(),
                "Marie Curie was a physicist.".into(),
            ],
        },
        DemoEntry {
            sentence: "He was born in Vienna in 1900.".into(),
            facts: vec!["He was born in Vienna.".into(), "He was born in 1900.".into()],
        },
    ]
}

pub fn generations() -> Vec<SubjectGeneration> {
    vec![
        SubjectGeneration {
            topic: "Ada Lovelace".into(),
            input: "Tell me a bio of Ada Lovelace.".into(),
            output: "Ada Lovelace was an English mathematician. She was born in Paris in 1815.".into(),
        },
        SubjectGeneration {
            topic: "Alan Turing".into(),
            input: "Tell me a bio of Alan Turing.".into(),
            output: "Alan Turing was a computer scientist. He worked at Bletchley Park.".into(),
        },
        SubjectGeneration {
            topic: "Grace Hopper".into(),
            input: "Tell me a bio of Grace Hopper.".into(),
            output: "I'm sorry, I could not find any information about Grace Hopper.".into(),
        },
    ]
}

/// Fact list the scripted generator returns for one sentence.
pub fn facts_for(sentence: &str) -> &'static str {
    match sentence {
        "Ada Lovelace was an English mathematician." => {
            "- Ada Lovelace was English.\n- Ada Lovelace was a mathematician."
        }
        "She was born in Paris in 1815." => "- She was born in Paris.\n- She was born in 1815.",
        "Alan Turing was a computer scientist." => "- Alan Turing was a computer scientist.",
        "He worked at Bletchley Park." => "- He worked at Bletchley Park.",
        other => panic!("unscripted sentence {other:?}"),
    }
}

/// Verdict text the scripted validator returns for one fact.
pub fn verdict_for(fact: &str) -> &'static str {
    if fact.contains("Paris") {
        "False"
    } else {
        "True"
    }
}

pub struct Toy {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub generations: PathBuf,
    pub script: PathBuf,
}

/// Writes a 3-topic knowledge base, demo pool, generations, and a mock
/// script that answers every request of a `score` run.
pub fn toy(dir: &Path) -> Toy {
    let dump = dir.join("kb.jsonl");
    std::fs::write(&dump, KB_DUMP).unwrap();
    let store_path = dir.join("kb.fekb");
    ingest_dump(&dump, &store_path, 256).unwrap();
    let demo_path = dir.join("demos.jsonl");
    write_records(&demo_path, &demos()).unwrap();
    let gen_path = dir.join("generations.jsonl");
    write_records(&gen_path, &generations()).unwrap();

    let script = dir.join("script.jsonl");
    let mut config = RunConfig {
        kb_store_path: store_path.clone(),
        demo_pool_path: demo_path,
        output_dir: dir.join("out"),
        afg_backend: mock_config(&script),
        afv_backend: mock_config(&script),
        seed: Some(7),
        ..RunConfig::default()
    };
    config.afv_backend.parallelism = 2;

    let params = config.generation_params();
    let selector = DemoSelector::new(demos()).unwrap();
    let kb = KbIndex::from_store(&KbStore::open(&store_path).unwrap(), Bm25Params::default()).unwrap();
    let mut mock = MockBackend::new();
    for g in generations().iter().filter(|g| !g.output.starts_with("I'm sorry")) {
        for s in split_sentences(&g.output) {
            let reply = facts_for(&s.text);
            mock.script_chat(&build_afg_prompt(&s, selector.select(&s.text)), &params, reply);
            for fact in parse_atomic_facts(reply, s.index).facts {
                let passages = kb.retrieve(&g.topic, &fact.text, config.top_k_passages);
                let prompt = build_afv_prompt(&g.topic, &fact, &passages);
                let answer = verdict_for(&fact.text);
                mock.script_chat(&prompt, &params, answer);
                let (t, f) = if answer == "True" { (-0.1, -2.5) } else { (-3.0, -0.2) };
                mock.script_logprobs(&prompt, [("True", t), ("False", f)]);
            }
        }
    }
    write_records(&script, &mock.entries()).unwrap();
    Toy {
        dir: dir.to_path_buf(),
        config,
        generations: gen_path,
        script,
    }
}

pub fn mock_config(script: &Path) -> BackendConfig {
    BackendConfig {
        kind: BackendKind::Mock,
        model_name: "scripted".into(),
        script: Some(script.to_path_buf()),
        ..BackendConfig::default()
    }
}

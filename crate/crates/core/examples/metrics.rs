//! Score a prediction against gold answers.
//!
//!     cargo run --example metrics -- "Barack Obama" Obama
//!     cargo run --example metrics -- --lang zh 北京 北京大学

use dualpath::{em_score, f1_score, normalize_answer, LanguageTag};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    let mut lang = LanguageTag::english();
    if args.first().map(String::as_str) == Some("--lang") && args.len() > 1 {
        lang = LanguageTag::new(&args[1])?;
        args.drain(..2);
    }
    if args.len() < 2 {
        args = vec!["the Eiffel Tower!".into(), "Eiffel Tower".into(), "Tour Eiffel".into()];
    }
    let (prediction, golds) = args.split_first().unwrap();

    println!("prediction  {prediction:?} -> {:?}", normalize_answer(prediction, &lang));
    for g in golds {
        println!("gold        {g:?} -> {:?}", normalize_answer(g, &lang));
    }
    println!("EM {}  F1 {:.4}", em_score(prediction, golds, &lang), f1_score(prediction, golds, &lang));
    Ok(())
}

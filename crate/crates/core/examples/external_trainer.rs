//! Talks to an external trainer over the line protocol. The trainer here is
//! a shell one-liner that accepts a session and reports fixed metrics; swap
//! in a real command line to train models.

use archsearch::complexity::InputShape;
use archsearch::evaluation::{
    evaluate_external, EvaluationBudget, TrainerEndpoint, TrainerMode, TrainerSession,
};
use archsearch::space::{sample_uniform, SearchSpaceDef};

const TRAINER: &str = r#"while IFS= read -r line; do
  case "$line" in
    *'"type":"hello"'*) echo '{"type":"hello","protocol":1,"mode":"session"}' ;;
    *'"type":"shutdown"'*) exit 0 ;;
    *) id=$(printf '%s' "$line" | sed 's/.*"trial_id":\([0-9]*\).*/\1/')
       echo "{\"type\":\"result\",\"trial_id\":$id,\"status\":\"ok\",\"metrics\":{\"ce\":0.41,\"accuracy\":86.5,\"precision_macro\":71.2,\"recall_macro\":69.8,\"f1_macro\":70.1},\"flops\":null,\"epochs_ran\":42}" ;;
  esac
done"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = SearchSpaceDef::standard();
    let shape = InputShape {
        seq_len: 90,
        feature_dims: vec![12],
        num_classes: 3,
    };
    let budget = EvaluationBudget::default();

    let once = TrainerEndpoint {
        timeout_secs: 10.0,
        ..TrainerEndpoint::new(TRAINER)
    };
    let r = evaluate_external(&once, &shape, 1, &sample_uniform(&space, 1)?, &budget);
    println!("stateless: {} ce={:?}", r.status, r.objective);

    let mut session = TrainerSession::new(
        TrainerEndpoint {
            mode: TrainerMode::Session,
            ..once.clone()
        },
        shape.clone(),
    );
    for id in 2..5 {
        let r = session.evaluate_genotype(id, &sample_uniform(&space, id)?, &budget);
        println!(
            "session trial {id}: {} ce={:?} epochs={:?}",
            r.status, r.objective, r.epochs_ran
        );
    }
    println!("persistent process: {}", session.is_persistent());

    let silent = TrainerEndpoint {
        timeout_secs: 0.5,
        ..TrainerEndpoint::new("sleep 5")
    };
    let r = evaluate_external(&silent, &shape, 9, &sample_uniform(&space, 9)?, &budget);
    println!(
        "sleeping trainer: {} ({})",
        r.status,
        r.message.unwrap_or_default()
    );
    Ok(())
}

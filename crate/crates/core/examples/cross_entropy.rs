//! Scores a handful of softmax outputs the way a trainer reports them.

use archsearch::metrics::{classification_report, per_class_scores, PredictionBatch};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let probabilities = vec![
        vec![0.6, 0.3, 0.1],
        vec![0.2, 0.7, 0.1],
        vec![0.1, 0.2, 0.7],
        vec![0.5, 0.4, 0.1],
        vec![0.3, 0.3, 0.4],
    ];
    let labels = vec![0, 1, 2, 1, 0];
    let batch = PredictionBatch::new(probabilities, labels)?;

    let m = classification_report(&batch);
    println!("CE        {:.4}", m.cross_entropy);
    println!("accuracy  {:.2}", m.accuracy);
    println!("precision {:.2}", m.precision_macro);
    println!("recall    {:.2}", m.recall_macro);
    println!("F1        {:.2}", m.f1_macro);

    println!("class  precision  recall  f1");
    for (k, p, r, f) in per_class_scores(&batch) {
        println!("{k:>5}  {p:>9.3}  {r:>6.3}  {f:.3}");
    }
    Ok(())
}

use sincere_core::gradients::batch_loss_and_gradient;
use sincere_core::losses::{batch_loss, batch_loss_by_pairs, Aggregation, LossKind};
use sincere_core::trainkit::{evaluate, generate_dataset, train, EncoderKind, EvaluationMode, SyntheticDatasetSpec, TrainConfig};
use sincere_core::{cosine_similarity_matrix, EmbeddingMatrix, LabelVector, Temperature};

fn small_spec(k: usize) -> SyntheticDatasetSpec {
    SyntheticDatasetSpec { k_classes: k, per_class: 40, feature_dim: 8, seed: 11, ..Default::default() }
}

#[test]
fn trained_metrics_match_a_fresh_evaluation() {
    let data = generate_dataset(&small_spec(3)).unwrap();
    let cfg = TrainConfig { epochs: 15, batch_size: 32, seed: 4, ..Default::default() };
    let out = train(&cfg, &data, EncoderKind::Table { dim: 8 }).unwrap();
    assert_eq!(out.metrics.epoch_losses.len(), 15);
    assert!(out.test_embeddings.is_none());
    assert_eq!(out.metrics.evaluation, EvaluationMode::LeaveOneOut);
    let (mode, margin, knn) =
        evaluate(out.train_embeddings.rows(), &data.train.labels, None, &cfg.knn_k).unwrap();
    assert_eq!(mode, out.metrics.evaluation);
    assert_eq!(margin, out.metrics.margin);
    assert_eq!(knn, out.metrics.knn_accuracy);
}

#[test]
fn mlp_embeds_the_held_out_split() {
    let data = generate_dataset(&small_spec(2)).unwrap();
    let cfg = TrainConfig { epochs: 10, batch_size: 16, loss: LossKind::SupCon, ..Default::default() };
    let out = train(&cfg, &data, EncoderKind::Mlp { hidden: 12, dim: 4 }).unwrap();
    let test = out.test_embeddings.as_ref().unwrap();
    assert_eq!(test.n(), data.test.len());
    assert_eq!(test.d(), 4);
    assert_eq!(out.metrics.evaluation, EvaluationMode::HeldOut);
    for i in 0..test.n() {
        let norm: f64 = test.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}

#[test]
fn summary_kernels_agree_with_the_direct_ones() {
    let data = generate_dataset(&small_spec(3)).unwrap();
    let n = 12;
    let d = data.train.d;
    let mut values = Vec::new();
    for i in 0..n {
        let row = data.train.row(i * 9);
        let norm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        values.extend(row.iter().map(|x| x / norm));
    }
    let z = EmbeddingMatrix::new(n, d, values).unwrap();
    let labels = LabelVector::new((0..n).map(|i| data.train.labels[i * 9]).collect());
    let sim = cosine_similarity_matrix(z.rows()).unwrap();
    let tau = Temperature::new(0.3).unwrap();
    for kind in [LossKind::Sincere, LossKind::SupCon, LossKind::eps_sup_info_nce(0.25).unwrap()] {
        let summary = batch_loss(kind, z.rows(), &labels, tau, Aggregation::Strict).unwrap();
        let direct = batch_loss_by_pairs(kind, &sim, &labels, tau).unwrap();
        assert!((summary.batch_loss - direct).abs() <= 1e-12 * direct.abs().max(1.0), "{}", kind.name());
        let both = batch_loss_and_gradient(kind, z.rows(), &labels, tau, Aggregation::Strict).unwrap();
        assert_eq!(both.loss, summary.batch_loss);
        assert_eq!(both.gradient.len(), n * d);
    }
}

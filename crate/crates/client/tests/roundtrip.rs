use btg_client::{is_not_found, Client};
use btg_core::config::ExperimentConfig;
use btg_core::datasets::Synthetic;
use btg_core::experiments::QuantileBenchConfig;
use btg_core::ErrorKind;

async fn client() -> Client {
    let (addr, _handle) = btg_service::spawn("127.0.0.1:0").await.unwrap();
    Client::new(format!("http://{addr}"))
}

#[tokio::test]
async fn fit_predict_loocv() {
    let c = client().await;
    assert_eq!(c.health().await.unwrap()["status"], "ok");
    let split = c.generate(Synthetic::IntSine, 2, Some(15), Some(10)).await.unwrap();
    // served data match local generation bit for bit
    let local = Synthetic::IntSine.generate_sized(15, 10, 2);
    assert_eq!(split.to_split().unwrap(), local);

    let info = c.fit("BTG-I", split.train.clone(), &ExperimentConfig::default()).await.unwrap();
    assert_eq!(c.models().await.unwrap().len(), 1);
    let preds = c.predict(&info.id, split.test.x.clone(), Some(vec![0.025, 0.5, 0.975])).await.unwrap();
    assert_eq!(preds.len(), 10);
    let report = c.loocv(&info.id, 0.95).await.unwrap();
    assert_eq!(report.rows.len(), 15);
    assert!(report.rmse >= report.mae);
    let rule = c.rule(&info.id).await.unwrap().to_rule().unwrap();
    assert_eq!(rule.len(), info.nodes);
    assert!(c.summary_csv(&info.id).await.unwrap().starts_with("node,"));

    c.delete(&info.id).await.unwrap();
    let err = c.model(&info.id).await.unwrap_err();
    assert!(is_not_found(&err));
    assert_eq!(err.kind(), ErrorKind::Config);
}

#[tokio::test]
async fn errors_carry_their_class() {
    let c = client().await;
    let split = c.generate(Synthetic::IntSine, 0, Some(6), Some(2)).await.unwrap();
    let err = c.fit("XGP", split.train, &ExperimentConfig::default()).await.unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    assert!(err.to_string().contains("XGP"));

    let dead = Client::new("http://127.0.0.1:9");
    assert_eq!(dead.health().await.unwrap_err().kind(), ErrorKind::Io);
}

#[tokio::test]
async fn benchmarks() {
    let c = client().await;
    let rows = c.bench_quantile(&QuantileBenchConfig { mixtures: 4, reps: 1, ..Default::default() }).await.unwrap();
    assert_eq!(rows.len(), 3);
    let rows = c.bench_loocv(&[8], false, 1, 0).await.unwrap();
    assert!(rows[0].naive_seconds.is_none());
}

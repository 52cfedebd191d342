use std::fs;
use std::path::Path;

use a2dmn::data::{
    generate_dataset, kfold_split, read_dataset, read_pgm, train_val_split, write_dataset, Fold, PhantomParams,
    Sample,
};
use a2dmn::metrics::{evaluate_with_order, LabelMap};
use a2dmn::train::{
    self, evaluate_folds, fold_checkpoint_path, load_fold_checkpoints, select, transfer_encoder, Checkpoint,
    FoldReport, TrainConfig, TrainResult,
};
use a2dmn::verify::{gradient_suite, oracle_suite, CheckOutcome};
use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use crate::options::{EvalArgs, GenDataArgs, PretrainArgs, SuiteArgs, TrainArgs};

const SPLIT_FILE: &str = "folds.json";

/// Fold assignment saved next to the checkpoints so evaluation reuses it.
#[derive(Debug, Serialize, Deserialize)]
struct SplitFile {
    seed: u64,
    folds: Vec<Fold>,
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let params = PhantomParams {
        width: a.width,
        height: a.height,
        tumor_probability: a.tumor_probability,
        ..PhantomParams::default()
    };
    let samples = generate_dataset(&params, a.n, a.seed)?;
    write_dataset(&a.out, &samples).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("wrote {} phantoms to {}", samples.len(), a.out.display());
    Ok(())
}

fn load_data(dir: &Path) -> Result<Vec<Sample>> {
    let samples = read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    ensure!(!samples.is_empty(), "dataset {} is empty", dir.display());
    Ok(samples)
}

fn ids(samples: &[Sample]) -> Vec<String> {
    samples.iter().map(|s| s.id.clone()).collect()
}

fn report_history(label: &str, r: &TrainResult) {
    for h in &r.history {
        match h.val_loss {
            Some(v) => eprintln!("{label} epoch {} train {:.5} val {:.5}", h.epoch + 1, h.train_loss, v),
            None => eprintln!("{label} epoch {} train {:.5}", h.epoch + 1, h.train_loss),
        }
    }
    eprintln!(
        "{label} best epoch {} loss {:.5}",
        r.best.meta.epoch + 1,
        r.best.meta.best_val_loss
    );
}

fn write_history(path: &Path, r: &TrainResult) -> Result<()> {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for h in &r.history {
        let v = h.val_loss.map_or(String::new(), |v| v.to_string());
        s.push_str(&format!("{},{},{v}\n", h.epoch + 1, h.train_loss));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn pretrain(a: &PretrainArgs) -> Result<()> {
    let cfg = a.common.config()?;
    let samples = load_data(&a.common.data)?;
    let order = cfg.loss.class_order;
    let binary: Vec<Sample> = samples
        .iter()
        .map(|s| if s.check_binary().is_ok() { s.clone() } else { s.collapse_binary(&order) })
        .collect();
    let (train_ids, val_ids) = train_val_split(&ids(&binary), cfg.val_frac, cfg.seed)?;
    let (tr, va) = (select(&binary, &train_ids)?, select(&binary, &val_ids)?);
    let r = train::pretrain_binary(&cfg, &tr, &va, Some(&a.out))?;
    report_history("pretrain", &r);
    eprintln!("saved {}", a.out.display());
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cfg = a.config()?;
    cfg.validate()?;
    let samples = load_data(&a.common.data)?;
    let folds = kfold_split(&ids(&samples), cfg.k_folds, cfg.val_frac, cfg.seed)?;
    let init = match &a.init_encoder {
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            Some(transfer_encoder(&cfg, &ck.params).context("transferring encoder")?)
        }
        None => None,
    };
    fs::create_dir_all(&a.out)?;
    let split = SplitFile { seed: cfg.seed, folds: folds.clone() };
    fs::write(a.out.join(SPLIT_FILE), serde_json::to_string_pretty(&split)?)?;
    let selected: Vec<usize> = if a.fold.is_empty() { (0..cfg.k_folds).collect() } else { a.fold.iter().map(|f| f - 1).collect() };
    for k in selected {
        let fold = &folds[k];
        let (tr, va) = (select(&samples, &fold.train)?, select(&samples, &fold.val)?);
        let path = fold_checkpoint_path(&a.out, k);
        let r = train::train(&cfg, &tr, &va, init.clone(), Some(&path))
            .with_context(|| format!("training fold {}", k + 1))?;
        report_history(&format!("fold {}", k + 1), &r);
        write_history(&a.out.join(format!("fold{}_history.csv", k + 1)), &r)?;
    }
    Ok(())
}

fn emit(csv: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let samples = load_data(&a.data)?;
    let report = if let Some(models) = &a.models {
        let split_path = models.join(SPLIT_FILE);
        let split: SplitFile = serde_json::from_str(
            &fs::read_to_string(&split_path).with_context(|| format!("reading {}", split_path.display()))?,
        )?;
        let ckpts = load_fold_checkpoints(models, split.folds.len())?;
        let cfg: TrainConfig = ckpts[0].meta.config.clone();
        let params: Vec<_> = ckpts.into_iter().map(|c| c.params).collect();
        evaluate_folds(&cfg, &samples, &split.folds, &params)?
    } else {
        let pred_dir = a.pred.as_deref().expect("clap requires --models or --pred");
        let folds = kfold_split(&ids(&samples), a.folds, 0.15, a.seed)?;
        let order = a2dmn::ClassOrder::default();
        let mut per_fold = Vec::with_capacity(folds.len());
        for fold in &folds {
            let mut reports = Vec::new();
            for s in select(&samples, &fold.test)? {
                let pred_path = pred_dir.join(format!("{}.pgm", s.id));
                let (w, h, labels) =
                    read_pgm(&pred_path).with_context(|| format!("reading prediction {}", pred_path.display()))?;
                let pm = LabelMap::new(w, h, labels).with_context(|| format!("prediction {}", pred_path.display()))?;
                reports.push(evaluate_with_order(&pm, &s.label_map(), order)?);
            }
            per_fold.push(reports);
        }
        FoldReport::from_reports(&per_fold, &order)
    };
    emit(&report.to_csv(), a.out.as_deref())
}

fn run_suite(outcomes: Vec<CheckOutcome>) -> Result<()> {
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    for o in &outcomes {
        println!("{o}");
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", outcomes.len());
    }
    Ok(())
}

pub fn gradcheck(a: &SuiteArgs) -> Result<()> {
    run_suite(gradient_suite(a.seed)?)
}

pub fn oracle(a: &SuiteArgs) -> Result<()> {
    run_suite(oracle_suite(a.seed)?)
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use gptree::data::{empirical_quantile, pot_filter, Dataset};
use gptree::gpd::FitStatus;
use gptree::io::{
    export_dot, leaf_summaries, load_csv, read_query, write_dataset, write_leaf_summary_csv, write_predictions_csv,
    write_sweep_csv, DotOptions, LoadSpec, SweepFit, SweepRow, TreeDocument, SCHEMA_VERSION,
};
use gptree::prune::{select_lambda, PenaltyGrid, Selection};
use gptree::sim::{run_experiment, synthetic_flood, write_summary_csv, Gamma0, SimDesign};
use gptree::{GptError, GrowConfig, Result};

use super::{DataArgs, Design, ExportArgs, FitArgs, PredictArgs, SimulateArgs, SweepArgs, TreeArgs};

fn load(a: &DataArgs) -> Result<Dataset> {
    let spec = LoadSpec {
        response: a.response.clone(),
        categorical: a.categorical.clone(),
        numeric: a.numeric.clone(),
        ignore: a.ignore.clone(),
    };
    load_csv(&a.data, &spec)
}

fn configs(a: &TreeArgs) -> Result<(GrowConfig, PenaltyGrid)> {
    let grow = GrowConfig {
        min_leaf_size: a.min_leaf_size,
        max_leaves: a.max_leaves.unwrap_or(usize::MAX),
        scan_cuts: a.scan_cuts,
        ..GrowConfig::default()
    };
    grow.validate()?;
    let selection = match a.test_fraction {
        Some(fraction) => Selection::TestSample { fraction, seed: a.cv_seed },
        None => Selection::KFold { k: a.folds, seed: a.cv_seed },
    };
    Ok((grow, PenaltyGrid::new(a.lambdas.clone(), selection)?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub(crate) fn fit(a: FitArgs) -> Result<()> {
    let d = load(&a.data)?;
    let u = match (a.threshold.threshold_u, a.threshold.threshold_q) {
        (Some(u), _) => u,
        (None, Some(q)) => empirical_quantile(&d.response, q)?,
        (None, None) => unreachable!("clap requires one threshold flag"),
    };
    let (grow, grid) = configs(&a.tree)?;
    let excess = pot_filter(&d, u)?;
    let selected = select_lambda(&excess, &grow, &grid)?;
    let doc = TreeDocument {
        schema_version: SCHEMA_VERSION,
        threshold_u: u,
        k_n: excess.n_rows(),
        grow,
        prune: grid,
        lambda: selected.lambda,
        schema: excess.schema(),
        root: selected.tree,
    };

    std::fs::create_dir_all(&a.out_dir)?;
    doc.save(&a.out_dir.join("tree.json"))?;
    let dot = export_dot(&doc.root, Some(&doc.schema), &DotOptions { sigma_scale: a.sigma_scale });
    std::fs::write(a.out_dir.join("tree.dot"), dot)?;
    let rows = leaf_summaries(&doc.root, &excess, u)?;
    let mut w = create(&a.out_dir.join("leaves.csv"))?;
    write_leaf_summary_csv(&rows, &mut w)?;
    w.flush()?;

    println!("leaves: {}", doc.root.n_leaves());
    println!("k_n: {}", doc.k_n);
    println!("threshold_u: {}", gptree::numfmt::sig17(u));
    println!("lambda: {}", gptree::numfmt::sig17(doc.lambda));
    let leaves = doc.root.leaves();
    let flagged = leaves.iter().filter(|l| l.fit.status != FitStatus::Converged).count();
    if flagged == leaves.len() {
        return Err(GptError::NonConvergence(flagged));
    }
    Ok(())
}

pub(crate) fn predict(a: PredictArgs) -> Result<()> {
    let doc = TreeDocument::load(&a.tree)?;
    let queries = read_query(File::open(&a.query)?, &doc.schema)?;
    match a.out {
        Some(path) => {
            let mut w = create(&path)?;
            write_predictions_csv(&doc.root, &queries, &mut w)?;
            w.flush()?;
        }
        None => write_predictions_csv(&doc.root, &queries, std::io::stdout().lock())?,
    }
    Ok(())
}

pub(crate) fn simulate(a: SimulateArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out_dir)?;
    let gamma0 = match a.design {
        Design::Step => Gamma0::StepWise,
        Design::Smooth => Gamma0::Smooth,
        Design::Flood => {
            let rows = a.n[0];
            let d = synthetic_flood(rows, a.seed)?;
            let mut w = create(&a.out_dir.join("flood_synthetic.csv"))?;
            write_dataset(&d, &mut w)?;
            w.flush()?;
            println!("wrote {rows} SYNTHETIC rows with the flood-cost schema");
            return Ok(());
        }
    };
    let (grow, grid) = configs(&a.tree)?;
    let mut reports = Vec::new();
    let mut reps = create(&a.out_dir.join("replications.csv"))?;
    for (i, &n) in a.n.iter().enumerate() {
        let design = SimDesign::new(gamma0, n, a.reps, a.seed);
        let report = run_experiment(&design, &grow, &grid)?;
        let mut buf = Vec::new();
        report.write_replications_csv(&mut buf)?;
        // one header for the whole file
        let text = String::from_utf8(buf).expect("csv output is UTF-8");
        let body = if i == 0 { text.as_str() } else { text.split_once('\n').map_or("", |(_, b)| b) };
        reps.write_all(body.as_bytes())?;
        println!("n={n} k_n={} mean_mse={} failed={}", report.k_n, gptree::numfmt::sig17(report.mean), report.n_failed);
        reports.push(report);
    }
    reps.flush()?;
    let mut w = create(&a.out_dir.join("summary.csv"))?;
    write_summary_csv(&reports, &mut w)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn sweep(a: SweepArgs) -> Result<()> {
    let d = load(&a.data)?;
    let (grow, grid) = configs(&a.tree)?;
    let levels: Vec<(f64, Result<f64>)> = if !a.grid.quantiles.is_empty() {
        a.grid.quantiles.iter().map(|&q| (q, empirical_quantile(&d.response, q))).collect()
    } else {
        a.grid.thresholds.iter().map(|&u| (u, Ok(u))).collect()
    };
    let rows: Vec<SweepRow> = levels
        .into_iter()
        .map(|(level, u)| {
            let threshold_u = u.as_ref().copied().unwrap_or(f64::NAN);
            let outcome = u.and_then(|u| {
                let excess = pot_filter(&d, u)?;
                let s = select_lambda(&excess, &grow, &grid)?;
                Ok(SweepFit::new(&s.tree, excess.n_rows(), s.lambda))
            });
            SweepRow { level, threshold_u, outcome: outcome.map_err(|e| e.to_string()) }
        })
        .collect();
    match a.out {
        Some(path) => {
            let mut w = create(&path)?;
            write_sweep_csv(&rows, &mut w)?;
            w.flush()?;
        }
        None => write_sweep_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

pub(crate) fn export(a: ExportArgs) -> Result<()> {
    let doc = TreeDocument::load(&a.tree)?;
    let dot = export_dot(&doc.root, Some(&doc.schema), &DotOptions { sigma_scale: a.sigma_scale });
    match &a.dot {
        Some(path) => std::fs::write(path, dot)?,
        None if a.json.is_none() => print!("{dot}"),
        None => {}
    }
    if let Some(path) = &a.json {
        doc.save(path)?;
    }
    Ok(())
}

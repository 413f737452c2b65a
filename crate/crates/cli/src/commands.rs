use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rffq::features::{gram_exact, gram_features, gram_sketch, generate_with, sketch_data, EstimatorKind, FeatureStream, RffConfig};
use rffq::kae::kae_report;
use rffq::learn::{generate_synthetic, krr_tuned, load_dataset, subsample, DatasetFormat, KrrConfig, KrrMethod, KrrResult, SyntheticSpec};
use rffq::lloyd::{build_lm2_rff, build_lm_rff, distortion_d1, distortion_d2, stocq_distortion_d1, stocq_distortion_d2};
use rffq::sketch::{row_bytes, Sketch};
use rffq::Quantizer;
use serde_json::json;

use crate::{BuildArgs, Context, EstimatorArg, Failure, FormatArg, InfoArgs, KaeArgs, KindArg, KrrArgs, SketchArgs};

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Sparse => DatasetFormat::Sparse,
            FormatArg::Csv => DatasetFormat::DenseCsv,
        }
    }
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Simple => EstimatorKind::Simple,
            EstimatorArg::Normalized => EstimatorKind::Normalized,
        }
    }
}

/// Write `body` to `out` or stdout, behind a timestamp comment when enabled.
pub fn emit(out: Option<&Path>, body: &str, ctx: &Context) -> Result<(), Failure> {
    let mut text = String::new();
    if ctx.timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let _ = writeln!(text, "# generated_at={secs}");
    }
    text.push_str(body);
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn build(kind: KindArg, bits: u32) -> Result<Quantizer, Failure> {
    Ok(match kind {
        KindArg::Lm => build_lm_rff(bits)?,
        KindArg::Lm2 => build_lm2_rff(bits)?,
        KindArg::Stocq => Quantizer::stocq_uniform(bits)?,
    })
}

pub fn build_quantizer(a: &BuildArgs) -> Result<(), Failure> {
    let q = build(a.kind, a.bits)?;
    let (d1, d2) = match a.kind {
        KindArg::Stocq => (stocq_distortion_d1(&q)?, stocq_distortion_d2(&q)?),
        _ => (distortion_d1(&q), distortion_d2(&q)),
    };
    let summary = format!("id={} D1={d1:.6} D2={d2:.6}", q.id_hex());
    match &a.out {
        Some(p) => {
            std::fs::write(p, q.to_json_pretty() + "\n")?;
            println!("{summary}");
        }
        None => {
            println!("{}", q.to_json_pretty());
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn read_quantizer(path: &Path) -> Result<Quantizer, Failure> {
    Ok(Quantizer::from_json(&std::fs::read_to_string(path)?)?)
}

pub fn sketch(a: &SketchArgs) -> Result<(), Failure> {
    let q = read_quantizer(&a.quantizer)?;
    let ds = load_dataset(&a.data, a.format.into(), a.dim, true)?;
    let stream = FeatureStream::new(&RffConfig::new(a.gamma, a.m, ds.d(), a.seed)?);
    let sk = sketch_data(&stream, ds.features(), &q, a.norms)?;
    std::fs::write(&a.out, sk.pack())?;
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn info(a: &InfoArgs) -> Result<(), Failure> {
    let bytes = std::fs::read(&a.sketch)?;
    let sk = Sketch::unpack(&bytes)?;
    let rb = row_bytes(sk.m(), sk.bits());
    let report = json!({
        "n": sk.n(),
        "m": sk.m(),
        "bits": sk.bits(),
        "gamma": sk.gamma(),
        "seed": sk.seed(),
        "quantizer_id": hex(&sk.quantizer_id()),
        "row_bytes": rb,
        "payload_bytes": rb * sk.n(),
        "row_norms": sk.row_norms().is_some(),
        "file_bytes": bytes.len(),
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::Io(e.to_string()))?);
    Ok(())
}

pub fn kae(a: &KaeArgs, ctx: &Context) -> Result<(), Failure> {
    if a.n > a.max_n {
        return Err(Failure::Usage(format!(
            "n = {} needs dense {0} x {0} grams; the cap is {}. Lower --n or raise --max-n if memory allows",
            a.n, a.max_n
        )));
    }
    if a.bits.iter().any(|&b| !(1..=8).contains(&b)) {
        return Err(Failure::Usage("bits must lie in 1..=8".into()));
    }
    let ds = match &a.data {
        Some(p) => subsample(&load_dataset(p, a.format.into(), a.dim, true)?, a.n, a.seed)?,
        None => generate_synthetic(&SyntheticSpec { n_train: a.n, n_test: 1, seed: a.seed, ..Default::default() })?
            .train
            .normalize()?,
    };
    let kind: EstimatorKind = a.estimator.into();
    let x = ds.features();
    let exact = gram_exact(x, a.gamma);
    let stream = FeatureStream::new(&RffConfig::new(a.gamma, a.m, ds.d(), a.seed)?);
    let mut grams = vec![("full".to_string(), 32, gram_features(&generate_with(&stream, x)?, kind)?)];
    for &b in &a.bits {
        for (label, q) in [("lm_rff", build_lm_rff(b)?), ("stocq", Quantizer::stocq_uniform(b)?)] {
            grams.push((label.to_string(), b, gram_sketch(&sketch_data(&stream, x, &q, false)?, &q, kind)?));
        }
    }
    let mut body = String::from("method,b,n,m,gamma,beta_f,beta_2,err_f,err_2,delta1,delta2,epsilon,degenerate\n");
    for (label, b, g) in &grams {
        let r = kae_report(g.view(), exact.view(), None)?;
        let _ = writeln!(
            body,
            "{label},{b},{},{},{},{},{},{},{},{},{},{},{}",
            r.n, a.m, a.gamma, r.beta_f_star, r.beta_2_star, r.err_f_star, r.err_2_star, r.delta1_star, r.delta2_star, r.epsilon, r.degenerate
        );
    }
    emit(a.out.as_deref(), &body, ctx)
}

pub fn krr(a: &KrrArgs, ctx: &Context) -> Result<(), Failure> {
    if a.seeds.is_empty() || a.m.is_empty() || a.gammas.is_empty() {
        return Err(Failure::Usage("seed, m and gamma lists must be non-empty".into()));
    }
    let lambdas = if a.lambdas.is_empty() { KrrConfig::default_lambdas() } else { a.lambdas.clone() };
    let mut methods = vec![KrrMethod::Linear, KrrMethod::Full];
    for &b in &a.bits {
        methods.push(KrrMethod::Quantized(build_lm_rff(b)?));
        methods.push(KrrMethod::Quantized(Quantizer::stocq_uniform(b)?));
    }
    let mut body = String::from(KrrResult::CSV_HEADER);
    body.push('\n');
    for &seed in &a.seeds {
        let spec = SyntheticSpec {
            n_train: a.n_train,
            n_test: a.n_test,
            d: a.d,
            seed,
            cubic_scale: a.cubic_scale,
            noise_sd: a.noise_sd,
        };
        let syn = generate_synthetic(&spec)?;
        for method in &methods {
            let ms: &[usize] = if matches!(method, KrrMethod::Linear) { &a.m[..1] } else { &a.m };
            for &m in ms {
                let cfg = KrrConfig { gamma: a.gammas[0], m, seed, lambdas: lambdas.clone(), estimator: a.estimator.into() };
                let mut r = krr_tuned(&syn.train, &syn.test, method, &cfg, &a.gammas)?;
                if !matches!(method, KrrMethod::Quantized(_)) {
                    r.bits = a.float_bits;
                    r.memory_bits = a.float_bits as u64 * r.m as u64;
                }
                body.push_str(&r.csv_row());
                body.push('\n');
            }
        }
    }
    emit(a.out.as_deref(), &body, ctx)
}

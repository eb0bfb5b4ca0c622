use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::info;
use wasstv::baseline::{tv_reconstruct_with_history, zero_fill_recon, TvConfig};
use wasstv::forward::{fourier_forward, make_radial_mask, FourierOperator, SamplingMask};
use wasstv::grid::{time_slice, total_mass};
use wasstv::metrics::quality;
use wasstv::phantom::{remap_intensity, warp_template};
use wasstv::solver::{
    history_csv, operator_norm_estimate, reconstruct, transport_geodesic, IterationRecord, Mode,
    SolverConfig,
};
use wasstv::{Grid, Image};

use crate::io::{encode_f64, read_image, Outputs};
use crate::settings::{load_source, parse_remap, parse_warp, ConfigFile};
use crate::{Cli, Command, MaskArgs, Method, MetricsArgs, ReconstructArgs, TransportArgs};

pub fn run(cli: Cli) -> Result<()> {
    match cli.threads {
        None => dispatch(cli.command),
        Some(n) => {
            ensure!(n >= 1, "--threads must be at least 1");
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building thread pool")?;
            pool.install(|| dispatch(cli.command))
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Mask(a) => cmd_mask(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Transport(a) => cmd_transport(a),
        Command::Metrics(a) => cmd_metrics(a),
    }
}

/// `inf`, `-inf`, `nan`, otherwise the shortest round-trip decimal.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:?}")
    }
}

fn cmd_mask(a: MaskArgs) -> Result<()> {
    let (nx, ny) = (a.size as usize, a.size_y.unwrap_or(a.size) as usize);
    let mask = make_radial_mask(nx, ny, a.spokes as usize)?;
    let mut out = Outputs::default();
    out.add(&a.out, mask.to_text().into_bytes());
    out.commit()?;
    println!(
        "rate {:.2}% ({} of {} samples, {} spokes) -> {}",
        100.0 * mask.rate,
        mask.count(),
        nx * ny,
        mask.n_spokes,
        a.out.display()
    );
    Ok(())
}

fn quality_csv(method: Method, psnr: f64, ssim: f64, drift: f64, bb: f64) -> String {
    format!(
        "method,psnr_db,ssim,mass_drift,bb_energy\n{},{},{},{},{}\n",
        method.name(),
        fmt_num(psnr),
        fmt_num(ssim),
        fmt_num(drift),
        fmt_num(bb)
    )
}

fn load_mask(path: &Path, dim: (usize, usize)) -> Result<SamplingMask> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mask = SamplingMask::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    ensure!(
        mask.dim() == dim,
        "mask is {:?} but the image is {:?}",
        mask.dim(),
        dim
    );
    Ok(mask)
}

fn rescale_mass(img: &Image, target: f64, grid: &Grid) -> Result<Image> {
    let m = total_mass(img, grid);
    ensure!(m > 0.0, "template has no mass to renormalize");
    Ok(Image::from_array(img.values.mapv(|v| v * target / m)))
}

fn cmd_reconstruct(a: ReconstructArgs) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let defaults = SolverConfig::<f64>::default();
    let size = file.layer("size", a.size)?.unwrap_or(64);
    let method = file.layer("method", a.method)?.unwrap_or(Method::Wtv);
    let out_dir: PathBuf = file.layer("out", a.out)?.unwrap_or_else(|| "out".into());
    let seed = file.layer("seed", a.seed)?.unwrap_or(0);
    let iters = file.layer("iters", a.iters)?.unwrap_or(defaults.max_iters);
    let tol = file.layer("tol", a.tol)?.unwrap_or(defaults.rel_tol);
    let log_every = file.layer("log-every", a.log_every)?.unwrap_or(defaults.log_every);
    let tau = file.layer("tau", a.tau)?;
    let sigma = file.layer("sigma", a.sigma)?;

    let image_src: String = file.layer("image", a.image)?.unwrap_or_else(|| "shepp-logan".into());
    let truth = load_source(&image_src, size).context("loading --image")?;
    let (nx, ny) = truth.dim();
    let mask = match file.layer::<PathBuf>("mask", a.mask)? {
        Some(p) => load_mask(&p, (nx, ny))?,
        None => make_radial_mask(nx, ny, file.layer("spokes", a.spokes)?.unwrap_or(15))?,
    };
    let f = fourier_forward(&truth, &mask)?;

    let mut out = Outputs::default();
    out.add_image(&out_dir.join("truth"), &truth);
    let name = method.name();
    let stem = |s: &str| out_dir.join(format!("{s}_{name}"));

    let row = match method {
        Method::Zerofill => {
            let recon = zero_fill_recon(&f);
            let q = quality(&recon, &truth)?;
            out.add_image(&stem("recon"), &recon);
            quality_csv(method, q.psnr_db, q.ssim, f64::NAN, f64::NAN)
        }
        Method::Tv => {
            let cfg = TvConfig {
                alpha_tv: file.layer("alpha-tv", a.alpha_tv)?.unwrap_or(0.001),
                tau,
                sigma,
                max_iters: iters,
                rel_tol: tol,
                log_every,
            };
            let grid = Grid::new(nx, ny, 2)?;
            let (recon, history) = tv_reconstruct_with_history(&f, &cfg, &grid)?;
            let q = quality(&recon, &truth)?;
            out.add_image(&stem("recon"), &recon);
            out.add(stem("convergence").with_extension("csv"), history_csv(&history).into_bytes());
            quality_csv(method, q.psnr_db, q.ssim, f64::NAN, f64::NAN)
        }
        Method::Wtv => {
            let cfg = SolverConfig {
                alpha: file.layer("alpha", a.alpha)?.unwrap_or(defaults.alpha),
                beta: file.layer("beta", a.beta)?.unwrap_or(defaults.beta),
                tau: tau.unwrap_or(defaults.tau),
                sigma: sigma.unwrap_or(defaults.sigma),
                n_t: file.layer("nt", a.nt)?.unwrap_or(defaults.n_t),
                max_iters: iters,
                rel_tol: tol,
                mode: Mode::Reconstruct,
                log_every,
            };
            let grid = Grid::new(nx, ny, cfg.n_t)?;
            let template = build_template(
                &truth,
                file.layer("template", a.template)?,
                file.layer("warp", a.warp)?,
                file.layer("remap", a.remap)?,
                seed,
                size,
                &grid,
            )?;
            out.add_image(&out_dir.join("template"), &template);
            let (state, diag) = reconstruct(&f, &template, &cfg, &grid)?;
            let recon = state.reconstruction();
            let q = quality(&recon, &truth)?;
            out.add_image(&stem("recon"), &recon);
            for k in 0..grid.n_t {
                let slice = time_slice(&state.rho, k)?;
                out.add(stem("stack").join(format!("rho_{k:03}.f64")), encode_f64(&slice));
            }
            out.add(stem("convergence").with_extension("csv"), history_csv(&state.history).into_bytes());
            report_last(&state.history);
            quality_csv(method, q.psnr_db, q.ssim, diag.mass_drift, diag.bb_energy)
        }
    };
    out.add(stem("quality").with_extension("csv"), row.clone().into_bytes());
    let written = out.commit()?;
    print!("{row}");
    info!("wrote {} files under {}", written.len(), out_dir.display());
    Ok(())
}

fn report_last(history: &[IterationRecord<f64>]) {
    if let Some(r) = history.last() {
        info!("iteration {}: J {:e}, rel_change {:e}", r.iter, r.j, r.rel_change);
    }
}

fn build_template(
    truth: &Image,
    template: Option<String>,
    warp: Option<String>,
    remap: Option<String>,
    seed: u64,
    size: usize,
    grid: &Grid,
) -> Result<Image> {
    let target = total_mass(truth, grid);
    let (mut tpl, generated) = match (template, warp) {
        (Some(_), Some(_)) => bail!("give either --template or --warp, not both"),
        (None, None) => bail!("wtv needs a template: --template <file|generator> or --warp amp=..,freq=.."),
        (None, Some(w)) => (warp_template(truth, &parse_warp(&w, seed)?)?, true),
        (Some(t), None) => (load_source(&t, size).context("loading --template")?, false),
    };
    ensure!(
        tpl.dim() == truth.dim(),
        "template is {:?} but the image is {:?}",
        tpl.dim(),
        truth.dim()
    );
    if let Some(r) = remap {
        let (gamma, invert) = parse_remap(&r)?;
        tpl = rescale_mass(&remap_intensity(&tpl, gamma, invert)?, target, grid)?;
    } else if !generated {
        let m = total_mass(&tpl, grid);
        ensure!(
            (m - target).abs() <= 1e-6 * target.abs(),
            "template mass {m} differs from image mass {target}; the transport prior needs \
             equal masses, so renormalize the template (warped and remapped templates are \
             renormalized automatically)"
        );
    }
    ensure!(tpl.min_value() >= 0.0, "template must be nonnegative");
    Ok(tpl)
}

fn cmd_transport(a: TransportArgs) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let defaults = SolverConfig::<f64>::default();
    let size = file.layer("size", a.size)?.unwrap_or(64);
    let from: String = file
        .layer("from", a.from)?
        .unwrap_or_else(|| "gaussian:cx=0.35,cy=0.5,sigma=0.06".into());
    let to: String = file
        .layer("to", a.to)?
        .unwrap_or_else(|| "gaussian:cx=0.60,cy=0.5,sigma=0.06".into());
    let mu = load_source(&from, size).context("loading --from")?;
    let nu = load_source(&to, size).context("loading --to")?;
    ensure!(mu.dim() == nu.dim(), "--from is {:?} but --to is {:?}", mu.dim(), nu.dim());
    let (nx, ny) = mu.dim();
    let n_t = file.layer("nt", a.nt)?.unwrap_or(defaults.n_t);
    let grid = Grid::new(nx, ny, n_t)?;

    let (tau, sigma) = match (file.layer("tau", a.tau)?, file.layer("sigma", a.sigma)?) {
        (Some(t), Some(s)) => (t, s),
        (t, s) => {
            // τσ‖𝒦‖² = 0.9, weighted toward the primal step
            let op = FourierOperator::new(SamplingMask::full(nx, ny));
            let step = 0.95 / operator_norm_estimate(&grid, &op, Mode::Geodesic, 20);
            (t.unwrap_or(30.0 * step), s.unwrap_or(step / 30.0))
        }
    };
    let cfg = SolverConfig {
        tau,
        sigma,
        n_t,
        max_iters: file.layer("iters", a.iters)?.unwrap_or(3000),
        rel_tol: file.layer("tol", a.tol)?.unwrap_or(defaults.rel_tol),
        log_every: file.layer("log-every", a.log_every)?.unwrap_or(defaults.log_every),
        mode: Mode::Geodesic,
        ..defaults
    };
    let (state, diag) = transport_geodesic(&mu, &nu, &cfg, &grid)?;
    let w2 = diag.w2_estimate().unwrap_or(f64::INFINITY);

    let out_dir: PathBuf = file.layer("out", a.out)?.unwrap_or_else(|| "transport".into());
    let mut out = Outputs::default();
    for k in 0..n_t {
        out.add(out_dir.join(format!("rho_{k:03}.f64")), encode_f64(&time_slice(&state.rho, k)?));
    }
    let row = format!(
        "bb_energy,w2_estimate,mass_drift\n{},{},{}\n",
        fmt_num(diag.bb_energy),
        fmt_num(w2),
        fmt_num(diag.mass_drift)
    );
    out.add(out_dir.join("transport.csv"), row.clone().into_bytes());
    out.add(out_dir.join("convergence.csv"), history_csv(&state.history).into_bytes());
    out.commit()?;
    print!("{row}");
    Ok(())
}

fn cmd_metrics(a: MetricsArgs) -> Result<()> {
    let u = read_image(&a.image)?;
    let r = read_image(&a.reference)?;
    ensure!(
        u.dim() == r.dim(),
        "shape mismatch: {} is {:?}, {} is {:?}",
        a.image.display(),
        u.dim(),
        a.reference.display(),
        r.dim()
    );
    let q = quality(&u, &r)?;
    println!("{},{}", fmt_num(q.psnr_db), fmt_num(q.ssim));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(f64::NAN), "nan");
        assert_eq!(fmt_num(1.0), "1.0");
        assert_eq!(fmt_num(20.0), "20.0");
    }

    #[test]
    fn quality_row_schema() {
        let csv = quality_csv(Method::Tv, 20.0, 0.5, f64::NAN, f64::NAN);
        assert_eq!(csv, "method,psnr_db,ssim,mass_drift,bb_energy\ntv,20.0,0.5,nan,nan\n");
    }
}

//! Gnuplot scripts over the CSV datasets in an output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::run::RunError;

/// Splits `n6_g2-0.1_phi2-0_delta-0.1` into the N/Δ part and the coupling part.
fn split_label(label: &str) -> (String, String) {
    let parts: Vec<&str> = label.split('_').collect();
    let couplings = parts.iter().filter(|p| p.starts_with("g2-") || p.starts_with("phi2-")).copied().collect::<Vec<_>>();
    let rest = parts.iter().filter(|p| !(p.starts_with("g2-") || p.starts_with("phi2-"))).copied().collect::<Vec<_>>();
    (rest.join(" "), couplings.join("_"))
}

fn datasets(dir: &Path, prefix: &str) -> Result<Vec<String>, RunError> {
    let mut out = Vec::new();
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(RunError::MissingDataset(dir.to_path_buf())),
        Err(source) => return Err(RunError::Io { path: dir.to_path_buf(), source }),
    };
    for e in entries {
        let e = e.map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
        let name = e.file_name().to_string_lossy().into_owned();
        if name.starts_with(prefix) && name.ends_with(".csv") {
            out.push(name);
        }
    }
    out.sort();
    Ok(out)
}

fn label_of<'a>(name: &'a str, prefix: &str) -> &'a str {
    &name[prefix.len()..name.len() - 4]
}

fn write(dir: &Path, name: &str, body: String, files: &mut Vec<PathBuf>) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| RunError::Io { path: path.clone(), source })?;
    files.push(path);
    Ok(())
}

const HEADER: &str = "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n";

fn line_plot(output: &str, xlabel: &str, ylabel: &str, series: &[(String, usize, usize, String)]) -> String {
    let mut s = format!("{HEADER}set output '{output}'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\n");
    let body: Vec<String> = series
        .iter()
        .map(|(file, x, y, title)| format!("'{file}' using {x}:{y} with linespoints title '{title}'"))
        .collect();
    s.push_str("plot ");
    s.push_str(&body.join(", \\\n     "));
    s.push('\n');
    s
}

/// Writes one script per dataset family found in `dir`.
///
/// Transport curves sharing (g², φ²) go into one panel with a line per N and Δ.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let mut files = Vec::new();
    let transport = datasets(dir, "transport_")?;
    let band = datasets(dir, "band_")?;
    let bands = datasets(dir, "bands_")?;
    let surfaces = datasets(dir, "surface_")?;
    if transport.is_empty() && band.is_empty() && bands.is_empty() && surfaces.is_empty() {
        return Err(RunError::MissingDataset(dir.to_path_buf()));
    }

    let mut panels: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for f in &transport {
        let (rest, couplings) = split_label(label_of(f, "transport_"));
        panels.entry(couplings).or_default().push((f.clone(), rest));
    }
    for (couplings, members) in &panels {
        let total: Vec<_> = members.iter().map(|(f, r)| (f.clone(), 1, 2, r.clone())).collect();
        write(dir, &format!("plot_transport_{couplings}.gp"), line_plot(&format!("transport_{couplings}.png"), "T", "D", &total), &mut files)?;
        let mut parts = Vec::new();
        for (f, r) in members {
            parts.push((f.clone(), 1, 3, format!("{r} band")));
            parts.push((f.clone(), 1, 4, format!("{r} hop")));
        }
        let mut script = line_plot(&format!("transport_parts_{couplings}.png"), "T", "D", &parts);
        script.insert_str(HEADER.len(), "set logscale y\n");
        write(dir, &format!("plot_transport_parts_{couplings}.gp"), script, &mut files)?;
    }

    if !band.is_empty() {
        let series: Vec<_> = band.iter().map(|f| (f.clone(), 1, 2, label_of(f, "band_").to_string())).collect();
        write(dir, "plot_bandwidth.gp", line_plot("bandwidth.png", "T", "bandwidth", &series), &mut files)?;
    }
    for f in &bands {
        let label = label_of(f, "bands_");
        let script = format!(
            "{HEADER}set output 'bands_{label}.png'\nset xlabel 'k'\nset ylabel 'E(k)'\nset key off\n\
             plot '{f}' using 2:3:1 with linespoints palette\n"
        );
        write(dir, &format!("plot_bands_{label}.gp"), script, &mut files)?;
    }
    for f in &surfaces {
        let label = label_of(f, "surface_");
        for (col, name) in [(3, "xi"), (4, "eta")] {
            let script = format!(
                "{HEADER}set output '{name}_{label}.png'\nset xlabel 'k'\nset ylabel 'q'\nset zlabel '{name}'\n\
                 set dgrid3d\nset hidden3d\nsplot '{f}' using 1:2:{col} with lines title '{name}'\n"
            );
            write(dir, &format!("plot_{name}_{label}.gp"), script, &mut files)?;
        }
    }
    Ok(files)
}

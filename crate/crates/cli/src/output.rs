use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mlsgfem::driver::{reference_error, IterationRecord, Step};

pub const CSV_HEADER: &str = "iter,dofs,error,yp_one,xq_one,cardP,degP,suppP,solver_iters,branch,effindices,truerr";

/// Per-iteration output files, flushed after every iteration.
pub struct RunFiles {
    dir: PathBuf,
    convergence: BufWriter<File>,
    indicators: BufWriter<File>,
    solver: BufWriter<File>,
    indices: BufWriter<File>,
    dump_meshes: bool,
    /// Reference energy for the effectivity columns.
    e_ref: Option<f64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

impl RunFiles {
    pub fn create(dir: &Path, dump_meshes: bool, e_ref: Option<f64>) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        let mut files = RunFiles {
            dir: dir.to_path_buf(),
            convergence: create(&dir.join("convergence.csv"))?,
            indicators: create(&dir.join("indicators.csv"))?,
            solver: create(&dir.join("solver_history.csv"))?,
            indices: create(&dir.join("index_evolution.txt"))?,
            dump_meshes,
            e_ref,
        };
        writeln!(files.convergence, "{CSV_HEADER}")?;
        writeln!(files.indicators, "iter,est_x,est_p,max_spatial,max_parametric,marked_vertices,new_indices")?;
        writeln!(files.solver, "iter,step,residual")?;
        files.flush()?;
        Ok(files)
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        let mut p: Vec<PathBuf> = ["convergence.csv", "indicators.csv", "solver_history.csv", "index_evolution.txt"]
            .iter()
            .map(|f| self.dir.join(f))
            .collect();
        if self.dump_meshes {
            p.push(self.dir.join("meshes"));
        }
        p
    }

    fn flush(&mut self) -> Result<()> {
        self.convergence.flush()?;
        self.indicators.flush()?;
        self.solver.flush()?;
        self.indices.flush()?;
        Ok(())
    }

    pub fn record(&mut self, step: &Step) -> Result<()> {
        let r = step.record;
        let (eff, err) = match self.e_ref.and_then(|e| reference_error(r.energy, e)) {
            Some(err) => (format!("{:.6e}", r.est / err), format!("{err:.6e}")),
            None => (String::new(), String::new()),
        };
        writeln!(
            self.convergence,
            "{},{},{:.6e},{:.6e},{:.6e},{},{},{},{},{},{},{}",
            r.iter, r.dofs, r.est, r.est_x, r.est_p, r.card_p, r.deg_p, r.supp_p, r.solver_iterations, r.branch, eff, err
        )?;
        let new: Vec<String> = r.new_indices.iter().map(|nu| nu.to_string()).collect();
        writeln!(
            self.indicators,
            "{},{:.6e},{:.6e},{:.6e},{:.6e},{},{}",
            r.iter,
            r.est_x,
            r.est_p,
            r.max_spatial,
            r.max_parametric,
            r.n_marked_vertices,
            new.join(" ")
        )?;
        for (k, res) in r.residual_history.iter().enumerate() {
            writeln!(self.solver, "{},{k},{res:.6e}", r.iter)?;
        }
        self.write_indices(r)?;
        if self.dump_meshes {
            self.write_meshes(step)?;
        }
        self.flush()
    }

    fn write_indices(&mut self, r: &IterationRecord) -> Result<()> {
        let width = r.index_dofs.iter().map(|(nu, _)| nu.max_parameter()).max().unwrap_or(0);
        writeln!(self.indices, "iteration {} ({} indices, branch {})", r.iter, r.card_p, r.branch)?;
        for (nu, dofs) in &r.index_dofs {
            let mark = if r.new_indices.contains(nu) { " new" } else { "" };
            writeln!(self.indices, "  {} {dofs}{mark}", nu.display_padded(width))?;
        }
        Ok(())
    }

    fn write_meshes(&self, step: &Step) -> Result<()> {
        let dir = self.dir.join("meshes").join(format!("iter_{:03}", step.record.iter));
        fs::create_dir_all(&dir)?;
        let mut list = create(&dir.join("indices.txt"))?;
        for (k, (nu, mesh)) in step.space.indices.iter().zip(&step.space.meshes).enumerate() {
            writeln!(list, "{k} {nu} mesh_{k:03}.txt")?;
            let mut w = create(&dir.join(format!("mesh_{k:03}.txt")))?;
            mesh.write_dump(&mut w)?;
            w.flush()?;
        }
        list.flush()?;
        Ok(())
    }
}

/// Reads the `dofs` and `error` columns of a convergence CSV.
pub fn read_convergence(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().context("empty CSV")?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| h.trim() == name).with_context(|| format!("CSV has no '{name}' column"));
    let (di, ei) = (col("dofs")?, col("error")?);
    let (mut dofs, mut est) = (Vec::new(), Vec::new());
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .with_context(|| format!("line {}: bad number in column {i}", n + 2))
        };
        dofs.push(get(di)?);
        est.push(get(ei)?);
    }
    Ok((dofs, est))
}

"""Files written by the harness: error CSV, solution rasters, PGM heatmaps, manifest."""
import json
import platform
from pathlib import Path

import numpy as np
import scipy

from ..coefficient import write_raster
from ..errors import ArtifactError

CSV_HEADER = "mu,method,l2_rel,energy_rel,t_predict_s,t_assemble_s,t_solve_s"
SWEEP_HEADER = "l,dof,method,l2_rel,energy_rel,Lambda_star"
TIMING_HEADER = "l,t_online_s,t_gmsfem_s,ratio,online_eigensolves,online_fine_assembly"


def _num(v):
    return repr(float(v))


def error_csv(rows, record_timings=True):
    lines = [CSV_HEADER]
    for r in rows:
        times = [r["t_predict_s"], r["t_assemble_s"], r["t_solve_s"]]
        if not record_timings:
            times = [float("nan")] * 3
        lines.append(",".join([";".join(_num(m) for m in r["mu"]), r["method"],
                               _num(r["l2_rel"]), _num(r["energy_rel"])]
                              + [_num(t) for t in times]))
    return "\n".join(lines) + "\n"


def table_csv(header, rows):
    keys = header.split(",")
    out = [header]
    for r in rows:
        out.append(",".join(r[k] if isinstance(r[k], str) else
                            (str(r[k]) if isinstance(r[k], (int, np.integer)) else _num(r[k]))
                            for k in keys))
    return "\n".join(out) + "\n"


def read_error_csv(path):
    rows = []
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ArtifactError(f"{path}: unexpected header")
    for line in lines[1:]:
        mu, method, *vals = line.split(",")
        rows.append({"mu": [float(m) for m in mu.split(";")], "method": method,
                     **dict(zip(CSV_HEADER.split(",")[2:], map(float, vals)))})
    return rows


def pgm(values, maxval=65535):
    """Plain (P2) greyscale image, min-max scaled; first row of ``values`` is the image bottom."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    s = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    img = np.rint(s * maxval).astype(np.int64)[::-1]
    h, w = img.shape
    body = "\n".join(" ".join(str(x) for x in row) for row in img)
    return f"P2\n{w} {h}\n{maxval}\n{body}\n"


def read_pgm(path):
    tok = Path(path).read_text().split()
    if tok[0] != "P2":
        raise ArtifactError(f"{path}: not a plain PGM")
    w, h, maxval = int(tok[1]), int(tok[2]), int(tok[3])
    data = np.array(tok[4:], dtype=np.int64)
    if data.size != w * h:
        raise ArtifactError(f"{path}: expected {w * h} pixels, got {data.size}")
    return data.reshape(h, w), maxval


def decay_plot(l_values, errors, width=240, height=160):
    """Log-scale error decay rendered as a raster: one dark polyline on a white background."""
    x = np.asarray(l_values, dtype=np.float64)
    y = np.log10(np.maximum(np.asarray(errors, dtype=np.float64), 1e-300))
    img = np.ones((height, width))
    if len(x) == 0:
        return img
    px = 10 + (x - x.min()) / max(np.ptp(x), 1) * (width - 20)
    py = 10 + (y - y.min()) / max(np.ptp(y), 1e-12) * (height - 20)
    for a in range(len(x)):
        b = min(a + 1, len(x) - 1)
        for t in np.linspace(0, 1, 200):
            c = int(round(px[a] + t * (px[b] - px[a])))
            r = int(round(py[a] + t * (py[b] - py[a])))
            img[r, c] = 0.0
        r0, c0 = int(round(py[a])), int(round(px[a]))
        img[max(r0 - 2, 0):r0 + 3, max(c0 - 2, 0):c0 + 3] = 0.0
    return img


def _write(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ArtifactError(f"cannot write {path}: {exc}") from exc


def versions():
    from importlib.metadata import PackageNotFoundError, version
    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    return {"rgmsfem": pkg, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def emit_outputs(report, directory, mesh, config, record_timings=None):
    """Write errors.csv, per-solution rasters and heatmaps, metrics.json and manifest.json."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ArtifactError(f"cannot create {directory}: {exc}") from exc
    if record_timings is None:
        record_timings = config.get("record_timings", False)
    files = ["errors.csv"]
    _write(directory / "errors.csv", error_csv(report.rows, record_timings))
    shape = (mesh.ny + 1, mesh.nx + 1)
    for (n, method), values in sorted(report.solutions.items()):
        stem = f"u_{n:03d}_{method}"
        write_raster(directory / f"{stem}.txt", np.asarray(values).reshape(shape))
        _write(directory / f"{stem}.pgm", pgm(np.asarray(values).reshape(shape)))
        files += [f"{stem}.txt", f"{stem}.pgm"]
    _write(directory / "metrics.json", json.dumps(report.diagnostics, indent=1, sort_keys=True))
    files.append("metrics.json")
    write_manifest(directory, config, files)
    return files


def write_manifest(directory, config, files):
    clean = {k: v for k, v in config.items() if not k.startswith("_")}
    manifest = {"config": clean, "seed": clean.get("seed"), "versions": versions(),
                "files": sorted(files)}
    _write(Path(directory) / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True))

"""File formats and atomic file emission.

* ``density.csv``: ``row,col,density`` with 6 significant digits.
* ``masks.csv``: ``id,polarity,x,y,a,b,theta``.
* ``history.csv``: ``eval,phi,g1,gmin,gmax,vf,eps1,eps2,bwi``, one row per
  objective evaluation.
* ``report.txt``: final objective, volume fraction, length-scale measures,
  relaxation, BWI and mask count.
* ``state.json``: configuration text plus the final masks, enough to
  re-render a run.
"""

import csv
import io as _io
import json
import os
import tempfile

import numpy as np

from . import maskfield

DENSITY_COLUMNS = ("row", "col", "density")
MASK_COLUMNS = ("id", "polarity", "x", "y", "a", "b", "theta")
HISTORY_COLUMNS = ("eval", "phi", "g1", "gmin", "gmax", "vf", "eps1", "eps2", "bwi")


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _g(v):
    return f"{float(v):.6g}"


def _r(v):
    return repr(float(v))


# ------------------------------------------------------------ density


def density_csv(grid, rho):
    rho = np.asarray(getattr(rho, "rho", rho), dtype=float)
    if rho.shape != (grid.n_cells,):
        raise ValueError(f"expected {grid.n_cells} densities")
    rows = []
    for cid in range(grid.n_cells):
        r, c = grid.row_col(cid)
        rows.append((r, c, _g(rho[cid])))
    return _csv_text(DENSITY_COLUMNS, rows)


def parse_density_csv(text):
    """Parse density CSV text.

    Returns
    -------
    n_cols, n_rows : int
    rho : ndarray
        Ordered by cell id (row-major).

    Raises
    ------
    ValueError
        On a wrong header, a missing or duplicate cell or a non-numeric entry.
    """
    reader = csv.reader(_io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != DENSITY_COLUMNS:
        raise ValueError(f"density CSV header must be {','.join(DENSITY_COLUMNS)}")
    entries = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != 3:
            raise ValueError(f"line {lineno}: expected 3 fields")
        try:
            r, c, d = int(row[0]), int(row[1]), float(row[2])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if (r, c) in entries:
            raise ValueError(f"line {lineno}: duplicate cell ({r}, {c})")
        if r < 0 or c < 0:
            raise ValueError(f"line {lineno}: negative index")
        entries[(r, c)] = d
    if not entries:
        raise ValueError("density CSV has no cells")
    n_rows = 1 + max(r for r, _ in entries)
    n_cols = 1 + max(c for _, c in entries)
    if len(entries) != n_rows * n_cols:
        raise ValueError(f"density CSV must cover a full {n_cols}x{n_rows} grid")
    rho = np.array([entries[(r, c)] for r in range(n_rows) for c in range(n_cols)])
    return n_cols, n_rows, rho


def read_density_csv(path):
    with open(path, encoding="utf-8") as fh:
        return parse_density_csv(fh.read())


# ------------------------------------------------------------ masks


def masks_csv(masks):
    rows = [(j, masks.polarity, *(_r(v) for v in p)) for j, p in enumerate(masks.params)]
    return _csv_text(MASK_COLUMNS, rows)


def parse_masks_csv(text, alpha=6.0, eta=3.0, circular=False):
    reader = csv.DictReader(_io.StringIO(text))
    if tuple(reader.fieldnames or ()) != MASK_COLUMNS:
        raise ValueError(f"masks CSV header must be {','.join(MASK_COLUMNS)}")
    rows = list(reader)
    if not rows:
        raise ValueError("masks CSV has no masks")
    polarity = {r["polarity"] for r in rows}
    if len(polarity) != 1:
        raise ValueError("all masks must share one polarity")
    params = np.array([[float(r[k]) for k in MASK_COLUMNS[2:]] for r in rows])
    return maskfield.MaskSet(params, polarity.pop(), alpha, eta, circular)


# ------------------------------------------------------------ history


def history_csv(rows):
    """``rows`` are HistoryRow objects or tuples in column order."""
    out = []
    for row in rows:
        vals = row.as_tuple() if hasattr(row, "as_tuple") else tuple(row)
        out.append((int(vals[0]), *(_r(v) for v in vals[1:])))
    return _csv_text(HISTORY_COLUMNS, out)


def parse_history_csv(text):
    """List of tuples ``(eval, phi, g1, gmin, gmax, vf, eps1, eps2, bwi)``."""
    reader = csv.reader(_io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != HISTORY_COLUMNS:
        raise ValueError(f"history CSV header must be {','.join(HISTORY_COLUMNS)}")
    return [(int(r[0]), *(float(v) for v in r[1:])) for r in reader if r]


# ------------------------------------------------------------ report and state


def report_text(state, extra=None):
    """Plain-text summary of a finished run."""
    m = state.final
    lines = [
        f"status: {state.status}",
        f"evaluations: {state.evals_used}",
        f"phi: {m.phi:.6g}",
        f"vf: {state.vf:.6g}",
        f"volume: {m.field.rho.sum():.6g}",
        f"g1: {m.g1:.6g}",
        f"g_min: {m.gmin:.6g}",
        f"g_max: {m.gmax:.6g}",
        f"eps1: {state.eps1:.6g}",
        f"eps2: {state.eps2:.6g}",
        f"bwi: {m.bwi:.6g}",
        f"masks: {len(state.masks)}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key}: {value}")
    for w in state.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def state_json(config_text, state):
    doc = {
        "config": config_text,
        "status": state.status,
        "vf": state.vf,
        "eps1": state.eps1,
        "eps2": state.eps2,
        "evaluations": state.evals_used,
        "masks": {
            "polarity": state.masks.polarity,
            "alpha": state.masks.alpha,
            "eta": state.masks.eta,
            "circular": state.masks.circular,
            "params": state.masks.params.tolist(),
        },
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def parse_state_json(text):
    """Configuration text and MaskSet of a saved run."""
    doc = json.loads(text)
    try:
        m = doc["masks"]
        masks = maskfield.MaskSet(np.array(m["params"], dtype=float), m["polarity"], m["alpha"], m["eta"], m["circular"])
        return doc["config"], masks, doc
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed state file: {exc}") from None

"""Experiment orchestration: config grammar, seed streams, runners, CSV output.

The config is a tiny line-based ``key = value`` format with bracketed section
headers, chosen over a general markup dialect so the grammar fits in the docs
and runs reproduce bit for bit.  Every runner derives per-replica seeds
statelessly from the base seed, writes CSV tables (UTF-8, comma separated,
floats via repr) plus a manifest, and returns a process exit code that is
zero exactly when all hard assertions pass.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field as dataclass_field, replace

import numpy as np

from . import __version__
from .crossing import continuity_scan
from .excursions import decompose, grid_values, reconstruct, write_cluster_raster
from .lattice import DomainSpec, GreenOperator, build_domain, parse_domain_spec, \
    sample_field
from .metric import sample_openings
from .minkowski import gauge_ratio
from .spinmodel import spin_discrepancy, spin_discrepancy_exact
from .stats import HEIGHT_GAP, height_gap_statistic, l2_identity_check, \
    markov_check, moment_inequality_check, sign_independence_test

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunManifest",
    "parse_config",
    "derive_seed",
    "grid_function",
    "GRID_FUNCTION_NAMES",
    "run",
    "SEED_RULE",
]

_M64 = (1 << 64) - 1
SEED_RULE = "fnv1a64(tag) xor base, splitmix64, xor replica, splitmix64"


# ---------------------------------------------------------------------------
# seed derivation
# ---------------------------------------------------------------------------

def _fnv1a(tag: str) -> int:
    h = 0xCBF29CE484222325
    for byte in tag.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _M64
    return h


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def derive_seed(base_seed: int, replica_index: int, stream_tag: str) -> int:
    """Stateless 64-bit seed for one (replica, stream) pair.

    Distinct stream tags keep field sampling, edge openings and any oracle
    noise on independent streams, and the mixing makes replica order
    irrelevant to every derived stream.
    """
    x = _splitmix64((base_seed & _M64) ^ _fnv1a(stream_tag))
    return _splitmix64(x ^ (replica_index & _M64))


def _rng(cfg: "ExperimentConfig", replica: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(cfg.seed, replica, tag))


# ---------------------------------------------------------------------------
# grid function library
# ---------------------------------------------------------------------------

GRID_FUNCTION_NAMES = ("one", "halfplane", "bump", "eigen11")


def grid_function(name: str, bounds):
    """Named test function over a domain bounding box (x0, x1, y0, y1)."""
    x0, x1, y0, y1 = bounds
    if name == "one":
        return lambda x, y: np.ones_like(np.asarray(x, dtype=np.float64))
    if name == "halfplane":
        mid = 0.5 * (x0 + x1)
        return lambda x, y: (np.asarray(x) > mid).astype(np.float64)
    if name == "bump":
        def bump(x, y):
            u = (2.0 * np.asarray(x) - x0 - x1) / (x1 - x0)
            v = (2.0 * np.asarray(y) - y0 - y1) / (y1 - y0)
            out = np.zeros_like(u)
            ok = (np.abs(u) < 1.0) & (np.abs(v) < 1.0)
            uu = np.where(ok, u, 0.0)
            vv = np.where(ok, v, 0.0)
            out[ok] = np.exp(2.0 - 1.0 / (1.0 - uu[ok] ** 2)
                             - 1.0 / (1.0 - vv[ok] ** 2))
            return out
        return bump
    if name == "eigen11":
        return lambda x, y: (np.sin(np.pi * (np.asarray(x) - x0) / (x1 - x0))
                             * np.sin(np.pi * (np.asarray(y) - y0) / (y1 - y0)))
    raise KeyError(f"unknown grid function: {name!r}")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

class ConfigError(ValueError):
    """All config problems at once, one message per line-anchored error."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class ExperimentConfig:
    domain: DomainSpec = dataclass_field(
        default_factory=lambda: DomainSpec.square(2.0))
    n: int = 6
    n_list: tuple = ()
    samples: int = 100
    seed: int = 0
    out: str = "out"
    a_grid: tuple = (0.25, 0.5)
    b_grid: tuple = (0.5, 0.75)
    mode: str = "metric"
    check: str = "l2"
    J: object = (1,)
    q: int = 2
    K: int = 8
    corrupt: bool = False
    min_hole_vertices: int = 16
    r_list: tuple = (0.02, 0.04, 0.08)
    f_name: str = "one"
    probes: int = 2

    def levels(self) -> tuple:
        return self.n_list if self.n_list else (self.n,)


def _parse_int(lo, hi=None):
    def parse(text):
        v = int(text, 0)
        if v < lo or (hi is not None and v > hi):
            bound = f">= {lo}" if hi is None else f"in [{lo}, {hi}]"
            raise ValueError(f"must be {bound}")
        return v
    return parse


def _parse_float_list(lo, hi):
    def parse(text):
        vals = tuple(float(t) for t in text.split(","))
        if not vals:
            raise ValueError("empty list")
        for v in vals:
            if not (lo < v < hi):
                raise ValueError(f"entries must lie in ({lo}, {hi})")
        return vals
    return parse


def _parse_int_list(lo):
    def parse(text):
        vals = tuple(int(t) for t in text.split(","))
        if not vals:
            raise ValueError("empty list")
        for v in vals:
            if v < lo:
                raise ValueError(f"entries must be >= {lo}")
        return vals
    return parse


def _parse_enum(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _parse_bool(text):
    if text in ("true", "yes", "1"):
        return True
    if text in ("false", "no", "0"):
        return False
    raise ValueError("must be true or false")


def _parse_J(text):
    if text == "all":
        return "all"
    return _parse_int_list(1)(text)


_SCHEMA = {
    "run": {
        "domain": ("domain", parse_domain_spec),
        "n": ("n", _parse_int(2)),
        "n_list": ("n_list", _parse_int_list(2)),
        "samples": ("samples", _parse_int(1)),
        "seed": ("seed", _parse_int(0, _M64)),
        "out": ("out", str),
    },
    "crossing": {
        "a_grid": ("a_grid", _parse_float_list(0.0, 1.0)),
        "b_grid": ("b_grid", _parse_float_list(0.0, 1.0)),
        "mode": ("mode", _parse_enum("metric", "discrete")),
    },
    "stats": {
        "check": ("check", _parse_enum("l2", "moments", "signs", "height-gap")),
        "j": ("J", _parse_J),
        "q": ("q", _parse_int(1)),
        "k": ("K", _parse_int(2)),
        "corrupt": ("corrupt", _parse_bool),
        "mode": ("mode", _parse_enum("metric", "discrete")),
        "min_hole_vertices": ("min_hole_vertices", _parse_int(4)),
        "f": ("f_name", _parse_enum(*GRID_FUNCTION_NAMES)),
    },
    "minkowski": {
        "r_list": ("r_list", _parse_float_list(0.0, 1.0)),
        "f": ("f_name", _parse_enum(*GRID_FUNCTION_NAMES)),
    },
    "spin": {
        "f": ("f_name", _parse_enum(*GRID_FUNCTION_NAMES)),
    },
    "markov": {
        "probes": ("probes", _parse_int(1)),
    },
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the line-based config grammar, reporting every error at once.

    Grammar: optional ``[section]`` headers (``run`` is implicit at the top),
    ``key = value`` lines, ``#`` comments, blank lines.  Unknown sections or
    keys, malformed or out-of-range values and duplicate keys are all
    collected with their line numbers before raising.
    """
    errors = []
    seen: dict[tuple[str, str], int] = {}
    values = {}
    section = "run"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                errors.append(f"line {lineno}: unknown section [{section}]")
                section = None
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        if section is None:
            continue
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in _SCHEMA[section]:
            errors.append(f"line {lineno}: unknown key {key!r} in [{section}]")
            continue
        if (section, key) in seen:
            errors.append(
                f"line {lineno}: duplicate key {key!r} in [{section}] "
                f"(first set at line {seen[(section, key)]})")
            continue
        seen[(section, key)] = lineno
        attr, parser = _SCHEMA[section][key]
        try:
            values[attr] = parser(value)
        except (ValueError, KeyError) as exc:
            errors.append(f"line {lineno}: {key} = {value!r}: {exc}")
    if errors:
        raise ConfigError(errors)
    return replace(ExperimentConfig(), **values)


def config_echo(cfg: ExperimentConfig) -> list[str]:
    """Canonical key = value lines reproducing the effective config."""
    lines = []
    for sec, keys in _SCHEMA.items():
        lines.append(f"[{sec}]")
        for key, (attr, _) in keys.items():
            val = getattr(cfg, attr)
            if attr == "domain":
                d = val
                text = (f"square(side={d.width!r})" if d.width == d.height
                        else f"rect(width={d.width!r}, height={d.height!r})")
                if d.center != (0.0, 0.0):
                    text = text[:-1] + f", center={d.center[0]!r},{d.center[1]!r})"
                val = text
            elif isinstance(val, tuple):
                if not val:  # empty list keys fall back to defaults; not echoable
                    continue
                val = ",".join(str(v) for v in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{key} = {val}")
    return lines


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> int:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(c) for c in row) + "\n")
    return len(rows)


@dataclass
class RunManifest:
    subcommand: str
    base_seed: int
    seed_rule: str
    version: str
    wall_seconds: float
    row_counts: dict
    config_lines: list
    exit_code: int

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"artifact = gfflab {self.version}\n")
            fh.write(f"subcommand = {self.subcommand}\n")
            fh.write(f"base_seed = {self.base_seed}\n")
            fh.write(f"seed_rule = {self.seed_rule}\n")
            fh.write(f"exit_code = {self.exit_code}\n")
            fh.write(f"wall_seconds = {self.wall_seconds!r}\n")
            for name, count in sorted(self.row_counts.items()):
                fh.write(f"rows[{name}] = {count}\n")
            fh.write("# effective configuration\n")
            for line in self.config_lines:
                fh.write(line + "\n")


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def _domain_f(cfg: ExperimentConfig, n: int):
    domain = build_domain(cfg.domain, n)
    f = grid_function(cfg.f_name, cfg.domain.bounds())
    return domain, f


def _run_sample(cfg: ExperimentConfig, out: dict) -> int:
    domain = build_domain(cfg.domain, cfg.n)
    gop = GreenOperator(domain)
    rows = []
    for i in range(cfg.samples):
        fld = sample_field(gop, _rng(cfg, i, "sample:field"))
        v = fld.values
        rows.append((i, cfg.n, domain.mesh, v.min(), v.max(), v.mean(),
                     domain.mesh ** 2 * float(v @ v)))
    out["fields.csv"] = (
        ("replica", "n", "h", "min", "max", "mean", "l2_sq"), rows)
    return 0


def _run_decompose(cfg: ExperimentConfig, out: dict, raster_path=None) -> int:
    domain = build_domain(cfg.domain, cfg.n)
    gop = GreenOperator(domain)
    summary = []
    clusters = []
    worst = 0.0
    for i in range(cfg.samples):
        fld = sample_field(gop, _rng(cfg, i, "decompose:field"))
        dec = decompose(fld, sample_openings(fld, _rng(cfg, i, "decompose:openings")))
        resid = float(np.max(np.abs(reconstruct(dec, fld).values - fld.values)))
        worst = max(worst, resid)
        summary.append((i, cfg.n, dec.n_clusters, resid))
        for rank in range(min(dec.n_clusters, 20)):
            clusters.append((i, rank + 1, dec.signs[rank], dec.masses[rank],
                             dec.diameters[rank],
                             dec.indptr[rank + 1] - dec.indptr[rank]))
        if i == 0 and raster_path is not None:
            with open(raster_path, "w", encoding="utf-8", newline="\n") as fh:
                write_cluster_raster(dec, fh)
    out["decompose.csv"] = (
        ("replica", "n", "n_clusters", "recon_max_abs_residual"), summary)
    out["clusters.csv"] = (
        ("replica", "rank", "sign", "mass", "diameter", "vertices"), clusters)
    return 0 if worst <= 1e-12 else 1


def _run_minkowski(cfg: ExperimentConfig, out: dict) -> int:
    domain, f = _domain_f(cfg, cfg.n)
    gop = GreenOperator(domain)
    rows = []
    for i in range(cfg.samples):
        fld = sample_field(gop, _rng(cfg, i, "minkowski:field"))
        dec = decompose(fld, sample_openings(fld, _rng(cfg, i, "minkowski:openings")))
        if dec.n_clusters == 0:
            continue
        result = gauge_ratio(dec.clusters[0], fld, cfg.r_list, f)
        for (r, ratio), mink in zip(result.rows, result.minkowski):
            rows.append((cfg.n, 1, r, mink, result.field_mass, ratio))
    out["minkowski.csv"] = (
        ("n", "cluster_rank", "r", "minkowski", "field_mass", "ratio"), rows)
    return 0


def _run_crossing(cfg: ExperimentConfig, out: dict) -> int:
    seed0 = derive_seed(cfg.seed, 0, "crossing:scan")
    rows = continuity_scan(cfg.a_grid, cfg.b_grid, cfg.levels(), cfg.samples,
                           np.random.default_rng(seed0), mode=cfg.mode,
                           seed0=seed0, check_monotone=True)
    out["crossing.csv"] = (
        ("n", "a", "b", "M", "p_hat", "ci_low", "ci_high", "seed0"),
        [(r.n, r.a, r.b, r.M, r.p_hat, r.ci_low, r.ci_high, r.seed0)
         for r in rows])
    return 0


def _run_spin(cfg: ExperimentConfig, out: dict) -> int:
    rows = []
    code = 0
    for n in cfg.levels():
        domain, f = _domain_f(cfg, n)
        mean, se = spin_discrepancy(n, f, cfg.samples,
                                    _rng(cfg, 0, f"spin:mc:n{n}"),
                                    shape=cfg.domain)
        det = ""
        if domain.n_interior <= 8192:
            det = spin_discrepancy_exact(GreenOperator(domain), f)
            if abs(mean - det) > 3.0 * se:
                code = 1
        rows.append((n, cfg.f_name, cfg.samples, mean, se, det))
    out["spin.csv"] = (
        ("n", "f_name", "M", "discrepancy", "se", "deterministic_value"), rows)
    return code


def _run_stats(cfg: ExperimentConfig, out: dict) -> int:
    _, f = _domain_f(cfg, cfg.n)
    rng = _rng(cfg, 0, f"stats:{cfg.check}")
    jdesc = cfg.J if isinstance(cfg.J, str) else ",".join(str(j) for j in cfg.J)
    if cfg.check == "l2":
        rep = l2_identity_check(cfg.n, f, cfg.J, cfg.samples, rng,
                                shape=cfg.domain)
        out["stats_l2.csv"] = (
            ("n", "j", "m", "lhs", "rhs", "diff", "pooled_se", "z",
             "max_linear_residual"),
            [(cfg.n, jdesc, rep.samples, rep.lhs, rep.rhs, rep.diff,
              rep.pooled_se, rep.z, rep.max_linear_residual)])
        ok = abs(rep.z) <= 3.0
        if cfg.J == "all":
            ok = ok and rep.max_linear_residual <= 1e-10
        return 0 if ok else 1
    if cfg.check == "moments":
        rep = moment_inequality_check(cfg.n, f, cfg.J, cfg.q, cfg.samples, rng,
                                      shape=cfg.domain)
        out["stats_moments.csv"] = (
            ("n", "j", "q", "m", "lhs", "rhs", "diff", "pooled_se"),
            [(cfg.n, jdesc, cfg.q, rep.samples, rep.lhs, rep.rhs, rep.diff,
              rep.pooled_se)])
        return 0 if rep.diff >= -3.0 * rep.pooled_se else 1
    if cfg.check == "signs":
        rep = sign_independence_test(cfg.n, cfg.K, cfg.samples, rng,
                                     corrupt=cfg.corrupt, shape=cfg.domain)
        rows = [("mean", str(k + 1), rep.rank_means[k], rep.threshold)
                for k in range(cfg.K)]
        rows += [("pair_corr", f"{a + 1}:{b + 1}", rep.pair_corr[a, b],
                  rep.threshold)
                 for a in range(cfg.K) for b in range(a + 1, cfg.K)]
        rows += [("diam_corr", str(k + 1), rep.diam_corr[k], rep.threshold)
                 for k in range(cfg.K)]
        rows += [("mass_corr", str(k + 1), rep.mass_corr[k], rep.threshold)
                 for k in range(cfg.K)]
        out["stats_signs.csv"] = (("statistic", "index", "value", "threshold"),
                                  rows)
        return 0 if rep.passed else 1
    if cfg.check == "height-gap":
        rep = height_gap_statistic(cfg.n, cfg.mode, cfg.min_hole_vertices,
                                   cfg.samples, rng, shape=cfg.domain)
        target = HEIGHT_GAP.two_lambda if cfg.mode == "metric" else HEIGHT_GAP.lam
        out["stats_height_gap.csv"] = (
            ("n", "mode", "min_hole_vertices", "m", "value", "se", "regions",
             "samples_contributing", "target"),
            [(cfg.n, rep.mode, cfg.min_hole_vertices, rep.samples, rep.value,
              rep.se, rep.region_count, rep.samples_contributing, target)])
        return 0 if not rep.insufficient else 1
    raise ValueError(f"unknown stats check: {cfg.check!r}")


def default_markov_layout(domain) -> tuple[list, list]:
    """A boundary-to-center path up the vertical axis plus probe vertices."""
    i_axis = 0
    j_lo = int(domain.interior_ij[:, 1].min())
    path = [domain.vertex_index((i_axis, j)) for j in range(j_lo, 1)]
    imax = int(domain.interior_ij[:, 0].max())
    jmax = int(domain.interior_ij[:, 1].max())
    candidates = [(imax // 2, jmax // 2), (-(imax // 2) - 1, jmax // 4),
                  (imax // 3, -(jmax // 3)), (-(imax // 4) - 1, -(jmax // 2))]
    probes = [domain.vertex_index(ij) for ij in candidates]
    return path, probes


def _run_markov(cfg: ExperimentConfig, out: dict) -> int:
    domain = build_domain(cfg.domain, cfg.n)
    path, probes = default_markov_layout(domain)
    if cfg.probes > len(probes):
        raise ValueError(f"at most {len(probes)} default probes are available")
    rep = markov_check(cfg.n, path, probes[:cfg.probes], cfg.samples,
                       _rng(cfg, 0, "markov"), shape=cfg.domain)
    out["markov.csv"] = (
        ("probe", "vertex", "used", "skipped", "mean", "se", "z"),
        [(k + 1, p.probe, p.used, p.skipped, p.mean, p.se, p.z)
         for k, p in enumerate(rep.probes)])
    return 0 if rep.max_abs_z <= 3.0 else 1


def _run_conjecture(cfg: ExperimentConfig, out: dict) -> int:
    rows = []
    values = {}
    code = 0
    for mode, target in (("metric", HEIGHT_GAP.two_lambda),
                         ("discrete", HEIGHT_GAP.lam)):
        rep = height_gap_statistic(cfg.n, mode, cfg.min_hole_vertices,
                                   cfg.samples, _rng(cfg, 0, f"conjecture:{mode}"),
                                   shape=cfg.domain)
        if rep.insufficient:
            code = 1
        values[mode] = rep.value
        rows.append((cfg.n, mode, rep.samples, rep.value, rep.se,
                     rep.region_count, target))
    ratio = values["metric"] / values["discrete"] \
        if values["discrete"] else float("nan")
    rows.append((cfg.n, "ratio", cfg.samples, ratio, "", "", 2.0))
    out["conjecture.csv"] = (
        ("n", "mode", "M", "value", "se", "regions", "target"), rows)
    return code


_RUNNERS = {
    "sample": _run_sample,
    "decompose": _run_decompose,
    "minkowski": _run_minkowski,
    "crossing": _run_crossing,
    "spin": _run_spin,
    "stats": _run_stats,
    "markov": _run_markov,
    "conjecture": _run_conjecture,
}

SUBCOMMANDS = tuple(_RUNNERS)


def run(cfg: ExperimentConfig, subcommand: str, raster: bool = False) -> int:
    """Execute one subcommand: write CSVs and manifest.txt under cfg.out.

    Returns 0 exactly when every hard assertion of the subcommand holds.
    """
    if subcommand not in _RUNNERS:
        raise ValueError(f"unknown subcommand: {subcommand!r}")
    os.makedirs(cfg.out, exist_ok=True)
    started = time.monotonic()
    tables: dict = {}
    if subcommand == "decompose":
        raster_path = os.path.join(cfg.out, "clusters_replica0.txt") if raster else None
        code = _run_decompose(cfg, tables, raster_path)
    else:
        code = _RUNNERS[subcommand](cfg, tables)
    counts = {}
    for name, (header, rows) in tables.items():
        counts[name] = write_csv(os.path.join(cfg.out, name), header, rows)
    manifest = RunManifest(
        subcommand=subcommand, base_seed=cfg.seed, seed_rule=SEED_RULE,
        version=__version__, wall_seconds=time.monotonic() - started,
        row_counts=counts, config_lines=config_echo(cfg), exit_code=code)
    manifest.write(os.path.join(cfg.out, "manifest.txt"))
    return code

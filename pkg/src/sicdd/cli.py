"""Command line: experiment presets, rate sweeps, FER runs, code design,
tap dumps and plot-data merging.

Exit codes: 0 success, 2 invalid configuration or input, 3 trellis state
budget exceeded.
"""
import argparse
import configparser
import csv
import io
import logging
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .auxmodel import AuxChannel, truncate_taps, fit_moments
from .fba import StateBudgetError, memo_detector
from .gibbs import GibbsConfig, ETA_GRID, tune_eta
from .linkmodel import LinkConfig, derive_taps, make_frame, default_alphabet
from . import rates as R

log = logging.getLogger("sicdd")

RATES_SCHEMA = "# sicdd-rates v1"
FER_SCHEMA = "# sicdd-fer v1"
PLOT_SCHEMA = "# sicdd-plotdata v1"
RATES_COLS = ["snr_db", "kind", "S", "stage", "level", "rate_bpcu", "stderr", "n_symbols",
              "eta", "Ktilde_aux", "alphabet", "alpha", "L_km", "seed"]
FER_COLS = ["snr_db", "S", "fer", "ci_lo", "ci_hi", "n_frames", "n_errors", "list_size",
            "design_id", "alphabet"]
RATE_KINDS = ("JDD", "SDD", "SIC", "MSD", "BSIC", "GIBBS")
TRAIN_OFFSET = 2 ** 31


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str = "custom"
    kind: str = "rates"                       # rates or fer
    link: LinkConfig = field(default_factory=LinkConfig)
    alphabets: tuple = ("4-ASK",)
    rates: tuple = ("JDD", "SDD", "SIC")
    stages: tuple = (2, 4)
    ktilde_aux: int = 9
    detector: str = "fba"
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    tune_eta: bool = False
    eta_grid: tuple = ETA_GRID
    snr_start: float = -2.0
    snr_stop: float = 10.0
    snr_step: float = 2.0
    n: int = 500
    frames: int = 10
    train_frames: int = 4
    seed: int = 1
    output: str = ""
    # coded runs
    list_size: int = 8
    code_rate: float = 1.0
    design_snr: tuple = (4.0,)
    design_frames: int = 100
    mode: str = "MSD"
    max_errors: int = 100
    min_frames: int = 0
    stop_fer: float = 0.0

    @property
    def snr_grid(self):
        k = int(np.floor((self.snr_stop - self.snr_start) / self.snr_step + 1e-9))
        return np.round(self.snr_start + self.snr_step * np.arange(k + 1), 10)

    def validate(self):
        if self.kind not in ("rates", "fer"):
            raise ConfigError(f"experiment kind must be rates or fer, got {self.kind!r}")
        for a in self.alphabets:
            try:
                default_alphabet(a)
            except Exception as e:
                raise ConfigError(f"bad alphabet {a!r}: {e}") from None
        if not self.alphabets:
            raise ConfigError("no alphabet given")
        bad = [r for r in self.rates if r not in RATE_KINDS]
        if bad:
            raise ConfigError(f"unknown rate kinds {bad}; choose from {RATE_KINDS}")
        if not 0 <= self.ktilde_aux <= self.link.taps_half:
            raise ConfigError(f"ktilde_aux must lie in [0, taps_half={self.link.taps_half}]")
        if self.detector not in ("fba", "gibbs"):
            raise ConfigError("detector must be fba or gibbs")
        if not self.snr_step > 0 or self.snr_stop < self.snr_start:
            raise ConfigError("need snr_step > 0 and snr_stop >= snr_start")
        if self.n < 1 or self.frames < 1 or self.train_frames < 1:
            raise ConfigError("n, frames and train_frames must be >= 1")
        for S in self.stages:
            if S < 1 or self.n % S:
                raise ConfigError(f"stage count S={S} must divide n={self.n}")
        if self.tune_eta and not self.eta_grid:
            raise ConfigError("empty eta grid")
        if self.kind == "fer":
            if len(self.alphabets) != 1:
                raise ConfigError("a FER experiment takes exactly one alphabet")
            m = default_alphabet(self.alphabets[0]).m
            for S in self.stages:
                N = self.n // S
                if N & (N - 1):
                    raise ConfigError(f"code length n/S = {N} is not a power of two")
            if not 0 <= self.code_rate <= m:
                raise ConfigError(f"code rate must lie in [0, {m}]")
            if len(self.design_snr) not in (1, len(self.stages)):
                raise ConfigError("design_snr needs one value or one per stage count")
            if self.list_size < 1:
                raise ConfigError("list_size must be >= 1")
            if self.mode not in ("MSD", "bSIC"):
                raise ConfigError("mode must be MSD or bSIC")
        return self


# ---------------------------------------------------------------- config IO

def _list(s, conv=str):
    return tuple(conv(v.strip()) for v in s.split(",") if v.strip())


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def preset_names():
    return sorted(p.name[:-4] for p in resources.files("sicdd.presets").iterdir()
                  if p.name.endswith(".ini"))


def load_config(spec):
    """Load an INI file, or a bundled preset by name."""
    cp = configparser.ConfigParser()
    p = Path(spec)
    if p.is_file():
        cp.read(p)
    else:
        f = resources.files("sicdd.presets") / f"{spec}.ini"
        if not f.is_file():
            raise ConfigError(f"no config file or preset named {spec!r}; presets: {preset_names()}")
        cp.read_string(f.read_text())
    try:
        return _from_parser(cp).validate()
    except ConfigError:
        raise
    except (ValueError, KeyError) as e:
        raise ConfigError(str(e)) from None


def _from_parser(cp):
    ex = cp["experiment"] if cp.has_section("experiment") else {}
    lk = cp["link"] if cp.has_section("link") else {}
    gb = cp["gibbs"] if cp.has_section("gibbs") else {}
    pl = cp["polar"] if cp.has_section("polar") else {}
    known = {"experiment": set(ExperimentConfig.__dataclass_fields__) | {"snr"},
             "link": {"alpha", "l_km", "taps_half", "nos_sim", "fast_path", "symbol_rate", "n_fft"},
             "gibbs": {"n_iter", "burn_in", "n_par", "eta", "pool", "tune_eta", "eta_grid"},
             "polar": {"list_size", "code_rate", "design_snr", "design_frames", "mode",
                       "max_errors", "min_frames", "stop_fer"}}
    for sec, keys in known.items():
        if cp.has_section(sec):
            extra = set(cp[sec]) - keys
            if extra:
                raise ConfigError(f"unknown keys in [{sec}]: {sorted(extra)}")
    link = LinkConfig(B=float(lk.get("symbol_rate", 35e9)), alpha=float(lk.get("alpha", 0.2)),
                      L=float(lk.get("l_km", 30)), taps_half=int(lk.get("taps_half", 101)),
                      Nos_sim=int(lk.get("nos_sim", 4)),
                      fast_path=_bool(lk.get("fast_path", "yes")),
                      n_fft=int(lk.get("n_fft", 2 ** 16)))
    g = GibbsConfig(n_iter=int(gb.get("n_iter", 50)), burn_in=int(gb.get("burn_in", 10)),
                    n_par=int(gb.get("n_par", 20)), eta=float(gb.get("eta", 1.0)),
                    pool=gb.get("pool", "global"))
    d = ExperimentConfig()
    cfg = ExperimentConfig(
        name=ex.get("name", d.name), kind=ex.get("kind", d.kind), link=link,
        alphabets=_list(ex.get("alphabets", ",".join(d.alphabets))),
        rates=tuple(r.upper() for r in _list(ex.get("rates", ",".join(d.rates)))),
        stages=_list(ex.get("stages", "2, 4"), int), ktilde_aux=int(ex.get("ktilde_aux", d.ktilde_aux)),
        detector=ex.get("detector", d.detector), gibbs=g,
        tune_eta=_bool(gb.get("tune_eta", "no")),
        eta_grid=_list(gb.get("eta_grid", ",".join(map(str, ETA_GRID))), float),
        snr_start=float(ex.get("snr_start", d.snr_start)), snr_stop=float(ex.get("snr_stop", d.snr_stop)),
        snr_step=float(ex.get("snr_step", d.snr_step)), n=int(ex.get("n", d.n)),
        frames=int(ex.get("frames", d.frames)), train_frames=int(ex.get("train_frames", d.train_frames)),
        seed=int(ex.get("seed", d.seed)), output=ex.get("output", ""),
        list_size=int(pl.get("list_size", d.list_size)), code_rate=float(pl.get("code_rate", d.code_rate)),
        design_snr=_list(pl.get("design_snr", "4"), float),
        design_frames=int(pl.get("design_frames", d.design_frames)), mode=pl.get("mode", d.mode),
        max_errors=int(pl.get("max_errors", d.max_errors)), min_frames=int(pl.get("min_frames", d.min_frames)),
        stop_fer=float(pl.get("stop_fer", d.stop_fer)))
    return cfg


# ---------------------------------------------------------------- rates

def frame_rng(seed, snr_idx, frame_idx, stream=0):
    """Counter-based per-frame generator: independent of worker scheduling."""
    key = [seed, snr_idx, frame_idx] + ([stream] if stream else [])
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def _setup(cfg, alphabet_spec, snr, si, tapset):
    A = default_alphabet(alphabet_spec)
    aux = AuxChannel(truncate_taps(tapset, cfg.ktilde_aux))
    train = [make_frame(A, cfg.n, snr, tapset, cfg.link, frame_rng(cfg.seed, si, TRAIN_OFFSET + i))
             for i in range(cfg.train_frames)]
    return A, fit_moments(aux, train), train


def _frame_rates(args):
    cfg, alphabet_spec, snr, si, f, tapset, aux, eta = args
    A = default_alphabet(alphabet_spec)
    fr = make_frame(A, cfg.n, snr, tapset, cfg.link, frame_rng(cfg.seed, si, f))
    rx = aux.view(fr)
    rx.snr_db = snr
    det = memo_detector()
    out = {}
    for kind in cfg.rates:
        if kind == "JDD":
            out[("JDD", 1)] = R.estimate_jdd([rx], aux, det)
        elif kind == "SDD":
            out[("SDD", 1)] = R.estimate_sdd([rx], aux, det)
        else:
            for S in cfg.stages:
                if kind == "SIC":
                    out[("SIC", S)] = R.estimate_sic([rx], aux, S, det)
                elif kind == "MSD":
                    out[("MSD", S)] = R.estimate_msd([rx], aux, S, det)
                elif kind == "BSIC":
                    out[("bSIC", S)] = R.estimate_bsic([rx], aux, S, det)
                elif kind == "GIBBS":
                    g = replace(cfg.gibbs, eta=eta)
                    out[("GIBBS", S)] = R.estimate_bsic_gibbs([rx], aux, S, g,
                                                              frame_rng(cfg.seed, si, f, 1))
    return out


def _pool(threads):
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor
        return ProcessPoolExecutor(threads)
    return None


def rate_rows(cfg, threads=1):
    """Rate estimates for every alphabet and SNR point as CSV row dicts."""
    tapset = derive_taps(cfg.link)
    pool = _pool(threads)
    rows = []
    try:
        for a in cfg.alphabets:
            for si, snr in enumerate(cfg.snr_grid):
                A, aux, train = _setup(cfg, a, snr, si, tapset)
                eta = cfg.gibbs.eta
                if "GIBBS" in cfg.rates and cfg.tune_eta:
                    eta, _ = tune_eta(train, aux, max(cfg.stages), cfg.gibbs, cfg.eta_grid,
                                      frame_rng(cfg.seed, si, TRAIN_OFFSET - 1))
                args = [(cfg, a, float(snr), si, f, tapset, aux, eta) for f in range(cfg.frames)]
                res = list(pool.map(_frame_rates, args)) if pool else [_frame_rates(x) for x in args]
                for key in res[0]:
                    est = R.combine([r[key] for r in res])
                    est.snr_db = float(snr)
                    rows.extend(_est_rows(cfg, a, est, key[0]))
                log.info("%s %.1f dB done", a, snr)
    finally:
        if pool:
            pool.shutdown()
    return rows


def _est_rows(cfg, alphabet, est, kind):
    eta = est.eta if kind == "GIBBS" else np.nan
    base = dict(snr_db=est.snr_db, kind=kind, S=est.S, eta=eta, Ktilde_aux=cfg.ktilde_aux,
                alphabet=alphabet, alpha=cfg.link.alpha, L_km=cfg.link.L, seed=cfg.seed,
                n_symbols=est.n_symbols)
    rows = [dict(base, stage=0, level=0, rate_bpcu=est.rate, stderr=est.stderr)]
    if est.stage_rates is not None and est.S > 1:
        for s in range(est.S):
            rows.append(dict(base, stage=s + 1, level=0, rate_bpcu=est.stage_rates[s],
                             stderr=est.stage_stderr[s]))
    if est.level_rates is not None:
        for s in range(est.S):
            for l in range(est.m):
                rows.append(dict(base, stage=s + 1, level=l + 1, rate_bpcu=est.level_rates[s, l],
                                 stderr=est.level_stderr[s, l]))
    return rows


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else repr(round(float(v), 12))
    return str(v)


def write_csv(path, schema, cols, rows):
    buf = io.StringIO()
    buf.write(schema + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    text = buf.getvalue()
    if path in (None, "", "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


def read_csv(path):
    """(schema line, rows) of a sicdd CSV."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# sicdd-"):
        raise ConfigError(f"{path}: missing schema header")
    rows = list(csv.DictReader(lines[1:]))
    return lines[0], rows


def run_rates(cfg, out=None, threads=1):
    return write_csv(out or cfg.output, RATES_SCHEMA, RATES_COLS, rate_rows(cfg, threads))


# ---------------------------------------------------------------- coded

def design_for(cfg, S, tapset, design_snr):
    from .mlc import design_codes
    A = default_alphabet(cfg.alphabets[0])
    aux = AuxChannel(truncate_taps(tapset, cfg.ktilde_aux))
    rng_key = 7_000_000 + S
    frames = [make_frame(A, cfg.n, design_snr, tapset, cfg.link, frame_rng(cfg.seed, rng_key, i))
              for i in range(cfg.design_frames)]
    aux = fit_moments(aux, frames[:max(1, min(cfg.train_frames, len(frames)))])
    k = int(round(cfg.code_rate * cfg.n))
    did = f"{cfg.name}-S{S}-{design_snr:g}dB"
    return design_codes(frames, aux, S, A, k, cfg.list_size, cfg.mode, design_id=did)


def _design_snr(cfg, i):
    return cfg.design_snr[0] if len(cfg.design_snr) == 1 else cfg.design_snr[i]


def fer_rows(cfg, threads=1, schedules=None):
    from .mlc import fer_sim
    tapset = derive_taps(cfg.link)
    A = default_alphabet(cfg.alphabets[0])
    rows = []
    for i, S in enumerate(cfg.stages):
        sch = schedules[S] if schedules else design_for(cfg, S, tapset, _design_snr(cfg, i))
        aux = AuxChannel(truncate_taps(tapset, cfg.ktilde_aux))
        pts = fer_sim(sch, A, tapset, cfg.link, aux, list(cfg.snr_grid), cfg.frames, cfg.seed + S,
                      cfg.max_errors, cfg.min_frames, workers=threads, n_train=cfg.train_frames,
                      stop_fer=cfg.stop_fer)
        for p in pts:
            rows.append(dict(snr_db=p.snr_db, S=S, fer=p.fer, ci_lo=p.ci_lo, ci_hi=p.ci_hi,
                             n_frames=p.n_frames, n_errors=p.n_errors, list_size=p.list_size,
                             design_id=p.design_id, alphabet=cfg.alphabets[0]))
            log.info("S=%d %.2f dB FER %.3g (%d/%d)", S, p.snr_db, p.fer, p.n_errors, p.n_frames)
    return rows


def run_fer(cfg, out=None, threads=1):
    return write_csv(out or cfg.output, FER_SCHEMA, FER_COLS, fer_rows(cfg, threads))


def run_design(cfg, out=None):
    tapset = derive_taps(cfg.link)
    docs = [design_for(cfg, S, tapset, _design_snr(cfg, i)).to_json() for i, S in enumerate(cfg.stages)]
    text = "[\n" + ",\n".join(docs) + "\n]\n"
    if out in (None, "", "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
    return text


def run_taps(cfg, out=None, ktilde_aux=None):
    ts = derive_taps(cfg.link)
    if ktilde_aux is not None:
        ts = truncate_taps(ts, ktilde_aux)
    rows = [dict(index=k, re=float(v.real), im=float(v.imag), abs2=float(abs(v) ** 2))
            for k, v in enumerate(ts.psi)]
    return write_csv(out, "# sicdd-taps v1", ["index", "re", "im", "abs2"], rows)


# ---------------------------------------------------------------- plot data

def emit_plotdata(paths, out=None):
    """Merge rates/FER CSVs into one long table: source, schema, series, x, metric, value."""
    rows = []
    for p in paths:
        schema, data = read_csv(p)
        if schema == RATES_SCHEMA:
            cols, x, metrics = RATES_COLS, "snr_db", ("rate_bpcu", "stderr")
            ser = lambda r: f"{r['alphabet']} {r['kind']} S={r['S']} stage={r['stage']} level={r['level']}"
        elif schema == FER_SCHEMA:
            cols, x, metrics = FER_COLS, "snr_db", ("fer", "ci_lo", "ci_hi")
            ser = lambda r: f"{r['alphabet']} S={r['S']} L={r['list_size']} {r['design_id']}"
        else:
            raise ConfigError(f"{p}: unsupported schema {schema!r}")
        if data and list(data[0].keys()) != cols:
            raise ConfigError(f"{p}: columns do not match {schema}")
        for r in data:
            for mname in metrics:
                rows.append(dict(source=Path(p).name, schema=schema[2:], series=ser(r),
                                 x=float(r[x]), metric=mname, value=float(r[mname])))
    return write_csv(out, PLOT_SCHEMA, ["source", "schema", "series", "x", "metric", "value"], rows)


# ---------------------------------------------------------------- main

def build_parser():
    ap = argparse.ArgumentParser(prog="sicdd", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="INI file or preset name")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("--out", help="output path (default: stdout or the config's output)")
        p.add_argument("-v", "--verbose", action="store_true")
    common(sub.add_parser("rates", help="rate sweep to CSV"))
    common(sub.add_parser("fer", help="polar-coded FER sweep to CSV"))
    common(sub.add_parser("design", help="Monte Carlo polar code design to JSON"))
    p = sub.add_parser("taps", help="dump the channel taps as CSV")
    common(p)
    p.add_argument("--ktilde-aux", type=int, help="truncate to the auxiliary memory")
    p = sub.add_parser("plotdata", help="merge CSVs into long-format plot data")
    common(p, config=False)
    p.add_argument("csv", nargs="+")
    sub.add_parser("presets", help="list bundled presets")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        if args.verb == "presets":
            print("\n".join(preset_names()))
            return 0
        if args.verb == "plotdata":
            emit_plotdata(args.csv, args.out)
            return 0
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.verb == "rates":
            run_rates(cfg, args.out, args.threads)
        elif args.verb == "fer":
            run_fer(cfg, args.out, args.threads)
        elif args.verb == "design":
            run_design(cfg, args.out)
        elif args.verb == "taps":
            run_taps(cfg, args.out, args.ktilde_aux)
        return 0
    except ConfigError as e:
        print(f"sicdd: invalid configuration: {e}", file=sys.stderr)
        return 2
    except StateBudgetError as e:
        print(f"sicdd: state budget exceeded: {e}", file=sys.stderr)
        return 3
    except (FileNotFoundError, ValueError) as e:
        print(f"sicdd: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

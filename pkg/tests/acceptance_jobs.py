"""Heavy computations behind the acceptance tests, with a result cache.

Each job's result is stored as JSON under tests/acceptance_cache/, keyed by
a hash of the job parameters and of the library source files the job
depends on.  Editing any of those files invalidates the entry and the next
test run recomputes it.  Precompute everything (hours on one core) with

    python tests/acceptance_jobs.py [job ...]
"""
import dataclasses
import hashlib
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from sicdd.auxmodel import AuxChannel, fit_moments, truncate_taps
from sicdd.cli import load_config
from sicdd.fba import memo_detector
from sicdd.linkmodel import TruncationWarning, default_alphabet, derive_taps, make_frame
from sicdd import rates as R

SRC = Path(__file__).resolve().parents[1] / "src" / "sicdd"
CACHE = Path(__file__).resolve().parent / "acceptance_cache"
TRAIN_OFFSET = 2 ** 31
log = logging.getLogger("acceptance")

CORE = ("modem", "linkmodel", "auxmodel", "fba", "rates")


def frame_rng(seed, snr_idx, frame_idx, stream=0):
    key = [seed, snr_idx, frame_idx] + ([stream] if stream else [])
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def _digest(files):
    h = hashlib.sha256()
    for m in sorted(files):
        h.update(m.encode())
        h.update((SRC / m).read_bytes())
    return h.hexdigest()


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return None if not np.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    return obj


def cached(name, params, modules, compute):
    key = hashlib.sha256(json.dumps(_jsonable(params), sort_keys=True).encode()
                         + _digest(modules).encode()).hexdigest()[:16]
    path = CACHE / f"{name}-{key}.json"
    if path.exists():
        return json.loads(path.read_text())["result"]
    for old in CACHE.glob(f"{name}-*.json"):
        old.unlink()
    t0 = time.time()
    res = _jsonable(compute(**params))
    CACHE.mkdir(exist_ok=True)
    path.write_text(json.dumps({"job": name, "params": _jsonable(params), "modules": sorted(modules),
                                "seconds": round(time.time() - t0, 1), "result": res}, indent=1))
    return res


def _est(e):
    d = {"rate": e.rate, "stderr": e.stderr, "n_symbols": e.n_symbols, "clamped": e.clamped,
         "floored": e.floored, "samples": e.samples}
    if e.stage_rates is not None:
        d["stage_rates"] = e.stage_rates
        d["stage_stderr"] = e.stage_stderr
    if e.kind == "bSIC" and not np.isnan(e.eta):
        d.update(eta=e.eta, stalled=e.stalled, **e.extra)
    return d


def _preset(name):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        cfg = load_config(name)
        return cfg, derive_taps(cfg.link)


def _aux(cfg, A, tapset, snr, si):
    aux = AuxChannel(truncate_taps(tapset, cfg.ktilde_aux))
    train = [make_frame(A, cfg.n, snr, tapset, cfg.link, frame_rng(cfg.seed, si, TRAIN_OFFSET + i))
             for i in range(cfg.train_frames)]
    return fit_moments(aux, train)


# ---------------------------------------------------------------- rate jobs

def symbol_rates(preset, alphabets, snrs, kinds, S_list, frames=None):
    """JDD / SDD / SIC(S) estimates on the preset's frames for a subset of
    its SNR grid (frame seeds follow the grid index, as in the CLI)."""
    cfg, ts = _preset(preset)
    grid = list(cfg.snr_grid)
    F = frames or cfg.frames
    out = {}
    for a in alphabets:
        A = default_alphabet(a)
        out[a] = {}
        for snr in snrs:
            si = int(np.argmin(np.abs(np.array(grid) - snr)))
            aux = _aux(cfg, A, ts, snr, si)
            acc = {}
            for f in range(F):
                rx = aux.view(make_frame(A, cfg.n, snr, ts, cfg.link, frame_rng(cfg.seed, si, f)))
                rx.snr_db = snr
                det = memo_detector()
                if "JDD" in kinds:
                    acc.setdefault("JDD", []).append(R.estimate_jdd([rx], aux, det))
                if "SDD" in kinds:
                    acc.setdefault("SDD", []).append(R.estimate_sdd([rx], aux, det))
                if "SIC" in kinds:
                    for S in S_list:
                        acc.setdefault(f"SIC{S}", []).append(R.estimate_sic([rx], aux, S, det))
            out[a][f"{snr:g}"] = {k: _est(R.combine(v)) for k, v in acc.items()}
            log.info("%s %s %g dB: %s", preset, a, snr,
                     {k: round(v["rate"], 4) for k, v in out[a][f"{snr:g}"].items()})
    return out


def gibbs_rates(preset, snrs, n_iters, with_fba=True):
    """FBA SIC and Gibbs b-SIC rates on common frames; one Gibbs run per
    N_iter value with a shared random stream per frame."""
    cfg, ts = _preset(preset)
    A = default_alphabet(cfg.alphabets[0])
    S = max(cfg.stages)
    grid = list(cfg.snr_grid)
    out = {}
    for snr in snrs:
        si = int(np.argmin(np.abs(np.array(grid) - snr)))
        aux = _aux(cfg, A, ts, snr, si)
        acc = {}
        for f in range(cfg.frames):
            rx = aux.view(make_frame(A, cfg.n, snr, ts, cfg.link, frame_rng(cfg.seed, si, f)))
            rx.snr_db = snr
            if with_fba:
                acc.setdefault("SIC", []).append(R.estimate_sic([rx], aux, S))
            for it in n_iters:
                g = dataclasses.replace(cfg.gibbs, n_iter=int(it))
                acc.setdefault(f"GIBBS{it}", []).append(
                    R.estimate_bsic_gibbs([rx], aux, S, g, frame_rng(cfg.seed, si, f, 1)))
        out[f"{snr:g}"] = {k: _est(R.combine(v)) for k, v in acc.items()}
        log.info("%s %g dB: %s", preset, snr, {k: round(v["rate"], 4) for k, v in out[f"{snr:g}"].items()})
    return out


# ---------------------------------------------------------------- FER job

def fer_curves(alphabet, stages, snr_start, snr_stop, snr_step, n_frames, max_errors, stop_fer):
    """Design and simulate the coded SIC schemes of the fig7 presets."""
    from sicdd.mlc import design_codes, fer_sim
    out = {}
    for S in stages:
        cfg, ts = _preset(f"fig7-{alphabet.lower().replace('-', '')}-s{S}")
        A = default_alphabet(cfg.alphabets[0])
        dsnr = cfg.design_snr[0]
        frames = [make_frame(A, cfg.n, dsnr, ts, cfg.link, frame_rng(cfg.seed, 7_000_000 + S, i))
                  for i in range(cfg.design_frames)]
        aux = fit_moments(AuxChannel(truncate_taps(ts, cfg.ktilde_aux)), frames[:cfg.train_frames])
        sch = design_codes(frames, aux, S, A, int(round(cfg.code_rate * cfg.n)), cfg.list_size,
                           cfg.mode, design_id=f"{cfg.name}-S{S}-{dsnr:g}dB")
        k = int(np.floor((snr_stop - snr_start) / snr_step + 1e-9))
        grid = list(np.round(snr_start + snr_step * np.arange(k + 1), 10))
        aux0 = AuxChannel(truncate_taps(ts, cfg.ktilde_aux))
        pts = fer_sim(sch, A, ts, cfg.link, aux0, grid, n_frames, cfg.seed + S, max_errors,
                      n_train=cfg.train_frames, stop_fer=stop_fer)
        out[str(S)] = {"design_snr": dsnr, "stage_rates": sch.stage_rates(),
                       "points": [dataclasses.asdict(p) for p in pts]}
        log.info("S=%d: %s", S, [(p.snr_db, p.fer, p.n_frames) for p in pts])
    return out


# ---------------------------------------------------------------- job table

RATE_MODULES = CORE
GIBBS_MODULES = CORE + ("gibbs",)
FER_MODULES = CORE + ("polar", "mlc")

JOBS = {
    "fig4": (dict(preset="fig4-4ask", alphabets=["4-PAM", "4-ASK", "4-SQAM"],
                  snrs=[-2.0, 0.0, 2.0, 4.0, 10.0], kinds=["JDD", "SIC"], S_list=[4]),
             RATE_MODULES, symbol_rates),
    "fig7rates": (dict(preset="fig7-rates", alphabets=["4-PAM", "4-ASK"],
                       snrs=[float(x) for x in np.arange(0, 8.01, 0.5)], kinds=["SDD", "SIC"],
                       S_list=[2, 4]),
                  RATE_MODULES, symbol_rates),
    "gibbs": (dict(preset="fig8-gibbs-4ask", snrs=[-2.0, 0.0, 2.0, 8.0, 10.0], n_iters=[50]),
              GIBBS_MODULES, gibbs_rates),
    "niter": (dict(preset="fig8-gibbs-4ask", snrs=[-2.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
                   n_iters=[1, 2, 5, 10, 20, 50], with_fba=False),
              GIBBS_MODULES, gibbs_rates),
    "fer": (dict(alphabet="4-ASK", stages=[1, 2, 4], snr_start=3.0, snr_stop=7.0, snr_step=0.5,
                 n_frames=10_000, max_errors=1000, stop_fer=1e-2),
            FER_MODULES, fer_curves),
}


def run(name):
    params, modules, fn = JOBS[name]
    presets = [params["preset"]] if "preset" in params else [
        f"fig7-{params['alphabet'].lower().replace('-', '')}-s{S}" for S in params["stages"]]
    files = [f"{m}.py" for m in modules] + [f"presets/{p}.ini" for p in presets]
    return cached(name, params, files, fn)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    warnings.simplefilter("ignore", TruncationWarning)
    for name in sys.argv[1:] or list(JOBS):
        t = time.time()
        run(name)
        log.info("job %s done in %.0f s", name, time.time() - t)

"""Command-line entry point: ``fmae-lab {gen,weights,train,eval,excite,energymap}``.

Every command reads one JSON config (``--config``); ``--seed``, ``--out``
and ``--workers`` override the corresponding config entries. Each command
writes its artifacts plus a ``manifest.json`` (RunManifest) to the output
directory. On failure a single line

    FMAE_LAB_ERROR {"type": "...", "message": "..."}

is printed to stderr and the exit status is nonzero (2 for configuration
errors, 1 otherwise). Verbosity follows the FMAE_LAB_LOG environment
variable (DEBUG, INFO, WARNING, ...).
"""
import argparse
import datetime
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from ._validation import file_digest
from .audmodel import CorpusAdapter, SurrogateCochlea, energy_distribution
from .emulator import ARCHITECTURES, AuditoryEmulator
from .evaluation import (
    excitation_pattern,
    export_report,
    log_mae_curve,
    ser_matrix,
    write_matrix_csv,
)
from .exceptions import BadConfig, DigestMismatch, FmaeLabError, MissingWeightTable
from .signals import LevelGrid, read_wav, synth_speech_shaped_noise, write_wav
from .train import TargetCache, TrainingConfig, TrainingRun, train_emulator
from .weights import WeightTable, estimate_weights

SCHEMA_VERSION = 1
CORPUS_MANIFEST = "corpus.json"

logger = logging.getLogger("fmae_lab")


# -- config helpers ------------------------------------------------------------

def _require(cfg, path):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise BadConfig(f"missing config field '{path}'")
        node = node[part]
    return node


def load_config(path):
    if path is None:
        raise BadConfig("missing --config")
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BadConfig(f"{path}: invalid JSON ({exc})") from None
    version = _require(cfg, "schema_version")
    if version != SCHEMA_VERSION:
        raise BadConfig(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")
    return cfg


def _resolve(cfg_dir, p):
    return p if os.path.isabs(p) else os.path.normpath(os.path.join(cfg_dir, p))


def _grid(cfg):
    g = cfg.get("grid", {"lo": 40, "hi": 120, "step": 10})
    if isinstance(g, list):
        return LevelGrid(tuple(float(v) for v in g))
    return LevelGrid.from_range(float(g.get("lo", 40)), float(g.get("hi", 120)), float(g.get("step", 10)))


def _model(cfg, cfg_dir):
    m = dict(_require(cfg, "model"))
    kind = m.pop("type", "surrogate")
    if kind == "surrogate":
        try:
            return SurrogateCochlea(**m).fit()
        except TypeError as exc:
            raise BadConfig(f"model: {exc}") from None
    if kind == "precomputed":
        return CorpusAdapter(_resolve(cfg_dir, _require(cfg, "model.manifest")))
    raise BadConfig(f"model.type must be 'surrogate' or 'precomputed', got {kind!r}")


# -- corpus directories -----------------------------------------------------------

def write_corpus(directory, waves, names, seed):
    os.makedirs(directory, exist_ok=True)
    entries = []
    for name, w in zip(names, waves):
        path = os.path.join(directory, name)
        write_wav(path, w)
        entries.append({"file": name, "sha256": file_digest(path), "sample_rate": w.sample_rate})
    manifest = {"schema_version": SCHEMA_VERSION, "seed": seed, "entries": entries}
    with open(os.path.join(directory, CORPUS_MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=1)
    return [os.path.join(directory, e["file"]) for e in entries]


def read_corpus(directory):
    """Load a corpus written by ``gen``, verifying every file digest."""
    mpath = os.path.join(directory, CORPUS_MANIFEST)
    if not os.path.exists(mpath):
        raise FileNotFoundError(f"{directory}: no {CORPUS_MANIFEST}")
    with open(mpath) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DigestMismatch(f"{mpath}: corrupted corpus manifest ({exc})") from None
    waves = []
    for e in manifest.get("entries", []):
        path = os.path.join(directory, e["file"])
        if file_digest(path) != e["sha256"]:
            raise DigestMismatch(f"{path}: content does not match the corpus manifest digest")
        waves.append(read_wav(path, e.get("sample_rate", 20000)))
    if not waves:
        raise BadConfig(f"{directory}: corpus is empty")
    return waves, mpath


# -- manifests ------------------------------------------------------------------

def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


class RunManifest:
    """Record of one command invocation: config digest, inputs, outputs, times."""

    def __init__(self, command, cfg, seed):
        self.command = command
        self.seed = seed
        self.config_digest = hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
        self.inputs = {}
        self.outputs = []
        self.started = _now()

    def add_input(self, path):
        self.inputs[os.fspath(path)] = file_digest(path)

    def write(self, directory, outputs):
        outs = [{"path": os.path.relpath(p, directory), "sha256": file_digest(p)}
                for p in sorted(set(outputs))]
        data = {
            "command": self.command, "tool_version": __version__, "seed": self.seed,
            "config_digest": self.config_digest, "inputs": self.inputs, "outputs": outs,
            "started": self.started, "finished": _now(),
        }
        path = os.path.join(directory, "manifest.json")
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1)
        return path


def verify_manifest(path):
    """True if every listed output still matches its digest."""
    with open(path) as fh:
        data = json.load(fh)
    base = os.path.dirname(path)
    return all(file_digest(os.path.join(base, o["path"])) == o["sha256"] for o in data["outputs"])


# -- commands ---------------------------------------------------------------------

def cmd_gen(cfg, cfg_dir, out, seed, workers):
    c = _require(cfg, "corpus")
    mode = c.get("mode", "synth")
    if mode == "synth":
        n = int(_require(cfg, "corpus.n"))
        duration = float(c.get("duration", 1.0))
        rate = int(c.get("sample_rate", 20000))
        seeds = np.random.SeedSequence(seed).spawn(n)
        syl = c.get("syllabic_rate")
        waves = [synth_speech_shaped_noise(duration, s, rate, syllabic_rate=syl) for s in seeds]
        names = [f"utt{i:05d}.wav" for i in range(n)]
        inputs = []
    elif mode == "ingest":
        files = [_resolve(cfg_dir, f) for f in _require(cfg, "corpus.files")]
        rate = int(c.get("sample_rate", 20000))
        waves = [read_wav(f, rate, float(c.get("calibration", 1.0))) for f in files]
        names = [f"utt{i:05d}.wav" for i in range(len(files))]
        inputs = files
    else:
        raise BadConfig(f"corpus.mode must be 'synth' or 'ingest', got {mode!r}")
    outputs = write_corpus(out, waves, names, seed)
    return outputs + [os.path.join(out, CORPUS_MANIFEST)], inputs


def cmd_weights(cfg, cfg_dir, out, seed, workers):
    model = _model(cfg, cfg_dir)
    waves, mpath = read_corpus(_resolve(cfg_dir, _require(cfg, "corpus_dir")))
    w = cfg.get("weights", {})
    table = estimate_weights(model, waves, _grid(cfg), seed=seed, n_per_level=w.get("n_per_level"))
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "weights.json")
    table.save(path)
    return [path], [mpath]


def _training_config(cfg, seed):
    t = dict(cfg.get("training", {}))
    t["seed"] = seed
    t.setdefault("grid", list(_grid(cfg).levels))
    return TrainingConfig.from_dict(t)


def cmd_train(cfg, cfg_dir, out, seed, workers):
    tcfg = _training_config(cfg, seed)
    table, inputs = None, []
    if tcfg.objective == "fmae":
        if "weights_path" not in cfg:
            raise MissingWeightTable(
                "objective 'fmae' needs a weight table: run `fmae-lab weights` on the training "
                "corpus and set 'weights_path' in the config"
            )
        wpath = _resolve(cfg_dir, cfg["weights_path"])
        table = WeightTable.load(wpath)
        inputs.append(wpath)
    model = _model(cfg, cfg_dir)
    waves, mpath = read_corpus(_resolve(cfg_dir, _require(cfg, "corpus_dir")))
    inputs.append(mpath)
    net = dict(cfg.get("network", {}))
    arch = net.pop("architecture", "waveunet")
    if arch not in ARCHITECTURES:
        raise BadConfig(f"network.architecture must be one of {sorted(ARCHITECTURES)}")
    spec = ARCHITECTURES[arch](len(model.cfs), **net)
    train_emulator(model, waves, spec, tcfg, table, run_dir=out)
    outputs = [os.path.join(out, f) for f in sorted(os.listdir(out)) if f != "manifest.json"]
    return outputs, inputs


def _emulators(cfg, cfg_dir, model, key):
    runs = _require(cfg, key)
    out = {}
    for name, d in runs.items():
        run = TrainingRun.load(_resolve(cfg_dir, d))
        out[name] = AuditoryEmulator(model).set_run(run)
    return out


def cmd_eval(cfg, cfg_dir, out, seed, workers):
    model = _model(cfg, cfg_dir)
    e = _require(cfg, "eval")
    test, tpath = read_corpus(_resolve(cfg_dir, _require(cfg, "eval.test_corpus_dir")))
    inputs = [tpath]
    train = None
    if "train_corpus_dir" in e:
        train, p = read_corpus(_resolve(cfg_dir, e["train_corpus_dir"]))
        inputs.append(p)
    grid = _grid(cfg)
    emus = _emulators(cfg, cfg_dir, model, "eval.runs")
    cache = TargetCache()
    sers, curves = {}, {}
    for name, emu in emus.items():
        sers[name] = ser_matrix(model, emu, test, grid, train, e.get("pooling", "energy"), workers, cache)
        curves[name] = log_mae_curve(model, emu, test, grid, train, workers, cache)
    delta = ("fmae", "mae") if {"fmae", "mae"} <= set(sers) else None
    outputs = export_report(out, sers, curves, delta)
    return outputs, inputs


def cmd_excite(cfg, cfg_dir, out, seed, workers):
    model = _model(cfg, cfg_dir)
    x = _require(cfg, "excite")
    freqs = [float(f) for f in _require(cfg, "excite.freqs")]
    levels = [float(l) for l in _require(cfg, "excite.levels")]
    duration = float(x.get("duration", 0.2))
    systems = {"reference": model}
    if "runs" in x:
        systems.update(_emulators(cfg, cfg_dir, model, "excite.runs"))
    patterns = {name: [excitation_pattern(m, f, l, duration) for f in freqs for l in levels]
                for name, m in systems.items()}
    outputs = export_report(out, excitation=patterns)
    return outputs, []


def cmd_energymap(cfg, cfg_dir, out, seed, workers):
    model = _model(cfg, cfg_dir)
    waves, mpath = read_corpus(_resolve(cfg_dir, _require(cfg, "corpus_dir")))
    grid = _grid(cfg)
    energy = energy_distribution(model, waves, grid)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "energy.csv")
    write_matrix_csv(path, energy, model.cfs, grid.levels)
    spath = os.path.join(out, "summary.json")
    with open(spath, "w") as fh:
        json.dump({"max_min_ratio": float(energy.max() / energy.min()),
                   "monotone_in_level": bool(np.all(np.diff(energy, axis=1) > 0))}, fh, indent=1)
    return [path, spath], [mpath]


COMMANDS = {
    "gen": cmd_gen, "weights": cmd_weights, "train": cmd_train,
    "eval": cmd_eval, "excite": cmd_excite, "energymap": cmd_energymap,
}


def build_parser():
    p = argparse.ArgumentParser(prog="fmae-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--workers", type=int, default=1, help="parallel workers (results do not depend on it)")
        s.add_argument("--out", help="output directory (overrides config 'out')")
    return p


def _setup_logging():
    level = os.environ.get("FMAE_LAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _error(exc):
    line = json.dumps({"type": type(exc).__name__, "message": str(exc)})
    print(f"FMAE_LAB_ERROR {line}", file=sys.stderr)


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg_dir = os.path.dirname(os.path.abspath(args.config))
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        out = args.out or cfg.get("out")
        if out is None:
            raise BadConfig("missing config field 'out' (or --out)")
        if args.workers < 1:
            raise BadConfig("--workers must be >= 1")
        manifest = RunManifest(args.command, cfg, seed)
        manifest.add_input(args.config)
        outputs, inputs = COMMANDS[args.command](cfg, cfg_dir, out, seed, args.workers)
        for p in inputs:
            manifest.add_input(p)
        manifest.write(out, outputs)
    except BadConfig as exc:
        _error(exc)
        return 2
    except (FmaeLabError, OSError, ValueError, KeyError) as exc:
        _error(exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

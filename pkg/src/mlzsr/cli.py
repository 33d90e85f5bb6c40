"""Command-line interface: ``mlzsr {generate,split,train,eval,fuse,gradcheck}``.

Configuration files are INI files with one section per command
(``[generate]``, ``[split]``, ``[train]``, ``[eval]``). A section given in a
file must list every key of that command; ``--print-config`` writes the
complete default section. Command-line flags override file values.

Every output file is written atomically (temp file, then rename) together
with ``<output>.manifest.json``, which records the command line, the fully
resolved configuration, seeds and SHA-256 hashes of all inputs and outputs.

Exit codes: 0 success, 2 configuration error, 3 data or split error,
4 numeric failure.
"""

import argparse
import configparser
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict

from .data import (
    SyntheticConfig, generate_synthetic, held_out_labels, load_dataset, load_split,
    choose_unseen, dataset_to_text, make_ifs_split, make_lfs_split,
)
from .evaluation import (
    SCENARIOS, Scenario, evaluate, parse_scores, reports_to_text, rgs_baseline, scores_to_text,
)
from .exceptions import ConfigError, MLZSRError, ParseError
from .experiment import NEURAL, linear_scores, method_config
from .gradcheck import CHECKS, run_check
from .numerics import make_rng
from .scoring import fuse_scores, normalize_scores
from .train import Checkpoint, TrainConfig, alternate_train

log = logging.getLogger("mlzsr")

SPLIT_DEFAULTS = {"mode": "lfs", "unseen": "random:8", "val_count": 100,
                  "fractions": (0.6, 0.2, 0.2), "seed": 0}
EVAL_DEFAULTS = {"method": "checkpoint", "scenario": "all", "k": 5, "rgs_trials": 100, "seed": 0}
TRAIN_EXTRA = {"method": "ranknet"}


# -- config handling --------------------------------------------------------


def _coerce(raw, default, key):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(v) for v in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None
    return raw


def _format(value):
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    return str(value)


def section_defaults(section):
    if section == "generate":
        # 0 keeps the "same as T" default instead of the resolved value
        return {**asdict(SyntheticConfig()), "min_length": 0}
    if section == "train":
        return {**TRAIN_EXTRA, **asdict(TrainConfig())}
    if section == "split":
        return dict(SPLIT_DEFAULTS)
    if section == "eval":
        return dict(EVAL_DEFAULTS)
    raise KeyError(section)


def _parser():
    cp = configparser.ConfigParser()
    cp.optionxform = str
    return cp


def default_config_text(section):
    cp = _parser()
    cp[section] = {k: _format(v) for k, v in section_defaults(section).items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_section(path, section):
    """Resolved ``{key: value}`` for ``section``; defaults when ``path`` is None."""
    defaults = section_defaults(section)
    if path is None:
        return defaults
    cp = _parser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    if section not in cp:
        raise ConfigError(f"{path}: missing section [{section}]")
    got = cp[section]
    unknown = sorted(set(got) - set(defaults))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) in [{section}]: {', '.join(unknown)}")
    out = {}
    for key, default in defaults.items():
        if key not in got:
            raise ConfigError(f"{path}: missing config key {key!r} in [{section}]")
        out[key] = _coerce(got[key], default, key)
    return out


def _override(cfg, args, *names):
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            cfg[name] = value
    return cfg


# -- output plumbing --------------------------------------------------------


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path, data):
    """Write ``data`` (bytes or str) to ``path`` via a temp file and rename."""
    if isinstance(data, str):
        data = data.encode()
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(out_path, command, argv, config, seeds, inputs, outputs, extra=None):
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seeds": seeds,
        "inputs": {p: sha256_file(p) for p in inputs},
        "outputs": {p: sha256_file(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    atomic_write(out_path + ".manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _jsonable(cfg):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()}


# -- commands ---------------------------------------------------------------


def cmd_generate(args):
    cfg = _override(load_section(args.config, "generate"), args, "seed")
    synth = SyntheticConfig(**cfg)
    ds = generate_synthetic(synth)
    atomic_write(args.out, dataset_to_text(ds))
    held = list(held_out_labels(synth))
    write_manifest(args.out, "generate", args.argv, _jsonable(cfg), {"seed": synth.seed},
                   [], [args.out], {"held_out": held})
    log.info("wrote %s: %d instances, %d labels, held-out labels %s",
             args.out, ds.n_instances, ds.n_labels, ",".join(map(str, held)))


def parse_unseen(spec, n_labels, seed):
    """``"3,7,12"``, ``"random:N"`` or ``"manifest:PATH"`` (held-out labels of a generate run)."""
    spec = str(spec).strip()
    if spec.startswith("random:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad unseen spec {spec!r}") from None
        return choose_unseen(n_labels, n, seed)
    if spec.startswith("manifest:"):
        path = spec.split(":", 1)[1]
        try:
            with open(path) as fh:
                return tuple(json.load(fh)["held_out"])
        except (OSError, KeyError, ValueError) as e:
            raise ConfigError(f"cannot read held-out labels from {path}: {e}") from None
    try:
        return tuple(int(c) for c in spec.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"bad unseen spec {spec!r}") from None


def cmd_split(args):
    cfg = _override(load_section(args.config, "split"), args, "mode", "unseen", "val_count", "seed")
    if args.fractions is not None:
        cfg["fractions"] = tuple(args.fractions)
    ds = load_dataset(args.data)
    unseen = parse_unseen(cfg["unseen"], ds.n_labels, cfg["seed"])
    if cfg["mode"] == "lfs":
        split = make_lfs_split(ds, unseen, cfg["val_count"], seed=cfg["seed"])
    elif cfg["mode"] == "ifs":
        split = make_ifs_split(ds, unseen, cfg["fractions"], seed=cfg["seed"])
    else:
        raise ConfigError(f"split mode must be 'ifs' or 'lfs', got {cfg['mode']!r}")
    split.check(ds)
    atomic_write(args.out, split.to_text())
    write_manifest(args.out, "split", args.argv, _jsonable(cfg), {"seed": cfg["seed"]},
                   [args.data], [args.out], {"unseen": list(split.unseen)})
    log.info("wrote %s: %d train, %d val, %d test, %d unseen labels",
             args.out, len(split.train), len(split.val), len(split.test), len(split.unseen))


def cmd_train(args):
    cfg = _override(load_section(args.config, "train"), args, "method", "seed")
    method = cfg.pop("method")
    ds = load_dataset(args.data)
    split = load_split(args.split)
    split.check(ds)
    tc = method_config(TrainConfig(**cfg), method, ds.d_s)
    log_buf = io.StringIO()
    ckpt = alternate_train(ds, split, tc, log_stream=log_buf)
    log_path = args.out + ".log"
    atomic_write(args.out, ckpt.to_bytes())
    atomic_write(log_path, log_buf.getvalue())
    write_manifest(args.out, "train", args.argv, {"method": method, **asdict(tc)},
                   {"seed": tc.seed}, [args.data, args.split], [args.out, log_path],
                   {"best_round": ckpt.round, "best_val_imap": ckpt.best_val_imap})
    log.info("wrote %s: best round %d, validation I-MAP %.4f", args.out, ckpt.round,
             ckpt.best_val_imap)


def _scenarios(name, split):
    kinds = SCENARIOS if name == "all" else (name,)
    return [Scenario(k, split.known, split.unseen) for k in kinds]


def cmd_eval(args):
    cfg = _override(load_section(args.config, "eval"), args, "method", "scenario", "k",
                    "rgs_trials", "seed")
    if args.checkpoint is not None and args.method is None:
        cfg["method"] = "checkpoint"
    method = cfg["method"]
    if cfg["scenario"] not in SCENARIOS + ("all",):
        raise ConfigError(f"scenario must be one of {SCENARIOS + ('all',)}")
    ds = load_dataset(args.data)
    split = load_split(args.split)
    split.check(ds)
    test = list(split.test)
    truths = [ds.labels[i] for i in test]
    inputs = [args.data, args.split]
    outputs = [args.out]
    scenarios = _scenarios(cfg["scenario"], split)
    if method == "rgs":
        reports = [rgs_baseline(truths, sc, ds.n_labels, cfg["rgs_trials"], cfg["seed"], cfg["k"])
                   for sc in scenarios]
        S = None
    else:
        if method == "checkpoint":
            if args.checkpoint is None:
                raise ConfigError("--checkpoint is required to evaluate a trained model")
            S = Checkpoint.load(args.checkpoint).scores(ds.X[test], ds.semantics)
            inputs.append(args.checkpoint)
        else:
            S = linear_scores(method, ds, split, ds.X[test])
        reports = [evaluate(S, truths, sc, cfg["k"]) for sc in scenarios]
    atomic_write(args.out, reports_to_text(reports))
    if args.scores_out:
        if S is None:
            raise ConfigError("the random baseline has no score matrix to dump")
        atomic_write(args.scores_out, scores_to_text(S, test, range(ds.n_labels)))
        outputs.append(args.scores_out)
    write_manifest(args.out, "eval", args.argv, _jsonable(cfg), {"seed": cfg["seed"]},
                   inputs, outputs)
    for r in reports:
        log.info("%s I-MAP %.4f L-MAP %.4f F1@%d %.4f", r.scenario, r.values["I-MAP"],
                 r.values["L-MAP"], r.k, r.values["F1"])


def cmd_fuse(args):
    cfg = _override(load_section(args.config, "eval"), args, "scenario", "k")
    (Sa, ia, la), (Sb, ib, lb) = (_read_scores(p) for p in args.scores)
    if ia != ib or la != lb:
        raise ParseError("score dumps cover different instances or labels")
    S = fuse_scores(normalize_scores(Sa), normalize_scores(Sb))
    atomic_write(args.out, scores_to_text(S, ia, la))
    outputs = [args.out]
    inputs = list(args.scores)
    if args.data and args.split:
        ds = load_dataset(args.data)
        split = load_split(args.split)
        truths = [ds.labels[i] for i in ia]
        reports = [evaluate(S, truths, sc, cfg["k"], label_ids=la)
                   for sc in _scenarios(cfg["scenario"], split)]
        report_path = args.report or args.out + ".report"
        atomic_write(report_path, reports_to_text(reports))
        outputs.append(report_path)
        inputs += [args.data, args.split]
        for r in reports:
            log.info("fused %s I-MAP %.4f", r.scenario, r.values["I-MAP"])
    write_manifest(args.out, "fuse", args.argv, _jsonable(cfg), {}, inputs, outputs)


def _read_scores(path):
    with open(path) as fh:
        return parse_scores(fh.read())


def cmd_gradcheck(args):
    seed = 0 if args.seed is None else args.seed
    lines, ok = [], True
    for k, name in enumerate(CHECKS):
        rng = make_rng([seed, k])
        err = max(run_check(name, rng) for _ in range(args.instances))
        passed = err <= args.tolerance
        ok &= passed
        lines.append(f"{name} {'PASS' if passed else 'FAIL'} max_rel_err={err:.3e}")
    text = "\n".join(lines) + "\n"
    if not args.quiet:
        sys.stdout.write(text)
    if args.out:
        atomic_write(args.out, text)
        write_manifest(args.out, "gradcheck", args.argv,
                       {"instances": args.instances, "tolerance": args.tolerance},
                       {"seed": seed}, [], [args.out])
    if not ok:
        return 4
    return 0


# -- entry point ------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the seed in the config")
    common.add_argument("--config", help="INI file holding this command's section")
    common.add_argument("--quiet", action="store_true", help="only report errors")
    common.add_argument("--print-config", action="store_true",
                        help="print the default config section and exit")

    p = argparse.ArgumentParser(prog="mlzsr", description="Multi-label zero-shot action recognition.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="draw a synthetic dataset")
    g.add_argument("--out")

    s = sub.add_parser("split", parents=[common], help="make an IFS or LFS split")
    s.add_argument("--data")
    s.add_argument("--out")
    s.add_argument("--mode", choices=("ifs", "lfs"))
    s.add_argument("--unseen", help="'3,7,12', 'random:N' or 'manifest:PATH'")
    s.add_argument("--val-count", dest="val_count", type=int)
    s.add_argument("--fractions", type=float, nargs=3)

    t = sub.add_parser("train", parents=[common], help="alternate training of both models")
    t.add_argument("--data")
    t.add_argument("--split")
    t.add_argument("--out")
    t.add_argument("--method", choices=NEURAL)

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint or baseline")
    e.add_argument("--data")
    e.add_argument("--split")
    e.add_argument("--out")
    e.add_argument("--checkpoint")
    e.add_argument("--method", choices=("checkpoint", "dsp", "conse", "costa", "rgs"))
    e.add_argument("--scenario", choices=SCENARIOS + ("all",))
    e.add_argument("--k", type=int)
    e.add_argument("--rgs-trials", dest="rgs_trials", type=int)
    e.add_argument("--scores-out", dest="scores_out")

    f = sub.add_parser("fuse", parents=[common], help="average two normalized score dumps")
    f.add_argument("--scores", nargs=2, metavar=("A", "B"))
    f.add_argument("--out")
    f.add_argument("--data")
    f.add_argument("--split")
    f.add_argument("--report")
    f.add_argument("--scenario", choices=SCENARIOS + ("all",))
    f.add_argument("--k", type=int)

    c = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    c.add_argument("--out")
    c.add_argument("--instances", type=int, default=100)
    c.add_argument("--tolerance", type=float, default=1e-4)
    return p


COMMANDS = {
    "generate": cmd_generate, "split": cmd_split, "train": cmd_train,
    "eval": cmd_eval, "fuse": cmd_fuse, "gradcheck": cmd_gradcheck,
}
REQUIRED = {
    "generate": ("out",), "split": ("data", "out"), "train": ("data", "split", "out"),
    "eval": ("data", "split", "out"), "fuse": ("scores", "out"), "gradcheck": (),
}
SECTIONS = {"generate": "generate", "split": "split", "train": "train", "eval": "eval",
            "fuse": "eval"}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr, force=True)
    missing = [f"--{name}" for name in REQUIRED[args.command] if getattr(args, name) is None]
    if missing and not args.print_config:
        parser.error(f"{args.command}: missing required option(s) {', '.join(missing)}")
    if args.print_config:
        if args.command not in SECTIONS:
            sys.stdout.write("# gradcheck takes no config section\n")
            return 0
        sys.stdout.write(default_config_text(SECTIONS[args.command]))
        return 0
    try:
        return COMMANDS[args.command](args) or 0
    except MLZSRError as e:
        log.error("%s", e)
        return e.exit_code
    except FloatingPointError as e:
        log.error("numeric failure: %s", e)
        return 4
    except OSError as e:
        log.error("%s: %s", getattr(e, "filename", "") or "I/O error", e.strerror or e)
        return 3


if __name__ == "__main__":
    sys.exit(main())

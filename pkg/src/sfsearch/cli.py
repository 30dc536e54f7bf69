"""Command-line entry point.

Subcommands: search, train, eval, synth, patterns. Every config key can be
set in a TOML file (--config) and overridden with --key=value flags. Exit
codes: 0 ok, 1 usage or configuration, 2 data, 3 numerical failure.
"""

import argparse
import contextlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_mod
from .config import load_run_config
from .datasets import (
    classify_relation_patterns,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .errors import ConfigError, DataError, NumericalError
from .estimators import _resolve_architecture
from .evaluation import (
    format_report,
    link_prediction_eval,
    triplet_classification,
    write_report_files,
)
from .search import derive, search, write_search_log
from .training import ResumeState, train_standalone, trivial_assignment

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """Argparse that reports usage problems as ConfigError (exit code 1)."""

    def error(self, message):
        raise ConfigError(message)


def _thread_limit(workers):
    if workers:
        try:
            from threadpoolctl import threadpool_limits

            return threadpool_limits(limits=workers)
        except ImportError:
            log.warning("threadpoolctl not available; --workers ignored")
    return contextlib.nullcontext()


def _load_store(cfg, out_dir=None):
    """Resolve the dataset: an on-disk directory or a generated synthetic.

    When a synthetic store is generated and ``out_dir`` is given, the
    dataset is also written there so later eval runs can reload it.
    """
    if cfg.dataset:
        return load_dataset(cfg.dataset), Path(cfg.dataset)
    if cfg.synthetic is not None:
        store = generate_synthetic(cfg.synthetic)
        if out_dir is not None:
            path = Path(out_dir) / "dataset"
            save_dataset(store, path)
            return store, path
        return store, None
    raise ConfigError("no dataset configured; set dataset= or a [synthetic] table")


def _group_init_vectors(cfg):
    if not cfg.groups_from:
        return None
    return ckpt_mod.read_matrix(Path(cfg.groups_from) / "relations.bin")


def _evaluate_and_write(cfg, arch, groups, table, store, out_dir):
    report = link_prediction_eval(
        arch, groups, table, store, split=cfg.eval_split, tie_rule=cfg.tie_rule
    )
    classification = None
    if cfg.classification:
        classification = triplet_classification(
            arch, groups, table, store, seed=cfg.seed
        )["accuracy"]
    write_report_files(out_dir, report, classification)
    print(format_report(report, classification))
    return report


def cmd_search(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    store, dataset_path = _load_store(cfg, out_dir=out)
    scfg = cfg.search_config()
    result = search(store, scfg, group_init_vectors=_group_init_vectors(cfg))
    write_search_log(out / "search_log.csv", result.log)
    arch, rewards = derive(result.policy, result.groups, result.table, store, scfg)
    ckpt_mod.save_checkpoint(
        out / "supernet",
        table=result.table,
        arch=arch,
        groups=result.groups,
        seed=cfg.seed,
        dataset=dataset_path,
        policy=result.policy,
        adam=result.adam,
        adagrad=result.adagrad,
    )
    log.info("retraining derived architecture %s", arch.to_line())
    train_result = train_standalone(
        arch, store, cfg.train_config(), groups=result.groups
    )
    report = _evaluate_and_write(
        cfg, arch, result.groups, train_result.table, store, out / "final"
    )
    ckpt_mod.save_checkpoint(
        out / "final",
        table=train_result.table,
        arch=arch,
        groups=result.groups,
        seed=cfg.seed,
        dataset=dataset_path,
        metrics={"mrr": report.mrr, "hit1": report.hit1, "hit10": report.hit10,
                 "valid_mrr": train_result.best_valid_mrr},
    )
    print(f"search finished in {result.wall_seconds:.1f}s; "
          f"derived {arch.to_line()!r}")
    return 0


def _resume_state(directory):
    ckpt = ckpt_mod.load_checkpoint(directory)
    state = ckpt.manifest.get("train_state")
    if state is None or ckpt.state_table is None or ckpt.adagrad is None:
        raise DataError(f"{directory} was not saved with resumable training state")
    return ckpt, ResumeState(
        table=ckpt.state_table,
        adagrad=ckpt.adagrad,
        next_epoch=int(state["next_epoch"]),
        best_table=ckpt.table,
        best_valid_mrr=float(state["best_valid_mrr"]),
        best_epoch=int(state["best_epoch"]),
        evals_since_improvement=int(state["evals_since_improvement"]),
    )


def cmd_train(cfg, arch_text, resume_dir=None):
    if not arch_text:
        raise ConfigError("train needs --arch (a model name or token line)")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    store, dataset_path = _load_store(cfg, out_dir=out)
    try:
        arch = _resolve_architecture(arch_text, cfg.blocks)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    resume = None
    groups = None
    if resume_dir is not None:
        ckpt, resume = _resume_state(resume_dir)
        if ckpt.arch != arch:
            raise ConfigError(
                f"checkpoint architecture {ckpt.arch.to_line()!r} does not "
                f"match --arch {arch.to_line()!r}"
            )
        groups = ckpt.groups
    elif arch.n_groups > 1:
        if not cfg.groups_from:
            raise ConfigError(
                "multi-group architectures need groups_from=<checkpoint dir>"
            )
        groups = ckpt_mod.load_checkpoint(cfg.groups_from).groups
        if groups.n_groups != arch.n_groups:
            raise ConfigError(
                f"groups_from checkpoint has {groups.n_groups} groups but the "
                f"architecture expects {arch.n_groups}"
            )
        if len(groups.groups) != store.n_relations:
            raise ConfigError(
                f"groups_from checkpoint covers {len(groups.groups)} relations "
                f"but the dataset has {store.n_relations}"
            )
    if groups is None:
        groups = trivial_assignment(store.n_relations, 1)
    result = train_standalone(arch, store, cfg.train_config(), groups=groups, resume=resume)
    report = _evaluate_and_write(cfg, arch, groups, result.table, store, out)
    ckpt_mod.save_checkpoint(
        out,
        table=result.table,
        arch=arch,
        groups=groups,
        seed=cfg.seed,
        dataset=dataset_path,
        metrics={"mrr": report.mrr, "hit1": report.hit1, "hit10": report.hit10,
                 "valid_mrr": result.best_valid_mrr},
        adagrad=result.adagrad,
        state_table=result.final_table,
        train_state={
            "next_epoch": result.epochs_run,
            "best_valid_mrr": result.best_valid_mrr,
            "best_epoch": result.best_epoch,
            "evals_since_improvement": result.evals_since_improvement,
        },
    )
    return 0


def cmd_eval(cfg, checkpoint_dir):
    ckpt = ckpt_mod.load_checkpoint(checkpoint_dir)
    if cfg.dataset:
        store = load_dataset(cfg.dataset)
    elif cfg.synthetic is not None:
        store = generate_synthetic(cfg.synthetic)
    elif ckpt.manifest.get("dataset"):
        store = load_dataset(ckpt.manifest["dataset"])
    else:
        raise ConfigError(
            "no dataset configured and the checkpoint records none"
        )
    if store.n_entities != ckpt.table.n_entities:
        raise DataError(
            f"dataset has {store.n_entities} entities but checkpoint was "
            f"trained with {ckpt.table.n_entities}"
        )
    if store.n_relations != ckpt.table.n_relations:
        raise DataError(
            f"dataset has {store.n_relations} relations but checkpoint was "
            f"trained with {ckpt.table.n_relations}"
        )
    _evaluate_and_write(cfg, ckpt.arch, ckpt.groups, ckpt.table, store, Path(cfg.out))
    return 0


def cmd_synth(cfg):
    if cfg.synthetic is None:
        raise ConfigError("synth needs a [synthetic] table in the config")
    store = generate_synthetic(cfg.synthetic)
    out = Path(cfg.out)
    save_dataset(store, out)
    patterns = classify_relation_patterns(store)
    print(f"wrote {store} to {out}")
    for r in range(store.n_relations):
        p = patterns[r]
        print(f"  {store.relation_names[r]:<20} {p.label:<15} "
              f"symmetry {p.symmetry_ratio:.2f}")
    return 0


def cmd_patterns(cfg):
    store, _ = _load_store(cfg)
    patterns = classify_relation_patterns(store)
    print(f"{'relation':<24} {'pattern':<15} {'symmetry':>9} {'inverse of':<12}")
    for r in range(store.n_relations):
        p = patterns[r]
        inverse = store.relation_names[p.inverse_of] if p.inverse_of is not None else "-"
        print(
            f"{store.relation_names[r]:<24} {p.label:<15} "
            f"{p.symmetry_ratio:>9.3f} {inverse:<12}"
        )
    return 0


def build_parser():
    parser = _Parser(prog="sfsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs in (
        ("search", ()),
        ("train", ("arch", "resume")),
        ("eval", ("checkpoint", )),
        ("synth", ()),
        ("patterns", ()),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="TOML config file")
        if "arch" in needs:
            p.add_argument("--arch", default=None,
                           help="model name or architecture token line")
        if "resume" in needs:
            p.add_argument("--resume", default=None,
                           help="checkpoint directory to continue from")
        if "checkpoint" in needs:
            p.add_argument("--checkpoint", required=True,
                           help="checkpoint directory to evaluate")
    return parser


def main(argv=None):
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        cfg = load_run_config(args.config, overrides=extra)
        with _thread_limit(cfg.workers):
            if args.command == "search":
                return cmd_search(cfg)
            if args.command == "train":
                arch_text = args.arch or cfg.arch
                return cmd_train(cfg, arch_text, resume_dir=args.resume)
            if args.command == "eval":
                return cmd_eval(cfg, args.checkpoint)
            if args.command == "synth":
                return cmd_synth(cfg)
            return cmd_patterns(cfg)
    except (ConfigError, DataError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

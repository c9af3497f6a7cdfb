"""Command line interface.

    hgdta train --dataset data/davis --scenario S2 --out runs/s2
    hgdta evaluate --dataset data/davis --checkpoint runs/s2/run0/checkpoint.pt
    hgdta gradcheck --ablation mb

Flags override config-file entries, which override the defaults. Any `HGDTAError`
is reported as one line on stderr with exit status 1.
"""
import argparse
import logging
import os
import sys

import pandas as pd

from hgdta import pipeline
from hgdta.coldstart import load_similarity_file
from hgdta.config import TrainConfig, load_config
from hgdta.data.dataset import KINDS, load_dataset
from hgdta.errors import DatasetError, HGDTAError
from hgdta.metrics import cluster_report
from hgdta.models.hgrl import ABLATIONS
from hgdta.split import SCENARIOS, write_manifest
from hgdta.utils.checkpoint import load_checkpoint
from hgdta.utils.evaluate import LAYERS

opj = os.path.join
logger = logging.getLogger('hgdta')

# flag name -> TrainConfig / ModelConfig key
TRAIN_FLAGS = {'seed': 'seed', 'topk_drug': 'topk_drug', 'topk_target': 'topk_target',
               'simk_drug': 'simk_drug', 'simk_target': 'simk_target', 'runs': 'runs',
               'epochs': 'epochs', 'lr': 'lr', 'batch_size': 'batch_size',
               'synthesize_contacts': 'synthesize_contacts'}
MODEL_FLAGS = {'dropedge': 'dropedge_rate'}


def _dataset_args(p):
    p.add_argument('--dataset', required=True, help='dataset directory')
    p.add_argument('--kind', choices=sorted(KINDS),
                   help='dataset kind (default: davis, or the kind a --checkpoint was trained on)')
    p.add_argument('--synthesize-contacts', dest='synthesize_contacts', action='store_true', default=None,
                   help='use seeded synthetic contact maps for targets without a file')
    p.add_argument('--sim-drugs', help='precomputed drug similarities (unseen_id known_id value)')
    p.add_argument('--sim-targets', help='precomputed target similarities (unseen_id known_id value)')


def _train_args(p):
    p.add_argument('--scenario', default='S1', type=str.upper, choices=SCENARIOS)
    p.add_argument('--seed', type=int)
    p.add_argument('--config', help='key=value config file')
    p.add_argument('--ablation', choices=sorted(ABLATIONS))
    p.add_argument('--topk-drug', dest='topk_drug', type=int)
    p.add_argument('--topk-target', dest='topk_target', type=int)
    p.add_argument('--dropedge', type=float)
    p.add_argument('--simk-drug', dest='simk_drug', type=int)
    p.add_argument('--simk-target', dest='simk_target', type=int)
    p.add_argument('--epochs', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--batch-size', dest='batch_size', type=int)
    p.add_argument('--runs', type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog='hgdta', description='hierarchical graph drug-target affinity')
    parser.add_argument('--verbose', '-v', action='store_true', help='log at DEBUG level')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('prepare', help='split a dataset and write the split manifest')
    _dataset_args(p)
    _train_args(p)
    p.add_argument('--out', required=True)

    p = sub.add_parser('train', help='train (and evaluate) one or more runs')
    _dataset_args(p)
    _train_args(p)
    p.add_argument('--out', required=True)
    p.add_argument('--resume', metavar='CHECKPOINT', help='continue training from this checkpoint')

    p = sub.add_parser('evaluate', help='metrics of a checkpoint on its test pairs')
    _dataset_args(p)
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--out', help='write per-pair predictions here')

    p = sub.add_parser('infer', help='predicted affinity of one pair')
    _dataset_args(p)
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--drug', required=True)
    p.add_argument('--target', required=True)

    p = sub.add_parser('export-embeddings', help='pre-prediction embeddings of the test pairs')
    _dataset_args(p)
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--layer', default='pair', choices=LAYERS)
    p.add_argument('--out', required=True)

    p = sub.add_parser('cluster-metrics', help='silhouette, CHI and DBI of an embedding export')
    p.add_argument('embeddings')

    p = sub.add_parser('gradcheck', help='finite-difference check of the loss gradient')
    p.add_argument('--ablation', choices=sorted(ABLATIONS))
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--tolerance', type=float, default=1e-4)

    p = sub.add_parser('synthesize', help='write a small synthetic dataset')
    p.add_argument('--out', required=True)
    p.add_argument('--drugs', type=int, default=8)
    p.add_argument('--targets', type=int, default=6)
    p.add_argument('--seed', type=int, default=0)
    return parser


def configure_logging(verbose: int):
    level = logging.DEBUG if verbose else logging.INFO
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s'))
    logger.handlers[:] = [handler]
    logger.setLevel(level)


def resolve_configs(args):
    """(model kwargs, TrainConfig): defaults < config file < flags."""
    model_kw, train_kw = load_config(args.config) if getattr(args, 'config', None) else ({}, {})
    for flag, key in TRAIN_FLAGS.items():
        if getattr(args, flag, None) is not None:
            train_kw[key] = getattr(args, flag)
    for flag, key in MODEL_FLAGS.items():
        if getattr(args, flag, None) is not None:
            model_kw[key] = getattr(args, flag)
    train_kw.setdefault('quiet', not sys.stderr.isatty())
    return model_kw, TrainConfig(**train_kw)


def _load(args, tc: TrainConfig = None):
    synth = args.synthesize_contacts if args.synthesize_contacts is not None \
        else (tc.synthesize_contacts if tc is not None else False)
    kw = {}
    if tc is not None:
        kw.update(contact_threshold=tc.contact_threshold)
    bundle = load_dataset(args.dataset, args.kind or 'davis', synthesize_contacts=synth, **kw)
    if args.sim_drugs:
        bundle.sim_drugs = load_similarity_file(args.sim_drugs, bundle.drug_index)
    if args.sim_targets:
        bundle.sim_targets = load_similarity_file(args.sim_targets, bundle.target_index)
    return bundle


def _load_with_checkpoint(args):
    ckpt = load_checkpoint(args.checkpoint)
    if args.kind is None:
        args.kind = ckpt.kind
    bundle = _load(args, TrainConfig(**ckpt.train_config))
    ckpt.check_kind(bundle.kind)
    return ckpt, bundle


def cmd_prepare(args):
    _, tc = resolve_configs(args)
    bundle = _load(args, tc)
    prep = pipeline.prepare(bundle, args.scenario, tc)
    os.makedirs(args.out, exist_ok=True)
    write_manifest(prep.split, opj(args.out, 'split.tsv'), bundle.drug_ids, bundle.target_ids)
    print(f'{prep.split.scenario}: {len(prep.fit_pairs)} fit, {len(prep.val_pairs)} validation, '
          f'{len(prep.split.test)} test, {len(prep.split.excluded)} excluded pairs')


def cmd_train(args):
    model_kw, tc = resolve_configs(args)
    bundle = _load(args, tc)
    os.makedirs(args.out, exist_ok=True)
    resume = load_checkpoint(args.resume) if args.resume else None
    summary, _ = pipeline.run_repeated(bundle, args.scenario, tc, model_kw, args.ablation, out_dir=args.out,
                                       resume=resume)
    print('\n'.join(summary.to_lines()))


def cmd_evaluate(args):
    ckpt, bundle = _load_with_checkpoint(args)
    report, preds, routing = pipeline.evaluate(ckpt, bundle)
    if args.out:
        s = pipeline.checkpoint_split(ckpt, bundle)
        pairs = sorted(s.test)
        pd.DataFrame({'drug_id': [bundle.drug_ids[i] for i, _ in pairs],
                      'target_id': [bundle.target_ids[j] for _, j in pairs],
                      'label': [s.label(p) for p in pairs],
                      'affinity': [bundle.affinity.entries[p] for p in pairs],
                      'prediction': preds}).to_csv(args.out, sep='\t', index=False, float_format='%.17g')
    logger.info('cold start inferred %d drugs and %d targets',
                len(routing.inferred_drugs), len(routing.inferred_targets))
    for key, value in report.items():
        print(f'{key}={value:.6f}')


def cmd_infer(args):
    ckpt, bundle = _load_with_checkpoint(args)
    print(f'{pipeline.infer_pair(ckpt, bundle, args.drug, args.target):.6f}')


def cmd_export_embeddings(args):
    ckpt, bundle = _load_with_checkpoint(args)
    pipeline.export_embeddings(ckpt, bundle, args.out, layer=args.layer)


def cmd_cluster_metrics(args):
    try:
        df = pd.read_csv(args.embeddings, sep='\t')
    except (OSError, pd.errors.ParserError) as e:
        raise DatasetError(str(e), path=args.embeddings) from e
    columns = [c for c in df.columns if c.startswith('e') and c[1:].isdigit()]
    if 'label' not in df.columns or not columns:
        raise DatasetError('expected a label column and embedding columns e0, e1, ...',
                           path=args.embeddings)
    for key, value in cluster_report(df[columns].to_numpy(), df['label'].to_numpy()).items():
        print(f'{key}={value:.6f}')


def cmd_gradcheck(args):
    report = pipeline.gradcheck(args.ablation, seed=args.seed, tolerance=args.tolerance)
    print(f'max_rel_error={report.max_rel_error:.3e} checked={report.n_checked} '
          f'{"passed" if report.passed else "FAILED"}')
    return 0 if report.passed else 1


def cmd_synthesize(args):
    pipeline.synthesize(args.out, n_drugs=args.drugs, n_targets=args.targets, seed=args.seed)
    print(args.out)


COMMANDS = {'prepare': cmd_prepare, 'train': cmd_train, 'evaluate': cmd_evaluate, 'infer': cmd_infer,
            'export-embeddings': cmd_export_embeddings, 'cluster-metrics': cmd_cluster_metrics,
            'gradcheck': cmd_gradcheck, 'synthesize': cmd_synthesize}


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args) or 0
    except HGDTAError as e:
        print(f'hgdta: error: {e}', file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())

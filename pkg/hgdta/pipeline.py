"""End-to-end workflow: prepare a split, train, evaluate, export and infer.

These functions glue the library together for the command line and the tests; each
one takes a loaded `DatasetBundle` and plain configuration objects.
"""
import logging
import os
import tempfile
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from hgdta.coldstart import drug_similarity_fn, similarity_matrix, target_similarity_fn
from hgdta.config import TrainConfig
from hgdta.data.dataset import DatasetBundle, load_dataset
from hgdta.data.synthetic import generate_synthetic
from hgdta.errors import ConfigError, DatasetError
from hgdta.graphs.affinity import AffinityGraph, degree_stats, topk_prune
from hgdta.losses import get_loss_f
from hgdta.metrics import EvaluationReport
from hgdta.models.hgrl import GraphInputs, HierarchicalGraphNet, ModelConfig, apply_ablation
from hgdta.split import ScenarioSplit, manifest_digest, split, validation_holdout, write_manifest
from hgdta.tensor import GradcheckReport, finite_difference_check, set_seed
from hgdta.utils.checkpoint import Checkpoint, save_checkpoint
from hgdta.utils.evaluate import (ColdStartRouting, Validator, apply_cold_start, embedding_frame,
                                  global_embeddings, write_embeddings)
from hgdta.utils.misc import pair_tensors, pair_values
from hgdta.utils.train import Trainer

opj = os.path.join
logger = logging.getLogger(__name__)


@dataclass
class Prepared():
    split: ScenarioSplit
    fit_pairs: List[Tuple[int, int]]
    val_pairs: List[Tuple[int, int]]
    graph: AffinityGraph
    digest: str


def prepare(bundle: DatasetBundle, scenario: str, tc: TrainConfig, weighted: bool = True) -> Prepared:
    """Splits the affinities, holds out the validation pairs and builds the training
    affinity graph (topK-pruned for kiba-like data unless configured otherwise).

    Only training pairs enter the graph; validation pairs are masked.
    """
    s = split(bundle.affinity, scenario, ratio=tc.ratio, seed=tc.seed)
    fit, val = validation_holdout(s.train, tc.val_fraction, seed=tc.seed)
    aff = bundle.affinity.restrict(s.train).with_mask(val)
    logger.info('affinity graph degrees before pruning: %s', degree_stats(aff))
    if tc.prune_for(bundle.kind):
        aff = topk_prune(aff, tc.topk_drug, tc.topk_target_for(s.scenario))
        logger.info('affinity graph degrees after topK pruning: %s', degree_stats(aff))
    graph = AffinityGraph(aff, weighted=weighted)
    return Prepared(s, fit, val, graph, manifest_digest(s, bundle.drug_ids, bundle.target_ids))


def graph_inputs(bundle: DatasetBundle) -> GraphInputs:
    return GraphInputs(bundle.n_d, bundle.drug_graphs, bundle.target_graphs)


def build_model_config(bundle: DatasetBundle, scenario: str, tc: TrainConfig,
                       model_kw: Optional[Dict] = None, ablation: Optional[str] = None) -> ModelConfig:
    kw = dict(model_kw or {})
    kw.update(signal_dim=2 + bundle.n_d + bundle.n_t,
              target_feature_dim=bundle.target_feature_dim, seed=tc.seed)
    mc = apply_ablation(ModelConfig(**kw), ablation)
    if mc.use_skip_connection is None:
        mc.use_skip_connection = scenario.upper() != 'S1'
    return mc


def train(bundle: DatasetBundle, scenario: str, tc: TrainConfig, model_kw: Optional[Dict] = None,
          ablation: Optional[str] = None, resume: Optional[Checkpoint] = None) -> Tuple[Checkpoint, Trainer]:
    """Trains one model with master seed ``tc.seed``.

    Parameters
    ----------
    resume: Checkpoint, optional
        continue from this checkpoint's last-epoch parameters, optimizer, RNG and
        early-stopping state up to ``tc.epochs``; its dataset kind, split digest and model
        config must match the current ones

    Returns
    -------
    (checkpoint, trainer): the trainer keeps the loss curves
    """
    set_seed(tc.seed)
    mc = build_model_config(bundle, scenario, tc, model_kw, ablation)
    prep = prepare(bundle, scenario, tc, weighted=mc.weighted_affinities)
    model = HierarchicalGraphNet(mc)
    trainer = Trainer(model, prep.graph, graph_inputs(bundle), loss_f=get_loss_f(lamL2=tc.lamL2),
                      lr=tc.lr, batch_size=tc.batch_size, patience=tc.patience, seed=tc.seed,
                      n_print=tc.n_print, quiet=tc.quiet)
    start_epoch, past_train, past_val = 0, [], []
    if resume is not None:
        resume.check_kind(bundle.kind)
        resume.check_split(prep.digest)
        resume.check_compatible(mc)
        if resume.epoch > tc.epochs:
            raise ConfigError(f'checkpoint is already at epoch {resume.epoch}, past epochs={tc.epochs}')
        last = resume.last_state_dict if resume.last_state_dict is not None else resume.state_dict
        model.load_state_dict(last)
        trainer.state.load_state_dict(resume.optimizer)
        if resume.rng_state is not None:
            torch.set_rng_state(resume.rng_state)
        trainer.restore_early_stopping(resume.best_val, resume.best_epoch, resume.wait,
                                       resume.state_dict if resume.best_epoch is not None else None)
        start_epoch, past_train, past_val = resume.epoch, resume.train_losses, resume.val_losses
        logger.info('resuming %s training at epoch %d', prep.split.scenario, start_epoch)
    trainer(prep.fit_pairs, pair_values(bundle.affinity, prep.fit_pairs),
            prep.val_pairs, pair_values(bundle.affinity, prep.val_pairs), epochs=tc.epochs,
            start_epoch=start_epoch)
    normalizer = prep.graph.normalizer
    ckpt = Checkpoint(model_config=mc.to_dict(), train_config=tc.to_dict(),
                      state_dict={k: v.detach().clone() for k, v in model.state_dict().items()},
                      optimizer=trainer.state.state_dict(), rng_state=torch.get_rng_state(),
                      epoch=trainer.epoch, scenario=prep.split.scenario, split_digest=prep.digest,
                      kind=bundle.kind, drug_ids=list(bundle.drug_ids), target_ids=list(bundle.target_ids),
                      graph_entries=dict(prep.graph.aff.entries), graph_mask=sorted(prep.graph.aff.mask),
                      normalizer=(normalizer.lo, normalizer.hi) if normalizer is not None else None,
                      fit_pairs=list(prep.fit_pairs), val_pairs=list(prep.val_pairs),
                      final_train_mse=trainer.final_train_mse,
                      train_losses=list(past_train) + [float(x) for x in trainer.train_losses],
                      val_losses=list(past_val) + [float(x) for x in trainer.val_losses],
                      last_state_dict={k: v.detach().clone() for k, v in trainer.last_params.items()},
                      best_val=None if trainer.best_epoch is None else float(trainer.best_val),
                      best_epoch=trainer.best_epoch, wait=trainer.wait)
    logger.info('final training MSE %.6f after %d epochs', trainer.final_train_mse, trainer.epoch)
    return ckpt, trainer


def checkpoint_split(ckpt: Checkpoint, bundle: DatasetBundle) -> ScenarioSplit:
    """Re-derives the split of a checkpoint and verifies it against the stored digest."""
    ckpt.check_kind(bundle.kind)
    if list(bundle.drug_ids) != ckpt.drug_ids or list(bundle.target_ids) != ckpt.target_ids:
        raise DatasetError('dataset ids differ from the ones the checkpoint was trained on', path=bundle.root)
    tc = TrainConfig(**ckpt.train_config)
    s = split(bundle.affinity, ckpt.scenario, ratio=tc.ratio, seed=tc.seed)
    ckpt.check_split(manifest_digest(s, bundle.drug_ids, bundle.target_ids))
    return s


def cold_start_validator(ckpt: Checkpoint, bundle: DatasetBundle, pairs: Sequence[Tuple[int, int]],
                         model: Optional[HierarchicalGraphNet] = None) -> Tuple[Validator, ColdStartRouting]:
    """Validator whose global embeddings cover every entity of `pairs`: drugs and
    targets without a fitted training pair get cold-start embeddings."""
    ckpt.check_kind(bundle.kind)
    model = model if model is not None else ckpt.model()
    graph = ckpt.graph()
    tc = TrainConfig(**ckpt.train_config)
    H = global_embeddings(model, graph)
    known_d = sorted({i for i, _ in ckpt.fit_pairs})
    known_t = sorted({j for _, j in ckpt.fit_pairs})
    unseen_d = sorted({i for i, _ in pairs} - set(known_d))
    unseen_t = sorted({j for _, j in pairs} - set(known_t))
    drug_sim = target_sim = None
    if H is not None and unseen_d:
        drug_sim = similarity_matrix(unseen_d, known_d, drug_similarity_fn(bundle.molecules),
                                     bundle.sim_drugs, names=bundle.drug_ids)
    if H is not None and unseen_t:
        target_sim = similarity_matrix(unseen_t, known_t, target_similarity_fn(bundle.sequences, tc.scoring),
                                       bundle.sim_targets, names=bundle.target_ids)
    H, routing = apply_cold_start(H, bundle.n_d, drug_sim, target_sim, tc.simk_drug, tc.simk_target)
    validator = Validator(model, graph, graph_inputs(bundle), H=H, batch_size=tc.batch_size)
    return validator, routing


def evaluate(ckpt: Checkpoint, bundle: DatasetBundle, pairs: Optional[Sequence[Tuple[int, int]]] = None):
    """Metrics on `pairs` (the test pairs of the checkpoint's split by default).

    Returns
    -------
    (report, predictions, routing)
    """
    if pairs is None:
        pairs = sorted(checkpoint_split(ckpt, bundle).test)
    validator, routing = cold_start_validator(ckpt, bundle, pairs)
    report, preds = validator(pairs, pair_values(bundle.affinity, pairs))
    logger.info('evaluation on %d pairs: %s', len(pairs), report)
    return report, preds, routing


def export_embeddings(ckpt: Checkpoint, bundle: DatasetBundle, path, layer: str = 'pair',
                      pairs: Optional[Sequence[Tuple[int, int]]] = None) -> pd.DataFrame:
    """Writes one row per test pair: ids, affinity, weak/strong label and embedding."""
    if pairs is None:
        pairs = sorted(checkpoint_split(ckpt, bundle).test)
    validator, _ = cold_start_validator(ckpt, bundle, pairs)
    df = embedding_frame(pairs, pair_values(bundle.affinity, pairs), validator.embeddings(pairs, layer),
                         bundle.cluster_threshold, bundle.drug_ids, bundle.target_ids)
    write_embeddings(df, path)
    logger.info('exported %d %s embeddings to %s', len(df), layer, path)
    return df


def infer_pair(ckpt: Checkpoint, bundle: DatasetBundle, drug_id: str, target_id: str) -> float:
    """Predicted affinity of one (drug, target) pair, with cold start for unseen ids."""
    for name, index in ((drug_id, bundle.drug_index), (target_id, bundle.target_index)):
        if name not in index:
            raise DatasetError(f'unknown id {name!r}', path=bundle.root)
    pair = (bundle.drug_index[drug_id], bundle.target_index[target_id])
    validator, _ = cold_start_validator(ckpt, bundle, [pair])
    return float(validator.predict([pair])[0])


def run_repeated(bundle: DatasetBundle, scenario: str, tc: TrainConfig, model_kw=None, ablation=None,
                 out_dir=None, resume: Optional[Checkpoint] = None):
    """`tc.runs` train/evaluate runs with master seeds seed .. seed + runs - 1.

    A `resume` checkpoint continues a single run.

    Returns
    -------
    (EvaluationReport, metrics frame with columns scenario, run, mse, ci, rm2, pearson)
    """
    if resume is not None and tc.runs != 1:
        raise ConfigError(f'resuming continues one run, got runs={tc.runs}')
    rows = []
    for run in range(tc.runs):
        run_tc = TrainConfig(**{**tc.to_dict(), 'seed': tc.seed + run})
        ckpt, trainer = train(bundle, scenario, run_tc, model_kw, ablation, resume=resume)
        report, _, _ = evaluate(ckpt, bundle)
        rows.append({'scenario': ckpt.scenario, 'run': run, **report})
        if out_dir is not None:
            run_dir = opj(out_dir, f'run{run}')
            save_checkpoint(ckpt, opj(run_dir, 'checkpoint.pt'))
            write_manifest(checkpoint_split(ckpt, bundle), opj(run_dir, 'split.tsv'),
                           bundle.drug_ids, bundle.target_ids)
            losses_frame(trainer).to_csv(opj(run_dir, 'losses.tsv'), sep='\t', index=False,
                                         float_format='%.17g')
    metrics = pd.DataFrame(rows, columns=['scenario', 'run', 'mse', 'ci', 'rm2', 'pearson'])
    summary = EvaluationReport.from_runs(rows[0]['scenario'],
                                         [{k: r[k] for k in ('mse', 'ci', 'rm2', 'pearson')} for r in rows])
    if out_dir is not None:
        metrics.to_csv(opj(out_dir, 'metrics.tsv'), sep='\t', index=False, float_format='%.17g')
        with open(opj(out_dir, 'report.txt'), 'w') as f:
            f.write('\n'.join(summary.to_lines()) + '\n')
    return summary, metrics


def losses_frame(trainer: Trainer) -> pd.DataFrame:
    n = len(trainer.train_losses)
    val = np.full(n, np.nan)
    val[:len(trainer.val_losses)] = trainer.val_losses
    start = getattr(trainer, 'start_epoch', 0)
    return pd.DataFrame({'epoch': np.arange(start, start + n), 'train': trainer.train_losses, 'val': val})


GRADCHECK_DIMS = dict(global_hidden=3, global_dim=3, drug_dim=3, target_dim=3, refined_drug_dim=3,
                      refined_target_dim=3, readout_hidden=3, readout_dim=3, predictor_hidden=(4, 3),
                      local_layers=2, refine_layers=1, dropedge_rate=0.0)


def gradcheck(ablation: Optional[str] = None, seed: int = 0, tolerance: float = 1e-4,
              skip_connection: bool = True) -> GradcheckReport:
    """Finite-difference check of the end-to-end loss gradient on a 3-drug / 2-target
    toy instance with narrow layers.

    Biases are drawn away from zero first so no ReLU sits exactly on its kink.
    """
    with tempfile.TemporaryDirectory() as tmp:
        generate_synthetic(tmp, n_drugs=3, n_targets=2, seed=seed, min_length=4, max_length=6,
                           density=0.3)
        bundle = load_dataset(tmp, 'synthetic')
        inputs = graph_inputs(bundle)
        tc = TrainConfig(seed=seed, val_fraction=0.0)
        mc = build_model_config(bundle, 'S1', tc, dict(GRADCHECK_DIMS, use_skip_connection=skip_connection),
                                ablation)
        if mc.use_local_graphs:
            for k in range(bundle.n_d):
                inputs.drug_graphs[k]
            for k in range(bundle.n_t):
                inputs.target_graphs[k]
    pairs = sorted(bundle.affinity.entries)
    graph = AffinityGraph(bundle.affinity, weighted=mc.weighted_affinities)
    model = HierarchicalGraphNet(mc).double()
    gen = torch.Generator().manual_seed(seed + 1)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith('bias'):
                p.add_(0.1 * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    d, t, y = pair_tensors(pairs, pair_values(bundle.affinity, pairs))
    a_hat = graph.resample(0.0)
    loss_f = get_loss_f()

    def forward():
        H = model.encode(a_hat, graph.X)
        return loss_f(model(d, t, inputs, H), y)

    report = finite_difference_check(forward, dict(model.named_parameters()), tolerance=tolerance)
    logger.info('gradcheck (%s): max relative error %.3e over %d entries -> %s',
                ablation or 'full', report.max_rel_error, report.n_checked,
                'passed' if report.passed else 'FAILED')
    return report


def synthesize(root, n_drugs=8, n_targets=6, seed=0):
    return generate_synthetic(root, n_drugs=n_drugs, n_targets=n_targets, seed=seed)

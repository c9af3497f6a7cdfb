import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
import torch

from hgdta.coldstart import SimilarityMatrix, infer_embeddings
from hgdta.errors import ContractViolation
from hgdta.metrics import regression_report
from hgdta.utils.misc import batches, pair_tensors

logger = logging.getLogger(__name__)

LAYERS = ('pair', 'hidden')


@torch.no_grad()
def global_embeddings(model, graph) -> Optional[torch.Tensor]:
    """H over the undropped training graph, or None without the global level."""
    if not model.config.use_global_graph:
        return None
    return model.encode(graph.resample(0.0), graph.X)


@torch.no_grad()
def predict_pairs(model, graph, inputs, pairs, batch_size=512, H=None) -> np.ndarray:
    """Predicted affinities of `pairs`, in order."""
    if H is None:
        H = global_embeddings(model, graph)
    out = []
    for chunk in batches(pairs, batch_size):
        d, t = pair_tensors(chunk)
        out.append(model(d, t, inputs, H).numpy())
    return np.concatenate(out) if out else np.zeros(0)


@dataclass
class ColdStartRouting():
    """Which global-embedding rows were replaced by cold-start inference."""
    inferred_drugs: List[int] = field(default_factory=list)
    inferred_targets: List[int] = field(default_factory=list)


def _clamp_simk(simk, sim, what):
    if len(sim.known) < simk:
        logger.warning('simK for %s lowered from %d to the %d known entities', what, simk, len(sim.known))
        return len(sim.known)
    return simk


def apply_cold_start(H: Optional[torch.Tensor], n_d: int,
                     drug_sim: Optional[SimilarityMatrix] = None,
                     target_sim: Optional[SimilarityMatrix] = None,
                     simk_drug: int = 2, simk_target: int = 7):
    """Copy of H whose rows for unseen drugs / targets hold their inferred embeddings.

    Returns
    -------
    (H, ColdStartRouting)
    """
    routing = ColdStartRouting()
    if H is None:
        return H, routing
    H = H.clone()
    if drug_sim is not None and len(drug_sim.unseen):
        rows = torch.as_tensor(list(drug_sim.known))
        H[torch.as_tensor(list(drug_sim.unseen))] = infer_embeddings(
            H[rows], drug_sim, _clamp_simk(simk_drug, drug_sim, 'drugs'))
        routing.inferred_drugs = list(drug_sim.unseen)
    if target_sim is not None and len(target_sim.unseen):
        rows = torch.as_tensor(list(target_sim.known)) + n_d
        H[torch.as_tensor(list(target_sim.unseen)) + n_d] = infer_embeddings(
            H[rows], target_sim, _clamp_simk(simk_target, target_sim, 'targets'))
        routing.inferred_targets = list(target_sim.unseen)
    logger.debug('cold start inferred %d drug and %d target embeddings',
                 len(routing.inferred_drugs), len(routing.inferred_targets))
    return H, routing


class Validator():
    """
    Class to handle evaluation of a trained model.

    Parameters
    ----------
    model: HierarchicalGraphNet

    graph: AffinityGraph
        the training affinity graph the model was fitted on

    inputs: GraphInputs

    H: torch.Tensor, optional
        global embeddings to use instead of encoding `graph` (e.g. after cold start)
    """

    def __init__(self, model, graph, inputs, H=None, batch_size=512):
        self.model = model.eval()
        self.graph = graph
        self.inputs = inputs
        self.H = H if H is not None else global_embeddings(model, graph)
        self.batch_size = batch_size

    def predict(self, pairs) -> np.ndarray:
        return predict_pairs(self.model, self.graph, self.inputs, pairs, self.batch_size, H=self.H)

    def __call__(self, pairs, truths):
        """
        Metrics of the predictions for `pairs`.

        Return
        ------
        (report, predictions): (dict, np.ndarray)
            report holds mse, ci, rm2 and pearson
        """
        preds = self.predict(pairs)
        return regression_report(truths, preds), preds

    @torch.no_grad()
    def embeddings(self, pairs, layer='pair') -> np.ndarray:
        """Pre-prediction embeddings: the predictor input ('pair') or its last hidden
        layer ('hidden')."""
        if layer not in LAYERS:
            raise ContractViolation(f'unknown layer {layer!r}, expected one of {LAYERS}')
        fn = self.model.embed_pair if layer == 'pair' else self.model.hidden
        out = []
        for chunk in batches(pairs, self.batch_size):
            d, t = pair_tensors(chunk)
            out.append(fn(d, t, self.inputs, self.H).numpy())
        return np.concatenate(out) if out else np.zeros((0, 0))


def embedding_frame(pairs, truths, embeddings, threshold, drug_ids, target_ids) -> pd.DataFrame:
    """One row per pair: ids, affinity, strong-binding label (affinity >= threshold) and
    the embedding columns e0, e1, ..."""
    truths = np.asarray(truths, dtype=np.float64)
    df = pd.DataFrame({'drug_id': [drug_ids[i] for i, _ in pairs],
                       'target_id': [target_ids[j] for _, j in pairs],
                       'affinity': truths,
                       'label': (truths >= threshold).astype(int)})
    emb = pd.DataFrame(embeddings, columns=[f'e{k}' for k in range(embeddings.shape[1])])
    return pd.concat([df, emb], axis=1)


def write_embeddings(df: pd.DataFrame, path):
    df.to_csv(path, sep='\t', index=False, float_format='%.17g')

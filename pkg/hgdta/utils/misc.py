import numpy as np
import torch

from hgdta.tensor import DTYPE


def pair_tensors(pairs, values=None):
    """(drug indices, target indices[, affinities]) tensors of a pair list."""
    pairs = list(pairs)
    d = torch.tensor([i for i, _ in pairs], dtype=torch.long)
    t = torch.tensor([j for _, j in pairs], dtype=torch.long)
    if values is None:
        return d, t
    return d, t, torch.as_tensor(np.asarray(values, dtype=np.float64), dtype=DTYPE)


def batches(items, batch_size):
    '''consecutive chunks of a list, in order
    '''
    items = list(items)
    for k in range(0, len(items), batch_size):
        yield items[k:k + batch_size]


def pair_values(aff, pairs):
    return np.array([aff.entries[p] for p in pairs], dtype=np.float64)

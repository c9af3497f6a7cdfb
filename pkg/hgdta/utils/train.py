import logging
from copy import deepcopy

import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset
from tqdm import tqdm

from hgdta.errors import DivergenceError
from hgdta.losses import Loss
from hgdta.tensor import AdamState, Tape, adam_step, backward
from hgdta.utils.evaluate import predict_pairs
from hgdta.utils.misc import pair_tensors

logger = logging.getLogger(__name__)


class Trainer():
    """
    Class to handle training of model.

    Every epoch rebuilds Â from the training affinity graph under DropEdge (seeded with
    ``seed + epoch``), then runs minibatches of (drug, target, affinity) triples:
    record the forward pass on a tape, take the gradients of the batch loss and apply
    one Adam step.

    Parameters
    ----------
    model: HierarchicalGraphNet

    graph: AffinityGraph
        training affinity graph (validation pairs masked)

    inputs: GraphInputs
        molecular graphs of drugs and targets

    loss_f: Loss, optional

    patience: int
        epochs without validation improvement before stopping; the parameters of the
        best validation epoch are restored
    """

    def __init__(self,
                 model,
                 graph,
                 inputs,
                 loss_f=None,
                 lr=5e-4,
                 batch_size=512,
                 patience=30,
                 seed=0,
                 n_print=1,
                 quiet=False):
        self.model = model
        self.graph = graph
        self.inputs = inputs
        self.loss_f = loss_f if loss_f is not None else Loss()
        self.lr = lr
        self.batch_size = batch_size
        self.patience = patience
        self.seed = seed
        self.n_print = n_print
        self.quiet = quiet
        self.params = dict(model.named_parameters())
        self.state = AdamState(self.params, lr=lr)
        self.epoch = 0
        self.final_train_mse = None
        self.restore_early_stopping()

    def restore_early_stopping(self, best_val=None, best_epoch=None, wait=0, best_params=None):
        """Early-stopping state carried into the next call (resume)."""
        self.best_val = np.inf if best_val is None else best_val
        self.best_epoch = best_epoch
        self.wait = wait
        self.best_params = best_params
        self.last_params = None

    @property
    def rate(self):
        return self.model.config.dropedge_rate

    def _a_hat(self, epoch):
        if not self.model.config.use_global_graph:
            return None
        return self.graph.resample(self.rate, self.seed + epoch)

    def _H(self, a_hat):
        return self.model.encode(a_hat, self.graph.X if a_hat is not None else None)

    def __call__(self, train_pairs, train_y, val_pairs=None, val_y=None, epochs=10, start_epoch=0):
        """
        Trains the model.

        Parameters
        ----------
        train_pairs: list of (i, j)

        train_y: array-like
            affinities of `train_pairs`

        epochs: int, optional
            Number of epochs to train the model for.

        start_epoch: int, optional
            First epoch to run when resuming; shuffling and DropEdge are seeded per
            epoch, so together with `restore_early_stopping` a resumed run repeats the
            uninterrupted one.
        """
        logger.info('Starting Training Loop...')
        d, t, y = pair_tensors(train_pairs, train_y)
        self._shuffle = torch.Generator()
        loader = DataLoader(TensorDataset(d, t, y), batch_size=self.batch_size, shuffle=True,
                            generator=self._shuffle)
        has_val = bool(val_pairs)
        self.train_losses, self.val_losses = [], []
        self.start_epoch = self.epoch = start_epoch
        progress = tqdm(range(start_epoch, epochs), disable=self.quiet, desc='train', leave=False)
        for epoch in progress:
            if has_val and self.wait >= self.patience:
                break
            self._shuffle.manual_seed(int(self.seed) + epoch)
            mean_epoch_loss = self._train_epoch(loader, epoch)
            if not np.isfinite(mean_epoch_loss):
                raise DivergenceError(epoch, mean_epoch_loss)
            self.train_losses.append(mean_epoch_loss)
            self.epoch = epoch + 1
            if has_val:
                val_loss = self._test_epoch(val_pairs, val_y)
                self.val_losses.append(val_loss)
                if epoch % self.n_print == 0:
                    logger.info('====> Epoch: {} Average train loss: {:.4f} (Val loss: {:.4f})'.format(
                        epoch, mean_epoch_loss, val_loss))
                if val_loss < self.best_val:
                    self.best_val, self.best_params, self.wait = val_loss, deepcopy(self.model.state_dict()), 0
                    self.best_epoch = epoch
                else:
                    self.wait += 1
                    if self.wait >= self.patience:
                        logger.info('early stopping at epoch %d (best epoch %d, val loss %.4f)',
                                    epoch, self.best_epoch, self.best_val)
                        break
            elif epoch % self.n_print == 0:
                logger.info('====> Epoch: {} Average train loss: {:.4f}'.format(epoch, mean_epoch_loss))
            progress.set_postfix(loss=mean_epoch_loss)
        self.last_params = deepcopy(self.model.state_dict())
        if self.best_params is not None:
            self.model.load_state_dict(self.best_params)
        self.train_losses = np.array(self.train_losses)
        self.val_losses = np.array(self.val_losses)
        self.final_train_mse = self._test_epoch(train_pairs, train_y)
        return self

    def _train_epoch(self, data_loader, epoch):
        """
        Trains the model for one epoch.

        Return
        ------
        mean_epoch_loss: float
            batch losses averaged with batch-size weights
        """
        self.model.train()
        a_hat = self._a_hat(epoch)
        epoch_loss, n = 0., 0
        for d, t, y in data_loader:
            epoch_loss += self._train_iteration(d, t, y, a_hat) * len(y)
            n += len(y)
        self.model.eval()
        return epoch_loss / n

    def _train_iteration(self, d, t, y, a_hat):
        """
        Trains the model for one iteration on a batch of pairs.
        """
        def forward():
            preds = self.model(d, t, self.inputs, self._H(a_hat))
            return self.loss_f(preds, y, self.model.named_parameters())

        tape = Tape(forward, self.params)
        loss = tape.record()
        grads = backward(tape, loss)
        adam_step(self.params, grads, self.state)
        return loss.item()

    def _test_epoch(self, pairs, values):
        """
        MSE of `pairs` with the undropped Â and no parameter update.
        """
        preds = predict_pairs(self.model, self.graph, self.inputs, pairs, batch_size=self.batch_size)
        y = np.asarray(values, dtype=np.float64)
        return float(np.mean((y - preds) ** 2))

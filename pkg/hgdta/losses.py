import torch

from hgdta.errors import ContractViolation


def get_loss_f(**kwargs_parse):
    """Return the loss function given the parsed training arguments."""
    return Loss(lamL2=kwargs_parse.get("lamL2", 0.))


def mse_loss(predictions: torch.Tensor, truths: torch.Tensor) -> torch.Tensor:
    """(1/m) * sum (y - y_hat)^2 over m >= 1 pairs."""
    predictions = predictions.reshape(-1)
    truths = torch.as_tensor(truths, dtype=predictions.dtype).reshape(-1)
    if predictions.shape != truths.shape:
        raise ContractViolation(f'{predictions.numel()} predictions for {truths.numel()} truths')
    if predictions.numel() == 0:
        raise ContractViolation('mse_loss needs at least one pair')
    return torch.mean((truths - predictions) ** 2)


class Loss():
    """Affinity regression loss: batch MSE plus an optional L2 penalty on the weights.
    """

    def __init__(self, lamL2=0.):
        """
        Parameters
        ----------
        lamL2 : float
            Hyperparameter for penalizing the squared L2 norm of weight matrices
            (biases excluded). 0 gives the plain MSE objective.
        """
        if lamL2 < 0:
            raise ContractViolation('lamL2 must be non-negative')
        self.lamL2 = lamL2

    def __call__(self, predictions, truths, named_params=None):
        """
        Parameters
        ----------
        predictions : torch.Tensor
            Predicted affinities of a batch. Shape : (batch_size,).

        truths : torch.Tensor
            Observed affinities. Shape : (batch_size,).

        named_params : iterable of (name, torch.Tensor), optional
            Parameters to penalize when lamL2 > 0.

        Return
        ------
        loss : torch.Tensor
        """
        loss = mse_loss(predictions, truths)
        if self.lamL2 > 0 and named_params is not None:
            penalty = sum((p ** 2).sum() for name, p in named_params if not name.endswith('bias'))
            loss = loss + self.lamL2 * penalty
        return loss

"""Dense tensors, reverse-mode gradients and Adam on top of torch.

The "tape" of a computation is the autograd graph torch records while a forward
closure runs; `Tape` keeps that closure together with the leaf parameters so the
computation can be replayed, differentiated and checked against finite differences.
"""
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional

import numpy as np
import torch

from hgdta.errors import ContractViolation, MissingGradientError, NonDeterministicError

logger = logging.getLogger(__name__)

DTYPE = torch.float64


def set_seed(seed: int):
    '''seed python, numpy and torch together
    '''
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def as_tensor(x) -> torch.Tensor:
    """Converts arrays / lists to a float64 tensor (no copy for float64 tensors)."""
    return torch.as_tensor(x, dtype=DTYPE)


def xavier_uniform(shape, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Seeded Xavier-uniform initialization of a weight matrix of `shape` (fan_in, fan_out)."""
    w = torch.empty(*shape, dtype=DTYPE)
    torch.nn.init.xavier_uniform_(w, generator=generator)
    return w


def primitive_ops() -> Dict[str, Callable]:
    """The primitive operations the models are composed of, keyed by name.

    Binary ops take two tensors of the same shape (``matmul`` takes conformable
    matrices), unary ops take one.
    """
    return {
        'matmul': lambda a, b: a @ b,
        'add': torch.add,
        'sub': torch.sub,
        'mul': torch.mul,
        'relu': torch.relu,
        'concat': lambda a, b: torch.cat([a, b], dim=-1),
        'mean_rows': lambda a: a.mean(dim=0),
        'sum': torch.sum,
    }


class Tape():
    """Recorded forward computation.

    Parameters
    ----------
    forward: callable
        Zero-argument closure returning a tensor. It must read the parameters
        through the tensors in `params` so that gradients flow to them.

    params: mapping str -> torch.Tensor
        Leaf tensors to differentiate with respect to.
    """

    def __init__(self, forward: Callable[[], torch.Tensor], params: Mapping[str, torch.Tensor]):
        self.forward = forward
        self.params = dict(params)
        self.output = None

    def record(self) -> torch.Tensor:
        """Runs the forward closure with gradient recording enabled."""
        with torch.enable_grad():
            self.output = self.forward()
        return self.output

    def replay(self) -> torch.Tensor:
        """Re-evaluates the closure without recording."""
        with torch.no_grad():
            return self.forward()

    def check_determinism(self):
        first, second = self.replay(), self.replay()
        if not torch.equal(first, second):
            raise NonDeterministicError('forward closure gave different outputs on replay')
        return first


def backward(tape: Tape, loss: Optional[torch.Tensor] = None) -> Dict[str, torch.Tensor]:
    """Gradients of a scalar loss with respect to every parameter of the tape.

    Parameters that the loss does not depend on get a zero gradient; parameters that
    are detached (``requires_grad=False``) raise `MissingGradientError`.
    """
    if loss is None:
        loss = tape.output if tape.output is not None else tape.record()
    if loss.dim() != 0:
        raise ContractViolation(f'loss must be a scalar, got shape {tuple(loss.shape)}')
    names = list(tape.params)
    for name in names:
        if not tape.params[name].requires_grad:
            raise MissingGradientError(name)
    tensors = [tape.params[name] for name in names]
    grads = torch.autograd.grad(loss, tensors, allow_unused=True, retain_graph=True)
    return {name: (torch.zeros_like(p) if g is None else g)
            for name, p, g in zip(names, tensors, grads)}


@dataclass
class AdamState():
    """Adam optimizer state for a named set of parameters.

    The moment accumulators live in the wrapped `torch.optim.Adam`; `step` counts
    the updates applied through `adam_step`.
    """
    params: Dict[str, torch.Tensor]
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    optimizer: torch.optim.Adam = field(init=False, repr=False)

    def __post_init__(self):
        self.params = dict(self.params)
        self.optimizer = torch.optim.Adam(list(self.params.values()), lr=self.lr,
                                          betas=(self.beta1, self.beta2), eps=self.eps)

    def moments(self, name):
        """(first moment, second moment) of parameter `name`, or zeros before the first step."""
        p = self.params[name]
        state = self.optimizer.state.get(p, {})
        if 'exp_avg' not in state:
            return torch.zeros_like(p), torch.zeros_like(p)
        return state['exp_avg'], state['exp_avg_sq']

    def state_dict(self):
        return {'step': self.step, 'optimizer': self.optimizer.state_dict()}

    def load_state_dict(self, state):
        self.step = state['step']
        self.optimizer.load_state_dict(state['optimizer'])


def adam_step(params: Mapping[str, torch.Tensor], grads: Mapping[str, torch.Tensor], state: AdamState):
    """Applies one bias-corrected Adam update in place.

    Returns
    -------
    (params, state)
    """
    if set(params) != set(grads):
        raise ContractViolation('parameters and gradients are not aligned by name')
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ContractViolation(f'gradient for {name!r} has shape {tuple(g.shape)}, '
                                    f'parameter has {tuple(p.shape)}')
        if state.params.get(name) is not p:
            raise ContractViolation(f'parameter {name!r} is not tracked by this optimizer state')
        p.grad = g.detach().clone()
    state.optimizer.step()
    state.optimizer.zero_grad(set_to_none=True)
    state.step += 1
    return params, state


@dataclass
class GradcheckReport():
    passed: bool
    max_rel_error: float
    worst: Optional[tuple] = None  # (parameter name, flat index)
    n_checked: int = 0


def finite_difference_check(forward: Callable[[], torch.Tensor],
                            params: Mapping[str, torch.Tensor],
                            tolerance: float = 1e-4,
                            h: float = 1e-5,
                            analytic: Optional[Mapping[str, torch.Tensor]] = None,
                            scale_floor: float = 1e-2) -> GradcheckReport:
    """Compares analytic gradients of a scalar forward with central differences.

    The relative error of each entry is ``|a - n| / max(|a|, |n|, scale_floor)``.

    Parameters
    ----------
    forward: callable
        Zero-argument closure returning a scalar tensor.

    analytic: mapping, optional
        Gradients to check; computed with `backward` when omitted.
    """
    if tolerance <= 0:
        raise ContractViolation('tolerance must be positive')
    tape = Tape(forward, params)
    tape.check_determinism()
    if analytic is None:
        analytic = backward(tape, tape.record())

    max_err, worst, n_checked = 0.0, None, 0
    with torch.no_grad():
        for name, p in tape.params.items():
            flat = p.view(-1)
            a_flat = analytic[name].reshape(-1)
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + h
                f_plus = forward().item()
                flat[k] = orig - h
                f_minus = forward().item()
                flat[k] = orig
                numeric = (f_plus - f_minus) / (2 * h)
                a = a_flat[k].item()
                err = abs(a - numeric) / max(abs(a), abs(numeric), scale_floor)
                n_checked += 1
                if err > max_err:
                    max_err, worst = err, (name, k)
    report = GradcheckReport(passed=max_err < tolerance, max_rel_error=max_err,
                             worst=worst, n_checked=n_checked)
    logger.debug('gradcheck over %d entries: max relative error %.3e', n_checked, max_err)
    return report

"""
.. include:: ../readme.md
"""
from .losses import get_loss_f
from hgdta.utils.train import Trainer
from hgdta.utils.evaluate import Validator
from .models.hgrl import HierarchicalGraphNet, ModelConfig

# documented api: the test suite and the `python -m hgdta` entry point are left out
__pdoc__ = {'tests': False, '__main__': False}

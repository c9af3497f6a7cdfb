from .hgrl import HierarchicalGraphNet, ModelConfig, MLP

from .qnet import (VARIANTS, FactoredQNet, Learner, QNetworkPair, d3qn_target, double_dqn_target,
                   dueling_q, should_sync, vanilla_target)
from .replay import PrioritizedReplay, Transition
from .reward import COLLISION_REWARD, reward, step_reward
from .spaces import N_MOVES, HeadLayout, epsilon_greedy, featurize

__all__ = [
    "VARIANTS", "FactoredQNet", "Learner", "QNetworkPair", "d3qn_target", "double_dqn_target",
    "dueling_q", "should_sync", "vanilla_target", "PrioritizedReplay", "Transition",
    "COLLISION_REWARD", "reward", "step_reward", "N_MOVES", "HeadLayout", "epsilon_greedy", "featurize",
]

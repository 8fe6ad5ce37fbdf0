"""LLM-guided exploration for hierarchical RL: relevance priors, skill environments, learners and a training harness."""

__version__ = "0.1.0"

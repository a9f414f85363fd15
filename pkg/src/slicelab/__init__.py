"""slicelab: a small laboratory for learned radio-resource slicing.

Deterministic cell-level slicing simulator, an episodic decision-process
wrapper, rule-based allocation baselines, a hand-rolled numpy actor/critic
stack with online (soft actor-critic) and offline (conservative Q-learning)
trainers, and a dataset/evaluation harness.
"""
__version__ = "0.1.0"

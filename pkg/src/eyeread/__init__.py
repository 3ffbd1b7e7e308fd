"""Per-trial AD vs. Control classification from reading eye movements.

Pipeline: fixation cleaning and classification, trial-wise descriptors,
stacked denoising sparse autoencoders with a softmax head, and evaluation.
"""

__version__ = "0.1.0"

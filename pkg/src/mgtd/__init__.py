"""Machine-generated text detection toolkit.

Data cleaning, back-translation augmentation, classifier fine-tuning with a
length-sensitive positive-unlabeled loss and low-rank adapters, one-vs-rest
attribution, and a logit-stacking ensemble.
"""

__version__ = "0.1.0"

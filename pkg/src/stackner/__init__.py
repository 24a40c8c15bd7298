"""Configurable LSTM/CNN-stack NER with entity-crossover augmentation."""

__version__ = "0.1.0"

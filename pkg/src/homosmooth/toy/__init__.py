"""Toy attention encoder-decoder trained on a synthetic homophone language."""

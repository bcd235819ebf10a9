"""Link-level simulator and NN toolkit for the NR broadcast channel over GEO links.

Modules:
    nr_pbch_tx       transmit chain: payload packing through OFDM baseband
    ntn_channel      delay / carrier-offset / noise impairments
    nr_rx            classical synchronization, equalization and decoding
    nn_core          from-scratch MLP engine (forward, backprop, Adam)
    equalizer_models the two NN applications, datasets, training, evaluation
    io_cli           file formats, capture ingestion, CSV emitters, CLI
"""

from .frame import IqFrame

__version__ = "0.1.0"

__all__ = ["IqFrame", "__version__"]

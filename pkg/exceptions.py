"""
Exception types shared by the beam-selection simulator
"""


class BeamSelectionError(Exception):
    """Base class for simulator errors"""


class ConfigurationError(BeamSelectionError, ValueError):
    """Invalid band spec, experiment config or weighting config"""


class InputError(BeamSelectionError, ValueError):
    """Invalid operation input (shapes, ranks, indices)"""

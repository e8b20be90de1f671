"""Classifier-agnostic saliency masks at desk scale.

Subpackages: ``autodiff`` (tape-based reverse mode), ``nets`` (classifier and
mapper), ``casme`` (objectives, classifier pool, training loop, calibration),
``maskops`` (discretization, boxes, inpainting, statistics), ``eval``,
``data`` and ``cli``.
"""

__version__ = "0.1.0"

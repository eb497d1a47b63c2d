"""12-lead ECG classification, clinically weighted scoring, linguistic
severity reports, and a retrieval-grounded chat service.

Subpackages and modules:

- ``cardi.ingest``     record/header parsing, label space, stratified splits
- ``cardi.preprocess`` resampling, length fitting, normalization, demographics
- ``cardi.net``        residual SE-CNN defined in plain numpy with backprop
- ``cardi.training``   weighted loss, staged checkpoint training, CV driver
- ``cardi.metric``     weighted-accuracy challenge score
- ``cardi.fuzzy``      score -> strength -> linguistic term mapping
- ``cardi.chateval``   coverage / grounding / coherence response scoring
- ``cardi.service``    HTTP service: record upload, interpretation, chat
- ``cardi.synth``      synthetic records and datasets for offline runs
- ``cardi.cli``        command-line entry point
"""

__version__ = "0.1.0"

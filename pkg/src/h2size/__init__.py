"""Web object size estimation over HTTP/2 TLS traces.

Modules: ``trace`` (data model and trace files), ``synth`` (seeded trace
generator), ``segmenter`` (pipelining and multiplexing segments),
``indicators`` (byte-share ratios), ``characterize`` (distributions),
``estimators`` (worst-case bounds), ``attack`` (record-size attack) and
``cli``.
"""

__version__ = "0.1.0"

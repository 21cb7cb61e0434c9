"""kie2qa: build diverse question-answer datasets from KIE document annotations.

The pipeline is ingest -> clean -> generate -> report/evaluate:

* :mod:`kie2qa.model` loads and validates annotated document corpora.
* :mod:`kie2qa.cleaning` normalizes raw entity values into answer strings.
* :mod:`kie2qa.templates` parses and renders the question template DSL.
* :mod:`kie2qa.generator` samples extractive and boolean QA instances.
* :mod:`kie2qa.metrics` scores predictions (ANLS, BLEU, perplexity, kappa).
* :mod:`kie2qa.reporting` aggregates dataset statistics and agreement reports.
* :mod:`kie2qa.cli` exposes everything as a command line tool.
"""

__version__ = "0.1.0"

"""Finite-trace LTL guardrails for household agents.

Subpackages by pipeline stage: ``ltl`` (formulas and the evaluation
oracle), ``automaton`` (progression-based compilation), ``product``
(joint constraint analysis), ``translate`` (natural language to LTL),
``monitor`` (runtime action gating), ``explain`` (violation feedback),
``llm`` (completion backends), ``world``/``harness`` (simulation), and
``cli`` (command line front end).
"""

__version__ = "0.1.0"

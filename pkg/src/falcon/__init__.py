"""CTI-to-IDS-rule generation pipeline with validation gates.

Converts cyber threat intelligence documents into Snort and YARA rules,
pushing every candidate through serial syntactic, semantic, and performance
validators before a human analyst signs off.
"""

__version__ = "0.1.0"

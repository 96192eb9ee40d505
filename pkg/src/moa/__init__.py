"""Method services over a class-diagram interchange format.

A registry of self-described model transformations, intention-based
retrieval, an XML envelope protocol over HTTP, and sequence/parallel
composition of services into method processes.
"""

__version__ = "0.1.0"

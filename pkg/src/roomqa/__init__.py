"""Desk-scale 3D question answering over synthetic room scans.

Pipeline: synthetic scene + QA generation, a point-cloud proposal detector,
a question encoder, transformer fusion, three supervised heads trained with
a combined multi-task loss, and a captioning-style metric suite.
"""

__version__ = "0.1.0"

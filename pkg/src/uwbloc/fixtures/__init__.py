"""Bundled reference error tables measured on DW1000 hardware.

Each CSV is a delimited error report (see uwbloc.evaluation). Tables
that only publish per-point averages leave the max column empty. Load
them with uwbloc.evaluation.load_reference_report.
"""

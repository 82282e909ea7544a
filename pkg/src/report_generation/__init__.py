"""Markdown reports of evaluation runs and datasets."""

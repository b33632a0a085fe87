"""Tempered variational Bayes for finite mixtures."""

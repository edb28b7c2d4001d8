"""Federated anomaly detection on journal-entry data via data collaboration."""

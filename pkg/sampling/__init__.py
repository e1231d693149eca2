"""Training-sample assignment for anchor-based and anchor-free detectors."""

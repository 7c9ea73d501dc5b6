"""Fixture package shaped like scikit-learn."""

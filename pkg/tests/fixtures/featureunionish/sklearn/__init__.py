"""Fixture package with a pipeline shaped like scikit-learn's."""

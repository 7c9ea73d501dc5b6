"""Small list-processing library used by the benchmark fixture."""

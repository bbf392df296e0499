"""Local Stackelberg equilibria against mean-based learners."""

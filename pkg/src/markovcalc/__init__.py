"""Weighted functional calculus experiments for symmetric Markov semigroups."""

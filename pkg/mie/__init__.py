"""Solvers and checkers for Markovian integral equations on finite-state chains."""

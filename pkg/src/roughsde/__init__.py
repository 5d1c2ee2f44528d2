"""Pathwise solutions of ``dX = sigma(X) dY`` with discontinuous ``sigma``."""

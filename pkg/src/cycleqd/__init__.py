"""Cyclic quality-diversity model merging over named-tensor parameter sets."""

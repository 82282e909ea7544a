"""Dataset, training and proposal commands built on the core library."""

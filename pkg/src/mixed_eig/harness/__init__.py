"""Configuration, experiment drivers, reports and the ``mixed-eig`` CLI."""

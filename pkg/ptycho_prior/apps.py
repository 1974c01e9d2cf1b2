from django.apps import AppConfig


class PtychoPriorConfig(AppConfig):
    """App configuration for the ptycho_prior app."""

    name = "ptycho_prior"
    verbose_name = "Regularized ptychography"

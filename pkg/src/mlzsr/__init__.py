"""Multi-label zero-shot recognition via joint latent ranking embedding."""

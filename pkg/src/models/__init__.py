"""
Transformer backbone, residual adapters and checkpoint IO.
"""

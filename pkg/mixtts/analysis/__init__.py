"""Embedding-space analysis: dumps, t-SNE, language separation and figures."""
from mixtts.analysis.embeddings import EmbeddingDump, EmbeddingSource, dump_embeddings  # noqa: F401
from mixtts.analysis.plots import plot_alignment, plot_embedding  # noqa: F401
from mixtts.analysis.separation import language_separation_score  # noqa: F401
from mixtts.analysis.tsne import TsneConfig, tsne, tsne_with_history  # noqa: F401

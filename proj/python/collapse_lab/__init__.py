"""Recursive-training distribution shift laboratory (Python bindings)."""

from ._core import (  # noqa: F401
    __version__,
    Error,
    InvalidConfig,
    InvalidInput,
    DegenerateInput,
    RankDeficient,
    DataExhaustion,
    InvalidTrace,
    ShortfallError,
    ToyConfig,
    run_toy_chain,
    tokenize,
    cosine_diversity,
    knn_cosine_diversity,
    bleu,
    self_bleu,
    word_entropy,
    type_token_ratio,
    avg_text_length,
    kl_entropy,
    gaussianity_aic,
    pca_2d,
    lean_bins,
    kmeans,
    gmm_em,
    dbscan,
    propagate_labels,
    ols_fit,
    vif,
    run_chain,
    render_prompt,
    parse_score,
    build_lean_mixture,
    run_experiment,
    emit_plot_data,
    spec_hash,
)

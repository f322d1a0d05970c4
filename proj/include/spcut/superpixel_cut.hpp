#pragma once

#include <vector>

#include "spcut/hyperparams.hpp"
#include "spcut/image.hpp"
#include "spcut/superae.hpp"
#include "spcut/superpixels.hpp"

namespace spcut {

/// Per-pixel argmax classes, per-superpixel majority classes, and the
/// resulting one-hot (N x K) target matrix. Ties break to the lowest index.
struct PseudoLabels {
    std::vector<int> pixel_class;  // length N
    std::vector<int> region_class; // length M
    Tensor onehot;                 // N x K
};

/// Row-wise softmax of an N x K matrix.
Tensor softmax_rows(const Tensor& f);
Tensor softmax_rows_backward(const Tensor& grad_probs, const Tensor& probs);

PseudoLabels generate_pseudo_labels(const Tensor& probs, const LabelMap& map);

/// Summed cross-entropy -sum_n sum_k y log p with p clamped at 1e-12. When
/// grad_logits is non-null it receives d(loss)/d(logits) = P - Y.
double cross_entropy_loss(const Tensor& probs, const Tensor& onehot, Tensor* grad_logits);

/// Row j of the result is the mean of `rows` over pixels in superpixel j.
Tensor region_mean_rows(const Tensor& rows, const LabelMap& map);
/// Adjoint: spreads each region-row gradient uniformly over its pixels.
Tensor region_mean_rows_backward(const Tensor& grad_pooled, const LabelMap& map);

inline Tensor pool_superpixel_features(const Tensor& features, const LabelMap& map) {
    return region_mean_rows(features, map);
}
inline Tensor compute_association(const Tensor& probs, const LabelMap& map) {
    return region_mean_rows(probs, map);
}

/// w_ij = exp(-||g_i - g_j||^2 / sigma^2) when centers are closer than d,
/// else 0. Symmetric, entries in [0, 1], unit diagonal.
Tensor build_similarity(const Tensor& pooled, const RegionStats& stats, double sigma, double d);

/// Soft cut loss sum_k Q_k^T W (1 - Q_k). When grad_q is non-null it receives
/// the closed form d/dQ_k = W 1 - 2 W Q_k (W symmetric).
double cut_loss(const Tensor& q, const Tensor& w, Tensor* grad_q);

/// The minimized objective: alpha * (cross-entropy / N) + beta * cut loss,
/// with the one-hot targets and the similarity matrix held constant. When
/// grad_logits is non-null it receives the exact gradient w.r.t. the logits.
double partition_objective(const Tensor& logits, const LabelMap& map, const Tensor& onehot,
                           const Tensor& w, double alpha, double beta, Tensor* grad_logits);

struct CutIteration {
    int iter;
    double l1, l2, total;
};

struct CutResult {
    LabelMap segmentation;           // compacted final classes; coarsens `map`
    std::vector<int> region_class;   // class per input superpixel
    std::vector<CutIteration> curve; // one entry per iteration
};

/// Iterative superpixel partitioning: repeatedly extracts embeddings,
/// regenerates pseudo-labels, and takes one SGD-momentum step on the encoder
/// and embedding head against the combined objective.
CutResult run_superpixel_cut(SuperAE& model, const Image& img, const LabelMap& map,
                             const HyperParams& hp);

// Layout helpers between (1, K, H, W) tensors and (N, K) row matrices.
Tensor channels_to_rows(const Tensor& t);
Tensor rows_to_channels(const Tensor& rows, int h, int w);

} // namespace spcut

#include "spcut/superpixel_cut.hpp"

#include <algorithm>
#include <cmath>

#include "spcut/errors.hpp"

namespace spcut {

namespace {

void check_rows_match_map(const Tensor& rows, const LabelMap& map, const char* what) {
    if (rows.dim() != 2)
        throw StructuralError(std::string(what) + ": expected 2-D row matrix");
    if (rows.size(0) != map.pixels())
        throw StructuralError(std::string(what) + ": row count " + std::to_string(rows.size(0)) +
                              " does not match pixel count " + std::to_string(map.pixels()));
}

std::vector<long long> region_sizes(const LabelMap& map) {
    std::vector<long long> sizes(static_cast<std::size_t>(map.regions), 0);
    for (int v : map.labels) {
        if (v < 0 || v >= map.regions)
            throw StructuralError("label outside [0, M) in superpixel map");
        ++sizes[static_cast<std::size_t>(v)];
    }
    return sizes;
}

} // namespace

Tensor channels_to_rows(const Tensor& t) {
    if (t.dim() != 4 || t.size(0) != 1)
        throw StructuralError("channels_to_rows: expected (1, K, H, W)");
    const int k = t.size(1), h = t.size(2), w = t.size(3);
    Tensor rows({h * w, k});
    for (int c = 0; c < k; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) rows.at(y * w + x, c) = t.at(0, c, y, x);
    return rows;
}

Tensor rows_to_channels(const Tensor& rows, int h, int w) {
    if (rows.dim() != 2 || rows.size(0) != h * w)
        throw StructuralError("rows_to_channels: shape mismatch");
    const int k = rows.size(1);
    Tensor t({1, k, h, w});
    for (int c = 0; c < k; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) t.at(0, c, y, x) = rows.at(y * w + x, c);
    return t;
}

Tensor softmax_rows(const Tensor& f) {
    if (f.dim() != 2) throw StructuralError("softmax_rows: expected 2-D matrix");
    const int n = f.size(0), k = f.size(1);
    Tensor p(f.shape());
    for (int i = 0; i < n; ++i) {
        double mx = f.at(i, 0);
        for (int c = 1; c < k; ++c) mx = std::max(mx, f.at(i, c));
        double z = 0.0;
        for (int c = 0; c < k; ++c) {
            const double e = std::exp(f.at(i, c) - mx);
            p.at(i, c) = e;
            z += e;
        }
        for (int c = 0; c < k; ++c) p.at(i, c) /= z;
    }
    return p;
}

Tensor softmax_rows_backward(const Tensor& grad_probs, const Tensor& probs) {
    const int n = probs.size(0), k = probs.size(1);
    Tensor g(probs.shape());
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int c = 0; c < k; ++c) s += grad_probs.at(i, c) * probs.at(i, c);
        for (int c = 0; c < k; ++c) g.at(i, c) = probs.at(i, c) * (grad_probs.at(i, c) - s);
    }
    return g;
}

PseudoLabels generate_pseudo_labels(const Tensor& probs, const LabelMap& map) {
    check_rows_match_map(probs, map, "generate_pseudo_labels");
    const int n = probs.size(0), k = probs.size(1);

    PseudoLabels out;
    out.pixel_class.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int c = 1; c < k; ++c)
            if (probs.at(i, c) > probs.at(i, best)) best = c;
        out.pixel_class[static_cast<std::size_t>(i)] = best;
    }

    std::vector<long long> votes(static_cast<std::size_t>(map.regions) * k, 0);
    for (int i = 0; i < n; ++i)
        ++votes[static_cast<std::size_t>(map.labels[static_cast<std::size_t>(i)]) * k +
                out.pixel_class[static_cast<std::size_t>(i)]];

    out.region_class.resize(static_cast<std::size_t>(map.regions));
    for (int j = 0; j < map.regions; ++j) {
        int best = 0;
        for (int c = 1; c < k; ++c)
            if (votes[static_cast<std::size_t>(j) * k + c] >
                votes[static_cast<std::size_t>(j) * k + best])
                best = c;
        out.region_class[static_cast<std::size_t>(j)] = best;
    }

    out.onehot = Tensor({n, k});
    for (int i = 0; i < n; ++i)
        out.onehot.at(i, out.region_class[static_cast<std::size_t>(
                             map.labels[static_cast<std::size_t>(i)])]) = 1.0;
    return out;
}

double cross_entropy_loss(const Tensor& probs, const Tensor& onehot, Tensor* grad_logits) {
    if (!probs.same_shape(onehot))
        throw StructuralError("cross_entropy_loss: shape mismatch");
    double loss = 0.0;
    for (long long i = 0; i < probs.numel(); ++i)
        if (onehot[i] != 0.0) loss -= onehot[i] * std::log(std::max(probs[i], 1e-12));
    if (grad_logits) {
        if (!grad_logits->same_shape(probs)) *grad_logits = Tensor(probs.shape());
        for (long long i = 0; i < probs.numel(); ++i) (*grad_logits)[i] = probs[i] - onehot[i];
    }
    return loss;
}

Tensor region_mean_rows(const Tensor& rows, const LabelMap& map) {
    check_rows_match_map(rows, map, "region_mean_rows");
    const int n = rows.size(0), k = rows.size(1);
    const std::vector<long long> sizes = region_sizes(map);
    Tensor pooled({map.regions, k});
    for (int i = 0; i < n; ++i) {
        const int j = map.labels[static_cast<std::size_t>(i)];
        for (int c = 0; c < k; ++c) pooled.at(j, c) += rows.at(i, c);
    }
    for (int j = 0; j < map.regions; ++j)
        for (int c = 0; c < k; ++c)
            pooled.at(j, c) /= static_cast<double>(sizes[static_cast<std::size_t>(j)]);
    return pooled;
}

Tensor region_mean_rows_backward(const Tensor& grad_pooled, const LabelMap& map) {
    if (grad_pooled.dim() != 2 || grad_pooled.size(0) != map.regions)
        throw StructuralError("region_mean_rows_backward: shape mismatch");
    const int k = grad_pooled.size(1);
    const std::vector<long long> sizes = region_sizes(map);
    Tensor g({static_cast<int>(map.pixels()), k});
    for (long long i = 0; i < map.pixels(); ++i) {
        const int j = map.labels[static_cast<std::size_t>(i)];
        const double inv = 1.0 / static_cast<double>(sizes[static_cast<std::size_t>(j)]);
        for (int c = 0; c < k; ++c) g.at(static_cast<int>(i), c) = grad_pooled.at(j, c) * inv;
    }
    return g;
}

Tensor build_similarity(const Tensor& pooled, const RegionStats& stats, double sigma, double d) {
    if (pooled.dim() != 2) throw StructuralError("build_similarity: expected 2-D matrix");
    const int m = pooled.size(0), k = pooled.size(1);
    if (static_cast<std::size_t>(m) != stats.centers.size())
        throw StructuralError("build_similarity: stats do not match pooled rows");
    if (sigma <= 0 || d <= 0)
        throw StructuralError("build_similarity: sigma and d must be positive");

    Tensor w({m, m});
    const double inv_sigma2 = 1.0 / (sigma * sigma);
    const double d2 = d * d;
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) {
            const double cy = stats.centers[static_cast<std::size_t>(i)][0] -
                              stats.centers[static_cast<std::size_t>(j)][0];
            const double cx = stats.centers[static_cast<std::size_t>(i)][1] -
                              stats.centers[static_cast<std::size_t>(j)][1];
            double value = 0.0;
            if (cy * cy + cx * cx < d2) {
                double feat2 = 0.0;
                for (int c = 0; c < k; ++c) {
                    const double diff = pooled.at(i, c) - pooled.at(j, c);
                    feat2 += diff * diff;
                }
                value = std::exp(-feat2 * inv_sigma2);
            }
            w.at(i, j) = value;
            w.at(j, i) = value;
        }
    return w;
}

double cut_loss(const Tensor& q, const Tensor& w, Tensor* grad_q) {
    if (q.dim() != 2 || w.dim() != 2 || w.size(0) != q.size(0) || w.size(1) != q.size(0))
        throw StructuralError("cut_loss: Q is (M, K) and W must be (M, M)");
    const int m = q.size(0), k = q.size(1);

    std::vector<double> w_row_sum(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) w_row_sum[static_cast<std::size_t>(i)] += w.at(i, j);

    double loss = 0.0;
    if (grad_q && !grad_q->same_shape(q)) *grad_q = Tensor(q.shape());
    for (int c = 0; c < k; ++c) {
        for (int i = 0; i < m; ++i) {
            double wq = 0.0;
            for (int j = 0; j < m; ++j) wq += w.at(i, j) * q.at(j, c);
            loss += q.at(i, c) * (w_row_sum[static_cast<std::size_t>(i)] - wq);
            if (grad_q) grad_q->at(i, c) = w_row_sum[static_cast<std::size_t>(i)] - 2.0 * wq;
        }
    }
    return loss;
}

double partition_objective(const Tensor& logits, const LabelMap& map, const Tensor& onehot,
                           const Tensor& w, double alpha, double beta, Tensor* grad_logits) {
    const double n = static_cast<double>(logits.size(0));
    Tensor probs = softmax_rows(logits);

    Tensor grad_ce;
    const double l1 = cross_entropy_loss(probs, onehot, grad_logits ? &grad_ce : nullptr);

    Tensor q = region_mean_rows(probs, map);
    Tensor grad_q;
    const double l2 = cut_loss(q, w, grad_logits ? &grad_q : nullptr);

    if (grad_logits) {
        grad_q.scale(beta);
        Tensor grad_probs = region_mean_rows_backward(grad_q, map);
        Tensor g = softmax_rows_backward(grad_probs, probs);
        grad_ce.scale(alpha / n);
        g.add(grad_ce);
        *grad_logits = std::move(g);
    }
    return alpha * (l1 / n) + beta * l2;
}

CutResult run_superpixel_cut(SuperAE& model, const Image& img, const LabelMap& map,
                             const HyperParams& hp) {
    if (hp.k < 2) throw StructuralError("run_superpixel_cut: partition count must be >= 2");
    if (img.h != map.h || img.w != map.w)
        throw StructuralError("run_superpixel_cut: image and superpixel map dimensions differ");
    if (model.config().k != hp.k)
        throw StructuralError("run_superpixel_cut: model embedding channels " +
                              std::to_string(model.config().k) + " differ from partition count " +
                              std::to_string(hp.k));

    const double n = static_cast<double>(map.pixels());
    const double m = static_cast<double>(map.regions);
    const double beta = hp.beta > 0 ? hp.beta : 5.0 / (m * m);
    const double d = hp.d > 0 ? hp.d : 2.0 * std::sqrt(n / m);

    const RegionStats stats = region_stats(img, map);
    const Tensor x = image_to_tensor(img);
    nn::SgdMomentum opt(hp.lr, hp.momentum);

    CutResult result;
    result.curve.reserve(static_cast<std::size_t>(hp.t));

    for (int iter = 1; iter <= hp.t; ++iter) {
        Tensor f4 = model.features(x, /*train=*/true); // per-image batch statistics
        Tensor logits = channels_to_rows(f4);
        Tensor probs = softmax_rows(logits);

        const PseudoLabels labels = generate_pseudo_labels(probs, map);
        Tensor pooled = region_mean_rows(logits, map);
        Tensor w = build_similarity(pooled, stats, hp.sigma, d);

        Tensor grad_logits;
        const double total =
            partition_objective(logits, map, labels.onehot, w, hp.alpha, beta, &grad_logits);
        const double l1 = cross_entropy_loss(probs, labels.onehot, nullptr);
        const double l2 = cut_loss(region_mean_rows(probs, map), w, nullptr);
        if (!std::isfinite(total))
            throw NumericError("run_superpixel_cut: non-finite loss at iteration " +
                               std::to_string(iter));

        model.features_backward(rows_to_channels(grad_logits, img.h, img.w));
        opt.step(model.segmentation_parameters());
        result.curve.push_back({iter, l1, l2, total});
    }

    // One final labeling pass with the updated parameters.
    Tensor f4 = model.features(x, /*train=*/true);
    Tensor probs = softmax_rows(channels_to_rows(f4));
    const PseudoLabels labels = generate_pseudo_labels(probs, map);

    std::vector<long long> per_pixel_class;
    per_pixel_class.reserve(static_cast<std::size_t>(map.pixels()));
    for (long long i = 0; i < map.pixels(); ++i)
        per_pixel_class.push_back(
            labels.region_class[static_cast<std::size_t>(map.labels[static_cast<std::size_t>(i)])]);
    result.segmentation = compact_labels(per_pixel_class, map.h, map.w);
    result.region_class = labels.region_class;
    return result;
}

} // namespace spcut

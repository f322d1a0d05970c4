#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "spcut/checkpoint.hpp"
#include "spcut/hyperparams.hpp"
#include "spcut/image.hpp"
#include "spcut/nn.hpp"
#include "spcut/rng.hpp"

namespace spcut {

struct SuperAEConfig {
    int in_channels = 3;
    int c1 = 64, c2 = 128, c3 = 256; // encoder widths; decoder mirrors (c2, c1, out)
    int k = 32;                      // embedding channels

    static SuperAEConfig from(const HyperParams& hp) {
        SuperAEConfig cfg;
        cfg.c1 = hp.c1;
        cfg.c2 = hp.c2;
        cfg.c3 = hp.c3;
        cfg.k = hp.k;
        return cfg;
    }
};

/// Convolutional autoencoder with a multi-scale embedding head.
///
/// Encoder: three conv3x3+BN+ReLU stages (strides 1, 2, 2). Decoder: two
/// transpose-conv3x3+BN+ReLU stages (stride 2 each) and a final conv3x3 into a
/// sigmoid. The embedding head is a 1x1 conv over the concatenation of the
/// (upsampled) encoder stage outputs and the input image.
class SuperAE {
public:
    SuperAE(const SuperAEConfig& cfg, Rng& rng);

    /// Full autoencoder pass; output shape equals input shape.
    Tensor reconstruct(const Tensor& x, bool train);
    void reconstruct_backward(const Tensor& grad_output);

    /// Embedding pass: (B, K, H, W), differentiable through the encoder.
    Tensor features(const Tensor& x, bool train);
    void features_backward(const Tensor& grad_features);

    std::vector<nn::Param*> parameters();
    /// Encoder + embedding head only (the set updated during partitioning).
    std::vector<nn::Param*> segmentation_parameters();

    Checkpoint to_checkpoint() const;
    static SuperAE from_checkpoint(const Checkpoint& ck);

    const SuperAEConfig& config() const { return cfg_; }

private:
    struct ConvBnRelu {
        nn::Conv2dLayer conv;
        nn::BatchNorm2dLayer bn;
        Tensor pre_relu;

        Tensor forward(const Tensor& x, bool train);
        Tensor backward(const Tensor& grad_out);
    };

    struct DeconvBnRelu {
        nn::ConvTranspose2dLayer deconv;
        nn::BatchNorm2dLayer bn;
        Tensor pre_relu;

        Tensor forward(const Tensor& x, int out_h, int out_w, bool train);
        Tensor backward(const Tensor& grad_out);
    };

    SuperAEConfig cfg_;
    ConvBnRelu enc1_, enc2_, enc3_;
    DeconvBnRelu dec4_, dec5_;
    nn::Conv2dLayer dec6_;
    nn::Conv2dLayer head_;

    // forward caches
    Tensor recon_output_;
    int e1_h_ = 0, e1_w_ = 0, e2_h_ = 0, e2_w_ = 0, e3_h_ = 0, e3_w_ = 0;
    std::vector<int> concat_channels_;

    SuperAE() = default;
};

/// Row j is the mean over pixels with label j; result is (regions, channels).
Tensor superpixel_mean(const Image& img, const LabelMap& map);
Tensor superpixel_mean(const Tensor& x, int batch_index, const LabelMap& map);

/// Squared reconstruction error plus the template term
/// lambda * sum_i ||xr_i - mean of xr over the template region of i||^2,
/// for one image (batch index b in the 4-D tensors). The template-region means
/// are recomputed from xr and differentiated through. Returns the loss; when
/// grad_xr is non-null, accumulates d(loss)/d(xr) into it.
double reconstruction_loss(const Tensor& x, const Tensor& xr, int batch_index,
                           const LabelMap& tmpl, double lambda, Tensor* grad_xr);

struct TrainResult {
    std::vector<double> epoch_loss; // mean per-image loss per epoch
};

/// Trains `model` with Adam on the image/template pairs; augmentation is
/// random crop + horizontal flip when enabled.
TrainResult train_superae(SuperAE& model, const std::vector<Image>& images,
                          const std::vector<LabelMap>& templates, const HyperParams& hp,
                          std::uint64_t seed);

} // namespace spcut

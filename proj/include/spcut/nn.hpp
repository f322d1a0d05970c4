#pragma once

#include <functional>
#include <string>
#include <vector>

#include "spcut/rng.hpp"
#include "spcut/tensor.hpp"

namespace spcut::nn {

/// A trainable tensor with its gradient buffer and optimizer slots.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor opt_m; // Adam first moment / SGD velocity
    Tensor opt_v; // Adam second moment

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros(value.shape());
    }
    void zero_grad() { grad.zero(); }
};

// ---------------------------------------------------------------------------
// Stateless kernels. Every forward has an exact adjoint backward; backward
// functions accumulate into the provided gradient tensors.
// ---------------------------------------------------------------------------

/// Cross-correlation of x (B,Cin,H,W) with w (Cout,Cin,kh,kw) plus bias.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, int stride,
                     int padding, Tensor& grad_x, Tensor& grad_w, Tensor& grad_b);

/// Adjoint of conv2d. Weights are laid out (Cin,Cout,kh,kw); the output
/// spatial size is given explicitly so that strided shapes round-trip.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int padding, int out_h, int out_w);
void conv_transpose2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out,
                               int stride, int padding, Tensor& grad_x, Tensor& grad_w,
                               Tensor& grad_b);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& grad_out, const Tensor& pre_activation);

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output);

/// Per-pixel softmax over the channel dimension of a 4-D tensor.
Tensor softmax_channels(const Tensor& x);
Tensor softmax_channels_backward(const Tensor& grad_out, const Tensor& probs);

/// align-corners=false bilinear interpolation to (target_h, target_w).
Tensor bilinear_upsample(const Tensor& x, int target_h, int target_w);
Tensor bilinear_upsample_backward(const Tensor& grad_out, int in_h, int in_w);

Tensor concat_channels(const std::vector<const Tensor*>& xs);
std::vector<Tensor> concat_channels_backward(const Tensor& grad_out,
                                             const std::vector<int>& channels);

// ---------------------------------------------------------------------------
// Layers: own their parameters and cache the last forward pass.
// ---------------------------------------------------------------------------

class Conv2dLayer {
public:
    Conv2dLayer() = default;
    Conv2dLayer(const std::string& name, int in_ch, int out_ch, int ksize, int stride,
                int padding, Rng& rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

    Param weight; // (out_ch, in_ch, k, k)
    Param bias;   // (out_ch)
    int stride = 1;
    int padding = 0;

private:
    Tensor input_;
};

class ConvTranspose2dLayer {
public:
    ConvTranspose2dLayer() = default;
    ConvTranspose2dLayer(const std::string& name, int in_ch, int out_ch, int ksize, int stride,
                         int padding, Rng& rng);

    Tensor forward(const Tensor& x, int out_h, int out_w);
    Tensor backward(const Tensor& grad_out);

    Param weight; // (in_ch, out_ch, k, k)
    Param bias;   // (out_ch)
    int stride = 1;
    int padding = 0;

private:
    Tensor input_;
};

class BatchNorm2dLayer {
public:
    BatchNorm2dLayer() = default;
    BatchNorm2dLayer(const std::string& name, int channels, double momentum = 0.1,
                     double eps = 1e-5);

    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& grad_out);

    Param gamma;
    Param beta;
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double eps = 1e-5;

private:
    Tensor xhat_;
    std::vector<double> inv_std_;
    bool train_mode_ = true;
    long long per_channel_count_ = 0;
};

// ---------------------------------------------------------------------------
// Optimizers. step() updates every parameter from its gradient buffer and
// zeroes the buffer afterwards. A non-finite gradient raises NumericError
// naming the parameter.
// ---------------------------------------------------------------------------

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Param*>& params);

private:
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
};

class SgdMomentum {
public:
    explicit SgdMomentum(double lr, double momentum = 0.0) : lr_(lr), momentum_(momentum) {}

    void step(const std::vector<Param*>& params);

private:
    double lr_, momentum_;
};

/// Central-difference gradient check. Returns the max over coordinates of
/// |analytic - numeric| / max(1, |numeric|).
double finite_diff_check(const std::function<double(const Tensor&)>& loss_fn, Tensor point,
                         const Tensor& analytic_grad, double step = 1e-4);

/// Kaiming fan-in normal initialization, std = sqrt(2 / fan_in).
void kaiming_init(Tensor& w, int fan_in, Rng& rng);

} // namespace spcut::nn

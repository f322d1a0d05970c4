#include "spcut/nn.hpp"

#include <algorithm>
#include <cmath>

#include "spcut/errors.hpp"

namespace spcut::nn {

namespace {

int conv_out_size(int in, int k, int stride, int padding) {
    return (in + 2 * padding - k) / stride + 1;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw StructuralError(msg);
}

} // namespace

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
    require(x.dim() == 4, "conv2d: input must be 4-D, got " + x.shape_string());
    require(w.dim() == 4, "conv2d: kernel must be 4-D, got " + w.shape_string());
    require(x.size(1) == w.size(1), "conv2d: input channels " + std::to_string(x.size(1)) +
                                        " do not match kernel input channels " +
                                        std::to_string(w.size(1)));
    require(b.numel() == w.size(0), "conv2d: bias size does not match output channels");
    check_finite(x, "conv2d input");
    check_finite(w, "conv2d kernel");

    const int batch = x.size(0), cin = x.size(1), h = x.size(2), ww = x.size(3);
    const int cout = w.size(0), kh = w.size(2), kw = w.size(3);
    const int oh = conv_out_size(h, kh, stride, padding);
    const int ow = conv_out_size(ww, kw, stride, padding);
    require(oh > 0 && ow > 0, "conv2d: output would be empty");

    Tensor out({batch, cout, oh, ow});
    for (int n = 0; n < batch; ++n)
        for (int co = 0; co < cout; ++co)
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) {
                    double acc = b[co];
                    for (int ci = 0; ci < cin; ++ci)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = y * stride - padding + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = xo * stride - padding + kx;
                                if (ix < 0 || ix >= ww) continue;
                                acc += x.at(n, ci, iy, ix) * w.at(co, ci, ky, kx);
                            }
                        }
                    out.at(n, co, y, xo) = acc;
                }
    return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, int stride,
                     int padding, Tensor& grad_x, Tensor& grad_w, Tensor& grad_b) {
    const int batch = x.size(0), cin = x.size(1), h = x.size(2), ww = x.size(3);
    const int cout = w.size(0), kh = w.size(2), kw = w.size(3);
    const int oh = grad_out.size(2), ow = grad_out.size(3);

    for (int n = 0; n < batch; ++n)
        for (int co = 0; co < cout; ++co)
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) {
                    const double g = grad_out.at(n, co, y, xo);
                    grad_b[co] += g;
                    for (int ci = 0; ci < cin; ++ci)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = y * stride - padding + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = xo * stride - padding + kx;
                                if (ix < 0 || ix >= ww) continue;
                                grad_x.at(n, ci, iy, ix) += w.at(co, ci, ky, kx) * g;
                                grad_w.at(co, ci, ky, kx) += x.at(n, ci, iy, ix) * g;
                            }
                        }
                }
}

// ---------------------------------------------------------------------------
// conv_transpose2d
// ---------------------------------------------------------------------------

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int padding, int out_h, int out_w) {
    require(x.dim() == 4, "conv_transpose2d: input must be 4-D");
    require(w.dim() == 4, "conv_transpose2d: kernel must be 4-D");
    require(x.size(1) == w.size(0), "conv_transpose2d: input channels " +
                                        std::to_string(x.size(1)) + " do not match kernel " +
                                        std::to_string(w.size(0)));
    const int kh = w.size(2), kw = w.size(3);
    // The declared target must be one a forward conv of the same geometry maps
    // back onto the input size.
    require(conv_out_size(out_h, kh, stride, padding) == x.size(2) &&
                conv_out_size(out_w, kw, stride, padding) == x.size(3),
            "conv_transpose2d: target size " + std::to_string(out_h) + "x" +
                std::to_string(out_w) + " does not round-trip to input " + x.shape_string());
    require(b.numel() == w.size(1), "conv_transpose2d: bias size mismatch");

    const int batch = x.size(0), cin = x.size(1), h = x.size(2), ww = x.size(3);
    const int cout = w.size(1);

    Tensor out({batch, cout, out_h, out_w});
    for (int n = 0; n < batch; ++n)
        for (int co = 0; co < cout; ++co)
            for (int y = 0; y < out_h; ++y)
                for (int xo = 0; xo < out_w; ++xo) out.at(n, co, y, xo) = b[co];

    for (int n = 0; n < batch; ++n)
        for (int ci = 0; ci < cin; ++ci)
            for (int y = 0; y < h; ++y)
                for (int xi = 0; xi < ww; ++xi) {
                    const double v = x.at(n, ci, y, xi);
                    for (int co = 0; co < cout; ++co)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int oy = y * stride - padding + ky;
                            if (oy < 0 || oy >= out_h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ox = xi * stride - padding + kx;
                                if (ox < 0 || ox >= out_w) continue;
                                out.at(n, co, oy, ox) += v * w.at(ci, co, ky, kx);
                            }
                        }
                }
    return out;
}

void conv_transpose2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out,
                               int stride, int padding, Tensor& grad_x, Tensor& grad_w,
                               Tensor& grad_b) {
    const int batch = x.size(0), cin = x.size(1), h = x.size(2), ww = x.size(3);
    const int cout = w.size(1), kh = w.size(2), kw = w.size(3);
    const int oh = grad_out.size(2), ow = grad_out.size(3);

    for (int n = 0; n < batch; ++n)
        for (int co = 0; co < cout; ++co)
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) grad_b[co] += grad_out.at(n, co, y, xo);

    for (int n = 0; n < batch; ++n)
        for (int ci = 0; ci < cin; ++ci)
            for (int y = 0; y < h; ++y)
                for (int xi = 0; xi < ww; ++xi) {
                    double acc = 0.0;
                    const double v = x.at(n, ci, y, xi);
                    for (int co = 0; co < cout; ++co)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int oy = y * stride - padding + ky;
                            if (oy < 0 || oy >= oh) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ox = xi * stride - padding + kx;
                                if (ox < 0 || ox >= ow) continue;
                                const double g = grad_out.at(n, co, oy, ox);
                                acc += w.at(ci, co, ky, kx) * g;
                                grad_w.at(ci, co, ky, kx) += v * g;
                            }
                        }
                    grad_x.at(n, ci, y, xi) += acc;
                }
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    for (long long i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& pre_activation) {
    Tensor g(grad_out.shape());
    for (long long i = 0; i < g.numel(); ++i) g[i] = pre_activation[i] > 0.0 ? grad_out[i] : 0.0;
    return g;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    for (long long i = 0; i < x.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
    return out;
}

Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output) {
    Tensor g(grad_out.shape());
    for (long long i = 0; i < g.numel(); ++i) g[i] = grad_out[i] * output[i] * (1.0 - output[i]);
    return g;
}

Tensor softmax_channels(const Tensor& x) {
    require(x.dim() == 4, "softmax_channels: input must be 4-D");
    const int batch = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    Tensor out(x.shape());
    for (int n = 0; n < batch; ++n)
        for (int y = 0; y < h; ++y)
            for (int xo = 0; xo < w; ++xo) {
                double mx = x.at(n, 0, y, xo);
                for (int k = 1; k < c; ++k) mx = std::max(mx, x.at(n, k, y, xo));
                double z = 0.0;
                for (int k = 0; k < c; ++k) {
                    const double e = std::exp(x.at(n, k, y, xo) - mx);
                    out.at(n, k, y, xo) = e;
                    z += e;
                }
                for (int k = 0; k < c; ++k) out.at(n, k, y, xo) /= z;
            }
    return out;
}

Tensor softmax_channels_backward(const Tensor& grad_out, const Tensor& probs) {
    const int batch = probs.size(0), c = probs.size(1), h = probs.size(2), w = probs.size(3);
    Tensor g(probs.shape());
    for (int n = 0; n < batch; ++n)
        for (int y = 0; y < h; ++y)
            for (int xo = 0; xo < w; ++xo) {
                double s = 0.0;
                for (int k = 0; k < c; ++k) s += grad_out.at(n, k, y, xo) * probs.at(n, k, y, xo);
                for (int k = 0; k < c; ++k)
                    g.at(n, k, y, xo) = probs.at(n, k, y, xo) * (grad_out.at(n, k, y, xo) - s);
            }
    return g;
}

// ---------------------------------------------------------------------------
// bilinear upsample
// ---------------------------------------------------------------------------

namespace {

struct LerpCoord {
    int lo, hi;
    double w_hi;
};

LerpCoord lerp_coord(int out_idx, int out_size, int in_size) {
    const double scale = static_cast<double>(in_size) / out_size;
    double src = (out_idx + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    if (src > in_size - 1) src = in_size - 1;
    LerpCoord c;
    c.lo = static_cast<int>(src);
    c.hi = std::min(c.lo + 1, in_size - 1);
    c.w_hi = src - c.lo;
    return c;
}

} // namespace

Tensor bilinear_upsample(const Tensor& x, int target_h, int target_w) {
    require(x.dim() == 4, "bilinear_upsample: input must be 4-D");
    require(target_h >= x.size(2) && target_w >= x.size(3),
            "bilinear_upsample: target smaller than input");
    const int batch = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    if (target_h == h && target_w == w) return x;

    Tensor out({batch, c, target_h, target_w});
    for (int y = 0; y < target_h; ++y) {
        const LerpCoord cy = lerp_coord(y, target_h, h);
        for (int xo = 0; xo < target_w; ++xo) {
            const LerpCoord cx = lerp_coord(xo, target_w, w);
            for (int n = 0; n < batch; ++n)
                for (int k = 0; k < c; ++k) {
                    const double top = x.at(n, k, cy.lo, cx.lo) * (1.0 - cx.w_hi) +
                                       x.at(n, k, cy.lo, cx.hi) * cx.w_hi;
                    const double bot = x.at(n, k, cy.hi, cx.lo) * (1.0 - cx.w_hi) +
                                       x.at(n, k, cy.hi, cx.hi) * cx.w_hi;
                    out.at(n, k, y, xo) = top * (1.0 - cy.w_hi) + bot * cy.w_hi;
                }
        }
    }
    return out;
}

Tensor bilinear_upsample_backward(const Tensor& grad_out, int in_h, int in_w) {
    const int batch = grad_out.size(0), c = grad_out.size(1);
    const int oh = grad_out.size(2), ow = grad_out.size(3);
    if (oh == in_h && ow == in_w) return grad_out;

    Tensor g({batch, c, in_h, in_w});
    for (int y = 0; y < oh; ++y) {
        const LerpCoord cy = lerp_coord(y, oh, in_h);
        for (int xo = 0; xo < ow; ++xo) {
            const LerpCoord cx = lerp_coord(xo, ow, in_w);
            for (int n = 0; n < batch; ++n)
                for (int k = 0; k < c; ++k) {
                    const double go = grad_out.at(n, k, y, xo);
                    g.at(n, k, cy.lo, cx.lo) += go * (1.0 - cy.w_hi) * (1.0 - cx.w_hi);
                    g.at(n, k, cy.lo, cx.hi) += go * (1.0 - cy.w_hi) * cx.w_hi;
                    g.at(n, k, cy.hi, cx.lo) += go * cy.w_hi * (1.0 - cx.w_hi);
                    g.at(n, k, cy.hi, cx.hi) += go * cy.w_hi * cx.w_hi;
                }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// concat
// ---------------------------------------------------------------------------

Tensor concat_channels(const std::vector<const Tensor*>& xs) {
    require(!xs.empty(), "concat_channels: no inputs");
    const Tensor& first = *xs.front();
    require(first.dim() == 4, "concat_channels: inputs must be 4-D");
    int total_c = 0;
    for (const Tensor* t : xs) {
        require(t->dim() == 4 && t->size(0) == first.size(0) && t->size(2) == first.size(2) &&
                    t->size(3) == first.size(3),
                "concat_channels: batch/spatial mismatch " + t->shape_string() + " vs " +
                    first.shape_string());
        total_c += t->size(1);
    }
    const int batch = first.size(0), h = first.size(2), w = first.size(3);
    Tensor out({batch, total_c, h, w});
    int c_off = 0;
    for (const Tensor* t : xs) {
        const int c = t->size(1);
        for (int n = 0; n < batch; ++n)
            for (int k = 0; k < c; ++k)
                for (int y = 0; y < h; ++y)
                    for (int xo = 0; xo < w; ++xo)
                        out.at(n, c_off + k, y, xo) = t->at(n, k, y, xo);
        c_off += c;
    }
    return out;
}

std::vector<Tensor> concat_channels_backward(const Tensor& grad_out,
                                             const std::vector<int>& channels) {
    const int batch = grad_out.size(0), h = grad_out.size(2), w = grad_out.size(3);
    std::vector<Tensor> grads;
    grads.reserve(channels.size());
    int c_off = 0;
    for (int c : channels) {
        Tensor g({batch, c, h, w});
        for (int n = 0; n < batch; ++n)
            for (int k = 0; k < c; ++k)
                for (int y = 0; y < h; ++y)
                    for (int xo = 0; xo < w; ++xo) g.at(n, k, y, xo) = grad_out.at(n, c_off + k, y, xo);
        grads.push_back(std::move(g));
        c_off += c;
    }
    require(c_off == grad_out.size(1), "concat_channels_backward: channel split mismatch");
    return grads;
}

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

void kaiming_init(Tensor& w, int fan_in, Rng& rng) {
    const double stddev = std::sqrt(2.0 / fan_in);
    for (long long i = 0; i < w.numel(); ++i) w[i] = rng.normal(0.0, stddev);
}

Conv2dLayer::Conv2dLayer(const std::string& name, int in_ch, int out_ch, int ksize, int stride,
                         int padding, Rng& rng)
    : stride(stride), padding(padding) {
    Tensor w({out_ch, in_ch, ksize, ksize});
    kaiming_init(w, in_ch * ksize * ksize, rng);
    weight = Param(name + ".weight", std::move(w));
    bias = Param(name + ".bias", Tensor::zeros({out_ch}));
}

Tensor Conv2dLayer::forward(const Tensor& x) {
    input_ = x;
    return conv2d(x, weight.value, bias.value, stride, padding);
}

Tensor Conv2dLayer::backward(const Tensor& grad_out) {
    Tensor grad_x(input_.shape());
    conv2d_backward(input_, weight.value, grad_out, stride, padding, grad_x, weight.grad,
                    bias.grad);
    return grad_x;
}

ConvTranspose2dLayer::ConvTranspose2dLayer(const std::string& name, int in_ch, int out_ch,
                                           int ksize, int stride, int padding, Rng& rng)
    : stride(stride), padding(padding) {
    Tensor w({in_ch, out_ch, ksize, ksize});
    kaiming_init(w, in_ch * ksize * ksize, rng);
    weight = Param(name + ".weight", std::move(w));
    bias = Param(name + ".bias", Tensor::zeros({out_ch}));
}

Tensor ConvTranspose2dLayer::forward(const Tensor& x, int out_h, int out_w) {
    input_ = x;
    return conv_transpose2d(x, weight.value, bias.value, stride, padding, out_h, out_w);
}

Tensor ConvTranspose2dLayer::backward(const Tensor& grad_out) {
    Tensor grad_x(input_.shape());
    conv_transpose2d_backward(input_, weight.value, grad_out, stride, padding, grad_x,
                              weight.grad, bias.grad);
    return grad_x;
}

BatchNorm2dLayer::BatchNorm2dLayer(const std::string& name, int channels, double momentum,
                                   double eps)
    : momentum(momentum), eps(eps) {
    gamma = Param(name + ".gamma", Tensor::full({channels}, 1.0));
    beta = Param(name + ".beta", Tensor::zeros({channels}));
    running_mean = Tensor::zeros({channels});
    running_var = Tensor::full({channels}, 1.0);
}

Tensor BatchNorm2dLayer::forward(const Tensor& x, bool train) {
    require(x.dim() == 4, "batchnorm2d: input must be 4-D");
    const int c = x.size(1);
    require(c == gamma.value.numel(), "batchnorm2d: channel count " + std::to_string(c) +
                                          " does not match parameters " +
                                          std::to_string(gamma.value.numel()));
    const int batch = x.size(0), h = x.size(2), w = x.size(3);
    const long long m = static_cast<long long>(batch) * h * w;
    train_mode_ = train;
    per_channel_count_ = m;

    Tensor out(x.shape());
    if (train) {
        xhat_ = Tensor(x.shape());
        inv_std_.assign(static_cast<std::size_t>(c), 0.0);
        for (int k = 0; k < c; ++k) {
            double mean = 0.0;
            for (int n = 0; n < batch; ++n)
                for (int y = 0; y < h; ++y)
                    for (int xo = 0; xo < w; ++xo) mean += x.at(n, k, y, xo);
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (int n = 0; n < batch; ++n)
                for (int y = 0; y < h; ++y)
                    for (int xo = 0; xo < w; ++xo) {
                        const double d = x.at(n, k, y, xo) - mean;
                        var += d * d;
                    }
            var /= static_cast<double>(m);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std_[static_cast<std::size_t>(k)] = is;
            for (int n = 0; n < batch; ++n)
                for (int y = 0; y < h; ++y)
                    for (int xo = 0; xo < w; ++xo) {
                        const double xh = (x.at(n, k, y, xo) - mean) * is;
                        xhat_.at(n, k, y, xo) = xh;
                        out.at(n, k, y, xo) = gamma.value[k] * xh + beta.value[k];
                    }
            running_mean[k] = (1.0 - momentum) * running_mean[k] + momentum * mean;
            running_var[k] = (1.0 - momentum) * running_var[k] + momentum * var;
        }
    } else {
        for (int k = 0; k < c; ++k) {
            const double is = 1.0 / std::sqrt(running_var[k] + eps);
            for (int n = 0; n < batch; ++n)
                for (int y = 0; y < h; ++y)
                    for (int xo = 0; xo < w; ++xo)
                        out.at(n, k, y, xo) =
                            gamma.value[k] * (x.at(n, k, y, xo) - running_mean[k]) * is +
                            beta.value[k];
        }
    }
    return out;
}

Tensor BatchNorm2dLayer::backward(const Tensor& grad_out) {
    const int batch = grad_out.size(0), c = grad_out.size(1);
    const int h = grad_out.size(2), w = grad_out.size(3);
    Tensor g(grad_out.shape());
    if (!train_mode_) {
        // running stats are constants here; only the affine map is differentiated
        for (int k = 0; k < c; ++k) {
            const double is = 1.0 / std::sqrt(running_var[k] + eps);
            for (int n = 0; n < batch; ++n)
                for (int y = 0; y < h; ++y)
                    for (int xo = 0; xo < w; ++xo)
                        g.at(n, k, y, xo) = grad_out.at(n, k, y, xo) * gamma.value[k] * is;
        }
        return g;
    }

    const double m = static_cast<double>(per_channel_count_);
    for (int k = 0; k < c; ++k) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int n = 0; n < batch; ++n)
            for (int y = 0; y < h; ++y)
                for (int xo = 0; xo < w; ++xo) {
                    const double go = grad_out.at(n, k, y, xo);
                    sum_g += go;
                    sum_gx += go * xhat_.at(n, k, y, xo);
                }
        gamma.grad[k] += sum_gx;
        beta.grad[k] += sum_g;
        const double is = inv_std_[static_cast<std::size_t>(k)];
        const double gam = gamma.value[k];
        for (int n = 0; n < batch; ++n)
            for (int y = 0; y < h; ++y)
                for (int xo = 0; xo < w; ++xo) {
                    const double go = grad_out.at(n, k, y, xo);
                    g.at(n, k, y, xo) =
                        gam * is * (go - sum_g / m - xhat_.at(n, k, y, xo) * sum_gx / m);
                }
    }
    return g;
}

// ---------------------------------------------------------------------------
// optimizers
// ---------------------------------------------------------------------------

void Adam::step(const std::vector<Param*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Param* p : params) {
        if (!p->grad.all_finite()) throw NumericError("non-finite gradient in parameter " + p->name);
        if (p->opt_m.numel() == 0) {
            p->opt_m = Tensor::zeros(p->value.shape());
            p->opt_v = Tensor::zeros(p->value.shape());
        }
        for (long long i = 0; i < p->value.numel(); ++i) {
            const double g = p->grad[i];
            p->opt_m[i] = beta1_ * p->opt_m[i] + (1.0 - beta1_) * g;
            p->opt_v[i] = beta2_ * p->opt_v[i] + (1.0 - beta2_) * g * g;
            const double mhat = p->opt_m[i] / bc1;
            const double vhat = p->opt_v[i] / bc2;
            p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
        p->zero_grad();
    }
}

void SgdMomentum::step(const std::vector<Param*>& params) {
    for (Param* p : params) {
        if (!p->grad.all_finite()) throw NumericError("non-finite gradient in parameter " + p->name);
        if (p->opt_m.numel() == 0) p->opt_m = Tensor::zeros(p->value.shape());
        for (long long i = 0; i < p->value.numel(); ++i) {
            p->opt_m[i] = momentum_ * p->opt_m[i] + p->grad[i];
            p->value[i] -= lr_ * p->opt_m[i];
        }
        p->zero_grad();
    }
}

double finite_diff_check(const std::function<double(const Tensor&)>& loss_fn, Tensor point,
                         const Tensor& analytic_grad, double step) {
    double max_err = 0.0;
    for (long long i = 0; i < point.numel(); ++i) {
        const double orig = point[i];
        point[i] = orig + step;
        const double fp = loss_fn(point);
        point[i] = orig - step;
        const double fm = loss_fn(point);
        point[i] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        const double err = std::abs(analytic_grad[i] - numeric) / std::max(1.0, std::abs(numeric));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

} // namespace spcut::nn

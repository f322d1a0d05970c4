#include "spcut/superae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "spcut/errors.hpp"

namespace spcut {

// ---------------------------------------------------------------------------
// blocks
// ---------------------------------------------------------------------------

Tensor SuperAE::ConvBnRelu::forward(const Tensor& x, bool train) {
    pre_relu = bn.forward(conv.forward(x), train);
    return nn::relu(pre_relu);
}

Tensor SuperAE::ConvBnRelu::backward(const Tensor& grad_out) {
    return conv.backward(bn.backward(nn::relu_backward(grad_out, pre_relu)));
}

Tensor SuperAE::DeconvBnRelu::forward(const Tensor& x, int out_h, int out_w, bool train) {
    pre_relu = bn.forward(deconv.forward(x, out_h, out_w), train);
    return nn::relu(pre_relu);
}

Tensor SuperAE::DeconvBnRelu::backward(const Tensor& grad_out) {
    return deconv.backward(bn.backward(nn::relu_backward(grad_out, pre_relu)));
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

SuperAE::SuperAE(const SuperAEConfig& cfg, Rng& rng) : cfg_(cfg) {
    enc1_.conv = nn::Conv2dLayer("enc1.conv", cfg.in_channels, cfg.c1, 3, 1, 1, rng);
    enc1_.bn = nn::BatchNorm2dLayer("enc1.bn", cfg.c1);
    enc2_.conv = nn::Conv2dLayer("enc2.conv", cfg.c1, cfg.c2, 3, 2, 1, rng);
    enc2_.bn = nn::BatchNorm2dLayer("enc2.bn", cfg.c2);
    enc3_.conv = nn::Conv2dLayer("enc3.conv", cfg.c2, cfg.c3, 3, 2, 1, rng);
    enc3_.bn = nn::BatchNorm2dLayer("enc3.bn", cfg.c3);

    dec4_.deconv = nn::ConvTranspose2dLayer("dec4.deconv", cfg.c3, cfg.c2, 3, 2, 1, rng);
    dec4_.bn = nn::BatchNorm2dLayer("dec4.bn", cfg.c2);
    dec5_.deconv = nn::ConvTranspose2dLayer("dec5.deconv", cfg.c2, cfg.c1, 3, 2, 1, rng);
    dec5_.bn = nn::BatchNorm2dLayer("dec5.bn", cfg.c1);
    dec6_ = nn::Conv2dLayer("dec6.conv", cfg.c1, cfg.in_channels, 3, 1, 1, rng);

    const int concat_c = cfg.c1 + cfg.c2 + cfg.c3 + cfg.in_channels;
    head_ = nn::Conv2dLayer("head.conv", concat_c, cfg.k, 1, 1, 0, rng);
}

Tensor SuperAE::reconstruct(const Tensor& x, bool train) {
    Tensor e1 = enc1_.forward(x, train);
    e1_h_ = e1.size(2);
    e1_w_ = e1.size(3);
    Tensor e2 = enc2_.forward(e1, train);
    e2_h_ = e2.size(2);
    e2_w_ = e2.size(3);
    Tensor e3 = enc3_.forward(e2, train);

    Tensor d4 = dec4_.forward(e3, e2_h_, e2_w_, train);
    Tensor d5 = dec5_.forward(d4, e1_h_, e1_w_, train);
    recon_output_ = nn::sigmoid(dec6_.forward(d5));
    return recon_output_;
}

void SuperAE::reconstruct_backward(const Tensor& grad_output) {
    Tensor g = nn::sigmoid_backward(grad_output, recon_output_);
    g = dec6_.backward(g);
    g = dec5_.backward(g);
    g = dec4_.backward(g);
    g = enc3_.backward(g);
    g = enc2_.backward(g);
    enc1_.backward(g);
}

Tensor SuperAE::features(const Tensor& x, bool train) {
    Tensor e1 = enc1_.forward(x, train);
    e1_h_ = e1.size(2);
    e1_w_ = e1.size(3);
    Tensor e2 = enc2_.forward(e1, train);
    e2_h_ = e2.size(2);
    e2_w_ = e2.size(3);
    Tensor e3 = enc3_.forward(e2, train);
    e3_h_ = e3.size(2);
    e3_w_ = e3.size(3);

    const int h = x.size(2), w = x.size(3);
    Tensor u2 = nn::bilinear_upsample(e2, h, w);
    Tensor u3 = nn::bilinear_upsample(e3, h, w);
    concat_channels_ = {e1.size(1), u2.size(1), u3.size(1), x.size(1)};
    Tensor cat = nn::concat_channels({&e1, &u2, &u3, &x});
    return head_.forward(cat);
}

void SuperAE::features_backward(const Tensor& grad_features) {
    Tensor g_cat = head_.backward(grad_features);
    std::vector<Tensor> parts = nn::concat_channels_backward(g_cat, concat_channels_);

    Tensor g_e3 = nn::bilinear_upsample_backward(parts[2], e3_h_, e3_w_);
    Tensor g_e2 = enc3_.backward(g_e3);
    g_e2.add(nn::bilinear_upsample_backward(parts[1], e2_h_, e2_w_));
    Tensor g_e1 = enc2_.backward(g_e2);
    g_e1.add(parts[0]);
    enc1_.backward(g_e1);
    // parts[3] is the gradient w.r.t. the input image; discarded.
}

std::vector<nn::Param*> SuperAE::parameters() {
    std::vector<nn::Param*> ps = segmentation_parameters();
    for (nn::Param* p :
         {&dec4_.deconv.weight, &dec4_.deconv.bias, &dec4_.bn.gamma, &dec4_.bn.beta,
          &dec5_.deconv.weight, &dec5_.deconv.bias, &dec5_.bn.gamma, &dec5_.bn.beta,
          &dec6_.weight, &dec6_.bias})
        ps.push_back(p);
    return ps;
}

std::vector<nn::Param*> SuperAE::segmentation_parameters() {
    return {&enc1_.conv.weight, &enc1_.conv.bias, &enc1_.bn.gamma, &enc1_.bn.beta,
            &enc2_.conv.weight, &enc2_.conv.bias, &enc2_.bn.gamma, &enc2_.bn.beta,
            &enc3_.conv.weight, &enc3_.conv.bias, &enc3_.bn.gamma, &enc3_.bn.beta,
            &head_.weight,      &head_.bias};
}

Checkpoint SuperAE::to_checkpoint() const {
    Checkpoint ck;
    ck.meta["format"] = "superae";
    ck.meta["in_channels"] = std::to_string(cfg_.in_channels);
    ck.meta["channels"] =
        std::to_string(cfg_.c1) + " " + std::to_string(cfg_.c2) + " " + std::to_string(cfg_.c3);
    ck.meta["classes"] = std::to_string(cfg_.k);

    auto add_param = [&ck](const nn::Param& p) { ck.tensors.emplace_back(p.name, p.value); };
    auto add_bn = [&](const nn::BatchNorm2dLayer& bn, const std::string& prefix) {
        add_param(bn.gamma);
        add_param(bn.beta);
        ck.tensors.emplace_back(prefix + ".running_mean", bn.running_mean);
        ck.tensors.emplace_back(prefix + ".running_var", bn.running_var);
    };

    add_param(enc1_.conv.weight);
    add_param(enc1_.conv.bias);
    add_bn(enc1_.bn, "enc1.bn");
    add_param(enc2_.conv.weight);
    add_param(enc2_.conv.bias);
    add_bn(enc2_.bn, "enc2.bn");
    add_param(enc3_.conv.weight);
    add_param(enc3_.conv.bias);
    add_bn(enc3_.bn, "enc3.bn");
    add_param(dec4_.deconv.weight);
    add_param(dec4_.deconv.bias);
    add_bn(dec4_.bn, "dec4.bn");
    add_param(dec5_.deconv.weight);
    add_param(dec5_.deconv.bias);
    add_bn(dec5_.bn, "dec5.bn");
    add_param(dec6_.weight);
    add_param(dec6_.bias);
    add_param(head_.weight);
    add_param(head_.bias);
    return ck;
}

SuperAE SuperAE::from_checkpoint(const Checkpoint& ck) {
    SuperAEConfig cfg;
    cfg.in_channels = std::stoi(ck.meta_value("in_channels"));
    {
        std::istringstream cs(ck.meta_value("channels"));
        cs >> cfg.c1 >> cfg.c2 >> cfg.c3;
    }
    cfg.k = std::stoi(ck.meta_value("classes"));

    Rng rng(0);
    SuperAE model(cfg, rng);
    auto load_param = [&ck](nn::Param& p) {
        const Tensor& t = ck.tensor(p.name);
        if (!t.same_shape(p.value))
            throw ParseError("checkpoint tensor '" + p.name + "' has shape " + t.shape_string() +
                             ", expected " + p.value.shape_string());
        p.value = t;
    };
    auto load_bn = [&](nn::BatchNorm2dLayer& bn, const std::string& prefix) {
        load_param(bn.gamma);
        load_param(bn.beta);
        bn.running_mean = ck.tensor(prefix + ".running_mean");
        bn.running_var = ck.tensor(prefix + ".running_var");
    };

    load_param(model.enc1_.conv.weight);
    load_param(model.enc1_.conv.bias);
    load_bn(model.enc1_.bn, "enc1.bn");
    load_param(model.enc2_.conv.weight);
    load_param(model.enc2_.conv.bias);
    load_bn(model.enc2_.bn, "enc2.bn");
    load_param(model.enc3_.conv.weight);
    load_param(model.enc3_.conv.bias);
    load_bn(model.enc3_.bn, "enc3.bn");
    load_param(model.dec4_.deconv.weight);
    load_param(model.dec4_.deconv.bias);
    load_bn(model.dec4_.bn, "dec4.bn");
    load_param(model.dec5_.deconv.weight);
    load_param(model.dec5_.deconv.bias);
    load_bn(model.dec5_.bn, "dec5.bn");
    load_param(model.dec6_.weight);
    load_param(model.dec6_.bias);
    load_param(model.head_.weight);
    load_param(model.head_.bias);
    return model;
}

// ---------------------------------------------------------------------------
// region means and reconstruction loss
// ---------------------------------------------------------------------------

namespace {

void check_label_range(const LabelMap& map) {
    for (int v : map.labels)
        if (v < 0 || v >= map.regions)
            throw StructuralError("label " + std::to_string(v) + " outside [0, " +
                                  std::to_string(map.regions) + ")");
}

} // namespace

Tensor superpixel_mean(const Image& img, const LabelMap& map) {
    if (img.h != map.h || img.w != map.w)
        throw StructuralError("superpixel_mean: image and label map dimensions differ");
    if (map.regions < 1) throw StructuralError("superpixel_mean: empty label map");
    check_label_range(map);

    Tensor means({map.regions, img.c});
    std::vector<long long> counts(static_cast<std::size_t>(map.regions), 0);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const int j = map.at(y, x);
            ++counts[static_cast<std::size_t>(j)];
            for (int ch = 0; ch < img.c; ++ch) means.at(j, ch) += img.at(y, x, ch);
        }
    for (int j = 0; j < map.regions; ++j)
        for (int ch = 0; ch < img.c; ++ch)
            means.at(j, ch) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
    return means;
}

Tensor superpixel_mean(const Tensor& x, int batch_index, const LabelMap& map) {
    return superpixel_mean(tensor_to_image(x, batch_index), map);
}

double reconstruction_loss(const Tensor& x, const Tensor& xr, int batch_index,
                           const LabelMap& tmpl, double lambda, Tensor* grad_xr) {
    if (!x.same_shape(xr))
        throw StructuralError("reconstruction_loss: shapes differ " + x.shape_string() + " vs " +
                              xr.shape_string());
    if (x.size(2) != tmpl.h || x.size(3) != tmpl.w)
        throw StructuralError("reconstruction_loss: template dimensions differ from image");
    check_label_range(tmpl);

    const int c = x.size(1), h = x.size(2), w = x.size(3);
    const int b = batch_index;

    // Region means of the reconstruction (Tensor M x C).
    Tensor means({tmpl.regions, c});
    std::vector<long long> counts(static_cast<std::size_t>(tmpl.regions), 0);
    for (int y = 0; y < h; ++y)
        for (int xo = 0; xo < w; ++xo) {
            const int j = tmpl.at(y, xo);
            ++counts[static_cast<std::size_t>(j)];
            for (int ch = 0; ch < c; ++ch) means.at(j, ch) += xr.at(b, ch, y, xo);
        }
    for (int j = 0; j < tmpl.regions; ++j)
        for (int ch = 0; ch < c; ++ch)
            means.at(j, ch) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);

    double loss = 0.0;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xo = 0; xo < w; ++xo) {
                const double r = xr.at(b, ch, y, xo);
                const double diff = x.at(b, ch, y, xo) - r;
                const double dev = r - means.at(tmpl.at(y, xo), ch);
                loss += diff * diff + lambda * dev * dev;
                if (grad_xr) {
                    // The mean's own dependence on xr contributes zero: deviations
                    // from a mean sum to zero within each region.
                    grad_xr->at(b, ch, y, xo) += 2.0 * (r - x.at(b, ch, y, xo)) + 2.0 * lambda * dev;
                }
            }
    return loss;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

TrainResult train_superae(SuperAE& model, const std::vector<Image>& images,
                          const std::vector<LabelMap>& templates, const HyperParams& hp,
                          std::uint64_t seed) {
    if (images.empty()) throw StructuralError("train_superae: empty dataset");
    if (images.size() != templates.size())
        throw StructuralError("train_superae: image and template counts differ");
    for (std::size_t i = 0; i < images.size(); ++i)
        if (images[i].h != templates[i].h || images[i].w != templates[i].w)
            throw StructuralError("train_superae: template " + std::to_string(i) +
                                  " does not match its image dimensions");

    int min_h = images[0].h, min_w = images[0].w;
    for (const Image& im : images) {
        min_h = std::min(min_h, im.h);
        min_w = std::min(min_w, im.w);
    }
    const int crop_h = hp.augment ? std::min(hp.crop, min_h) : min_h;
    const int crop_w = hp.augment ? std::min(hp.crop, min_w) : min_w;
    if (!hp.augment)
        for (const Image& im : images)
            if (im.h != min_h || im.w != min_w)
                throw StructuralError("train_superae: images must share one size when "
                                      "augmentation is disabled");

    Rng rng(seed);
    nn::Adam opt(hp.adam_lr);
    const int in_c = images[0].c;
    TrainResult result;

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        std::vector<std::size_t> order(images.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hp.batch)) {
            const int bsz = static_cast<int>(
                std::min(static_cast<std::size_t>(hp.batch), order.size() - start));
            Tensor xb({bsz, in_c, crop_h, crop_w});
            std::vector<LabelMap> batch_templates;
            batch_templates.reserve(static_cast<std::size_t>(bsz));

            for (int bi = 0; bi < bsz; ++bi) {
                const std::size_t idx = order[start + static_cast<std::size_t>(bi)];
                Image im = images[idx];
                LabelMap tm = templates[idx];
                if (hp.augment) {
                    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(im.h - crop_h + 1)));
                    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(im.w - crop_w + 1)));
                    im = crop(im, y0, x0, crop_h, crop_w);
                    tm = crop(tm, y0, x0, crop_h, crop_w);
                    if (rng.uniform() < 0.5) {
                        im = flip_horizontal(im);
                        tm = flip_horizontal(tm);
                    }
                }
                for (int ch = 0; ch < in_c; ++ch)
                    for (int y = 0; y < crop_h; ++y)
                        for (int x = 0; x < crop_w; ++x) xb.at(bi, ch, y, x) = im.at(y, x, ch);
                batch_templates.push_back(std::move(tm));
            }

            Tensor xr = model.reconstruct(xb, /*train=*/true);
            Tensor grad(xr.shape());
            double batch_loss = 0.0;
            for (int bi = 0; bi < bsz; ++bi)
                batch_loss += reconstruction_loss(xb, xr, bi, batch_templates[static_cast<std::size_t>(bi)],
                                                  hp.lambda, &grad);
            if (!std::isfinite(batch_loss))
                throw NumericError("train_superae: non-finite loss at epoch " +
                                   std::to_string(epoch + 1));
            // Per-image mean keeps gradient scale independent of batch size.
            grad.scale(1.0 / bsz);
            model.reconstruct_backward(grad);
            opt.step(model.parameters());
            epoch_loss += batch_loss;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(images.size()));
    }
    return result;
}

} // namespace spcut

#include "fcn/fcn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "parallel.hpp"
#include "rng.hpp"

namespace lvo::fcn {

using json = nlohmann::ordered_json;

void validate_config(const FcnConfig& c) {
    if (c.depth < 1) throw ValidationError("fcn config: depth must be >= 1");
    if (c.base_channels < 1) throw ValidationError("fcn config: base_channels must be >= 1");
    if (c.input_size < (1 << c.depth) || c.input_size % (1 << c.depth) != 0)
        throw ValidationError("fcn config: input size " + std::to_string(c.input_size) +
                              " not divisible by 2^depth = " + std::to_string(1 << c.depth));
}

namespace {

struct ConvLayer {
    int in_ch = 0;
    int out_ch = 0;
    int k = 3;
    size_t w_off = 0;
    size_t b_off = 0;
    size_t w_count() const { return static_cast<size_t>(out_ch) * in_ch * k * k; }
};

// Parameter layout: encoder stage convs, bottleneck convs, then per decoder
// stage (deepest first) the up-conv and two convs, then the 1x1 head.
std::vector<ConvLayer> layer_plan(const FcnConfig& c) {
    std::vector<ConvLayer> plan;
    size_t off = 0;
    auto add = [&](int in_ch, int out_ch, int k) {
        ConvLayer l;
        l.in_ch = in_ch;
        l.out_ch = out_ch;
        l.k = k;
        l.w_off = off;
        off += l.w_count();
        l.b_off = off;
        off += static_cast<size_t>(out_ch);
        plan.push_back(l);
    };
    for (int s = 0; s < c.depth; ++s) {
        add(s == 0 ? 1 : c.stage_channels(s - 1), c.stage_channels(s), 3);
        add(c.stage_channels(s), c.stage_channels(s), 3);
    }
    add(c.stage_channels(c.depth - 1), c.bottleneck_channels(), 3);
    add(c.bottleneck_channels(), c.bottleneck_channels(), 3);
    for (int s = c.depth - 1; s >= 0; --s) {
        int up_in = s == c.depth - 1 ? c.bottleneck_channels() : c.stage_channels(s + 1);
        add(up_in, c.stage_channels(s), 3);
        add(c.use_skips ? 2 * c.stage_channels(s) : c.stage_channels(s), c.stage_channels(s), 3);
        add(c.stage_channels(s), c.stage_channels(s), 3);
    }
    add(c.stage_channels(0), 1, 1);
    return plan;
}

size_t plan_size(const std::vector<ConvLayer>& plan) {
    const ConvLayer& last = plan.back();
    return last.b_off + static_cast<size_t>(last.out_ch);
}

// ---- kernels -------------------------------------------------------------

// 3x3 convolution, stride 1, zero padding 1. Written as shifted row-axpy
// passes so the inner loop stays contiguous.
void conv3_forward(const double* in, int in_ch, int h, int w, const double* wgt,
                   const double* bias, double* out, int out_ch) {
    const size_t hw = static_cast<size_t>(h) * w;
    for (int oc = 0; oc < out_ch; ++oc) {
        double* op = out + oc * hw;
        std::fill(op, op + hw, bias[oc]);
        for (int ic = 0; ic < in_ch; ++ic) {
            const double* ip = in + ic * hw;
            const double* wk = wgt + (static_cast<size_t>(oc) * in_ch + ic) * 9;
            for (int ky = -1; ky <= 1; ++ky) {
                int y_lo = std::max(0, -ky), y_hi = h - std::max(0, ky);
                for (int kx = -1; kx <= 1; ++kx) {
                    double wv = wk[(ky + 1) * 3 + (kx + 1)];
                    int x_lo = std::max(0, -kx), x_hi = w - std::max(0, kx);
                    for (int y = y_lo; y < y_hi; ++y) {
                        const double* irow = ip + static_cast<size_t>(y + ky) * w + kx;
                        double* orow = op + static_cast<size_t>(y) * w;
                        for (int x = x_lo; x < x_hi; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
}

void conv3_backward(const double* grad_out, const double* in, int in_ch, int h, int w,
                    const double* wgt, double* grad_in, double* grad_w, double* grad_b,
                    int out_ch) {
    const size_t hw = static_cast<size_t>(h) * w;
    for (int oc = 0; oc < out_ch; ++oc) {
        const double* gop = grad_out + oc * hw;
        double acc_b = 0.0;
        for (size_t i = 0; i < hw; ++i) acc_b += gop[i];
        grad_b[oc] += acc_b;
        for (int ic = 0; ic < in_ch; ++ic) {
            const double* ip = in + ic * hw;
            double* gip = grad_in ? grad_in + ic * hw : nullptr;
            const double* wk = wgt + (static_cast<size_t>(oc) * in_ch + ic) * 9;
            double* gwk = grad_w + (static_cast<size_t>(oc) * in_ch + ic) * 9;
            for (int ky = -1; ky <= 1; ++ky) {
                int y_lo = std::max(0, -ky), y_hi = h - std::max(0, ky);
                for (int kx = -1; kx <= 1; ++kx) {
                    int x_lo = std::max(0, -kx), x_hi = w - std::max(0, kx);
                    double acc_w = 0.0;
                    double wv = wk[(ky + 1) * 3 + (kx + 1)];
                    for (int y = y_lo; y < y_hi; ++y) {
                        const double* irow = ip + static_cast<size_t>(y + ky) * w + kx;
                        double* girow = gip ? gip + static_cast<size_t>(y + ky) * w + kx : nullptr;
                        const double* gorow = gop + static_cast<size_t>(y) * w;
                        if (girow) {
                            for (int x = x_lo; x < x_hi; ++x) {
                                acc_w += gorow[x] * irow[x];
                                girow[x] += wv * gorow[x];
                            }
                        } else {
                            for (int x = x_lo; x < x_hi; ++x) acc_w += gorow[x] * irow[x];
                        }
                    }
                    gwk[(ky + 1) * 3 + (kx + 1)] += acc_w;
                }
            }
        }
    }
}

void conv1_forward(const double* in, int in_ch, int h, int w, const double* wgt,
                   const double* bias, double* out, int out_ch) {
    const size_t hw = static_cast<size_t>(h) * w;
    for (int oc = 0; oc < out_ch; ++oc) {
        double* op = out + oc * hw;
        std::fill(op, op + hw, bias[oc]);
        for (int ic = 0; ic < in_ch; ++ic) {
            const double* ip = in + ic * hw;
            double wv = wgt[static_cast<size_t>(oc) * in_ch + ic];
            for (size_t i = 0; i < hw; ++i) op[i] += wv * ip[i];
        }
    }
}

void conv1_backward(const double* grad_out, const double* in, int in_ch, int h, int w,
                    const double* wgt, double* grad_in, double* grad_w, double* grad_b,
                    int out_ch) {
    const size_t hw = static_cast<size_t>(h) * w;
    for (int oc = 0; oc < out_ch; ++oc) {
        const double* gop = grad_out + oc * hw;
        double acc_b = 0.0;
        for (size_t i = 0; i < hw; ++i) acc_b += gop[i];
        grad_b[oc] += acc_b;
        for (int ic = 0; ic < in_ch; ++ic) {
            const double* ip = in + ic * hw;
            double* gip = grad_in + ic * hw;
            double wv = wgt[static_cast<size_t>(oc) * in_ch + ic];
            double acc_w = 0.0;
            for (size_t i = 0; i < hw; ++i) {
                acc_w += gop[i] * ip[i];
                gip[i] += wv * gop[i];
            }
            grad_w[static_cast<size_t>(oc) * in_ch + ic] += acc_w;
        }
    }
}

void relu_inplace(std::vector<double>& v) {
    for (double& x : v)
        if (x < 0.0) x = 0.0;
}

// Gradient of relu using the post-activation values (x > 0 iff pre > 0).
void relu_backward_inplace(std::vector<double>& grad, const std::vector<double>& post) {
    for (size_t i = 0; i < grad.size(); ++i)
        if (post[i] <= 0.0) grad[i] = 0.0;
}

// 2x2 max-pool, stride 2; ties keep the first element in scan order.
void pool2_forward(const double* in, int ch, int h, int w, double* out, uint32_t* argmax) {
    int oh = h / 2, ow = w / 2;
    for (int c = 0; c < ch; ++c) {
        const double* ip = in + static_cast<size_t>(c) * h * w;
        double* op = out + static_cast<size_t>(c) * oh * ow;
        uint32_t* ap = argmax + static_cast<size_t>(c) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                uint32_t base = static_cast<uint32_t>(2 * y * w + 2 * x);
                uint32_t idx = base;
                double best = ip[base];
                const uint32_t cand[3] = {base + 1, base + static_cast<uint32_t>(w),
                                          base + static_cast<uint32_t>(w) + 1};
                for (uint32_t cdx : cand)
                    if (ip[cdx] > best) {
                        best = ip[cdx];
                        idx = cdx;
                    }
                op[static_cast<size_t>(y) * ow + x] = best;
                ap[static_cast<size_t>(y) * ow + x] = idx;
            }
        }
    }
}

void pool2_backward(const double* grad_out, const uint32_t* argmax, int ch, int h, int w,
                    double* grad_in) {
    int oh = h / 2, ow = w / 2;
    for (int c = 0; c < ch; ++c) {
        const double* gop = grad_out + static_cast<size_t>(c) * oh * ow;
        const uint32_t* ap = argmax + static_cast<size_t>(c) * oh * ow;
        double* gip = grad_in + static_cast<size_t>(c) * h * w;
        for (size_t i = 0; i < static_cast<size_t>(oh) * ow; ++i) gip[ap[i]] += gop[i];
    }
}

void upsample2_forward(const double* in, int ch, int h, int w, double* out) {
    int oh = 2 * h, ow = 2 * w;
    for (int c = 0; c < ch; ++c) {
        const double* ip = in + static_cast<size_t>(c) * h * w;
        double* op = out + static_cast<size_t>(c) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            const double* irow = ip + static_cast<size_t>(y / 2) * w;
            double* orow = op + static_cast<size_t>(y) * ow;
            for (int x = 0; x < ow; ++x) orow[x] = irow[x / 2];
        }
    }
}

void upsample2_backward(const double* grad_out, int ch, int h, int w, double* grad_in) {
    int oh = 2 * h, ow = 2 * w;
    for (int c = 0; c < ch; ++c) {
        const double* gop = grad_out + static_cast<size_t>(c) * oh * ow;
        double* gip = grad_in + static_cast<size_t>(c) * h * w;
        for (int y = 0; y < oh; ++y) {
            const double* gorow = gop + static_cast<size_t>(y) * ow;
            double* girow = gip + static_cast<size_t>(y / 2) * w;
            for (int x = 0; x < ow; ++x) girow[x / 2] += gorow[x];
        }
    }
}

// ---- traced forward pass --------------------------------------------------

struct Trace {
    std::vector<std::vector<double>> enc_a, enc_b;   // post-relu per stage
    std::vector<std::vector<double>> pooled;         // pooled enc_b per stage
    std::vector<std::vector<uint32_t>> pool_idx;
    std::vector<double> bott_a, bott_b;
    std::vector<std::vector<double>> upsampled, up_out, cat, dec_a, dec_b;
    std::vector<double> logits;
};

void run_encoder(const FcnModel& model, const std::vector<ConvLayer>& plan,
                 const std::vector<double>& image, Trace& tr) {
    const FcnConfig& c = model.config;
    const double* P = model.params.data();
    int size = c.input_size;
    tr.enc_a.resize(c.depth);
    tr.enc_b.resize(c.depth);
    tr.pooled.resize(c.depth);
    tr.pool_idx.resize(c.depth);

    const std::vector<double>* cur = &image;
    for (int s = 0; s < c.depth; ++s) {
        const ConvLayer& la = plan[2 * s];
        const ConvLayer& lb = plan[2 * s + 1];
        int ch = c.stage_channels(s);
        tr.enc_a[s].assign(static_cast<size_t>(ch) * size * size, 0.0);
        conv3_forward(cur->data(), la.in_ch, size, size, P + la.w_off, P + la.b_off,
                      tr.enc_a[s].data(), ch);
        relu_inplace(tr.enc_a[s]);
        tr.enc_b[s].assign(static_cast<size_t>(ch) * size * size, 0.0);
        conv3_forward(tr.enc_a[s].data(), ch, size, size, P + lb.w_off, P + lb.b_off,
                      tr.enc_b[s].data(), ch);
        relu_inplace(tr.enc_b[s]);
        int half = size / 2;
        tr.pooled[s].assign(static_cast<size_t>(ch) * half * half, 0.0);
        tr.pool_idx[s].assign(static_cast<size_t>(ch) * half * half, 0);
        pool2_forward(tr.enc_b[s].data(), ch, size, size, tr.pooled[s].data(),
                      tr.pool_idx[s].data());
        cur = &tr.pooled[s];
        size = half;
    }

    const ConvLayer& ba = plan[2 * c.depth];
    const ConvLayer& bb = plan[2 * c.depth + 1];
    int bc = c.bottleneck_channels();
    tr.bott_a.assign(static_cast<size_t>(bc) * size * size, 0.0);
    conv3_forward(cur->data(), ba.in_ch, size, size, P + ba.w_off, P + ba.b_off,
                  tr.bott_a.data(), bc);
    relu_inplace(tr.bott_a);
    tr.bott_b.assign(static_cast<size_t>(bc) * size * size, 0.0);
    conv3_forward(tr.bott_a.data(), bc, size, size, P + bb.w_off, P + bb.b_off,
                  tr.bott_b.data(), bc);
    relu_inplace(tr.bott_b);
}

void run_decoder(const FcnModel& model, const std::vector<ConvLayer>& plan, Trace& tr) {
    const FcnConfig& c = model.config;
    const double* P = model.params.data();
    tr.upsampled.resize(c.depth);
    tr.up_out.resize(c.depth);
    tr.cat.resize(c.depth);
    tr.dec_a.resize(c.depth);
    tr.dec_b.resize(c.depth);

    const std::vector<double>* running = &tr.bott_b;
    int size = c.bottleneck_size();
    for (int s = c.depth - 1; s >= 0; --s) {
        size_t li = 2 * static_cast<size_t>(c.depth) + 2 +
                    3 * static_cast<size_t>(c.depth - 1 - s);
        const ConvLayer& lu = plan[li];
        const ConvLayer& ld1 = plan[li + 1];
        const ConvLayer& ld2 = plan[li + 2];
        int ch = c.stage_channels(s);
        int out_size = size * 2;

        tr.upsampled[s].assign(static_cast<size_t>(lu.in_ch) * out_size * out_size, 0.0);
        upsample2_forward(running->data(), lu.in_ch, size, size, tr.upsampled[s].data());
        tr.up_out[s].assign(static_cast<size_t>(ch) * out_size * out_size, 0.0);
        conv3_forward(tr.upsampled[s].data(), lu.in_ch, out_size, out_size, P + lu.w_off,
                      P + lu.b_off, tr.up_out[s].data(), ch);
        relu_inplace(tr.up_out[s]);

        if (c.use_skips) {
            tr.cat[s].resize(2 * static_cast<size_t>(ch) * out_size * out_size);
            std::copy(tr.up_out[s].begin(), tr.up_out[s].end(), tr.cat[s].begin());
            std::copy(tr.enc_b[s].begin(), tr.enc_b[s].end(),
                      tr.cat[s].begin() + static_cast<ptrdiff_t>(tr.up_out[s].size()));
        } else {
            tr.cat[s] = tr.up_out[s];
        }

        tr.dec_a[s].assign(static_cast<size_t>(ch) * out_size * out_size, 0.0);
        conv3_forward(tr.cat[s].data(), ld1.in_ch, out_size, out_size, P + ld1.w_off,
                      P + ld1.b_off, tr.dec_a[s].data(), ch);
        relu_inplace(tr.dec_a[s]);
        tr.dec_b[s].assign(static_cast<size_t>(ch) * out_size * out_size, 0.0);
        conv3_forward(tr.dec_a[s].data(), ch, out_size, out_size, P + ld2.w_off, P + ld2.b_off,
                      tr.dec_b[s].data(), ch);
        relu_inplace(tr.dec_b[s]);

        running = &tr.dec_b[s];
        size = out_size;
    }

    const ConvLayer& head = plan.back();
    tr.logits.assign(static_cast<size_t>(size) * size, 0.0);
    conv1_forward(running->data(), head.in_ch, size, size, P + head.w_off, P + head.b_off,
                  tr.logits.data(), 1);
}

void check_image(const FcnConfig& c, const std::vector<double>& image) {
    if (image.size() != static_cast<size_t>(c.input_size) * c.input_size)
        throw ValidationError("fcn: image has " + std::to_string(image.size()) +
                              " pixels, config expects " +
                              std::to_string(static_cast<size_t>(c.input_size) * c.input_size));
}

}  // namespace

size_t parameter_count(const FcnConfig& config) {
    validate_config(config);
    return plan_size(layer_plan(config));
}

FcnModel init_model(const FcnConfig& config, uint64_t seed) {
    validate_config(config);
    FcnModel model;
    model.config = config;
    auto plan = layer_plan(config);
    model.params.assign(plan_size(plan), 0.0);
    Rng rng(hash_mix(seed, 0xfc17));
    for (const ConvLayer& l : plan) {
        double scale = std::sqrt(2.0 / (static_cast<double>(l.in_ch) * l.k * l.k));
        for (size_t i = 0; i < l.w_count(); ++i)
            model.params[l.w_off + i] = scale * rng.normal();
        // biases stay zero
    }
    return model;
}

ForwardResult forward(const FcnModel& model, const std::vector<double>& image) {
    validate_config(model.config);
    check_image(model.config, image);
    auto plan = layer_plan(model.config);
    Trace tr;
    run_encoder(model, plan, image, tr);
    run_decoder(model, plan, tr);
    ForwardResult out;
    out.bottleneck = tr.bott_b;
    out.probs.resize(tr.logits.size());
    for (size_t i = 0; i < tr.logits.size(); ++i)
        out.probs[i] = 1.0 / (1.0 + std::exp(-tr.logits[i]));
    return out;
}

std::vector<double> extract_features(const FcnModel& model, const std::vector<double>& image) {
    validate_config(model.config);
    check_image(model.config, image);
    auto plan = layer_plan(model.config);
    Trace tr;
    run_encoder(model, plan, image, tr);
    return tr.bott_b;
}

namespace {

// Per-sample loss contribution and parameter gradient, accumulated into
// `grad` unscaled; the caller divides by the batch size.
struct SampleLoss {
    double bce = 0.0;
    double dice = 1.0;
};

SampleLoss backward_one(const FcnModel& model, const std::vector<ConvLayer>& plan,
                        const std::vector<double>& image, const std::vector<double>& mask,
                        LossKind kind, std::vector<double>& grad) {
    const FcnConfig& c = model.config;
    const double* P = model.params.data();
    double* G = grad.data();

    Trace tr;
    run_encoder(model, plan, image, tr);
    run_decoder(model, plan, tr);

    const size_t n_px = tr.logits.size();
    std::vector<double> probs(n_px);
    for (size_t i = 0; i < n_px; ++i) probs[i] = 1.0 / (1.0 + std::exp(-tr.logits[i]));

    SampleLoss out;
    // Numerically stable BCE from logits, averaged over pixels.
    double bce = 0.0;
    for (size_t i = 0; i < n_px; ++i) {
        double z = tr.logits[i], m = mask[i];
        bce += std::max(z, 0.0) - z * m + std::log1p(std::exp(-std::fabs(z)));
    }
    out.bce = bce / static_cast<double>(n_px);

    constexpr double kDiceEps = 1e-6;
    double inter = 0.0, psum = 0.0, msum = 0.0;
    for (size_t i = 0; i < n_px; ++i) {
        inter += probs[i] * mask[i];
        psum += probs[i];
        msum += mask[i];
    }
    double num = 2.0 * inter + kDiceEps;
    double den = psum + msum + kDiceEps;
    out.dice = num / den;

    std::vector<double> dz(n_px);
    for (size_t i = 0; i < n_px; ++i)
        dz[i] = (probs[i] - mask[i]) / static_cast<double>(n_px);
    if (kind == LossKind::bce_dice) {
        for (size_t i = 0; i < n_px; ++i) {
            double d_dice_dp = (2.0 * mask[i] * den - num) / (den * den);
            dz[i] += -d_dice_dp * probs[i] * (1.0 - probs[i]);
        }
    }

    // Head backward.
    const ConvLayer& head = plan.back();
    int size = c.input_size;
    std::vector<double> grad_running(static_cast<size_t>(head.in_ch) * size * size, 0.0);
    conv1_backward(dz.data(), tr.dec_b[0].data(), head.in_ch, size, size, P + head.w_off,
                   grad_running.data(), G + head.w_off, G + head.b_off, 1);

    // Decoder backward, shallow to deep.
    std::vector<std::vector<double>> skip_grad(c.depth);
    for (int s = 0; s < c.depth; ++s) {
        size_t li = 2 * static_cast<size_t>(c.depth) + 2 +
                    3 * static_cast<size_t>(c.depth - 1 - s);
        const ConvLayer& lu = plan[li];
        const ConvLayer& ld1 = plan[li + 1];
        const ConvLayer& ld2 = plan[li + 2];
        int ch = c.stage_channels(s);
        int out_size = c.input_size >> s;
        const size_t hw = static_cast<size_t>(out_size) * out_size;

        relu_backward_inplace(grad_running, tr.dec_b[s]);
        std::vector<double> grad_dec_a(static_cast<size_t>(ch) * hw, 0.0);
        conv3_backward(grad_running.data(), tr.dec_a[s].data(), ch, out_size, out_size,
                       P + ld2.w_off, grad_dec_a.data(), G + ld2.w_off, G + ld2.b_off, ch);

        relu_backward_inplace(grad_dec_a, tr.dec_a[s]);
        std::vector<double> grad_cat(static_cast<size_t>(ld1.in_ch) * hw, 0.0);
        conv3_backward(grad_dec_a.data(), tr.cat[s].data(), ld1.in_ch, out_size, out_size,
                       P + ld1.w_off, grad_cat.data(), G + ld1.w_off, G + ld1.b_off, ch);

        std::vector<double> grad_up(static_cast<size_t>(ch) * hw, 0.0);
        std::copy(grad_cat.begin(), grad_cat.begin() + static_cast<ptrdiff_t>(grad_up.size()),
                  grad_up.begin());
        if (c.use_skips) {
            skip_grad[s].assign(static_cast<size_t>(ch) * hw, 0.0);
            std::copy(grad_cat.begin() + static_cast<ptrdiff_t>(grad_up.size()), grad_cat.end(),
                      skip_grad[s].begin());
        }

        relu_backward_inplace(grad_up, tr.up_out[s]);
        std::vector<double> grad_upsampled(static_cast<size_t>(lu.in_ch) * hw, 0.0);
        conv3_backward(grad_up.data(), tr.upsampled[s].data(), lu.in_ch, out_size, out_size,
                       P + lu.w_off, grad_upsampled.data(), G + lu.w_off, G + lu.b_off, ch);

        int half = out_size / 2;
        grad_running.assign(static_cast<size_t>(lu.in_ch) * half * half, 0.0);
        upsample2_backward(grad_upsampled.data(), lu.in_ch, half, half, grad_running.data());
    }

    // Bottleneck backward; grad_running now matches bott_b.
    const ConvLayer& ba = plan[2 * c.depth];
    const ConvLayer& bb = plan[2 * c.depth + 1];
    int bs = c.bottleneck_size();
    int bc = c.bottleneck_channels();
    relu_backward_inplace(grad_running, tr.bott_b);
    std::vector<double> grad_bott_a(static_cast<size_t>(bc) * bs * bs, 0.0);
    conv3_backward(grad_running.data(), tr.bott_a.data(), bc, bs, bs, P + bb.w_off,
                   grad_bott_a.data(), G + bb.w_off, G + bb.b_off, bc);
    relu_backward_inplace(grad_bott_a, tr.bott_a);
    std::vector<double> grad_pooled(static_cast<size_t>(ba.in_ch) * bs * bs, 0.0);
    conv3_backward(grad_bott_a.data(), tr.pooled[c.depth - 1].data(), ba.in_ch, bs, bs,
                   P + ba.w_off, grad_pooled.data(), G + ba.w_off, G + ba.b_off, bc);

    // Encoder backward, deep to shallow.
    for (int s = c.depth - 1; s >= 0; --s) {
        const ConvLayer& la = plan[2 * s];
        const ConvLayer& lb = plan[2 * s + 1];
        int ch = c.stage_channels(s);
        int size_s = c.input_size >> s;
        const size_t hw = static_cast<size_t>(size_s) * size_s;

        std::vector<double> grad_enc_b(static_cast<size_t>(ch) * hw, 0.0);
        pool2_backward(grad_pooled.data(), tr.pool_idx[s].data(), ch, size_s, size_s,
                       grad_enc_b.data());
        if (c.use_skips && !skip_grad[s].empty())
            for (size_t i = 0; i < grad_enc_b.size(); ++i) grad_enc_b[i] += skip_grad[s][i];

        relu_backward_inplace(grad_enc_b, tr.enc_b[s]);
        std::vector<double> grad_enc_a(static_cast<size_t>(ch) * hw, 0.0);
        conv3_backward(grad_enc_b.data(), tr.enc_a[s].data(), ch, size_s, size_s, P + lb.w_off,
                       grad_enc_a.data(), G + lb.w_off, G + lb.b_off, ch);

        relu_backward_inplace(grad_enc_a, tr.enc_a[s]);
        if (s == 0) {
            // No gradient needed below the input image.
            conv3_backward(grad_enc_a.data(), image.data(), la.in_ch, size_s, size_s,
                           P + la.w_off, nullptr, G + la.w_off, G + la.b_off, ch);
        } else {
            const std::vector<double>& below = tr.pooled[s - 1];
            grad_pooled.assign(below.size(), 0.0);
            conv3_backward(grad_enc_a.data(), below.data(), la.in_ch, size_s, size_s,
                           P + la.w_off, grad_pooled.data(), G + la.w_off, G + la.b_off, ch);
        }
    }
    return out;
}

}  // namespace

LossGrad loss_and_grad(const FcnModel& model, const std::vector<std::vector<double>>& images,
                       const std::vector<std::vector<double>>& masks, LossKind kind) {
    validate_config(model.config);
    if (images.empty()) throw ValidationError("fcn loss: empty batch");
    if (images.size() != masks.size())
        throw ValidationError("fcn loss: image/mask count mismatch");
    auto plan = layer_plan(model.config);
    for (size_t i = 0; i < images.size(); ++i) {
        check_image(model.config, images[i]);
        if (masks[i].size() != images[i].size())
            throw ValidationError("fcn loss: mask size mismatch");
        for (double m : masks[i])
            if (m != 0.0 && m != 1.0)
                throw ValidationError("fcn loss: masks must be binary");
    }

    const size_t batch = images.size();
    // Per-sample gradient buffers reduced in index order: results are
    // bit-identical whether samples run sequentially or across threads.
    std::vector<std::vector<double>> sample_grads(batch);
    std::vector<SampleLoss> sample_losses(batch);
    parallel_for(batch, [&](size_t i) {
        sample_grads[i].assign(model.params.size(), 0.0);
        sample_losses[i] = backward_one(model, plan, images[i], masks[i], kind, sample_grads[i]);
    });

    LossGrad out;
    out.grad.assign(model.params.size(), 0.0);
    double bce_sum = 0.0, dice_sum = 0.0;
    for (size_t i = 0; i < batch; ++i) {
        const std::vector<double>& g = sample_grads[i];
        for (size_t p = 0; p < out.grad.size(); ++p) out.grad[p] += g[p];
        bce_sum += sample_losses[i].bce;
        dice_sum += sample_losses[i].dice;
    }
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (double& g : out.grad) g *= inv_b;
    out.bce = bce_sum * inv_b;
    out.soft_dice = dice_sum * inv_b;
    out.loss = out.bce + (kind == LossKind::bce_dice ? 1.0 - out.soft_dice : 0.0);
    return out;
}

TrainState train_fcn(FcnModel& model, const Dataset& data, TrainState state) {
    validate_config(model.config);
    if (data.images.empty()) throw ValidationError("fcn train: empty dataset");
    if (data.images.size() != data.masks.size())
        throw ValidationError("fcn train: image/mask count mismatch");
    if (!(state.learning_rate >= 0.0)) throw ValidationError("fcn train: learning rate < 0");
    if (state.batch_size < 1) throw ValidationError("fcn train: batch_size must be >= 1");

    const size_t n = data.images.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    std::vector<double> m1, m2;  // adam moments
    if (state.optimizer == Optimizer::adam) {
        m1.assign(model.params.size(), 0.0);
        m2.assign(model.params.size(), 0.0);
    }
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
    long step = 0;
    std::vector<double> last_finite = model.params;

    for (int epoch = 0; epoch < state.epochs; ++epoch) {
        Rng rng(hash_mix(state.seed, 0xe90c + static_cast<uint64_t>(epoch)));
        for (size_t i = n; i > 1; --i) {
            size_t j = rng.next_below(i);
            std::swap(order[i - 1], order[j]);
        }
        for (size_t start = 0; start < n; start += static_cast<size_t>(state.batch_size)) {
            size_t end = std::min(n, start + static_cast<size_t>(state.batch_size));
            std::vector<std::vector<double>> images, masks;
            for (size_t k = start; k < end; ++k) {
                images.push_back(data.images[order[k]]);
                masks.push_back(data.masks[order[k]]);
            }
            LossGrad lg = loss_and_grad(model, images, masks, state.loss);
            if (!std::isfinite(lg.loss)) {
                model.params = last_finite;
                state.aborted_non_finite = true;
                return state;
            }
            last_finite = model.params;
            ++step;
            if (state.optimizer == Optimizer::adam) {
                double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
                double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
                for (size_t p = 0; p < model.params.size(); ++p) {
                    m1[p] = kBeta1 * m1[p] + (1.0 - kBeta1) * lg.grad[p];
                    m2[p] = kBeta2 * m2[p] + (1.0 - kBeta2) * lg.grad[p] * lg.grad[p];
                    model.params[p] -= state.learning_rate * (m1[p] / bc1) /
                                       (std::sqrt(m2[p] / bc2) + kAdamEps);
                }
            } else {
                for (size_t p = 0; p < model.params.size(); ++p)
                    model.params[p] -= state.learning_rate * lg.grad[p];
            }
            state.loss_history.push_back(lg.loss);
        }
    }
    return state;
}

DotPrediction predict_dot(const FcnModel& model, const std::vector<std::vector<double>>& crops,
                          double area_threshold) {
    DotPrediction out;
    const int size = model.config.input_size;
    for (const auto& crop : crops) {
        ForwardResult fr = forward(model, crop);
        // Largest 4-connected component of prob >= 0.5 pixels.
        std::vector<uint8_t> on(fr.probs.size());
        for (size_t i = 0; i < fr.probs.size(); ++i) on[i] = fr.probs[i] >= 0.5 ? 1 : 0;
        std::vector<int> seen(fr.probs.size(), 0);
        int best = 0;
        std::vector<int> stack;
        for (int start = 0; start < static_cast<int>(on.size()); ++start) {
            if (!on[static_cast<size_t>(start)] || seen[static_cast<size_t>(start)]) continue;
            int area = 0;
            stack.push_back(start);
            seen[static_cast<size_t>(start)] = 1;
            while (!stack.empty()) {
                int idx = stack.back();
                stack.pop_back();
                ++area;
                int x = idx % size, y = idx / size;
                auto visit = [&](int xx, int yy) {
                    if (xx < 0 || yy < 0 || xx >= size || yy >= size) return;
                    int j = yy * size + xx;
                    if (!on[static_cast<size_t>(j)] || seen[static_cast<size_t>(j)]) return;
                    seen[static_cast<size_t>(j)] = 1;
                    stack.push_back(j);
                };
                visit(x - 1, y);
                visit(x + 1, y);
                visit(x, y - 1);
                visit(x, y + 1);
            }
            best = std::max(best, area);
        }
        out.slice_areas.push_back(best);
        if (static_cast<double>(best) >= area_threshold) out.flag = true;
    }
    return out;
}

namespace {

void append_hex_u64(std::string& out, uint64_t bits) {
    static const char* digits = "0123456789abcdef";
    for (int shift = 60; shift >= 0; shift -= 4)
        out.push_back(digits[(bits >> shift) & 0xf]);
}

uint64_t parse_hex_u64(const char* s) {
    uint64_t v = 0;
    for (int i = 0; i < 16; ++i) {
        char ch = s[i];
        uint64_t d;
        if (ch >= '0' && ch <= '9')
            d = static_cast<uint64_t>(ch - '0');
        else if (ch >= 'a' && ch <= 'f')
            d = static_cast<uint64_t>(ch - 'a' + 10);
        else
            throw FormatError("fcn-v1: invalid hex digit in parameter payload");
        v = (v << 4) | d;
    }
    return v;
}

}  // namespace

std::string to_json(const FcnModel& model) {
    json j;
    j["format"] = "fcn-v1";
    j["config"] = {{"input_size", model.config.input_size},
                   {"depth", model.config.depth},
                   {"base_channels", model.config.base_channels},
                   {"use_skips", model.config.use_skips}};
    j["n_params"] = model.params.size();
    std::string payload;
    payload.reserve(model.params.size() * 16);
    for (double p : model.params) {
        uint64_t bits;
        std::memcpy(&bits, &p, 8);
        append_hex_u64(payload, bits);
    }
    j["params_hex"] = std::move(payload);
    return j.dump(1) + "\n";
}

FcnModel fcn_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("fcn-v1: invalid JSON: ") + e.what());
    }
    if (!j.contains("format") || j["format"] != "fcn-v1")
        throw FormatError("fcn-v1: missing or wrong format tag (expected \"fcn-v1\")");
    try {
        FcnModel model;
        const json& c = j.at("config");
        model.config.input_size = c.at("input_size").get<int>();
        model.config.depth = c.at("depth").get<int>();
        model.config.base_channels = c.at("base_channels").get<int>();
        model.config.use_skips = c.at("use_skips").get<bool>();
        validate_config(model.config);
        size_t n = j.at("n_params").get<size_t>();
        if (n != parameter_count(model.config))
            throw FormatError("fcn-v1: parameter count does not match config");
        const std::string& payload = j.at("params_hex").get_ref<const std::string&>();
        if (payload.size() != n * 16)
            throw FormatError("fcn-v1: parameter payload has wrong length");
        model.params.resize(n);
        for (size_t i = 0; i < n; ++i) {
            uint64_t bits = parse_hex_u64(payload.data() + i * 16);
            std::memcpy(&model.params[i], &bits, 8);
        }
        return model;
    } catch (const json::exception& e) {
        throw FormatError(std::string("fcn-v1: malformed document: ") + e.what());
    }
}

void save_fcn(const FcnModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write model file '" + path + "'");
    out << to_json(model);
    if (!out) throw UsageError("I/O error writing '" + path + "'");
}

FcnModel load_fcn(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open model file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return fcn_from_json(ss.str());
}

}  // namespace lvo::fcn

#include "peghole/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "peghole/thread_pool.hpp"

namespace peghole::neuro {

namespace {

void expect_shape(const Tensor& t, const std::vector<int>& dims,
                  const char* what) {
    if (t.dims != dims)
        throw std::runtime_error(std::string(what) + ": shape " +
                                 shape_str(t.dims) + ", want " + shape_str(dims));
}

}  // namespace

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(ParamStore& store, const std::string& name, int in, int out)
    : in_(in), out_(out) {
    w_ = &store.param(name + ".w", {out, in}, uniform_fan_in(in));
    b_ = &store.param(name + ".b", {out}, zeros_init());
}

const Tensor& Dense::forward(const Tensor& x) {
    if (static_cast<int>(x.size()) != in_)
        throw std::runtime_error("dense input size " + std::to_string(x.size()) +
                                 ", want " + std::to_string(in_));
    x_ = x;
    y_.resize({out_});
    const double* w = w_->value.ptr();
    const double* b = b_->value.ptr();
    for (int o = 0; o < out_; ++o) {
        double acc = b[o];
        const double* row = w + size_t(o) * in_;
        for (int i = 0; i < in_; ++i) acc += row[i] * x.data[i];
        y_.data[o] = acc;
    }
    return y_;
}

const Tensor& Dense::backward(const Tensor& gy) {
    if (static_cast<int>(gy.size()) != out_)
        throw std::runtime_error("dense grad size mismatch");
    gx_.resize({in_});
    double* gw = w_->grad.ptr();
    double* gb = b_->grad.ptr();
    const double* w = w_->value.ptr();
    for (int o = 0; o < out_; ++o) {
        const double g = gy.data[o];
        gb[o] += g;
        double* gw_row = gw + size_t(o) * in_;
        const double* w_row = w + size_t(o) * in_;
        for (int i = 0; i < in_; ++i) {
            gw_row[i] += g * x_.data[i];
            gx_.data[i] += g * w_row[i];
        }
    }
    return gx_;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(ParamStore& store, const std::string& name, int in_c, int out_c,
               int stride)
    : in_c_(in_c), out_c_(out_c), stride_(stride) {
    if (stride != 1 && stride != 2)
        throw std::invalid_argument("conv stride must be 1 or 2");
    w_ = &store.param(name + ".w", {out_c, in_c, 3, 3}, uniform_fan_in(in_c * 9));
    b_ = &store.param(name + ".b", {out_c}, zeros_init());
}

const Tensor& Conv2d::forward(const Tensor& x) {
    if (x.dims.size() != 3 || x.dims[0] != in_c_)
        throw std::runtime_error("conv input shape " + shape_str(x.dims));
    in_h_ = x.dims[1];
    in_w_ = x.dims[2];
    const int ph = in_h_ + 2, pw = in_w_ + 2;
    padded_.resize({in_c_, ph, pw});
    for (int c = 0; c < in_c_; ++c)
        for (int y = 0; y < in_h_; ++y)
            std::copy_n(x.ptr() + (size_t(c) * in_h_ + y) * in_w_, in_w_,
                        padded_.ptr() + (size_t(c) * ph + y + 1) * pw + 1);

    const int oh = (in_h_ - 1) / stride_ + 1;
    const int ow = (in_w_ - 1) / stride_ + 1;
    y_.resize({out_c_, oh, ow});
    const double* w = w_->value.ptr();
    const double* b = b_->value.ptr();
    const int stride = stride_;
    auto channel = [&](size_t oc) {
        double* out_plane = y_.ptr() + oc * oh * ow;
        for (int i = 0; i < oh * ow; ++i) out_plane[i] = b[oc];
        for (int ic = 0; ic < in_c_; ++ic) {
            const double* in_plane = padded_.ptr() + size_t(ic) * ph * pw;
            const double* k = w + ((oc * in_c_) + ic) * 9;
            for (int oy = 0; oy < oh; ++oy) {
                double* dst = out_plane + size_t(oy) * ow;
                for (int ky = 0; ky < 3; ++ky) {
                    const double* src =
                        in_plane + (size_t(oy) * stride + ky) * pw;
                    const double k0 = k[ky * 3], k1 = k[ky * 3 + 1], k2 = k[ky * 3 + 2];
                    if (stride == 1) {
                        for (int ox = 0; ox < ow; ++ox)
                            dst[ox] += k0 * src[ox] + k1 * src[ox + 1] + k2 * src[ox + 2];
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const double* s = src + ox * 2;
                            dst[ox] += k0 * s[0] + k1 * s[1] + k2 * s[2];
                        }
                    }
                }
            }
        }
    };
    if (size_t(out_c_) * in_c_ * oh * ow >= 65536)
        parallel_for(out_c_, channel);
    else
        for (int oc = 0; oc < out_c_; ++oc) channel(oc);
    return y_;
}

const Tensor& Conv2d::backward(const Tensor& gy) {
    const int oh = y_.dims[1], ow = y_.dims[2];
    expect_shape(gy, {out_c_, oh, ow}, "conv backward");
    const int ph = in_h_ + 2, pw = in_w_ + 2;
    gpad_.resize({in_c_, ph, pw});
    gpad_.fill(0.0);
    double* gw = w_->grad.ptr();
    double* gb = b_->grad.ptr();
    const double* w = w_->value.ptr();
    const int stride = stride_;

    // weight and bias gradients: parallel over output channels (disjoint rows
    // of gw), deterministic accumulation order within each
    auto weight_grads = [&](size_t oc) {
        const double* g_plane = gy.ptr() + oc * oh * ow;
        double acc = 0.0;
        for (int i = 0; i < oh * ow; ++i) acc += g_plane[i];
        gb[oc] += acc;
        for (int ic = 0; ic < in_c_; ++ic) {
            const double* in_plane = padded_.ptr() + size_t(ic) * ph * pw;
            const size_t kbase = ((oc * in_c_) + ic) * 9;
            double acc[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
            for (int oy = 0; oy < oh; ++oy) {
                const double* g_row = g_plane + size_t(oy) * ow;
                for (int ky = 0; ky < 3; ++ky) {
                    const double* src = in_plane + (size_t(oy) * stride + ky) * pw;
                    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
                    if (stride == 1) {
                        for (int ox = 0; ox < ow; ++ox) {
                            const double g = g_row[ox];
                            a0 += g * src[ox];
                            a1 += g * src[ox + 1];
                            a2 += g * src[ox + 2];
                        }
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const double g = g_row[ox];
                            const double* s = src + ox * 2;
                            a0 += g * s[0];
                            a1 += g * s[1];
                            a2 += g * s[2];
                        }
                    }
                    acc[ky * 3] += a0;
                    acc[ky * 3 + 1] += a1;
                    acc[ky * 3 + 2] += a2;
                }
            }
            for (int k = 0; k < 9; ++k) gw[kbase + k] += acc[k];
        }
    };
    if (size_t(out_c_) * in_c_ * oh * ow >= 65536)
        parallel_for(out_c_, weight_grads);
    else
        for (int oc = 0; oc < out_c_; ++oc) weight_grads(oc);

    // input gradients: parallel over input channels (disjoint gpad planes)
    auto input_grads = [&](size_t ic) {
        double* gpad_plane = gpad_.ptr() + ic * ph * pw;
        for (int oc = 0; oc < out_c_; ++oc) {
            const double* g_plane = gy.ptr() + size_t(oc) * oh * ow;
            const double* k = w + ((size_t(oc) * in_c_) + ic) * 9;
            for (int oy = 0; oy < oh; ++oy) {
                const double* g_row = g_plane + size_t(oy) * ow;
                for (int ky = 0; ky < 3; ++ky) {
                    double* grow = gpad_plane + (size_t(oy) * stride + ky) * pw;
                    for (int kx = 0; kx < 3; ++kx) {
                        const double wv = k[ky * 3 + kx];
                        double* gs = grow + kx;
                        if (stride == 1) {
                            for (int ox = 0; ox < ow; ++ox)
                                gs[ox] += wv * g_row[ox];
                        } else {
                            for (int ox = 0; ox < ow; ++ox)
                                gs[ox * 2] += wv * g_row[ox];
                        }
                    }
                }
            }
        }
    };
    if (size_t(out_c_) * in_c_ * oh * ow >= 65536)
        parallel_for(in_c_, input_grads);
    else
        for (int ic = 0; ic < in_c_; ++ic) input_grads(ic);

    gx_.resize({in_c_, in_h_, in_w_});
    for (int c = 0; c < in_c_; ++c)
        for (int y = 0; y < in_h_; ++y)
            std::copy_n(gpad_.ptr() + (size_t(c) * ph + y + 1) * pw + 1, in_w_,
                        gx_.ptr() + (size_t(c) * in_h_ + y) * in_w_);
    return gx_;
}

// ---------------------------------------------------------------------------
// Relu

const Tensor& Relu::forward(const Tensor& x) {
    y_.dims = x.dims;
    y_.data.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i)
        y_.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    return y_;
}

const Tensor& Relu::backward(const Tensor& gy) {
    gx_.dims = y_.dims;
    gx_.data.resize(y_.size());
    for (size_t i = 0; i < y_.size(); ++i)
        gx_.data[i] = y_.data[i] > 0.0 ? gy.data[i] : 0.0;
    return gx_;
}

// ---------------------------------------------------------------------------
// MaxPool2

const Tensor& MaxPool2::forward(const Tensor& x) {
    if (x.dims.size() != 3) throw std::runtime_error("maxpool wants [C,H,W]");
    in_dims_ = x.dims;
    const int c = x.dims[0], h = x.dims[1], w = x.dims[2];
    const int oh = (h + 1) / 2, ow = (w + 1) / 2;
    y_.resize({c, oh, ow});
    argmax_.assign(y_.size(), 0);
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = x.ptr() + size_t(ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = -1;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int yy = oy * 2 + dy, xx = ox * 2 + dx;
                        if (yy >= h || xx >= w) continue;
                        const int idx = yy * w + xx;
                        if (plane[idx] > best) {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                }
                const size_t o = (size_t(ch) * oh + oy) * ow + ox;
                y_.data[o] = best;
                argmax_[o] = best_idx;
            }
        }
    }
    return y_;
}

const Tensor& MaxPool2::backward(const Tensor& gy) {
    expect_shape(gy, y_.dims, "maxpool backward");
    gx_.resize(in_dims_);
    gx_.fill(0.0);
    const int c = in_dims_[0], h = in_dims_[1], w = in_dims_[2];
    const int oh = y_.dims[1], ow = y_.dims[2];
    for (int ch = 0; ch < c; ++ch) {
        double* gplane = gx_.ptr() + size_t(ch) * h * w;
        for (int o = 0; o < oh * ow; ++o) {
            const size_t idx = size_t(ch) * oh * ow + o;
            gplane[argmax_[idx]] += gy.data[idx];
        }
    }
    return gx_;
}

// ---------------------------------------------------------------------------
// UpsampleNearest

const Tensor& UpsampleNearest::forward(const Tensor& x, int out_h, int out_w) {
    if (x.dims.size() != 3) throw std::runtime_error("upsample wants [C,H,W]");
    in_dims_ = x.dims;
    const int c = x.dims[0], h = x.dims[1], w = x.dims[2];
    if (out_h > 2 * h || out_w > 2 * w)
        throw std::runtime_error("upsample target exceeds 2x source");
    y_.resize({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        const double* src = x.ptr() + size_t(ch) * h * w;
        double* dst = y_.ptr() + size_t(ch) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const int sy = std::min(h - 1, y / 2);
            for (int xj = 0; xj < out_w; ++xj)
                dst[size_t(y) * out_w + xj] =
                    src[size_t(sy) * w + std::min(w - 1, xj / 2)];
        }
    }
    return y_;
}

const Tensor& UpsampleNearest::backward(const Tensor& gy) {
    expect_shape(gy, y_.dims, "upsample backward");
    gx_.resize(in_dims_);
    gx_.fill(0.0);
    const int c = in_dims_[0], h = in_dims_[1], w = in_dims_[2];
    const int oh = y_.dims[1], ow = y_.dims[2];
    for (int ch = 0; ch < c; ++ch) {
        double* gsrc = gx_.ptr() + size_t(ch) * h * w;
        const double* g = gy.ptr() + size_t(ch) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            const int sy = std::min(h - 1, y / 2);
            for (int xj = 0; xj < ow; ++xj)
                gsrc[size_t(sy) * w + std::min(w - 1, xj / 2)] +=
                    g[size_t(y) * ow + xj];
        }
    }
    return gx_;
}

// ---------------------------------------------------------------------------
// ConcatChannels

const Tensor& ConcatChannels::forward(const Tensor& a, const Tensor& b) {
    if (a.dims.size() != 3 || b.dims.size() != 3 || a.dims[1] != b.dims[1] ||
        a.dims[2] != b.dims[2])
        throw std::runtime_error("concat shape mismatch: " + shape_str(a.dims) +
                                 " vs " + shape_str(b.dims));
    ca_ = a.dims[0];
    cb_ = b.dims[0];
    y_.resize({ca_ + cb_, a.dims[1], a.dims[2]});
    std::copy(a.data.begin(), a.data.end(), y_.data.begin());
    std::copy(b.data.begin(), b.data.end(), y_.data.begin() + a.size());
    return y_;
}

std::pair<const Tensor*, const Tensor*> ConcatChannels::backward(const Tensor& gy) {
    expect_shape(gy, y_.dims, "concat backward");
    const int h = y_.dims[1], w = y_.dims[2];
    ga_.resize({ca_, h, w});
    gb_.resize({cb_, h, w});
    std::copy_n(gy.data.begin(), ga_.size(), ga_.data.begin());
    std::copy_n(gy.data.begin() + ga_.size(), gb_.size(), gb_.data.begin());
    return {&ga_, &gb_};
}

// ---------------------------------------------------------------------------
// CropCenter

const Tensor& CropCenter::forward(const Tensor& x, int m) {
    if (x.dims.size() != 3) throw std::runtime_error("crop wants [C,H,W]");
    const int c = x.dims[0], h = x.dims[1], w = x.dims[2];
    if ((h - m) % 2 != 0 || (w - m) % 2 != 0 || m > h || m > w)
        throw std::runtime_error("crop cannot center " + std::to_string(m) +
                                 " in " + shape_str(x.dims));
    in_dims_ = x.dims;
    m_ = m;
    const int oy = (h - m) / 2, ox = (w - m) / 2;
    y_.resize({c, m, m});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < m; ++y)
            std::copy_n(x.ptr() + (size_t(ch) * h + oy + y) * w + ox, m,
                        y_.ptr() + (size_t(ch) * m + y) * m);
    return y_;
}

const Tensor& CropCenter::backward(const Tensor& gy) {
    expect_shape(gy, y_.dims, "crop backward");
    gx_.resize(in_dims_);
    gx_.fill(0.0);
    const int c = in_dims_[0], h = in_dims_[1], w = in_dims_[2];
    const int oy = (h - m_) / 2, ox = (w - m_) / 2;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < m_; ++y)
            std::copy_n(gy.ptr() + (size_t(ch) * m_ + y) * m_, m_,
                        gx_.ptr() + (size_t(ch) * h + oy + y) * w + ox);
    return gx_;
}

// ---------------------------------------------------------------------------
// Elementwise / rows

void sigmoid(const Tensor& x, Tensor& y) {
    y.dims = x.dims;
    y.data.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double v = x.data[i];
        if (v >= 0.0) {
            y.data[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            y.data[i] = e / (1.0 + e);
        }
    }
}

void sigmoid_backward(const Tensor& y, const Tensor& gy, Tensor& gx) {
    gx.dims = y.dims;
    gx.data.resize(y.size());
    for (size_t i = 0; i < y.size(); ++i)
        gx.data[i] = gy.data[i] * y.data[i] * (1.0 - y.data[i]);
}

void softmax(const Tensor& x, Tensor& y) {
    y.dims = x.dims;
    y.data.resize(x.size());
    const int cols = x.dims.back();
    const int rows = static_cast<int>(x.size()) / cols;
    for (int r = 0; r < rows; ++r) {
        const double* in = x.ptr() + size_t(r) * cols;
        double* out = y.ptr() + size_t(r) * cols;
        double mx = in[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            out[c] = std::exp(in[c] - mx);
            sum += out[c];
        }
        for (int c = 0; c < cols; ++c) out[c] /= sum;
    }
}

void softmax_backward(const Tensor& p, const Tensor& gy, Tensor& gx) {
    gx.dims = p.dims;
    gx.data.resize(p.size());
    const int cols = p.dims.back();
    const int rows = static_cast<int>(p.size()) / cols;
    for (int r = 0; r < rows; ++r) {
        const double* pr = p.ptr() + size_t(r) * cols;
        const double* g = gy.ptr() + size_t(r) * cols;
        double dotv = 0.0;
        for (int c = 0; c < cols; ++c) dotv += pr[c] * g[c];
        double* out = gx.ptr() + size_t(r) * cols;
        for (int c = 0; c < cols; ++c) out[c] = pr[c] * (g[c] - dotv);
    }
}

// ---------------------------------------------------------------------------
// LstmCell

LstmCell::LstmCell(ParamStore& store, const std::string& name, int in, int hidden)
    : in_(in), hidden_(hidden) {
    wx_ = &store.param(name + ".wx", {4 * hidden, in}, uniform_fan_in(in));
    wh_ = &store.param(name + ".wh", {4 * hidden, hidden}, uniform_fan_in(hidden));
    b_ = &store.param(name + ".b", {4 * hidden}, zeros_init());
}

LstmCell::State LstmCell::initial_state() const {
    State s;
    s.h.resize({hidden_});
    s.c.resize({hidden_});
    return s;
}

void LstmCell::reset() { steps_.clear(); }

namespace {
double sigmoid_scalar(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}
}  // namespace

LstmCell::State LstmCell::step(const Tensor& x, const State& state) {
    if (static_cast<int>(x.size()) != in_)
        throw std::runtime_error("lstm input size mismatch");
    StepCache cache;
    cache.x = x;
    cache.h_prev = state.h;
    cache.c_prev = state.c;
    cache.gates.resize({4 * hidden_});
    const double* wx = wx_->value.ptr();
    const double* wh = wh_->value.ptr();
    const double* b = b_->value.ptr();
    for (int g = 0; g < 4 * hidden_; ++g) {
        double acc = b[g];
        const double* wx_row = wx + size_t(g) * in_;
        for (int i = 0; i < in_; ++i) acc += wx_row[i] * x.data[i];
        const double* wh_row = wh + size_t(g) * hidden_;
        for (int i = 0; i < hidden_; ++i) acc += wh_row[i] * state.h.data[i];
        cache.gates.data[g] = acc;
    }
    State out;
    out.h.resize({hidden_});
    out.c.resize({hidden_});
    cache.tanh_c.resize({hidden_});
    // gate order: input, forget, cell, output
    for (int i = 0; i < hidden_; ++i) {
        const double gi = sigmoid_scalar(cache.gates.data[i]);
        const double gf = sigmoid_scalar(cache.gates.data[hidden_ + i]);
        const double gg = std::tanh(cache.gates.data[2 * hidden_ + i]);
        const double go = sigmoid_scalar(cache.gates.data[3 * hidden_ + i]);
        out.c.data[i] = gf * state.c.data[i] + gi * gg;
        cache.tanh_c.data[i] = std::tanh(out.c.data[i]);
        out.h.data[i] = go * cache.tanh_c.data[i];
    }
    cache.c = out.c;
    cache.h = out.h;
    steps_.push_back(std::move(cache));
    return out;
}

void LstmCell::backward(const Tensor& gh_last, std::vector<Tensor>& gx_steps) {
    gx_steps.assign(steps_.size(), Tensor());
    Tensor gh = gh_last;
    Tensor gc;
    gc.resize({hidden_});
    Tensor ggates;
    ggates.resize({4 * hidden_});
    double* gwx = wx_->grad.ptr();
    double* gwh = wh_->grad.ptr();
    double* gb = b_->grad.ptr();
    const double* wx = wx_->value.ptr();
    const double* wh = wh_->value.ptr();
    for (int t = static_cast<int>(steps_.size()) - 1; t >= 0; --t) {
        const StepCache& s = steps_[t];
        for (int i = 0; i < hidden_; ++i) {
            const double gi = sigmoid_scalar(s.gates.data[i]);
            const double gf = sigmoid_scalar(s.gates.data[hidden_ + i]);
            const double gg = std::tanh(s.gates.data[2 * hidden_ + i]);
            const double go = sigmoid_scalar(s.gates.data[3 * hidden_ + i]);
            const double tc = s.tanh_c.data[i];
            const double dgo = gh.data[i] * tc;
            const double dc = gc.data[i] + gh.data[i] * go * (1.0 - tc * tc);
            const double dgi = dc * gg;
            const double dgg = dc * gi;
            const double dgf = dc * s.c_prev.data[i];
            gc.data[i] = dc * gf;  // becomes gc for t-1
            ggates.data[i] = dgi * gi * (1.0 - gi);
            ggates.data[hidden_ + i] = dgf * gf * (1.0 - gf);
            ggates.data[2 * hidden_ + i] = dgg * (1.0 - gg * gg);
            ggates.data[3 * hidden_ + i] = dgo * go * (1.0 - go);
        }
        Tensor& gx = gx_steps[t];
        gx.resize({in_});
        Tensor gh_prev;
        gh_prev.resize({hidden_});
        for (int g = 0; g < 4 * hidden_; ++g) {
            const double gg = ggates.data[g];
            gb[g] += gg;
            double* gwx_row = gwx + size_t(g) * in_;
            const double* wx_row = wx + size_t(g) * in_;
            for (int i = 0; i < in_; ++i) {
                gwx_row[i] += gg * s.x.data[i];
                gx.data[i] += gg * wx_row[i];
            }
            double* gwh_row = gwh + size_t(g) * hidden_;
            const double* wh_row = wh + size_t(g) * hidden_;
            for (int i = 0; i < hidden_; ++i) {
                gwh_row[i] += gg * s.h_prev.data[i];
                gh_prev.data[i] += gg * wh_row[i];
            }
        }
        gh = std::move(gh_prev);
    }
    steps_.clear();
}

}  // namespace peghole::neuro

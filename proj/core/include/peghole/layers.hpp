#pragma once

#include <string>
#include <vector>

#include "peghole/params.hpp"
#include "peghole/tensor.hpp"

namespace peghole::neuro {

// Layers own their scratch (cached activations) but not their parameters,
// which live in a ParamStore. Several layer instances may bind the same
// store for read-only parallel inference; training is single-writer.

class Dense {
public:
    Dense(ParamStore& store, const std::string& name, int in, int out);

    const Tensor& forward(const Tensor& x);       // x: [in]
    const Tensor& backward(const Tensor& gy);     // gy: [out] -> gx: [in]

    int in_dim() const { return in_; }
    int out_dim() const { return out_; }

private:
    int in_, out_;
    Param* w_;  // [out, in]
    Param* b_;  // [out]
    Tensor x_, y_, gx_;
};

// 3x3 convolution, stride 1 or 2, zero padding 1. Input/output are [C,H,W].
class Conv2d {
public:
    Conv2d(ParamStore& store, const std::string& name, int in_c, int out_c,
           int stride = 1);

    const Tensor& forward(const Tensor& x);
    const Tensor& backward(const Tensor& gy);

    int out_c() const { return out_c_; }

private:
    int in_c_, out_c_, stride_;
    Param* w_;  // [out_c, in_c, 3, 3]
    Param* b_;  // [out_c]
    Tensor padded_, y_, gx_, gpad_;
    int in_h_ = 0, in_w_ = 0;
};

class Relu {
public:
    const Tensor& forward(const Tensor& x);
    const Tensor& backward(const Tensor& gy);

private:
    Tensor y_, gx_;
};

// 2x2 max pooling, stride 2; odd edges padded with -inf (output ceil(n/2)).
class MaxPool2 {
public:
    const Tensor& forward(const Tensor& x);
    const Tensor& backward(const Tensor& gy);

private:
    Tensor y_, gx_;
    std::vector<int> argmax_;
    std::vector<int> in_dims_;
};

// Nearest-neighbor upsampling to an explicit target size (2x then crop,
// so odd encoder sizes round-trip).
class UpsampleNearest {
public:
    const Tensor& forward(const Tensor& x, int out_h, int out_w);
    const Tensor& backward(const Tensor& gy);

private:
    Tensor y_, gx_;
    std::vector<int> in_dims_;
};

// Channel concatenation of two [C,H,W] tensors.
class ConcatChannels {
public:
    const Tensor& forward(const Tensor& a, const Tensor& b);
    // splits gy back; returns (ga, gb)
    std::pair<const Tensor*, const Tensor*> backward(const Tensor& gy);

private:
    Tensor y_, ga_, gb_;
    int ca_ = 0, cb_ = 0;
};

// Center crop of a [C,H,W] tensor to [C,M,M]; requires (H-M) and (W-M) even.
class CropCenter {
public:
    const Tensor& forward(const Tensor& x, int m);
    const Tensor& backward(const Tensor& gy);

private:
    Tensor y_, gx_;
    std::vector<int> in_dims_;
    int m_ = 0;
};

// Numerically stabilized elementwise sigmoid.
void sigmoid(const Tensor& x, Tensor& y);
// gy through sigmoid given forward output y.
void sigmoid_backward(const Tensor& y, const Tensor& gy, Tensor& gx);

// Stabilized softmax over the last axis of a [N] or [R,C] tensor.
void softmax(const Tensor& x, Tensor& y);
// Given softmax output p and upstream gy, gx = (diag(p) - p p^T) gy per row.
void softmax_backward(const Tensor& p, const Tensor& gy, Tensor& gx);

// Gated recurrent cell (LSTM). Single layer; caches per-step activations for
// backpropagation through time.
class LstmCell {
public:
    LstmCell(ParamStore& store, const std::string& name, int in, int hidden);

    struct State {
        Tensor h, c;
    };
    State initial_state() const;

    void reset();  // drops cached steps
    // One recurrence; appends the step to the BPTT cache.
    State step(const Tensor& x, const State& state);
    // Walks cached steps in reverse. gh_last is dL/dh of the final step.
    // Per-step input grads are written to gx_steps (oldest first).
    void backward(const Tensor& gh_last, std::vector<Tensor>& gx_steps);

    int hidden() const { return hidden_; }
    int in_dim() const { return in_; }

private:
    struct StepCache {
        Tensor x, h_prev, c_prev, gates, c, h, tanh_c;
    };
    int in_, hidden_;
    Param* wx_;  // [4H, in]
    Param* wh_;  // [4H, H]
    Param* b_;   // [4H]
    std::vector<StepCache> steps_;
};

}  // namespace peghole::neuro

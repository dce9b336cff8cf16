#pragma once

#include <string>

#include "peghole/layers.hpp"
#include "peghole/params.hpp"

namespace peghole::neuro {

// Three-level encoder-decoder with skip connections (channels 8/16/32),
// dense prediction head. Works on any [in_c, H, W]; output is
// [out_c, H, W] logits.
class EncoderDecoderNet {
public:
    EncoderDecoderNet(ParamStore& store, const std::string& prefix, int in_c,
                      int out_c);

    const Tensor& forward(const Tensor& x);
    const Tensor& backward(const Tensor& gy);

    int in_channels() const { return in_c_; }
    int out_channels() const { return out_c_; }

private:
    int in_c_, out_c_;
    Conv2d e1a_, e1b_, e2a_, e2b_, b1_, b2_, d2a_, d2b_, d1a_, d1b_, head_;
    Relu r1a_, r1b_, r2a_, r2b_, rb1_, rb2_, rd2a_, rd2b_, rd1a_, rd1b_;
    MaxPool2 pool1_, pool2_;
    UpsampleNearest up2_, up1_;
    ConcatChannels cat2_, cat1_;
    int h1_ = 0, w1_ = 0, h2_ = 0, w2_ = 0;
};

// Three-level convolutional encoder used by the rotation similarity head:
// [1, H, W] binary mask -> [32, ceil(H/8), ceil(W/8)] feature map.
class MaskEncoderNet {
public:
    MaskEncoderNet(ParamStore& store, const std::string& prefix);

    const Tensor& forward(const Tensor& x);
    const Tensor& backward(const Tensor& gy);

private:
    Conv2d c1_, c2_, c3_, c4_;
    Relu r1_, r2_, r3_, r4_;
    MaxPool2 p1_, p2_, p3_;
};

// Strided conv stack for the image-input policy baseline:
// [3, H, W] -> flat feature vector -> dense 128.
class ImageEncoderNet {
public:
    ImageEncoderNet(ParamStore& store, const std::string& prefix, int h, int w);

    const Tensor& forward(const Tensor& x);  // returns [128]
    const Tensor& backward(const Tensor& gy);

    int out_dim() const { return 128; }

private:
    Conv2d c1_, c2_, c3_;
    Relu r1_, r2_, r3_, r4_;
    Dense fc_;
    Tensor flat_, gflat_, gx_;
    std::vector<int> conv_dims_;
};

}  // namespace peghole::neuro

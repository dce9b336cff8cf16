#include "peghole/nets.hpp"

namespace peghole::neuro {

EncoderDecoderNet::EncoderDecoderNet(ParamStore& store, const std::string& p,
                                     int in_c, int out_c)
    : in_c_(in_c),
      out_c_(out_c),
      e1a_(store, p + ".e1a", in_c, 8),
      e1b_(store, p + ".e1b", 8, 8),
      e2a_(store, p + ".e2a", 8, 16),
      e2b_(store, p + ".e2b", 16, 16),
      b1_(store, p + ".b1", 16, 32),
      b2_(store, p + ".b2", 32, 32),
      d2a_(store, p + ".d2a", 48, 16),
      d2b_(store, p + ".d2b", 16, 16),
      d1a_(store, p + ".d1a", 24, 8),
      d1b_(store, p + ".d1b", 8, 8),
      head_(store, p + ".head", 8, out_c) {}

const Tensor& EncoderDecoderNet::forward(const Tensor& x) {
    const Tensor& s1 = r1b_.forward(e1b_.forward(r1a_.forward(e1a_.forward(x))));
    h1_ = s1.dims[1];
    w1_ = s1.dims[2];
    const Tensor& p1 = pool1_.forward(s1);
    const Tensor& s2 = r2b_.forward(e2b_.forward(r2a_.forward(e2a_.forward(p1))));
    h2_ = s2.dims[1];
    w2_ = s2.dims[2];
    const Tensor& p2 = pool2_.forward(s2);
    const Tensor& bo = rb2_.forward(b2_.forward(rb1_.forward(b1_.forward(p2))));
    const Tensor& u2 = up2_.forward(bo, h2_, w2_);
    const Tensor& c2 = cat2_.forward(u2, s2);
    const Tensor& d2 = rd2b_.forward(d2b_.forward(rd2a_.forward(d2a_.forward(c2))));
    const Tensor& u1 = up1_.forward(d2, h1_, w1_);
    const Tensor& c1 = cat1_.forward(u1, s1);
    const Tensor& d1 = rd1b_.forward(d1b_.forward(rd1a_.forward(d1a_.forward(c1))));
    return head_.forward(d1);
}

const Tensor& EncoderDecoderNet::backward(const Tensor& gy) {
    const Tensor& gd1 = head_.backward(gy);
    const Tensor& gc1 =
        d1a_.backward(rd1a_.backward(d1b_.backward(rd1b_.backward(gd1))));
    auto [gu1, gs1b] = cat1_.backward(gc1);
    const Tensor& gd2 = up1_.backward(*gu1);
    const Tensor& gc2 =
        d2a_.backward(rd2a_.backward(d2b_.backward(rd2b_.backward(gd2))));
    auto [gu2, gs2b] = cat2_.backward(gc2);
    const Tensor& gbo = up2_.backward(*gu2);
    const Tensor& gp2 =
        b1_.backward(rb1_.backward(b2_.backward(rb2_.backward(gbo))));
    // skip gradients join the pooled path at the encoder outputs
    Tensor gs2 = pool2_.backward(gp2);
    for (size_t i = 0; i < gs2.size(); ++i) gs2.data[i] += gs2b->data[i];
    const Tensor& gp1 =
        e2a_.backward(r2a_.backward(e2b_.backward(r2b_.backward(gs2))));
    Tensor gs1 = pool1_.backward(gp1);
    for (size_t i = 0; i < gs1.size(); ++i) gs1.data[i] += gs1b->data[i];
    return e1a_.backward(r1a_.backward(e1b_.backward(r1b_.backward(gs1))));
}

MaskEncoderNet::MaskEncoderNet(ParamStore& store, const std::string& p)
    : c1_(store, p + ".c1", 1, 8),
      c2_(store, p + ".c2", 8, 8),
      c3_(store, p + ".c3", 8, 16),
      c4_(store, p + ".c4", 16, 32) {}

const Tensor& MaskEncoderNet::forward(const Tensor& x) {
    const Tensor& a = r2_.forward(c2_.forward(r1_.forward(c1_.forward(x))));
    const Tensor& b = r3_.forward(c3_.forward(p1_.forward(a)));
    const Tensor& c = r4_.forward(c4_.forward(p2_.forward(b)));
    return p3_.forward(c);
}

const Tensor& MaskEncoderNet::backward(const Tensor& gy) {
    const Tensor& gc = p3_.backward(gy);
    const Tensor& gb = p2_.backward(c4_.backward(r4_.backward(gc)));
    const Tensor& ga = p1_.backward(c3_.backward(r3_.backward(gb)));
    return c1_.backward(r1_.backward(c2_.backward(r2_.backward(ga))));
}

ImageEncoderNet::ImageEncoderNet(ParamStore& store, const std::string& p, int h,
                                 int w)
    : c1_(store, p + ".c1", 3, 8, 2),
      c2_(store, p + ".c2", 8, 16, 2),
      c3_(store, p + ".c3", 16, 32, 2),
      fc_(store, p + ".fc",
          32 * (((h - 1) / 2 / 2 / 2) + 1) * (((w - 1) / 2 / 2 / 2) + 1), 128) {}

const Tensor& ImageEncoderNet::forward(const Tensor& x) {
    const Tensor& a = r1_.forward(c1_.forward(x));
    const Tensor& b = r2_.forward(c2_.forward(a));
    const Tensor& c = r3_.forward(c3_.forward(b));
    conv_dims_ = c.dims;
    flat_.dims = {static_cast<int>(c.size())};
    flat_.data = c.data;
    return r4_.forward(fc_.forward(flat_));
}

const Tensor& ImageEncoderNet::backward(const Tensor& gy) {
    const Tensor& gflat = fc_.backward(r4_.backward(gy));
    gflat_.dims = conv_dims_;
    gflat_.data = gflat.data;
    const Tensor& gb = c3_.backward(r3_.backward(gflat_));
    const Tensor& ga = c2_.backward(r2_.backward(gb));
    return c1_.backward(r1_.backward(ga));
}

}  // namespace peghole::neuro

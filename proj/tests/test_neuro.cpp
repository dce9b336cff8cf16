#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "peghole/gradcheck.hpp"
#include "peghole/layers.hpp"
#include "peghole/nets.hpp"
#include "peghole/params.hpp"
#include "peghole/rng.hpp"

using namespace peghole;
using namespace peghole::neuro;

namespace {

void randomize(Tensor& t, Rng& rng, double scale = 1.0) {
    for (double& v : t.data) v = rng.uniform(-scale, scale);
}

// Projects a tensor to a scalar with fixed random weights so every output
// element contributes to the finite-difference loss.
struct Projection {
    Tensor weights;
    explicit Projection(const std::vector<int>& dims, Rng& rng) {
        weights.resize(dims);
        randomize(weights, rng);
    }
    double loss(const Tensor& y) const {
        double acc = 0.0;
        for (size_t i = 0; i < y.size(); ++i) acc += weights.data[i] * y.data[i];
        return acc;
    }
    Tensor grad() const { return weights; }
};

}  // namespace

TEST_CASE("dense with zero weights returns the bias") {
    ParamStore store(1);
    Dense dense(store, "d", 4, 3);
    store.at("d.w").value.fill(0.0);
    store.at("d.b").value.data = {0.5, -1.5, 2.0};
    Tensor x({4});
    x.data = {9, -3, 4, 7};
    const Tensor& y = dense.forward(x);
    CHECK(y.data[0] == doctest::Approx(0.5));
    CHECK(y.data[1] == doctest::Approx(-1.5));
    CHECK(y.data[2] == doctest::Approx(2.0));
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(3);
    Tensor x({4, 6});
    randomize(x, rng, 100.0);
    Tensor p;
    softmax(x, p);
    for (int r = 0; r < 4; ++r) {
        double s = 0.0;
        for (int c = 0; c < 6; ++c) s += p.data[r * 6 + c];
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("softmax and sigmoid stay finite on large inputs") {
    Tensor x({2, 3});
    x.data = {1e3, -1e3, 0.0, 999.0, -999.0, 500.0};
    Tensor p;
    softmax(x, p);
    p.check_finite("softmax");
    Tensor s;
    sigmoid(x, s);
    s.check_finite("sigmoid");
    for (double v : s.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("identity kernel reproduces an all-ones input") {
    ParamStore store(1);
    Conv2d conv(store, "c", 1, 1);
    store.at("c.w").value.fill(0.0);
    store.at("c.w").value.data[4] = 1.0;  // center tap
    store.at("c.b").value.fill(0.0);
    Tensor x({1, 5, 5});
    x.fill(1.0);
    const Tensor& y = conv.forward(x);
    for (int v = 1; v < 4; ++v)
        for (int u = 1; u < 4; ++u) CHECK(y.data[v * 5 + u] == doctest::Approx(1.0));
}

TEST_CASE("layer backward passes match finite differences over 100 seeds") {
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed * 7919 + 13);
        ParamStore store(seed);
        Param& x = store.param("x", {2, 6, 6}, [&](Tensor& t, Rng&) {
            randomize(t, rng);
        });

        const int which = static_cast<int>(seed % 5);
        if (which == 0) {
            Conv2d conv(store, "conv", 2, 3, (seed % 2) ? 2 : 1);
            Relu relu;
            Rng prng(seed + 1);
            Projection proj(conv.forward(x.value).dims, prng);
            auto fwd = [&] { return proj.loss(relu.forward(conv.forward(x.value))); };
            auto bwd = [&] {
                double l = proj.loss(relu.forward(conv.forward(x.value)));
                x.grad.data = conv.backward(relu.backward(proj.grad())).data;
                return l;
            };
            auto report = grad_check(store, fwd, bwd, 1e-4);
            CHECK(report.pass());
        } else if (which == 1) {
            Dense dense(store, "fc", 72, 9);
            Tensor flat({72});
            Rng prng(seed + 1);
            Projection proj({9}, prng);
            auto run = [&] {
                flat.data = x.value.data;
                return dense.forward(flat);
            };
            auto fwd = [&] { return proj.loss(run()); };
            auto bwd = [&] {
                double l = proj.loss(run());
                x.grad.data = dense.backward(proj.grad()).data;
                return l;
            };
            auto report = grad_check(store, fwd, bwd, 1e-4);
            CHECK(report.pass());
        } else if (which == 2) {
            MaxPool2 pool;
            UpsampleNearest up;
            Rng prng(seed + 1);
            Projection proj({2, 6, 6}, prng);
            auto fwd = [&] {
                return proj.loss(up.forward(pool.forward(x.value), 6, 6));
            };
            auto bwd = [&] {
                double l = proj.loss(up.forward(pool.forward(x.value), 6, 6));
                x.grad.data = pool.backward(up.backward(proj.grad())).data;
                return l;
            };
            auto report = grad_check(store, fwd, bwd, 1e-4);
            CHECK(report.pass());
        } else if (which == 3) {
            Tensor s;
            Rng prng(seed + 1);
            Projection proj({2, 6, 6}, prng);
            Tensor gx;
            auto fwd = [&] {
                sigmoid(x.value, s);
                return proj.loss(s);
            };
            auto bwd = [&] {
                sigmoid(x.value, s);
                sigmoid_backward(s, proj.grad(), gx);
                x.grad.data = gx.data;
                return proj.loss(s);
            };
            auto report = grad_check(store, fwd, bwd, 1e-4);
            CHECK(report.pass());
        } else {
            Tensor row({12, 6});
            Rng prng(seed + 1);
            Projection proj({12, 6}, prng);
            Tensor p, gx;
            auto run = [&] {
                row.data = x.value.data;
                softmax(row, p);
                return proj.loss(p);
            };
            auto fwd = run;
            auto bwd = [&] {
                double l = run();
                softmax_backward(p, proj.grad(), gx);
                x.grad.data = gx.data;
                return l;
            };
            auto report = grad_check(store, fwd, bwd, 1e-4);
            CHECK(report.pass());
        }
    }
}

TEST_CASE("recurrent cell basics") {
    ParamStore store(0);
    LstmCell cell(store, "lstm", 4, 3);
    for (auto& p : store.params()) p->value.fill(0.0);
    Tensor x({4});
    x.data = {1, -2, 3, -4};
    auto out = cell.step(x, cell.initial_state());
    for (double v : out.h.data) CHECK(v == doctest::Approx(0.0));
    for (double v : out.c.data) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("recurrent cell weights round trip through serialization") {
    ParamStore store(123);
    LstmCell cell(store, "lstm", 5, 4);
    Rng rng(9);
    Tensor x({5});
    randomize(x, rng);
    auto before = cell.step(x, cell.initial_state());
    store.save("lstm_roundtrip.phw");

    ParamStore loaded(0);
    loaded.load("lstm_roundtrip.phw");
    LstmCell cell2(loaded, "lstm", 5, 4);
    auto after = cell2.step(x, cell2.initial_state());
    CHECK(before.h.data == after.h.data);
    CHECK(before.c.data == after.c.data);
    std::remove("lstm_roundtrip.phw");
}

TEST_CASE("gradient through 5 unrolled recurrent steps matches finite differences") {
    for (uint64_t seed = 0; seed < 3; ++seed) {
        ParamStore store(seed + 50);
        LstmCell cell(store, "lstm", 6, 5);
        Rng rng(seed);
        std::vector<Tensor> inputs(5, Tensor({6}));
        for (auto& t : inputs) randomize(t, rng);
        Rng prng(seed + 1);
        Projection proj({5}, prng);
        auto fwd = [&] {
            cell.reset();
            auto st = cell.initial_state();
            for (const auto& t : inputs) st = cell.step(t, st);
            double l = proj.loss(st.h);
            cell.reset();
            return l;
        };
        auto bwd = [&] {
            cell.reset();
            auto st = cell.initial_state();
            for (const auto& t : inputs) st = cell.step(t, st);
            double l = proj.loss(st.h);
            std::vector<Tensor> gx;
            cell.backward(proj.grad(), gx);
            return l;
        };
        auto report = grad_check(store, fwd, bwd, 1e-4);
        CHECK(report.pass());
    }
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        ParamStore store(4);
        Rng rng(4);
        Param& p = store.param("p", {8}, [&](Tensor& t, Rng&) { randomize(t, rng); });
        const std::vector<double> before = p.value.data;
        Adam opt(0.1);
        opt.step(store);
        CHECK(p.value.data == before);
    }
    SUBCASE("converges on a 2-D quadratic") {
        ParamStore store(0);
        Param& p = store.param("p", {2}, zeros_init());
        p.value.data = {1.0, 1.0};
        Adam opt(0.1);
        for (int it = 0; it < 200; ++it) {
            // f = 0.5*((x-0.3)^2 + 2*(y+0.2)^2)
            p.grad.data[0] = p.value.data[0] - 0.3;
            p.grad.data[1] = 2.0 * (p.value.data[1] + 0.2);
            opt.step(store);
        }
        CHECK(std::abs(p.value.data[0] - 0.3) < 1e-3);
        CHECK(std::abs(p.value.data[1] + 0.2) < 1e-3);
    }
    SUBCASE("same seed gives bit-identical trajectories") {
        auto run = [] {
            ParamStore store(77);
            Param& p = store.param("p", {4}, uniform_fan_in(4));
            Adam opt(0.05);
            Rng rng(5);
            for (int it = 0; it < 50; ++it) {
                for (size_t i = 0; i < 4; ++i)
                    p.grad.data[i] = rng.uniform(-1, 1) + p.value.data[i];
                opt.step(store);
            }
            return p.value.data;
        };
        CHECK(run() == run());
    }
}

TEST_CASE("deliberately corrupted backward fails the check") {
    ParamStore store(8);
    Dense dense(store, "fc", 5, 4);
    Rng rng(8);
    Param& x = store.param("x", {5}, [&](Tensor& t, Rng&) { randomize(t, rng); });
    Rng prng(9);
    Projection proj({4}, prng);
    auto fwd = [&] { return proj.loss(dense.forward(x.value)); };
    auto bwd = [&] {
        double l = proj.loss(dense.forward(x.value));
        Tensor g = proj.grad();
        g.data[0] += 0.25;  // corruption
        dense.backward(g);
        return l;
    };
    auto report = grad_check(store, fwd, bwd, 1e-4);
    CHECK_FALSE(report.pass());
}

TEST_CASE("weight container round trips bit-exactly") {
    ParamStore store(314);
    EncoderDecoderNet net(store, "net", 3, 2);
    store.save("weights_roundtrip.phw");
    ParamStore loaded(0);
    loaded.load("weights_roundtrip.phw");
    REQUIRE(loaded.params().size() == store.params().size());
    for (size_t i = 0; i < store.params().size(); ++i) {
        CHECK(loaded.params()[i]->name == store.params()[i]->name);
        CHECK(loaded.params()[i]->value.dims == store.params()[i]->value.dims);
        CHECK(loaded.params()[i]->value.data == store.params()[i]->value.data);
    }
    std::remove("weights_roundtrip.phw");
}

TEST_CASE("encoder-decoder forward is deterministic and shape-preserving") {
    ParamStore store(21);
    EncoderDecoderNet net(store, "net", 3, 1);
    Tensor x({3, 63, 63});
    Rng rng(2);
    randomize(x, rng);
    const Tensor y1 = net.forward(x);
    const Tensor y2 = net.forward(x);
    CHECK(y1.dims == std::vector<int>{1, 63, 63});
    CHECK(y1.data == y2.data);
}

TEST_CASE("encoder-decoder gradients match finite differences on a small input") {
    ParamStore store(33);
    EncoderDecoderNet net(store, "net", 2, 1);
    Rng rng(12);
    Param& x = store.param("x", {2, 9, 9}, [&](Tensor& t, Rng&) {
        randomize(t, rng);
    });
    Rng prng(13);
    Projection proj({1, 9, 9}, prng);
    auto fwd = [&] { return proj.loss(net.forward(x.value)); };
    auto bwd = [&] {
        double l = proj.loss(net.forward(x.value));
        x.grad.data = net.backward(proj.grad()).data;
        return l;
    };
    auto report = grad_check(store, fwd, bwd, 1e-4);
    CHECK(report.pass());
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "foodfuse/adam.hpp"
#include "foodfuse/ops.hpp"
#include "foodfuse/rng.hpp"

using namespace foodfuse;

TEST_CASE("registry add find and duplicate rejection") {
    ParamRegistry32 reg;
    Tensor32 a = Tensor32::zeros({2, 3});
    Tensor32 b = Tensor32::zeros({4});
    reg.add("enc.w", a);
    reg.add("enc.b", b);
    CHECK(reg.total_size() == 10);
    REQUIRE(reg.find("enc.w") != nullptr);
    CHECK(reg.find("enc.w")->numel() == 6);
    CHECK(reg.find("missing") == nullptr);
    CHECK_THROWS_AS(reg.add("enc.w", b), ConfigError);
}

TEST_CASE("registry tensors share storage with the originals") {
    ParamRegistry32 reg;
    Tensor32 w = Tensor32::full({2}, 1.f);
    reg.add("w", w);
    reg.find("w")->data()[0] = 5.f;
    CHECK(w.data()[0] == 5.f);  // same buffer
}

TEST_CASE("zero_grads clears accumulated gradients") {
    ParamRegistry32 reg;
    Tensor32 w = Tensor32::full({2}, 1.f).set_requires_grad();
    reg.add("w", w);
    Tensor32 loss = mse(w, Tensor32::zeros({2}));
    loss.backward();
    REQUIRE(w.has_grad());
    CHECK(w.grad()[0] != 0.f);
    reg.zero_grads();
    CHECK(w.grad()[0] == 0.f);
}

TEST_CASE("adam constant gradient walks at the learning rate") {
    // bias-corrected Adam with a constant gradient moves by lr * sign(g)
    Adam64::Config cfg;
    cfg.lr = 0.1;
    cfg.beta1 = 0.5;
    cfg.beta2 = 0.99;
    Adam64 opt(cfg);

    ParamRegistry64 reg;
    Tensor64 p = Tensor64::full({1}, 1.0).set_requires_grad();
    reg.add("p", p);

    const double expect[5] = {0.9, 0.8, 0.7, 0.6, 0.5};
    for (int t = 0; t < 5; t++) {
        p.zero_grad();
        p.grad_mut()[0] = 0.5;
        opt.step(reg);
        CHECK(p.data()[0] == doctest::Approx(expect[t]).epsilon(1e-7));
    }
}

TEST_CASE("adam trajectory matches hand-computed oracle") {
    Adam64::Config cfg;
    cfg.lr = 0.1;
    cfg.beta1 = 0.5;
    cfg.beta2 = 0.99;
    Adam64 opt(cfg);

    ParamRegistry64 reg;
    Tensor64 p = Tensor64::full({1}, 2.0).set_requires_grad();
    reg.add("p", p);

    const double grads[3] = {1.0, -0.25, 0.75};
    const double expect[3] = {1.900000001, 1.8770826598581316, 1.8090544477669843};
    for (int t = 0; t < 3; t++) {
        p.zero_grad();
        p.grad_mut()[0] = grads[t];
        opt.step(reg);
        CHECK(p.data()[0] == doctest::Approx(expect[t]).epsilon(1e-12));
    }
    // opposite-sign gradients cancel the first moment exactly: zero update
    Tensor64 q = Tensor64::full({1}, 2.0).set_requires_grad();
    ParamRegistry64 reg2;
    reg2.add("q", q);
    Adam64 opt2(cfg);
    q.grad_mut()[0] = 1.0;
    opt2.step(reg2);
    const double after_first = q.data()[0];
    q.zero_grad();
    q.grad_mut()[0] = -0.5;
    opt2.step(reg2);
    CHECK(q.data()[0] == doctest::Approx(after_first).epsilon(1e-12));
}

TEST_CASE("adam skips frozen and gradient-free parameters") {
    Adam32 opt;
    ParamRegistry32 reg;
    Tensor32 frozen = Tensor32::full({1}, 3.f);  // requires_grad off
    Tensor32 idle = Tensor32::full({1}, 4.f).set_requires_grad();  // no grad ever set
    reg.add("frozen", frozen);
    reg.add("idle", idle);
    opt.step(reg);
    CHECK(frozen.data()[0] == 3.f);
    CHECK(idle.data()[0] == 4.f);
    CHECK(opt.states().empty());
}

TEST_CASE("adam drives a quadratic to its minimum through the tape") {
    Adam32::Config cfg;
    cfg.lr = 0.05;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.999;
    Adam32 opt(cfg);

    ParamRegistry32 reg;
    Tensor32 p = Tensor32::full({1}, -1.f).set_requires_grad();
    reg.add("p", p);
    const Tensor32 target = Tensor32::full({1}, 3.f);

    double last = 1e30;
    for (int i = 0; i < 400; i++) {
        reg.zero_grads();
        Tensor32 loss = mse(p, target);
        loss.backward();
        opt.step(reg);
        last = loss.item();
    }
    CHECK(p.data()[0] == doctest::Approx(3.f).epsilon(1e-2));
    CHECK(last < 1e-3);
}

TEST_CASE("adam state round trips through save and restore") {
    Adam64::Config cfg;
    cfg.lr = 0.1;
    cfg.beta1 = 0.5;
    cfg.beta2 = 0.99;

    // run A: five steps straight through
    Adam64 a(cfg);
    ParamRegistry64 ra;
    Tensor64 pa = Tensor64::full({2}, 1.0).set_requires_grad();
    ra.add("p", pa);
    RngStream ga(7, "grads");
    std::vector<double> drawn;
    for (int t = 0; t < 5; t++) {
        pa.zero_grad();
        for (int i = 0; i < 2; i++) {
            const double g = ga.normal();
            drawn.push_back(g);
            pa.grad_mut()[static_cast<size_t>(i)] = g;
        }
        a.step(ra);
    }

    // run B: three steps, transplant state into a fresh optimizer, two more
    Adam64 b1(cfg);
    ParamRegistry64 rb;
    Tensor64 pb = Tensor64::full({2}, 1.0).set_requires_grad();
    rb.add("p", pb);
    size_t k = 0;
    for (int t = 0; t < 3; t++) {
        pb.zero_grad();
        for (int i = 0; i < 2; i++) pb.grad_mut()[static_cast<size_t>(i)] = drawn[k++];
        b1.step(rb);
    }
    Adam64 b2(cfg);
    b2.restore_state("p", b1.states().at("p"));
    for (int t = 0; t < 2; t++) {
        pb.zero_grad();
        for (int i = 0; i < 2; i++) pb.grad_mut()[static_cast<size_t>(i)] = drawn[k++];
        b2.step(rb);
    }
    CHECK(pa.data()[0] == doctest::Approx(pb.data()[0]).epsilon(1e-15));
    CHECK(pa.data()[1] == doctest::Approx(pb.data()[1]).epsilon(1e-15));
}

TEST_CASE("adam rejects invalid configs") {
    Adam32::Config bad;
    bad.lr = 0.0;
    CHECK_THROWS_AS(Adam32{bad}, ConfigError);
    Adam32::Config bad2;
    bad2.beta1 = 1.0;
    CHECK_THROWS_AS(Adam32{bad2}, ConfigError);
    Adam32 ok;
    CHECK_THROWS_AS(ok.set_lr(-1.0), ConfigError);
}

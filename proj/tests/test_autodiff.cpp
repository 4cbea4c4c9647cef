#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fdi/autodiff.hpp"
#include "fdi/checkpoint.hpp"
#include "fdi/errors.hpp"
#include "fdi/layers.hpp"
#include "fdi/optimizer.hpp"
#include "gradcheck.hpp"

using namespace fdi;
using ad::Tensor;
using nn::Activation;
using nn::LayerSpec;

namespace {

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

void set_values(Tensor t, const std::vector<double>& v) {
    auto dst = t.mutable_values();
    REQUIRE(dst.size() == v.size());
    std::copy(v.begin(), v.end(), dst.begin());
}

}  // namespace

TEST_CASE("dense layer with identity weights passes input through") {
    nn::Model m({LayerSpec::dense(2)}, {2}, 1);
    set_values(m.parameters()[0].tensor, {1, 0, 0, 1});
    set_values(m.parameters()[1].tensor, {0, 0});
    const Tensor y = m.forward(Tensor::constant({1, 2}, {1, 2}));
    CHECK(vec(y.values()) == std::vector<double>{1, 2});
}

TEST_CASE("softmax of equal logits is uniform and rows sum to one") {
    const Tensor y = ad::softmax(Tensor::constant({1, 3}, {0, 0, 0}));
    for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    const auto logits = testing::random_values(50 * 7, 3, 30.0);
    const Tensor z = ad::softmax(Tensor::constant({50, 7}, logits));
    for (std::size_t r = 0; r < 50; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 7; ++c) s += z.at(r * 7 + c);
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    const Tensor big = ad::softmax(Tensor::constant({1, 2}, {1000.0, 0.0}));
    CHECK(big.at(0) == 1.0);
}

TEST_CASE("conv1d by hand") {
    const Tensor x = Tensor::constant({1, 1, 4}, {1, 2, 3, 4});
    const Tensor w = Tensor::constant({1, 1, 3}, {1, 1, 1});
    const Tensor b = Tensor::constant({1}, {0});
    CHECK(vec(ad::conv1d(x, w, b, 1, 0).values()) == std::vector<double>{6, 9});
    // Same padding and stride 2.
    CHECK(vec(ad::conv1d(x, w, b, 1, 1).values()) == std::vector<double>{3, 6, 9, 7});
    CHECK(vec(ad::conv1d(x, w, b, 2, 0).values()) == std::vector<double>{6});
    CHECK_THROWS_AS(ad::conv1d(Tensor::constant({1, 1, 2}, {1, 2}), w, b, 1, 0), ConfigError);
}

TEST_CASE("weighted cross-entropy examples") {
    const Tensor z = Tensor::constant({1, 3}, {0, 0, 0});
    const std::vector<int> y0{0};
    CHECK(ad::weighted_cross_entropy(z, y0, std::vector<double>{1, 1, 1}).item() == doctest::Approx(std::log(3.0)));
    CHECK(ad::weighted_cross_entropy(z, y0, std::vector<double>{2, 1, 1}).item() ==
          doctest::Approx(2 * std::log(3.0)));
    const Tensor z3 = Tensor::constant({1, 3}, {3, 0, 0});
    const double want = -std::log(std::exp(3.0) / (std::exp(3.0) + 2.0));
    CHECK(ad::weighted_cross_entropy(z3, y0, std::vector<double>{1, 1, 1}).item() == doctest::Approx(want).epsilon(1e-12));
    CHECK(want == doctest::Approx(0.0949).epsilon(1e-3));

    CHECK_THROWS_AS(ad::weighted_cross_entropy(Tensor::zeros({0, 3}), std::vector<int>{}, std::vector<double>{1, 1, 1}),
                    ArgumentError);
    const Tensor bad = Tensor::constant({1, 3}, {std::nan(""), 0, 0});
    CHECK_THROWS_AS(ad::weighted_cross_entropy(bad, y0, std::vector<double>{1, 1, 1}), NumericError);
}

TEST_CASE("unit weights equal plain cross-entropy exactly") {
    const auto logits = testing::random_values(8 * 3, 11);
    const auto labels = testing::random_labels(8, 12);
    const Tensor z = Tensor::constant({8, 3}, logits);
    double plain = 0;
    for (std::size_t i = 0; i < 8; ++i) {
        const double* r = logits.data() + i * 3;
        const double mx = std::max({r[0], r[1], r[2]});
        const double lse = mx + std::log(std::exp(r[0] - mx) + std::exp(r[1] - mx) + std::exp(r[2] - mx));
        plain += lse - r[labels[i]];
    }
    plain /= 8;
    CHECK(ad::weighted_cross_entropy(z, labels, std::vector<double>{1, 1, 1}).item() == doctest::Approx(plain).epsilon(1e-14));
}

TEST_CASE("backward on linear and quadratic losses") {
    Tensor w = Tensor::parameter({3}, {0.5, -1, 2});
    const Tensor x = Tensor::constant({3}, {4, 5, 6});
    ad::backward(ad::sum(ad::mul(w, x)));
    CHECK(w.grad() == std::vector<double>{4, 5, 6});

    Tensor v = Tensor::parameter({2}, {1, -2});
    ad::backward(ad::sum(ad::mul(v, v)));
    CHECK(v.grad() == std::vector<double>{2, -4});

    Tensor unused = Tensor::parameter({2}, {1, 1});
    const Tensor loss = ad::sum(ad::mul(v, v));
    const Tensor wrt[] = {v, unused};
    const auto g = ad::gradients(loss, wrt);
    CHECK(g[1] == std::vector<double>{0, 0});

    CHECK_THROWS_AS(ad::backward(ad::mul(v, v)), ArgumentError);
}

TEST_CASE("dropout: identity at inference, unbiased in training") {
    Rng rng(5);
    const Tensor x = Tensor::constant({1, 20000}, std::vector<double>(20000, 1.0));
    CHECK(vec(ad::dropout(x, 0.4, false, rng).values()) == vec(x.values()));
    const Tensor y = ad::dropout(x, 0.4, true, rng);
    double mean = 0;
    std::size_t zeros = 0;
    for (double v : y.values()) {
        mean += v;
        zeros += v == 0.0;
        if (v != 0.0) CHECK(v == doctest::Approx(1.0 / 0.6));
    }
    mean /= 20000;
    CHECK(mean == doctest::Approx(1.0).epsilon(0.03));
    CHECK(zeros > 7000);
}

TEST_CASE("gradient check for every layer kind") {
    struct Case {
        const char* name;
        std::vector<LayerSpec> specs;
        ad::Shape sample;
        bool training;
        bool variable = false;
    };
    const std::vector<Case> cases = {
        {"dense", {LayerSpec::flatten(), LayerSpec::dense(4, Activation::Relu), LayerSpec::dense(3)}, {2, 3}, false},
        {"conv1d", {LayerSpec::conv1d(3, 3, 1, 1, Activation::Relu), LayerSpec::flatten(), LayerSpec::dense(3)}, {2, 6}, false},
        {"conv1d-stride", {LayerSpec::conv1d(4, 2, 2), LayerSpec::flatten(), LayerSpec::dense(3)}, {2, 6}, false},
        {"max-pool", {LayerSpec::conv1d(2, 1), LayerSpec::max_pool1d(2), LayerSpec::flatten(), LayerSpec::dense(3)}, {2, 6}, false},
        {"avg-pool", {LayerSpec::conv1d(2, 1), LayerSpec::avg_pool1d(3), LayerSpec::flatten(), LayerSpec::dense(3)}, {2, 6}, false},
        {"dropout", {LayerSpec::flatten(), LayerSpec::dense(5), LayerSpec::dropout_layer(0.3), LayerSpec::dense(3)}, {2, 3}, true},
        {"layer-norm", {LayerSpec::to_tokens(), LayerSpec::layer_norm(), LayerSpec::sequence_mean(), LayerSpec::dense(3)}, {4, 3}, false},
        {"attention", {LayerSpec::to_tokens(), LayerSpec::attention(2), LayerSpec::sequence_mean(), LayerSpec::dense(3)}, {4, 5}, false},
        {"lstm", {LayerSpec::to_tokens(), LayerSpec::lstm(3, true), LayerSpec::lstm(3, false), LayerSpec::dense(3)}, {2, 4}, false},
        {"softmax", {LayerSpec::flatten(), LayerSpec::dense(3), LayerSpec::softmax()}, {2, 2}, false},
        {"positional", {LayerSpec::to_tokens(), LayerSpec::positional(8), LayerSpec::sequence_mean(), LayerSpec::dense(3)}, {3, 4}, false},
        {"encoder", {LayerSpec::to_tokens(), LayerSpec::encoder(2, 6, 0.2), LayerSpec::sequence_mean(), LayerSpec::dense(3)}, {4, 3}, true},
    };
    for (const auto& c : cases) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            CAPTURE(c.name);
            CAPTURE(seed);
            nn::Model m(c.specs, c.sample, seed, c.variable);
            const std::size_t batch = 3;
            ad::Shape bshape{batch};
            bshape.insert(bshape.end(), c.sample.begin(), c.sample.end());
            const auto input = testing::random_values(ad::numel(bshape), seed * 17);
            const auto res = testing::check_model_gradients(m, input, bshape, testing::random_labels(batch, seed), c.training,
                                                            seed);
            CAPTURE(res.worst);
            CHECK(res.max_rel_error < 1e-4);
            CHECK(res.checked > 0);
        }
    }
}

TEST_CASE("shape mismatch between layers names both layers") {
    try {
        nn::Model m({LayerSpec::dense(4), LayerSpec::lstm(3, false)}, {5}, 1);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("dense") != std::string::npos);
        CHECK(msg.find("lstm") != std::string::npos);
    }
    nn::Model m({LayerSpec::flatten(), LayerSpec::dense(3)}, {2, 4}, 1);
    CHECK_THROWS_AS(m.forward(Tensor::zeros({1, 2, 5})), ConfigError);
}

TEST_CASE("optimizer examples") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        std::vector<nn::Parameter> ps{{"w", Tensor::parameter({2}, {0.3, -0.7}), true}};
        ps[0].tensor.zero_grad();
        nn::OptimizerState st;
        nn::optimizer_step(st, ps);
        CHECK(vec(ps[0].tensor.values()) == std::vector<double>{0.3, -0.7});
        CHECK(st.step == 1);
    }
    SUBCASE("descent on w^2") {
        std::vector<nn::Parameter> ps{{"w", Tensor::parameter({1}, {1.0}), false}};
        nn::OptimizerState st;
        st.learning_rate = 0.1;
        ad::backward(ad::sum(ad::mul(ps[0].tensor, ps[0].tensor)));
        nn::optimizer_step(st, ps);
        CHECK(std::abs(ps[0].tensor.at(0)) < 1.0);
    }
    SUBCASE("least squares converges") {
        // y = 2x - 1 sampled at 5 points; optimum loss is 0.
        const Tensor x = Tensor::constant({5, 1}, {-2, -1, 0, 1, 2});
        const Tensor y = Tensor::constant({5, 1}, {-5, -3, -1, 1, 3});
        std::vector<nn::Parameter> ps{{"w", Tensor::parameter({1, 1}, {0.0}), false},
                                      {"b", Tensor::parameter({1}, {0.0}), false}};
        nn::OptimizerState st;
        st.learning_rate = 0.1;
        double loss = 0;
        for (int i = 0; i < 200; ++i) {
            for (auto& p : ps) p.tensor.zero_grad();
            const Tensor r = ad::sub(ad::linear(x, ps[0].tensor, ps[1].tensor), y);
            const Tensor l = ad::mean(ad::mul(r, r));
            loss = l.item();
            ad::backward(l);
            nn::optimizer_step(st, ps);
        }
        CHECK(loss < 1e-6);
    }
    SUBCASE("L2 term pulls flagged weights toward zero") {
        std::vector<nn::Parameter> ps{{"w", Tensor::parameter({1}, {1.0}), true},
                                      {"b", Tensor::parameter({1}, {1.0}), false}};
        for (auto& p : ps) p.tensor.zero_grad();
        nn::OptimizerState st;
        st.l2 = 0.1;
        nn::optimizer_step(st, ps);
        CHECK(ps[0].tensor.at(0) < 1.0);
        CHECK(ps[1].tensor.at(0) == 1.0);
    }
    SUBCASE("non-finite gradient is rejected without modification") {
        std::vector<nn::Parameter> ps{{"ok", Tensor::parameter({1}, {1.0}), false},
                                      {"bad", Tensor::parameter({1}, {1.0}), false}};
        ad::backward(ad::sum(ad::add(ps[0].tensor, ad::scale(ps[1].tensor, std::nan("")))));
        nn::OptimizerState st;
        try {
            nn::optimizer_step(st, ps);
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("bad") != std::string::npos);
        }
        CHECK(ps[0].tensor.at(0) == 1.0);
        CHECK(st.step == 0);
    }
}

TEST_CASE("training is bitwise deterministic per seed") {
    auto run = [] {
        nn::Model m({LayerSpec::flatten(), LayerSpec::dense(6, Activation::Relu), LayerSpec::dropout_layer(0.2),
                     LayerSpec::dense(3)},
                    {2, 4}, 42);
        Rng rng(9);
        nn::OptimizerState st;
        const Tensor x = Tensor::constant({4, 2, 4}, testing::random_values(32, 1));
        const auto labels = testing::random_labels(4, 2);
        for (int i = 0; i < 25; ++i) {
            nn::ForwardContext ctx{true, &rng};
            for (auto& p : m.parameters()) p.tensor.zero_grad();
            ad::backward(ad::weighted_cross_entropy(m.forward(x, ctx), labels, std::vector<double>{1, 1, 1}));
            nn::optimizer_step(st, m.parameters());
        }
        std::vector<double> all;
        for (const auto& p : m.parameters()) all.insert(all.end(), p.tensor.values().begin(), p.tensor.values().end());
        return all;
    };
    CHECK(run() == run());
}

TEST_CASE("checkpoint round trip") {
    nn::Model a({LayerSpec::conv1d(2, 3), LayerSpec::flatten(), LayerSpec::dense(3)}, {2, 5}, 7);
    nn::Model b({LayerSpec::conv1d(2, 3), LayerSpec::flatten(), LayerSpec::dense(3)}, {2, 5}, 8);
    std::stringstream ss;
    nn::write_checkpoint(ss, a.parameters());
    const auto tensors = nn::read_checkpoint(ss);
    REQUIRE(tensors.size() == a.parameters().size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        CHECK(tensors[i].name == a.parameters()[i].name);
        CHECK(tensors[i].values == vec(a.parameters()[i].tensor.values()));
    }
    const auto path = std::filesystem::temp_directory_path() / "fdi_ckpt_test.bin";
    nn::save_checkpoint(path, a);
    nn::load_checkpoint(path, b);
    for (std::size_t i = 0; i < tensors.size(); ++i)
        CHECK(vec(b.parameters()[i].tensor.values()) == vec(a.parameters()[i].tensor.values()));
    nn::Model c({LayerSpec::flatten(), LayerSpec::dense(3)}, {2, 5}, 1);
    CHECK_THROWS(nn::load_checkpoint(path, c));
    std::filesystem::remove(path);
}

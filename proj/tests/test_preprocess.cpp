#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "fdi/errors.hpp"
#include "fdi/preprocess.hpp"
#include "fdi/rng.hpp"

using namespace fdi;

namespace {

Dataset small(std::size_t per_class, std::size_t length, std::uint64_t seed) {
    SimulatorConfig cfg;
    cfg.counts = {per_class, per_class, per_class};
    cfg.length = length;
    cfg.seed = seed;
    return simulate(cfg);
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double var_of(std::span<const double> v) {
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("clean_outliers removes a gross outlier") {
    Dataset ds = small(20, 16, 1);
    const std::size_t fz = 2;
    auto& victim = ds.samples[7];
    for (std::size_t t = 0; t < victim.length; ++t) victim.at(fz, t) += 1e4;
    const auto res = clean_outliers(ds, 4.0);
    REQUIRE(res.removed.size() == 1);
    CHECK(res.removed[0].sample_id == victim.id);
    CHECK(res.removed[0].channel == "Fz");
    CHECK(res.removed[0].z_score > 4.0);
    CHECK(res.data.size() == ds.size() - 1);
}

TEST_CASE("clean_outliers with infinite threshold is the identity") {
    const Dataset ds = small(5, 16, 2);
    const auto res = clean_outliers(ds, std::numeric_limits<double>::infinity());
    CHECK(res.removed.empty());
    REQUIRE(res.data.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(res.data.samples[i].values == ds.samples[i].values);
}

TEST_CASE("clean_outliers finds exactly the simulator's corrupted samples") {
    SimulatorConfig cfg;
    cfg.length = 32;
    cfg.corrupted = 3;
    cfg.seed = 11;
    const Dataset ds = simulate(cfg);
    const auto res = clean_outliers(ds, 4.0);
    std::set<std::string> removed;
    for (const auto& r : res.removed) removed.insert(r.sample_id);
    const auto expected = corrupted_ids(cfg);
    CHECK(removed == std::set<std::string>(expected.begin(), expected.end()));
    CHECK(removed.size() == 3);
}

TEST_CASE("clean_outliers refuses to empty a class") {
    Dataset ds = small(20, 16, 3);
    // The only jammed sample becomes an outlier.
    Dataset tiny;
    tiny.channel_names = ds.channel_names;
    for (const auto& s : ds.samples)
        if (s.label != 2 || tiny.class_counts()[2] == 0) tiny.samples.push_back(s);
    for (auto& s : tiny.samples)
        if (s.label == 2)
            for (std::size_t t = 0; t < s.length; ++t) s.at(2, t) += 1e4;
    CHECK_THROWS_AS(clean_outliers(tiny, 4.0), ArgumentError);
}

TEST_CASE("truncate") {
    Dataset ds = small(2, 100, 4);
    const Dataset t = truncate(ds, 64);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(t.samples[i].length == 64);
        for (std::size_t c = 0; c < t.samples[i].channels; ++c)
            for (std::size_t s = 0; s < 64; ++s) CHECK(t.samples[i].at(c, s) == ds.samples[i].at(c, s));
    }
    const Dataset tt = truncate(t, 64);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(tt.samples[i].values == t.samples[i].values);
    CHECK_NOTHROW(truncate(ds, 100));

    ds.samples[1].length = 50;
    ds.samples[1].values.resize(ds.samples[1].channels * 50);
    ds.samples[3].length = 40;
    ds.samples[3].values.resize(ds.samples[3].channels * 40);
    try {
        truncate(ds, 64);
        FAIL("expected ArgumentError");
    } catch (const ArgumentError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(ds.samples[1].id) != std::string::npos);
        CHECK(msg.find(ds.samples[3].id) != std::string::npos);
    }
}

TEST_CASE("paa examples") {
    const std::vector<double> x{1, 2, 3, 4};
    CHECK(paa(x, 1, 4, 2) == std::vector<double>{1.5, 3.5});
    CHECK(paa(x, 1, 4, 4) == x);
    const std::vector<double> c(10, 2.5);
    for (std::size_t s = 1; s <= 10; ++s)
        for (double v : paa(c, 1, 10, s)) CHECK(v == doctest::Approx(2.5).epsilon(1e-15));
    // 5 steps into 2 frames: frame 0 = (1+2+0.5*3)/2.5.
    const auto f = paa(std::vector<double>{1, 2, 3, 4, 5}, 1, 5, 2);
    CHECK(f[0] == doctest::Approx(4.5 / 2.5));
    CHECK(f[1] == doctest::Approx(10.5 / 2.5));
}

TEST_CASE("paa preserves the mean and contracts variance") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        Rng rng(seed);
        const std::size_t len = 8 + rng.index(200);
        const std::size_t segs = 1 + rng.index(len);
        std::vector<double> x(len);
        for (auto& v : x) v = rng.normal() * 5 + 1;
        const auto y = paa(x, 1, len, segs);
        REQUIRE(y.size() == segs);
        CHECK(std::abs(mean_of(y) - mean_of(x)) <= 1e-12 * std::max(1.0, std::abs(mean_of(x))));
        CHECK(var_of(y) <= var_of(x) + 1e-12);
    }
}

TEST_CASE("paa on datasets is per channel") {
    const Dataset ds = small(1, 32, 5);
    const Dataset p = paa(ds, 8);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(p.samples[i].length == 8);
        CHECK(p.samples[i].channels == ds.samples[i].channels);
        for (std::size_t c = 0; c < ds.samples[i].channels; ++c) {
            double m = 0;
            for (std::size_t t = 0; t < 4; ++t) m += ds.samples[i].at(c, t);
            CHECK(p.samples[i].at(c, 0) == doctest::Approx(m / 4));
        }
    }
}

TEST_CASE("select_channels") {
    const Dataset ds = small(1, 16, 6);
    const Dataset six = select_channels(ds, false);
    CHECK(six.channel_names == std::vector<std::string>{"Fx", "Fy", "Fz", "Tx", "Ty", "Tz"});
    CHECK(six.samples[0].channels == 6);
    const Dataset seven = select_channels(ds, true);
    CHECK(seven.channel_names.back() == "Rot");
    CHECK(seven.samples[0].channels == 7);
    CHECK(seven.samples[0].at(6, 5) == ds.samples[0].at(7, 5));
}

TEST_CASE("normalization") {
    const Dataset ds = select_channels(small(10, 32, 7), false);
    const auto [train, test] = stratified_split(ds, 0.3, 1);
    const auto stats = fit_normalizer(train);
    const Dataset nt = apply_normalizer(stats, train);
    for (std::size_t c = 0; c < nt.channel_names.size(); ++c) {
        std::vector<double> all;
        for (const auto& s : nt.samples)
            for (std::size_t t = 0; t < s.length; ++t) all.push_back(s.at(c, t));
        CHECK(std::abs(mean_of(all)) <= 1e-9);
        CHECK(std::abs(std::sqrt(var_of(all)) - 1.0) <= 1e-9);
    }
    // Test data uses the training statistics, so its mean is not forced to 0.
    const Dataset ns = apply_normalizer(stats, test);
    double worst = 0;
    for (std::size_t c = 0; c < ns.channel_names.size(); ++c) {
        std::vector<double> all;
        for (const auto& s : ns.samples)
            for (std::size_t t = 0; t < s.length; ++t) all.push_back(s.at(c, t));
        worst = std::max(worst, std::abs(mean_of(all)));
    }
    CHECK(worst > 1e-6);
    CHECK(fit_normalizer(train).mean == stats.mean);

    Dataset flat = train;
    for (auto& s : flat.samples)
        for (std::size_t t = 0; t < s.length; ++t) s.at(3, t) = 1.0;
    try {
        fit_normalizer(flat);
        FAIL("expected ArgumentError");
    } catch (const ArgumentError& e) {
        CHECK(std::string(e.what()).find("Tx") != std::string::npos);
    }
}

TEST_CASE("infinite threshold then min-length truncation is a no-op on uniform data") {
    const Dataset ds = small(3, 24, 8);
    const auto cleaned = clean_outliers(ds, std::numeric_limits<double>::infinity());
    const Dataset t = truncate(cleaned.data, 24);
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(t.samples[i].values == ds.samples[i].values);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "fdi/dataset.hpp"
#include "fdi/errors.hpp"
#include "fdi/rng.hpp"

using namespace fdi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("fdi_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p) << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

const char* kHeader6 = "Fx,Fy,Fz,Tx,Ty,Tz\n";

}  // namespace

TEST_CASE("ingest a three-file manifest") {
    TempDir d("ingest3");
    write_file(d.path / "a.csv", std::string(kHeader6) + "1,2,3,4,5,6\n1,2,3,4,5,7\n");
    write_file(d.path / "b.csv", std::string(kHeader6) + "0,0,0,0,0,0\n0,0,0,0,0,1\n");
    write_file(d.path / "c.csv", std::string(kHeader6) + "9,9,9,9,9,9\n9,9,9,9,9,9\n");
    write_file(d.path / "manifest.csv", "path,label\na.csv,mounted\nb.csv,not_mounted\nc.csv,jammed\n");
    const Dataset ds = ingest_csv(d.path / "manifest.csv");
    REQUIRE(ds.size() == 3);
    CHECK(ds.source == "ingested");
    CHECK(ds.labels() == std::vector<int>{0, 1, 2});
    CHECK(ds.samples[0].id == "a");
    CHECK(ds.samples[0].channels == 6);
    CHECK(ds.samples[0].length == 2);
    CHECK(ds.samples[0].at(5, 1) == 7.0);
    CHECK(ds.channel_names.size() == 6);
    CHECK_NOTHROW(ds.validate());
}

TEST_CASE("ingestion errors carry file and line") {
    TempDir d("ingest_err");
    write_file(d.path / "ok.csv", std::string(kHeader6) + "1,2,3,4,5,6\n");

    SUBCASE("NaN cell names the column") {
        write_file(d.path / "nan.csv", std::string(kHeader6) + "1,2,3,4,5,6\n1,2,nan,4,5,6\n");
        write_file(d.path / "m.csv", "path,label\nnan.csv,mounted\n");
        try {
            ingest_csv(d.path / "m.csv");
            FAIL("expected IngestionError");
        } catch (const IngestionError& e) {
            CHECK(e.line() == 3);
            CHECK(std::string(e.what()).find("Fz") != std::string::npos);
            CHECK(e.file().find("nan.csv") != std::string::npos);
        }
    }
    SUBCASE("ragged row") {
        write_file(d.path / "r.csv", std::string(kHeader6) + "1,2,3,4,5,6\n1,2,3\n");
        write_file(d.path / "m.csv", "path,label\nr.csv,jammed\n");
        try {
            ingest_csv(d.path / "m.csv");
            FAIL("expected IngestionError");
        } catch (const IngestionError& e) {
            CHECK(e.line() == 3);
        }
    }
    SUBCASE("unknown label") {
        write_file(d.path / "m.csv", "path,label\nok.csv,mounted\nok.csv,wobbly\n");
        try {
            ingest_csv(d.path / "m.csv");
            FAIL("expected IngestionError");
        } catch (const IngestionError& e) {
            CHECK(e.line() == 3);
            CHECK(std::string(e.what()).find("wobbly") != std::string::npos);
        }
    }
    SUBCASE("missing file") {
        write_file(d.path / "m.csv", "path,label\nnope.csv,mounted\n");
        CHECK_THROWS_AS(ingest_csv(d.path / "m.csv"), IngestionError);
    }
    SUBCASE("missing manifest") { CHECK_THROWS_AS(ingest_csv(d.path / "absent.csv"), IngestionError); }
}

TEST_CASE("manifest with the 306/112/61 composition") {
    TempDir d("ingest_full");
    SimulatorConfig cfg;
    cfg.length = 8;
    cfg.seed = 4;
    write_csv(simulate(cfg), d.path);
    const Dataset ds = ingest_csv(d.path / "manifest.csv");
    CHECK(ds.class_counts() == ClassCounts{306, 112, 61});
}

TEST_CASE("simulator determinism and signatures") {
    SimulatorConfig cfg;
    cfg.counts = {10, 5, 3};
    cfg.seed = 7;
    const Dataset a = simulate(cfg);
    const Dataset b = simulate(cfg);
    REQUIRE(a.size() == 18);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.samples[i].id == b.samples[i].id);
        CHECK(a.samples[i].values == b.samples[i].values);
    }
    CHECK(a.channel_names.size() == 8);
    CHECK(a.seed == 7u);

    cfg.noise = 0.0;
    const Dataset z = simulate(cfg);
    for (int c = 0; c < 3; ++c) {
        const ScrewingSample* first = nullptr;
        for (const auto& s : z.samples) {
            if (s.label != c) continue;
            if (!first) first = &s;
            CHECK(s.values == first->values);
        }
    }

    // Mounted torque over the final quarter exceeds not-mounted torque.
    auto tail_mean = [&](int label) {
        double sum = 0;
        std::size_t n = 0;
        const std::size_t tz = 5;
        for (const auto& s : z.samples) {
            if (s.label != label) continue;
            for (std::size_t t = s.length * 3 / 4; t < s.length; ++t, ++n) sum += s.at(tz, t);
        }
        return sum / static_cast<double>(n);
    };
    CHECK(tail_mean(0) > tail_mean(1));
}

TEST_CASE("simulated 306/112/61 composition") {
    SimulatorConfig cfg;
    cfg.length = 8;
    const auto counts = simulate(cfg).class_counts();
    CHECK(counts == ClassCounts{306, 112, 61});
    const double n = 479.0;
    CHECK(std::round(1000 * counts[0] / n) / 10 == doctest::Approx(63.9));
    CHECK(std::round(1000 * counts[1] / n) / 10 == doctest::Approx(23.4));
    CHECK(std::round(1000 * counts[2] / n) / 10 == doctest::Approx(12.7));
}

TEST_CASE("simulator config validation") {
    SimulatorConfig cfg;
    cfg.length = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.length = 16;
    cfg.noise = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("write_csv is byte-stable and round-trips") {
    TempDir d1("csv1"), d2("csv2");
    SimulatorConfig cfg;
    cfg.counts = {2, 2, 2};
    cfg.length = 16;
    cfg.seed = 3;
    const Dataset ds = simulate(cfg);
    write_csv(ds, d1.path);
    write_csv(simulate(cfg), d2.path);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(d1.path / "samples")) {
        ++files;
        CHECK(slurp(e.path()) == slurp(d2.path / "samples" / e.path().filename()));
    }
    CHECK(files == 6);
    CHECK(slurp(d1.path / "manifest.csv") == slurp(d2.path / "manifest.csv"));
    const Dataset back = ingest_csv(d1.path / "manifest.csv");
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.samples[i].id == ds.samples[i].id);
        CHECK(back.samples[i].values == ds.samples[i].values);
    }
}

TEST_CASE("stratified split") {
    SUBCASE("479 samples at 20% -> 96 test") {
        SimulatorConfig cfg;
        cfg.length = 8;
        const Dataset ds = simulate(cfg);
        const auto [train, test] = stratified_split(ds, 0.2, 1);
        CHECK(test.size() == 96);
        CHECK(train.size() == 383);
        std::multiset<std::string> ids;
        for (const auto& s : train.samples) ids.insert(s.id);
        for (const auto& s : test.samples) ids.insert(s.id);
        std::multiset<std::string> orig;
        for (const auto& s : ds.samples) orig.insert(s.id);
        CHECK(ids == orig);
        const auto tc = test.class_counts();
        const auto all = ds.class_counts();
        for (int c = 0; c < 3; ++c) CHECK(std::abs(static_cast<double>(tc[c]) - 0.2 * all[c]) <= 1.0);
    }
    SUBCASE("10 per class -> 2 of each") {
        std::vector<int> labels;
        for (int c = 0; c < 3; ++c) labels.insert(labels.end(), 10, c);
        const auto [train, test] = stratified_split_indices(labels, 0.2, 5);
        ClassCounts tc{};
        for (auto i : test) ++tc[labels[i]];
        CHECK(tc == ClassCounts{2, 2, 2});
        CHECK(train.size() == 24);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(stratified_split_indices({0, 0, 1, 1, 2}, 0.2, 1), ArgumentError);
        CHECK_THROWS_AS(stratified_split_indices({0, 0, 1, 1, 2, 2}, 1.0, 1), ArgumentError);
    }
    SUBCASE("deterministic per seed, different across seeds") {
        std::vector<int> labels;
        for (int c = 0; c < 3; ++c) labels.insert(labels.end(), 30, c);
        CHECK(stratified_split_indices(labels, 0.2, 9) == stratified_split_indices(labels, 0.2, 9));
        CHECK(stratified_split_indices(labels, 0.2, 9) != stratified_split_indices(labels, 0.2, 10));
    }
}

TEST_CASE("stratified k-fold") {
    SUBCASE("k=10 on 479 samples") {
        std::vector<int> labels;
        labels.insert(labels.end(), 306, 0);
        labels.insert(labels.end(), 112, 1);
        labels.insert(labels.end(), 61, 2);
        const auto folds = stratified_kfold(labels, 10, 3);
        REQUIRE(folds.size() == 10);
        std::vector<int> seen(labels.size(), 0);
        for (const auto& f : folds) {
            CHECK((f.validation.size() == 47 || f.validation.size() == 48));
            CHECK(f.train.size() + f.validation.size() == labels.size());
            ClassCounts vc{};
            for (auto i : f.validation) {
                ++seen[i];
                ++vc[labels[i]];
            }
            const double counts[3] = {306, 112, 61};
            for (int c = 0; c < 3; ++c) CHECK(std::abs(vc[c] - counts[c] / 10.0) <= 1.0);
            std::set<std::size_t> tr(f.train.begin(), f.train.end());
            for (auto i : f.validation) CHECK(tr.count(i) == 0);
        }
        CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
    }
    SUBCASE("k=2 on six balanced samples") {
        const auto folds = stratified_kfold(std::vector<int>{0, 0, 1, 1, 2, 2}, 2, 1);
        for (const auto& f : folds) {
            ClassCounts vc{};
            for (auto i : f.validation) ++vc[std::vector<int>{0, 0, 1, 1, 2, 2}[i]];
            CHECK(vc == ClassCounts{1, 1, 1});
        }
    }
    SUBCASE("k above the minority count") {
        CHECK_THROWS_AS(stratified_kfold(std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2}, 3, 1), ArgumentError);
        CHECK_THROWS_AS(stratified_kfold(std::vector<int>{0, 1, 2}, 1, 1), ArgumentError);
    }
    SUBCASE("property: random label sets partition with bounded deviation") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            Rng rng(seed);
            std::vector<int> labels;
            const std::size_t k = 2 + rng.index(6);
            for (int c = 0; c < 3; ++c) labels.insert(labels.end(), k + rng.index(40), c);
            rng.shuffle(labels);
            const auto folds = stratified_kfold(labels, k, seed);
            ClassCounts total{};
            for (int l : labels) ++total[l];
            std::vector<int> seen(labels.size(), 0);
            std::size_t lo = labels.size(), hi = 0;
            for (const auto& f : folds) {
                ClassCounts vc{};
                for (auto i : f.validation) {
                    ++seen[i];
                    ++vc[labels[i]];
                }
                for (int c = 0; c < 3; ++c)
                    CHECK(std::abs(static_cast<double>(vc[c]) - static_cast<double>(total[c]) / k) < 1.0);
                lo = std::min(lo, f.validation.size());
                hi = std::max(hi, f.validation.size());
            }
            CHECK(hi - lo <= 1);
            CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
        }
    }
}

TEST_CASE("dataset validation") {
    SimulatorConfig cfg;
    cfg.counts = {2, 1, 1};
    cfg.length = 8;
    Dataset ds = simulate(cfg);
    CHECK_NOTHROW(ds.validate());
    ds.samples[1].id = ds.samples[0].id;
    CHECK_THROWS_AS(ds.validate(), ArgumentError);
}

#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = FDI_SOURCE_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

struct Scratch {
    fs::path dir = fs::temp_directory_path() / ("fdi_cli_" + std::to_string(::getpid()));
    Scratch() {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    fs::path operator/(const std::string& leaf) const { return dir / leaf; }
};

// Runs the CLI and returns its exit status; output goes to `log` (or is discarded).
int fdi(const std::string& args, const fs::path& log = "/dev/null") {
    const std::string cmd = std::string("\"") + FDI_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quick_config(const std::string& name, const std::string& treatment, std::uint64_t seed = 1) {
    json j = json::parse(slurp(kSource / "configs" / "quick.json"));
    j["name"] = name;
    j["treatment"] = treatment;
    j["seed"] = seed;
    return j.dump(2);
}

double precision_of(const json& confusion, int c) {
    double col = 0;
    for (int r = 0; r < 3; ++r) col += confusion[r][c].get<double>();
    return confusion[c][c].get<double>() / col;
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

TEST_CASE("usage and configuration errors map to exit codes") {
    Scratch s;
    CHECK(fdi("") == 1);
    CHECK(fdi("run") == 1);
    CHECK(fdi("frobnicate") == 1);
    CHECK(fdi("run --config " + (s / "missing.json").string()) == 2);
    spit(s / "bad.json", R"({"schema_version": 1, "data": {"simulate": {}}, "model": "MLP", "trails": 3})");
    CHECK(fdi("run --config " + (s / "bad.json").string(), s / "log") == 2);
    CHECK(slurp(s / "log").find("config.trails") != std::string::npos);
    spit(s / "nodata.json", R"({"schema_version": 1, "model": "MLP", "data": {"manifest": "nowhere/manifest.csv"}})");
    CHECK(fdi("run --config " + (s / "nodata.json").string() + " --out " + (s / "o").string()) == 3);
    CHECK(fdi("run --config " + (kSource / "configs" / "quick.json").string() + " --jobs 0") == 1);
}

TEST_CASE("gen-data is reproducible and refuses to overwrite") {
    Scratch s;
    json cfg = json::parse(slurp(kSource / "configs" / "sim.json"));
    cfg["simulate"]["counts"] = {6, 3, 2};
    cfg["simulate"]["length"] = 32;
    spit(s / "sim.json", cfg.dump());
    const std::string conf = " --config " + (s / "sim.json").string();
    REQUIRE(fdi("gen-data" + conf + " --out " + (s / "a").string()) == 0);
    REQUIRE(fdi("gen-data" + conf + " --out " + (s / "b").string()) == 0);

    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(s / "a" / "samples")) {
        ++files;
        CHECK(slurp(e.path()) == slurp(s / "b" / "samples" / e.path().filename()));
    }
    CHECK(files == 11);
    const std::string manifest = slurp(s / "a" / "manifest.csv");
    CHECK(manifest == slurp(s / "b" / "manifest.csv"));
    CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 12);

    CHECK(fdi("gen-data" + conf + " --out " + (s / "a").string()) == 5);
    CHECK(fdi("gen-data" + conf + " --out " + (s / "a").string() + " --seed 99 --force") == 0);
    CHECK(slurp(s / "a" / "manifest.csv") == manifest);  // ids and labels do not depend on the seed
    bool differs = false;
    for (const auto& e : fs::directory_iterator(s / "a" / "samples"))
        differs = differs || slurp(e.path()) != slurp(s / "b" / "samples" / e.path().filename());
    CHECK(differs);

    // The generated directory feeds straight back into a run.
    json run = json::parse(quick_config("ingested", "original"));
    run["data"] = {{"manifest", (s / "a" / "manifest.csv").string()}};
    run["preprocess"]["segments"] = 8;
    run["folds"] = 2;
    run["trials"] = 1;
    spit(s / "run.json", run.dump());
    CHECK(fdi("run --config " + (s / "run.json").string() + " --out " + (s / "r").string(), s / "log") == 0);
}

TEST_CASE("run writes every artifact and the report matches the records") {
    Scratch s;
    spit(s / "q.json", quick_config("q", "balanced"));
    const fs::path out = s / "q";
    REQUIRE(fdi("run --config " + (s / "q.json").string() + " --out " + out.string() + " --jobs 2", s / "log") == 0);
    for (const char* name : {"config.json", "trials.jsonl", "summary.json", "model.ckpt", "report/metrics.md",
                             "report/metrics.csv", "report/parameters.csv", "report/precision_no_rotation.svg"})
        CHECK_MESSAGE(fs::exists(out / name), name);
    CHECK(fdi("run --config " + (s / "q.json").string() + " --out " + out.string()) == 5);

    // Recompute the best trial's fold metrics straight from the stored confusion matrices.
    const json summary = json::parse(slurp(out / "summary.json"));
    CHECK(summary.at("schema") == "fdi.summary/1");
    const std::size_t best = summary.at("best_trial");
    std::ifstream in(out / "trials.jsonl");
    std::string line;
    std::vector<json> trials;
    while (std::getline(in, line)) trials.push_back(json::parse(line));
    REQUIRE(trials.size() == 3);
    std::vector<double> pr;
    for (const auto& f : trials[best].at("folds")) pr.push_back(precision_of(f.at("confusion"), 0));
    const double mean = std::accumulate(pr.begin(), pr.end(), 0.0) / pr.size();
    double ss = 0;
    for (double v : pr) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (pr.size() - 1));

    const std::string md = slurp(out / "report" / "metrics.md");
    CHECK(md.find(fixed4(mean) + " ± " + fixed4(sd)) != std::string::npos);
    const std::string csv = slurp(out / "report" / "metrics.csv");
    const std::string row = csv.substr(csv.find('\n') + 1);
    std::vector<std::string> cells;
    std::stringstream rs(row.substr(0, row.find('\n')));
    for (std::string c; std::getline(rs, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() == 13);
    CHECK(std::stod(cells[5]) == doctest::Approx(mean).epsilon(1e-6));
    CHECK(std::stod(cells[6]) == doctest::Approx(sd).epsilon(1e-6));
    CHECK(std::stod(cells[10]) == doctest::Approx([&] {
              const auto& c = summary.at("test").at("confusion");
              double row_sum = 0;
              for (int k = 0; k < 3; ++k) row_sum += c[2][k].get<double>();
              return c[2][2].get<double>() / row_sum;
          }()));

    // Bars stay inside the [0, 1] plot band.
    const std::string svg = slurp(out / "report" / "precision_no_rotation.svg");
    const std::regex bar(R"re(<rect x="[0-9.]+" y="([0-9.]+)" width="16.0" height="([0-9.]+)")re");
    std::size_t bars = 0;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), bar); it != std::sregex_iterator(); ++it) {
        const double y = std::stod((*it)[1]), h = std::stod((*it)[2]);
        CHECK(y >= 40.0);
        CHECK(y + h == doctest::Approx(340.0));
        ++bars;
    }
    CHECK(bars == 1);
    CHECK(svg.find(">1.0</text>") != std::string::npos);
    CHECK(svg.find(">0.0</text>") != std::string::npos);

    // report regenerates the same tables from the directory.
    REQUIRE(fdi("report " + out.string() + " --out " + (s / "rep").string()) == 0);
    CHECK(slurp(s / "rep" / "metrics.md") == md);
    CHECK(fdi("report " + out.string() + " --out " + (s / "rep").string()) == 5);

    CHECK(fdi("run --config " + (s / "q.json").string() + " --out " + out.string() + " --force") == 0);
    CHECK(slurp(out / "report" / "metrics.md") == md);
}

TEST_CASE("output root comes from FDI_OUTPUT_ROOT") {
    Scratch s;
    spit(s / "q.json", quick_config("rooted", "original"));
    ::setenv("FDI_OUTPUT_ROOT", (s / "runs").c_str(), 1);
    const int code = fdi("run --config " + (s / "q.json").string());
    ::unsetenv("FDI_OUTPUT_ROOT");
    CHECK(code == 0);
    CHECK(fs::exists(s / "runs" / "rooted" / "summary.json"));
}

TEST_CASE("compare prints paired tests and the |t| table is symmetric") {
    Scratch s;
    spit(s / "a.json", quick_config("a", "original"));
    spit(s / "b.json", quick_config("b", "balanced"));
    spit(s / "c.json", quick_config("c", "original", 2));
    REQUIRE(fdi("run --config " + (s / "a.json").string() + " --out " + (s / "a").string()) == 0);
    REQUIRE(fdi("run --config " + (s / "b.json").string() + " --out " + (s / "b").string()) == 0);
    REQUIRE(fdi("run --config " + (s / "c.json").string() + " --out " + (s / "c").string()) == 0);
    const std::string a = (s / "a").string(), b = (s / "b").string();

    REQUIRE(fdi("compare " + a + " " + b + " --metric jammed-recall --out " + (s / "ab.csv").string()) == 0);
    REQUIRE(fdi("compare " + b + " " + a + " --metric jammed-recall --out " + (s / "ba.csv").string()) == 0);
    auto t_of = [&](const fs::path& p) {
        const std::string text = slurp(p);
        const std::string row = text.substr(text.find('\n') + 1);
        std::vector<std::string> cells;
        std::stringstream rs(row.substr(0, row.find('\n')));
        for (std::string c; std::getline(rs, c, ',');) cells.push_back(c);
        REQUIRE(cells.size() >= 7);
        CHECK(cells[0] == "jammed-recall");
        return std::stod(cells[4]);
    };
    const double tab = t_of(s / "ab.csv"), tba = t_of(s / "ba.csv");
    CHECK(std::abs(tab) == doctest::Approx(std::abs(tba)));
    CHECK(tab == doctest::Approx(-tba));
    CHECK(fdi("compare " + a + " " + b + " --out " + (s / "ab.csv").string()) == 5);

    CHECK(fdi("compare " + a + " " + a) == 3);                  // identical folds: zero variance
    CHECK(fdi("compare " + a + " " + (s / "c").string()) == 3);  // different splits
    CHECK(fdi("compare " + a + " " + b + " --metric f1") == 2);
    CHECK(fdi("compare " + a + " " + (s / "nowhere").string()) == 3);
}

TEST_CASE("a grid run writes one directory per experiment and a joint report") {
    Scratch s;
    json j = json::parse(quick_config("g", "original"));
    j.erase("model");
    j.erase("treatment");
    j["grid"] = {{"models", {"MLP"}}, {"treatments", {"original", "CW"}}, {"include_rotation", {false}}};
    j["trials"] = 1;
    j["folds"] = 2;
    spit(s / "g.json", j.dump());
    REQUIRE(fdi("run --config " + (s / "g.json").string() + " --out " + (s / "g").string(), s / "log") == 0);
    CHECK(fs::exists(s / "g" / "g_MLP_original_norot" / "summary.json"));
    CHECK(fs::exists(s / "g" / "g_MLP_CW_norot" / "summary.json"));
    const std::string csv = slurp(s / "g" / "report" / "metrics.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(fs::exists(s / "g" / "report" / "comparisons.md"));
    CHECK(fdi("run --config " + (s / "g.json").string() + " --out " + (s / "g").string()) == 5);
}

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fdi {

inline constexpr int kNumClasses = 3;

/// Assembly outcome. The integer values index every per-class array.
enum class Outcome : int { Mounted = 0, NotMounted = 1, Jammed = 2 };

std::string_view label_name(int label);
/// Parses "mounted", "not_mounted" or "jammed"; nullopt otherwise.
std::optional<int> parse_label(std::string_view name);

using ClassCounts = std::array<std::size_t, kNumClasses>;

/// Where a sample came from. Synthetic samples record the two real samples
/// they interpolate and the interpolation ratio.
struct Provenance {
    bool synthetic = false;
    std::string base_id;
    std::string neighbor_id;
    double ratio = 0.0;
};

/// One assembly attempt: a [channels x length] row-major matrix plus label.
struct ScrewingSample {
    std::string id;
    int label = 0;
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<double> values;
    Provenance provenance;

    double at(std::size_t c, std::size_t t) const { return values[c * length + t]; }
    double& at(std::size_t c, std::size_t t) { return values[c * length + t]; }
};

struct Dataset {
    std::vector<ScrewingSample> samples;
    std::vector<std::string> channel_names;
    std::string source = "simulated";  // "ingested" | "simulated"
    std::optional<std::uint64_t> seed;

    std::size_t size() const { return samples.size(); }
    ClassCounts class_counts() const;
    std::vector<int> labels() const;
    /// Subset in the given index order; metadata preserved.
    Dataset select(const std::vector<std::size_t>& indices) const;
    /// Throws ArgumentError on duplicate ids, ragged or inconsistent channels.
    void validate() const;
};

/// Channel layout written by the simulator.
const std::vector<std::string>& default_channel_names();

struct SimulatorConfig {
    ClassCounts counts{306, 112, 61};
    std::size_t length = 256;
    /// Scales both white sensor noise and per-sample signature variability.
    double noise = 0.1;
    double ramp_peak = 2.0;        // mounted: torque reached at the end of the ramp [N m]
    double plateau_level = 0.3;    // not mounted: flat torque level [N m]
    double spike_height = 2.4;     // jammed: saturation torque after the spike [N m]
    double spike_position = 0.5;   // jammed: spike onset as a fraction of the series
    /// Number of samples whose axial force is offset by a gross sensor fault.
    std::size_t corrupted = 0;
    std::uint64_t seed = 0;

    /// Throws ConfigError on invalid values.
    void validate() const;
};

/// Deterministic per seed; 8 channels (see default_channel_names).
Dataset simulate(const SimulatorConfig& config);
/// Ids of the samples simulate() corrupts for `config`.
std::vector<std::string> corrupted_ids(const SimulatorConfig& config);

/// Reads a manifest CSV (`path,label[,provenance]`) and the per-sample CSVs it
/// lists. Relative paths resolve against the manifest's directory.
Dataset ingest_csv(const std::filesystem::path& manifest);

/// Writes `samples/<id>.csv` files and `manifest.csv` under `dir`. Numbers use
/// shortest round-trip formatting so output is byte-stable.
void write_csv(const Dataset& ds, const std::filesystem::path& dir);

/// Stratified holdout. Test size is round(N * fraction), distributed across
/// classes by largest remainder.
std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

/// Index form of stratified_split: (train indices, test indices), each ascending.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split_indices(
    const std::vector<int>& labels, double test_fraction, std::uint64_t seed);

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// k stratified folds; fold sizes differ by at most one, per-class counts too.
std::vector<Fold> stratified_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed);
std::vector<Fold> stratified_kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed);

}  // namespace fdi

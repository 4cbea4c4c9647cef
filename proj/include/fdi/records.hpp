#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fdi/pipeline.hpp"

namespace fdi {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kTrialSchema = "fdi.trial/1";
inline constexpr const char* kSummarySchema = "fdi.summary/1";

/// Parses an experiment config (JSON text). A top-level "grid" expands into
/// one config per model x treatment x rotation setting. ConfigError messages
/// carry the offending field path.
/// `seed`, when given, replaces the master seed (and re-derives the
/// simulator seed). Relative manifest paths resolve against the config file.
std::vector<ExperimentConfig> parse_experiment_configs(const std::string& text);
std::vector<ExperimentConfig> parse_experiment_configs(const std::string& text, std::optional<std::uint64_t> seed);
std::vector<ExperimentConfig> load_experiment_configs(const std::filesystem::path& path,
                                                      std::optional<std::uint64_t> seed = std::nullopt);

/// Simulator section of a gen-data config: either top-level "simulate" or
/// "data.simulate".
SimulatorConfig parse_simulator_config(const std::string& text);

/// Canonical JSON for a single (already expanded) config.
std::string config_to_json(const ExperimentConfig& cfg);

std::string trial_to_json_line(const TrialRecord& r);
TrialRecord trial_from_json_line(const std::string& line);

/// Appends one record per line, flushing after each.
class TrialLog {
public:
    explicit TrialLog(const std::filesystem::path& path);
    void append(const TrialRecord& r);

private:
    std::filesystem::path path_;
};

/// Writes summary.json (and model.ckpt when a final model is held) into
/// `dir`. trials.jsonl is written separately through TrialLog.
void write_summary(const ExperimentResult& result, const std::filesystem::path& dir);

/// Rebuilds a result from summary.json and trials.jsonl. Metrics are
/// recomputed from the stored confusion matrices and a mismatch is reported
/// as corruption.
ExperimentResult load_result(const std::filesystem::path& dir);

}  // namespace fdi

#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fdi/dataset.hpp"

namespace fdi {

struct PreprocessConfig {
    double z_threshold = 4.0;
    /// Truncation length; defaults to the shortest cleaned training sample.
    std::optional<std::size_t> target_length;
    std::size_t segments = 64;
    /// Keep the screwing angle next to the six force/torque channels.
    bool include_rotation = false;
};

struct Removal {
    std::string sample_id;
    std::string channel;
    double z_score = 0.0;
};

struct CleanResult {
    Dataset data;
    std::vector<Removal> removed;
};

/// Drops samples whose largest |z| of a channel mean, against the
/// distribution of that channel's means over the dataset, exceeds the
/// threshold. Refuses (ArgumentError) when a class would become empty.
CleanResult clean_outliers(const Dataset& ds, double z_threshold);

/// Keeps the first `length` steps. ArgumentError lists every shorter sample.
Dataset truncate(const Dataset& ds, std::size_t length);

/// Piecewise aggregate approximation of a row-major [channels x length]
/// matrix into `segments` frames per channel. Frames have equal span
/// length/segments; a step straddling a boundary contributes in proportion
/// to its overlap.
std::vector<double> paa(std::span<const double> values, std::size_t channels, std::size_t length,
                        std::size_t segments);
Dataset paa(const Dataset& ds, std::size_t segments);

/// Six force/torque channels, plus the rotation angle when requested.
Dataset select_channels(const Dataset& ds, bool include_rotation);

struct NormalizationStats {
    std::vector<std::string> channels;
    std::vector<double> mean;
    std::vector<double> stddev;  // population standard deviation
};

/// Per-channel statistics over every sample and step. ArgumentError names a
/// zero-variance channel.
NormalizationStats fit_normalizer(const Dataset& train);
Dataset apply_normalizer(const NormalizationStats& stats, const Dataset& ds);

}  // namespace fdi

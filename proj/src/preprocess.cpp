#include "fdi/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "fdi/errors.hpp"

namespace fdi {

CleanResult clean_outliers(const Dataset& ds, double z_threshold) {
    if (ds.samples.empty()) throw ArgumentError("clean_outliers: empty dataset");
    if (!(z_threshold > 0.0)) throw ArgumentError("clean_outliers: threshold must be positive");
    const std::size_t nc = ds.channel_names.size();
    const std::size_t n = ds.samples.size();

    std::vector<std::vector<double>> means(n, std::vector<double>(nc, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = ds.samples[i];
        for (std::size_t c = 0; c < nc; ++c) {
            double acc = 0.0;
            for (std::size_t t = 0; t < s.length; ++t) acc += s.at(c, t);
            means[i][c] = acc / static_cast<double>(s.length);
        }
    }
    std::vector<double> mu(nc, 0.0), sd(nc, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t i = 0; i < n; ++i) mu[c] += means[i][c];
        mu[c] /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) sd[c] += (means[i][c] - mu[c]) * (means[i][c] - mu[c]);
        sd[c] = std::sqrt(sd[c] / static_cast<double>(n));
    }

    CleanResult result;
    result.data.channel_names = ds.channel_names;
    result.data.source = ds.source;
    result.data.seed = ds.seed;
    for (std::size_t i = 0; i < n; ++i) {
        double worst = 0.0;
        std::size_t worst_c = 0;
        for (std::size_t c = 0; c < nc; ++c) {
            if (sd[c] == 0.0) continue;
            const double z = std::abs(means[i][c] - mu[c]) / sd[c];
            if (z > worst) {
                worst = z;
                worst_c = c;
            }
        }
        if (worst > z_threshold)
            result.removed.push_back({ds.samples[i].id, ds.channel_names[worst_c], worst});
        else
            result.data.samples.push_back(ds.samples[i]);
    }

    const ClassCounts before = ds.class_counts(), after = result.data.class_counts();
    for (int c = 0; c < kNumClasses; ++c) {
        if (before[c] > 0 && after[c] == 0) {
            std::string ids;
            for (const auto& r : result.removed) ids += (ids.empty() ? "" : ", ") + r.sample_id;
            throw ArgumentError("clean_outliers: removing [" + ids + "] would empty class " +
                                std::string(label_name(c)));
        }
    }
    return result;
}

Dataset truncate(const Dataset& ds, std::size_t length) {
    if (length == 0) throw ArgumentError("truncate: length must be positive");
    std::string offenders;
    for (const auto& s : ds.samples)
        if (s.length < length) offenders += (offenders.empty() ? "" : ", ") + s.id + " (" + std::to_string(s.length) + ")";
    if (!offenders.empty())
        throw ArgumentError("truncate: samples shorter than " + std::to_string(length) + ": " + offenders);
    Dataset out = ds;
    for (auto& s : out.samples) {
        if (s.length == length) continue;
        std::vector<double> v(s.channels * length);
        for (std::size_t c = 0; c < s.channels; ++c)
            std::copy_n(s.values.begin() + static_cast<std::ptrdiff_t>(c * s.length), length,
                        v.begin() + static_cast<std::ptrdiff_t>(c * length));
        s.values = std::move(v);
        s.length = length;
    }
    return out;
}

std::vector<double> paa(std::span<const double> values, std::size_t channels, std::size_t length,
                        std::size_t segments) {
    if (segments == 0 || segments > length)
        throw ArgumentError("paa: segments must be in [1, " + std::to_string(length) + "]");
    if (values.size() != channels * length) throw ArgumentError("paa: value count does not match shape");
    std::vector<double> out(channels * segments, 0.0);
    if (segments == length) {
        std::copy(values.begin(), values.end(), out.begin());
        return out;
    }
    // Work in units of 1/segments of a step so frame boundaries are integers:
    // step t spans [t*S, (t+1)*S), frame j spans [j*T, (j+1)*T).
    const std::size_t s = segments, n = length;
    for (std::size_t c = 0; c < channels; ++c) {
        const double* x = values.data() + c * n;
        double* y = out.data() + c * s;
        for (std::size_t j = 0; j < s; ++j) {
            const std::size_t lo = j * n, hi = (j + 1) * n;
            double acc = 0.0;
            for (std::size_t t = lo / s; t < n && t * s < hi; ++t) {
                const std::size_t a = std::max(lo, t * s), b = std::min(hi, (t + 1) * s);
                if (b > a) acc += x[t] * static_cast<double>(b - a);
            }
            y[j] = acc / static_cast<double>(n);
        }
    }
    return out;
}

Dataset paa(const Dataset& ds, std::size_t segments) {
    Dataset out = ds;
    for (auto& s : out.samples) {
        s.values = paa(s.values, s.channels, s.length, segments);
        s.length = segments;
    }
    return out;
}

Dataset select_channels(const Dataset& ds, bool include_rotation) {
    const auto& names = ds.channel_names;
    if (names.size() < 6) throw ArgumentError("select_channels: dataset needs at least six force/torque channels");
    std::vector<std::size_t> keep{0, 1, 2, 3, 4, 5};
    if (include_rotation) {
        if (names.size() != 8) throw ArgumentError("select_channels: rotation requested but dataset has no kinematics");
        keep.push_back(7);
    }
    if (keep.size() == names.size()) return ds;
    Dataset out = ds;
    out.channel_names.clear();
    for (std::size_t c : keep) out.channel_names.push_back(names[c]);
    for (auto& s : out.samples) {
        std::vector<double> v(keep.size() * s.length);
        for (std::size_t k = 0; k < keep.size(); ++k)
            std::copy_n(s.values.begin() + static_cast<std::ptrdiff_t>(keep[k] * s.length), s.length,
                        v.begin() + static_cast<std::ptrdiff_t>(k * s.length));
        s.values = std::move(v);
        s.channels = keep.size();
    }
    return out;
}

NormalizationStats fit_normalizer(const Dataset& train) {
    if (train.samples.empty()) throw ArgumentError("fit_normalizer: empty dataset");
    const std::size_t nc = train.channel_names.size();
    NormalizationStats st;
    st.channels = train.channel_names;
    st.mean.assign(nc, 0.0);
    st.stddev.assign(nc, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
        double acc = 0.0;
        std::size_t count = 0;
        for (const auto& s : train.samples) {
            for (std::size_t t = 0; t < s.length; ++t) acc += s.at(c, t);
            count += s.length;
        }
        const double mu = acc / static_cast<double>(count);
        double var = 0.0;
        for (const auto& s : train.samples)
            for (std::size_t t = 0; t < s.length; ++t) var += (s.at(c, t) - mu) * (s.at(c, t) - mu);
        const double sd = std::sqrt(var / static_cast<double>(count));
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mu))))
            throw ArgumentError("fit_normalizer: channel " + train.channel_names[c] + " has zero variance");
        st.mean[c] = mu;
        st.stddev[c] = sd;
    }
    return st;
}

Dataset apply_normalizer(const NormalizationStats& stats, const Dataset& ds) {
    if (stats.channels != ds.channel_names) throw ArgumentError("apply_normalizer: channel layout differs from fit");
    Dataset out = ds;
    for (auto& s : out.samples)
        for (std::size_t c = 0; c < s.channels; ++c)
            for (std::size_t t = 0; t < s.length; ++t) s.at(c, t) = (s.at(c, t) - stats.mean[c]) / stats.stddev[c];
    return out;
}

}  // namespace fdi

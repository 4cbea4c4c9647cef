#include "fdi/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "fdi/errors.hpp"

namespace fdi::nn {

namespace {

constexpr char kMagic[8] = {'F', 'D', 'I', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& out, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    unsigned char b[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw ArgumentError("checkpoint truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<Parameter>& params) {
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
        for (std::size_t d : p.tensor.shape()) put<std::uint64_t>(out, d);
        for (double v : p.tensor.values()) put<double>(out, v);
    }
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw ArgumentError("not a parameter checkpoint");
    const auto count = get<std::uint32_t>(in);
    std::vector<NamedTensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name.resize(get<std::uint32_t>(in));
        if (!in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()))) throw ArgumentError("checkpoint truncated");
        const auto rank = get<std::uint32_t>(in);
        for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(in)));
        t.values.resize(ad::numel(t.shape));
        for (double& v : t.values) v = get<double>(in);
        out.push_back(std::move(t));
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError("cannot write checkpoint " + path.string());
    write_checkpoint(out, model.parameters());
}

void load_checkpoint(const std::filesystem::path& path, Model& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError("cannot read checkpoint " + path.string());
    const auto tensors = read_checkpoint(in);
    auto& params = model.parameters();
    if (tensors.size() != params.size())
        throw ArgumentError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model has " +
                            std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (tensors[i].name != params[i].name || tensors[i].shape != params[i].tensor.shape())
            throw ArgumentError("checkpoint tensor " + tensors[i].name + " does not match " + params[i].name);
        std::copy(tensors[i].values.begin(), tensors[i].values.end(), params[i].tensor.mutable_values().begin());
    }
}

}  // namespace fdi::nn

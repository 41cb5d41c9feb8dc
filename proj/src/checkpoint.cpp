#include "mvanet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "mvanet/config.hpp"
#include "mvanet/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace mvanet {

namespace {

constexpr char kMagic[8] = {'M', 'V', 'A', 'N', 'E', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw IoError("checkpoint truncated reading " + what);
    return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& what) {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw IoError("checkpoint truncated reading " + what);
    return v;
}

} // namespace

void write_checkpoint(const std::string& path, const CheckpointData& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    put_u64(out, data.step);
    put_u32(out, static_cast<std::uint32_t>(data.config_text.size()));
    out.write(data.config_text.data(),
              static_cast<std::streamsize>(data.config_text.size()));
    put_u32(out, static_cast<std::uint32_t>(data.arrays.size()));
    for (const auto& [name, tensor] : data.arrays) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (Index d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        std::vector<float> f32(static_cast<std::size_t>(tensor.numel()));
        const double* src = tensor.data();
        for (std::size_t i = 0; i < f32.size(); ++i) f32[i] = static_cast<float>(src[i]);
        out.write(reinterpret_cast<const char*>(f32.data()),
                  static_cast<std::streamsize>(f32.size() * sizeof(float)));
    }
    if (!out) throw IoError("short write on checkpoint " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + path);
    char magic[8] = {};
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw IoError("not a checkpoint file: " + path);
    const std::uint32_t version = get_u32(in, "version");
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    CheckpointData data;
    data.step = get_u64(in, "step");
    const std::uint32_t cfg_len = get_u32(in, "config length");
    data.config_text.resize(cfg_len);
    if (cfg_len > 0 && !in.read(data.config_text.data(), cfg_len))
        throw IoError("checkpoint truncated reading config");
    const std::uint32_t count = get_u32(in, "array count");
    data.arrays.reserve(count);
    for (std::uint32_t a = 0; a < count; ++a) {
        const std::uint32_t name_len = get_u32(in, "array name length");
        std::string name(name_len, '\0');
        if (name_len > 0 && !in.read(name.data(), name_len))
            throw IoError("checkpoint truncated reading array name");
        const std::uint32_t rank = get_u32(in, name + " rank");
        std::vector<Index> shape(rank);
        Index numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<Index>(get_u32(in, name + " dims"));
            numel *= shape[d];
        }
        std::vector<float> f32(static_cast<std::size_t>(numel));
        if (numel > 0 &&
            !in.read(reinterpret_cast<char*>(f32.data()),
                     static_cast<std::streamsize>(f32.size() * sizeof(float))))
            throw IoError("checkpoint truncated reading " + name + " data");
        Tensor t(shape);
        double* dst = t.data();
        for (std::size_t i = 0; i < f32.size(); ++i) dst[i] = static_cast<double>(f32[i]);
        data.arrays.emplace_back(std::move(name), std::move(t));
    }
    return data;
}

CheckpointData snapshot(const ParamRegistry& reg, const RunConfig& cfg, std::uint64_t step) {
    CheckpointData data;
    data.step = step;
    data.config_text = config_to_text(cfg);
    for (const auto& e : reg.entries()) {
        const Tensor& v = e.buf ? *e.buf : e.param->value;
        // Round-trip through f32 now, so states saved and then resumed match
        // states saved straight through.
        Tensor t(v.shape());
        const double* src = v.data();
        double* dst = t.data();
        for (Index i = 0; i < v.numel(); ++i)
            dst[i] = static_cast<double>(static_cast<float>(src[i]));
        data.arrays.emplace_back(e.name, std::move(t));
    }
    return data;
}

void restore(ParamRegistry& reg, const CheckpointData& data) {
    for (const auto& [name, tensor] : data.arrays) {
        if (!reg.has(name))
            throw ConfigError("checkpoint array " + name + " has no home in this model");
        reg.set_value(name, tensor);
    }
}

} // namespace mvanet

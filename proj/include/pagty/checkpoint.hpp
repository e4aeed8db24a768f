#pragma once

// Checkpoint container. Little-endian binary, version 1:
//
//   "PAGTYCKP"                          8-byte magic
//   u32  version                        = 1
//   str  config                         canonical JSON text of ModelConfig
//   str  metadata                       canonical JSON text (free-form: train config, scores)
//   i64  epoch
//   str  rng_state                      opaque
//   str  optimizer_state                opaque
//   u32  tensor count, then per tensor:
//        str  name                      dotted module path
//        u8   kind                      0 = parameter, 1 = buffer
//        u8   dtype                     0 = f32, 1 = f64, 2 = i64
//        u32  ndim, i64 dims[ndim]
//        u64  byte count, raw row-major bytes
//
//   str = u64 byte length followed by the bytes.

#include <torch/torch.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pagty/config.hpp"
#include "pagty/errors.hpp"
#include "pagty/model.hpp"

namespace pagty {

struct NamedArray {
    std::string name;
    bool is_buffer = false;
    torch::Tensor value;  // contiguous CPU tensor
};

struct Checkpoint {
    ModelConfig config;
    nlohmann::json metadata = nlohmann::json::object();
    std::int64_t epoch = 0;
    std::string rng_state;
    std::string optimizer_state;
    std::vector<NamedArray> arrays;
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'P', 'A', 'G', 'T', 'Y', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_str(std::ostream& os, const std::string& s) {
    put<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("checkpoint: truncated file");
    return v;
}

inline std::string get_str(std::istream& is, std::uint64_t limit = (1ull << 34)) {
    const auto n = get<std::uint64_t>(is);
    if (n > limit) throw DataError("checkpoint: corrupt length field");
    std::string s(n, '\0');
    if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint: truncated file");
    return s;
}

inline std::uint8_t dtype_code(torch::Dtype t) {
    if (t == torch::kFloat32) return 0;
    if (t == torch::kFloat64) return 1;
    if (t == torch::kInt64) return 2;
    throw ConfigError("checkpoint: unsupported tensor dtype");
}

inline torch::Dtype dtype_from_code(std::uint8_t c) {
    switch (c) {
        case 0: return torch::kFloat32;
        case 1: return torch::kFloat64;
        case 2: return torch::kInt64;
    }
    throw DataError("checkpoint: unknown dtype code " + std::to_string(c));
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    using namespace detail;
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put<std::uint32_t>(os, kCheckpointVersion);
    put_str(os, canonical_text(to_json(ck.config)));
    put_str(os, canonical_text(ck.metadata));
    put<std::int64_t>(os, ck.epoch);
    put_str(os, ck.rng_state);
    put_str(os, ck.optimizer_state);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.arrays.size()));
    for (const auto& a : ck.arrays) {
        auto t = a.value.detach().to(torch::kCPU).contiguous();
        put_str(os, a.name);
        put<std::uint8_t>(os, a.is_buffer ? 1 : 0);
        put<std::uint8_t>(os, dtype_code(t.scalar_type()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim()));
        for (auto d : t.sizes()) put<std::int64_t>(os, d);
        const auto bytes = static_cast<std::uint64_t>(t.numel() * t.element_size());
        put<std::uint64_t>(os, bytes);
        os.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(bytes));
    }
}

inline Checkpoint read_checkpoint(std::istream& is) {
    using namespace detail;
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw DataError("checkpoint: bad magic (not a pagty checkpoint)");
    const auto version = get<std::uint32_t>(is);
    if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ck;
    try {
        ck.config = model_config_from_json(nlohmann::json::parse(get_str(is)));
        ck.metadata = nlohmann::json::parse(get_str(is));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: malformed config block: ") + e.what());
    }
    ck.epoch = get<std::int64_t>(is);
    ck.rng_state = get_str(is);
    ck.optimizer_state = get_str(is);
    const auto n = get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < n; ++i) {
        NamedArray a;
        a.name = get_str(is, 4096);
        a.is_buffer = get<std::uint8_t>(is) != 0;
        const auto dtype = dtype_from_code(get<std::uint8_t>(is));
        const auto ndim = get<std::uint32_t>(is);
        if (ndim > 8) throw DataError("checkpoint: corrupt rank for " + a.name);
        std::vector<std::int64_t> dims(ndim);
        for (auto& d : dims) d = get<std::int64_t>(is);
        const auto bytes = get<std::uint64_t>(is);
        a.value = torch::empty(dims, torch::TensorOptions().dtype(dtype));
        if (bytes != static_cast<std::uint64_t>(a.value.numel() * a.value.element_size()))
            throw DataError("checkpoint: size mismatch for " + a.name);
        if (bytes && !is.read(static_cast<char*>(a.value.data_ptr()), static_cast<std::streamsize>(bytes)))
            throw DataError("checkpoint: truncated tensor " + a.name);
        ck.arrays.push_back(std::move(a));
    }
    return ck;
}

/// Writes to `<path>.tmp` and renames, so a failed write never clobbers an existing file.
inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("checkpoint: cannot open " + tmp.string() + " for writing");
        write_checkpoint(os, ck);
        os.flush();
        if (!os) {
            os.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("checkpoint: write to " + tmp.string() + " failed (disk full?)");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("checkpoint: cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path.string());
    return read_checkpoint(is);
}

/// Snapshot of a model's parameters and buffers (values are cloned).
inline Checkpoint capture(PagTransYnet& model, std::int64_t epoch = 0) {
    Checkpoint ck;
    ck.config = model->config();
    ck.epoch = epoch;
    for (const auto& p : model->named_parameters()) ck.arrays.push_back({p.key(), false, p.value().detach().clone()});
    for (const auto& b : model->named_buffers()) ck.arrays.push_back({b.key(), true, b.value().detach().clone()});
    return ck;
}

/// Copies arrays into `model`; every parameter and buffer must be present with matching shape.
inline void restore(PagTransYnet& model, const Checkpoint& ck) {
    torch::NoGradGuard no_grad;
    std::map<std::string, const NamedArray*> by_name;
    for (const auto& a : ck.arrays) by_name[a.name] = &a;
    auto copy_into = [&](const std::string& name, torch::Tensor& dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("checkpoint: missing array '" + name + "'");
        const auto& src = it->second->value;
        if (src.sizes() != dst.sizes())
            throw DataError("checkpoint: shape mismatch for '" + name + "': " + shape_string(src) + " vs " +
                            shape_string(dst));
        dst.copy_(src);
        by_name.erase(it);
    };
    for (auto& p : model->named_parameters()) copy_into(p.key(), p.value());
    for (auto& b : model->named_buffers()) copy_into(b.key(), b.value());
    if (!by_name.empty()) throw DataError("checkpoint: unexpected array '" + by_name.begin()->first + "'");
}

/// Builds a model from the checkpoint's config and loads its weights.
inline PagTransYnet model_from_checkpoint(const Checkpoint& ck) {
    auto model = build_model(ck.config);
    restore(model, ck);
    return model;
}

}  // namespace pagty

#ifndef AMC_CHECKPOINT_HPP
#define AMC_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "amc/adam.hpp"
#include "amc/config.hpp"
#include "amc/error.hpp"
#include "amc/model.hpp"

namespace amc {

// On-disk training artifact. Layout (all integers little-endian):
//   "AMCMETA1" | u32 version | u32 scalar width | u64 len + config key=value
//   u64 episodes done | f64 best val accuracy | u8 has optimizer
//   [i64 adam step] | u32 record count | records
// Every record: u16 name len + bytes, u8 ndim, i32 dims, raw scalar payload,
// then (if optimizer state present) the first and second moment payloads of
// the same length. Loads are EOF-checked so a truncated file is an error,
// never partial state.
template <typename S>
struct Checkpoint {
    ModelConfig cfg;
    std::map<std::string, Tensor<S>> params;
    bool has_opt = false;
    std::map<std::string, typename Adam<S>::Slot> opt_slots;
    std::int64_t adam_step = 0;
    std::uint64_t episodes_done = 0;
    double best_val_accuracy = -1.0;
};

namespace detail {

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u16(std::ostream& out, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    put_bytes(out, b, 2);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(out, b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(out, b, 8);
}

inline void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

template <typename S>
void put_scalars(std::ostream& out, const std::vector<S>& v) {
    // Scalars go out in the host representation; the width field on load
    // rejects mismatched builds. Little-endian hosts are assumed throughout.
    put_bytes(out, v.data(), v.size() * sizeof(S));
}

inline void get_bytes(std::istream& in, void* p, std::size_t n, const std::string& what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw DataError("checkpoint truncated while reading " + what);
}

inline std::uint16_t get_u16(std::istream& in, const std::string& what) {
    unsigned char b[2];
    get_bytes(in, b, 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    get_bytes(in, b, 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(std::istream& in, const std::string& what) {
    unsigned char b[8];
    get_bytes(in, b, 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline double get_f64(std::istream& in, const std::string& what) {
    const std::uint64_t bits = get_u64(in, what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

template <typename S>
std::vector<S> get_scalars(std::istream& in, std::size_t n, const std::string& what) {
    std::vector<S> v(n);
    get_bytes(in, v.data(), n * sizeof(S), what);
    return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'A', 'M', 'C', 'M', 'E', 'T', 'A', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(const Checkpoint<S>& ckpt, std::ostream& out) {
    detail::put_bytes(out, kCheckpointMagic, 8);
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(sizeof(S)));
    const std::string cfg_text = ckpt.cfg.to_kv();
    detail::put_u64(out, cfg_text.size());
    detail::put_bytes(out, cfg_text.data(), cfg_text.size());
    detail::put_u64(out, ckpt.episodes_done);
    detail::put_f64(out, ckpt.best_val_accuracy);
    out.put(ckpt.has_opt ? '\1' : '\0');
    if (ckpt.has_opt) detail::put_u64(out, static_cast<std::uint64_t>(ckpt.adam_step));
    detail::put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, t] : ckpt.params) {
        detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
        detail::put_bytes(out, name.data(), name.size());
        out.put(static_cast<char>(t.ndim()));
        for (int d = 0; d < t.ndim(); ++d) detail::put_u32(out, static_cast<std::uint32_t>(t.dim(d)));
        detail::put_scalars(out, t.values());
        if (ckpt.has_opt) {
            const auto& slot = ckpt.opt_slots.at(name);
            detail::put_scalars(out, slot.m);
            detail::put_scalars(out, slot.v);
        }
    }
    if (!out) throw DataError("failed writing checkpoint stream");
}

template <typename S>
void save_checkpoint(const Checkpoint<S>& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    save_checkpoint(ckpt, static_cast<std::ostream&>(out));
    if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[8];
    detail::get_bytes(in, magic, 8, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw DataError("'" + path + "' is not a checkpoint (bad magic)");
    const std::uint32_t version = detail::get_u32(in, "version");
    if (version != kCheckpointVersion)
        throw DataError("checkpoint '" + path + "' has unsupported version " + std::to_string(version));
    const std::uint32_t width = detail::get_u32(in, "scalar width");
    if (width != sizeof(S))
        throw DataError("checkpoint '" + path + "' stores " + std::to_string(width) +
                        "-byte scalars, this build uses " + std::to_string(sizeof(S)));

    Checkpoint<S> ckpt;
    const std::uint64_t cfg_len = detail::get_u64(in, "config length");
    std::string cfg_text(cfg_len, '\0');
    detail::get_bytes(in, cfg_text.data(), cfg_len, "config block");
    ckpt.cfg = ModelConfig::from_kv(cfg_text);
    ckpt.episodes_done = detail::get_u64(in, "episode counter");
    ckpt.best_val_accuracy = detail::get_f64(in, "best accuracy");
    char flag;
    detail::get_bytes(in, &flag, 1, "optimizer flag");
    ckpt.has_opt = flag != 0;
    if (ckpt.has_opt) ckpt.adam_step = static_cast<std::int64_t>(detail::get_u64(in, "optimizer step"));

    const std::uint32_t n_records = detail::get_u32(in, "record count");
    for (std::uint32_t r = 0; r < n_records; ++r) {
        const std::uint16_t name_len = detail::get_u16(in, "parameter name length");
        std::string name(name_len, '\0');
        detail::get_bytes(in, name.data(), name_len, "parameter name");
        char ndim;
        detail::get_bytes(in, &ndim, 1, "rank of '" + name + "'");
        std::vector<int> shape;
        std::size_t count = 1;
        for (int d = 0; d < ndim; ++d) {
            const std::uint32_t extent = detail::get_u32(in, "shape of '" + name + "'");
            shape.push_back(static_cast<int>(extent));
            count *= extent;
        }
        auto values = detail::get_scalars<S>(in, count, "payload of '" + name + "'");
        ckpt.params.emplace(name, Tensor<S>::from(shape, std::move(values)));
        if (ckpt.has_opt) {
            typename Adam<S>::Slot slot;
            slot.m = detail::get_scalars<S>(in, count, "first moment of '" + name + "'");
            slot.v = detail::get_scalars<S>(in, count, "second moment of '" + name + "'");
            ckpt.opt_slots.emplace(name, std::move(slot));
        }
    }
    if (in.peek() != EOF) throw DataError("checkpoint '" + path + "' has trailing bytes");
    return ckpt;
}

// Snapshot a model (and optionally its optimizer) into a checkpoint value.
template <typename S>
Checkpoint<S> make_checkpoint(const Model<S>& model, const Adam<S>* opt, std::uint64_t episodes_done,
                              double best_val_accuracy) {
    Checkpoint<S> ckpt;
    ckpt.cfg = model.cfg;
    for (const auto& [name, t] : model.params) ckpt.params.emplace(name, Tensor<S>::from(t.shape(), t.values()));
    if (opt != nullptr) {
        ckpt.has_opt = true;
        ckpt.opt_slots = opt->slots();
        ckpt.adam_step = opt->step_count();
    }
    ckpt.episodes_done = episodes_done;
    ckpt.best_val_accuracy = best_val_accuracy;
    return ckpt;
}

// Rebuild a model from a checkpoint, rejecting any name or shape drift
// against what the config would construct today.
template <typename S>
Model<S> restore_model(const Checkpoint<S>& ckpt) {
    Model<S> model = Model<S>::init(ckpt.cfg, 0);
    if (model.params.size() != ckpt.params.size())
        throw DataError("checkpoint carries " + std::to_string(ckpt.params.size()) + " parameters, model wants " +
                        std::to_string(model.params.size()));
    for (auto& [name, t] : model.params) {
        auto it = ckpt.params.find(name);
        if (it == ckpt.params.end()) throw DataError("checkpoint is missing parameter '" + name + "'");
        if (it->second.shape() != t.shape()) throw DataError("checkpoint shape mismatch for '" + name + "'");
        t.values_mut() = it->second.values();
    }
    return model;
}

}  // namespace amc

#endif

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mr2/binary_io.hpp"
#include "mr2/config.hpp"
#include "mr2/errors.hpp"
#include "mr2/feature_stats.hpp"
#include "mr2/model.hpp"

namespace mr2 {

struct Checkpoint {
    ModelParams params;
    ClassStats stats;
    std::string config_text;  // TrainConfig as key = value lines

    bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "MR2C", u32 version,
// architecture: u32 encoder, u32 head, u32 activation, u32 d_in, u32 hidden,
//               u32 d, u32 K,
// u32 block count, per block u32 rows, u32 cols, f64[rows*cols],
// ClassStats section, u32 config length, config bytes. Little-endian.
inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
    check_params(ck.params);
    io::ByteWriter w;
    w.put_magic("MR2C");
    w.put<std::uint32_t>(kCheckpointVersion);
    const auto& a = ck.params.arch;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.encoder));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.head));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.activation));
    for (std::size_t v : {a.input_dim, a.hidden_dim, a.feature_dim, a.num_classes})
        w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.params.blocks.size()));
    for (const auto& b : ck.params.blocks) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.rows()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.cols()));
        w.put_array<double>(b.flat());
    }
    ck.stats.serialize(w);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.config_text.size()));
    w.put_array<char>(std::span<const char>(ck.config_text.data(), ck.config_text.size()));
    return w.bytes();
}

inline Checkpoint decode_checkpoint(std::span<const char> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("MR2C");
    if (r.get<std::uint32_t>() != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
    Checkpoint ck;
    auto& a = ck.params.arch;
    const auto enc = r.get<std::uint32_t>();
    const auto head = r.get<std::uint32_t>();
    const auto act = r.get<std::uint32_t>();
    if (enc > 2 || head > 1 || act > 1) throw FormatError("checkpoint: bad architecture descriptor");
    a.encoder = static_cast<EncoderKind>(enc);
    a.head = static_cast<HeadKind>(head);
    a.activation = static_cast<Activation>(act);
    a.input_dim = r.get<std::uint32_t>();
    a.hidden_dim = r.get<std::uint32_t>();
    a.feature_dim = r.get<std::uint32_t>();
    a.num_classes = r.get<std::uint32_t>();
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    try {
        validate(a);
        shapes = block_shapes(a);
    } catch (const InputError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    const std::size_t blocks = r.get<std::uint32_t>();
    if (blocks != shapes.size()) throw FormatError("checkpoint: block count does not match architecture");
    for (std::size_t i = 0; i < blocks; ++i) {
        const std::size_t rows = r.get<std::uint32_t>();
        const std::size_t cols = r.get<std::uint32_t>();
        if (rows != shapes[i].first || cols != shapes[i].second)
            throw FormatError("checkpoint: block shape does not match architecture");
        Matrix m(rows, cols);
        const auto v = r.get_array<double>(rows * cols);
        std::copy(v.begin(), v.end(), m.flat().begin());
        if (!all_finite(m.flat())) throw FormatError("checkpoint: non-finite parameter");
        ck.params.blocks.push_back(std::move(m));
    }
    ck.stats = ClassStats::deserialize(r);
    if (ck.stats.num_classes() != a.num_classes || ck.stats.feature_dim() != a.feature_dim)
        throw FormatError("checkpoint: statistics do not match architecture");
    const std::size_t len = r.get<std::uint32_t>();
    const auto text = r.get_array<char>(len);
    ck.config_text.assign(text.begin(), text.end());
    if (!r.at_end()) throw FormatError("checkpoint: trailing bytes");
    return ck;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    const auto bytes = encode_checkpoint(ck);
    io::write_file_atomic(path, bytes);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    return decode_checkpoint(bytes);
}

}  // namespace mr2

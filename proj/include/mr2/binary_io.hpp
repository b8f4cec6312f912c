#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "mr2/errors.hpp"

namespace mr2::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swapping");

// Appends little-endian scalars and arrays to a byte buffer.
class ByteWriter {
public:
    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put_array(std::span<const T> v) {
        const auto* p = reinterpret_cast<const char*>(v.data());
        buf_.insert(buf_.end(), p, p + v.size_bytes());
    }

    void put_magic(std::string_view magic) { buf_.insert(buf_.end(), magic.begin(), magic.end()); }

    const std::vector<char>& bytes() const noexcept { return buf_; }

private:
    std::vector<char> buf_;
};

// Bounds-checked reader over a byte buffer; truncation raises FormatError.
class ByteReader {
public:
    explicit ByteReader(std::span<const char> data) : data_(data) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    std::vector<T> get_array(std::size_t n) {
        if (n > remaining() / sizeof(T)) throw FormatError("truncated array");
        std::vector<T> out(n);
        std::memcpy(out.data(), data_.data() + pos_, n * sizeof(T));
        pos_ += n * sizeof(T);
        return out;
    }

    void expect_magic(std::string_view magic) {
        need(magic.size());
        if (std::string_view(data_.data() + pos_, magic.size()) != magic)
            throw FormatError("bad magic, expected \"" + std::string(magic) + "\"");
        pos_ += magic.size();
    }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool at_end() const noexcept { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw FormatError("truncated file");
    }

    std::span<const char> data_;
    std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Writes to a sibling temporary and renames on success so a failed write
// never leaves a partial file at `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const char> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw FormatError("write failed for " + path.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span<const char>(text.data(), text.size()));
}

}  // namespace mr2::io

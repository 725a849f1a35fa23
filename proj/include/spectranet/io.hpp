#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <openssl/evp.h>

namespace spectranet::io {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

namespace fs = std::filesystem;

// ============================================================================
// Little-endian byte buffers
// ============================================================================

class ByteWriter {
public:
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void bytes(const std::string& s) { raw(s.data(), s.size()); }
    void f32s(const float* p, std::size_t n) { raw(p, n * sizeof(float)); }
    void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    const std::string& str() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void f32s(float* p, std::size_t n) { raw(p, n * sizeof(float)); }
    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n)
            throw std::runtime_error(source_ + ": truncated file (need " + std::to_string(n) + " bytes at offset " +
                                     std::to_string(pos_) + ")");
    }
    std::string data_;
    std::string source_;
    std::size_t pos_ = 0;
};

// ============================================================================
// Files
// ============================================================================

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open input file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes via a sibling temp file and renames, so readers never see a partial file.
inline void write_file_atomic(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream ss;
    for (unsigned int i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return ss.str();
}

inline std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

/// Shortest round-trip decimal for CSV/JSON numeric output.
inline std::string fmt(double v) {
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    for (int p = 6; p < 17; ++p) {
        std::ostringstream t;
        t << std::setprecision(p) << v;
        if (std::stod(t.str()) == v) return t.str();
    }
    std::ostringstream t;
    t << std::setprecision(17) << v;
    return t.str();
}

}  // namespace spectranet::io

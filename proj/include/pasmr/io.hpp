#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pasmr {

// Little-endian primitives for checkpoint files. Explicit byte order keeps
// the format stable across platforms.

inline void write_u8(std::ostream& os, std::uint8_t v) {
    os.put(static_cast<char>(v));
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b, 8);
}

inline void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

inline std::uint8_t read_u8(std::istream& is) {
    const int c = is.get();
    if (c == EOF) throw std::runtime_error("unexpected end of file");
    return static_cast<std::uint8_t>(c);
}

inline std::uint32_t read_u32(std::istream& is) {
    char b[4];
    if (!is.read(b, 4)) throw std::runtime_error("unexpected end of file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& is) {
    char b[8];
    if (!is.read(b, 8)) throw std::runtime_error("unexpected end of file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    return v;
}

inline double read_f64(std::istream& is) {
    const std::uint64_t bits = read_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

/// Line-delimited text file writer (one record per line, header line first).
class LineFileWriter {
public:
    explicit LineFileWriter(const std::string& path) : os_(path, std::ios::binary) {
        if (!os_) throw std::runtime_error("cannot open '" + path + "' for writing");
        path_ = path;
    }
    void line(const std::string& s) {
        os_ << s << '\n';
        if (!os_) throw std::runtime_error("write failed for '" + path_ + "'");
    }

private:
    std::ofstream os_;
    std::string path_;
};

std::vector<std::string> read_lines(const std::string& path);

/// FNV-1a 64-bit hash, used for config hashes.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v);

}  // namespace pasmr

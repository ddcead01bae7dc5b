#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "dradapt/error.hpp"

namespace dradapt::binio {

// Little-endian fixed-width encoding, independent of host byte order.

inline void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_string(std::ostream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

/// Reader that throws on short reads, naming the file.
class Reader {
public:
    Reader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

    void bytes(char* dst, std::size_t n) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw Error(name_ + ": truncated file");
    }

    std::uint64_t u64() {
        unsigned char b[8];
        bytes(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    std::uint32_t u32() {
        unsigned char b[4];
        bytes(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string string(std::uint64_t max_len = 1u << 30) {
        auto n = u64();
        if (n > max_len) throw Error(name_ + ": corrupt string length");
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }

    /// Throws unless the stream is exhausted.
    void expect_end() {
        if (in_.peek() != std::char_traits<char>::eof()) throw Error(name_ + ": trailing bytes");
    }

private:
    std::istream& in_;
    std::string name_;
};

}  // namespace dradapt::binio

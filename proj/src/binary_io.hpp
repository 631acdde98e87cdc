#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "quadrom/errors.hpp"

namespace quadrom::detail {

/// Raw 64-bit IEEE-754 little-endian doubles, independent of host endianness.
inline void write_doubles_le(std::ostream& out, std::span<const double> values) {
    for (double v : values) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
}

inline std::vector<double> read_doubles_le(std::istream& in, std::size_t count) {
    std::vector<double> values(count);
    std::vector<unsigned char> buf(count * 8);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size())
        throw CorruptDataset("binary array shorter than declared shape");
    for (std::size_t k = 0; k < count; ++k) {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<std::uint64_t>(buf[k * 8 + i]) << (8 * i);
        values[k] = std::bit_cast<double>(bits);
    }
    return values;
}

}  // namespace quadrom::detail

#pragma once

// Little-endian helpers shared by the WAV and vector-library codecs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

namespace cirgest::detail {

template <typename T>
T byteswap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

template <typename T>
void put_le(std::ostream& os, T v) {
    v = byteswap_if_big(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get_le(std::istream& is, T& v) {
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) return false;
    v = byteswap_if_big(v);
    return true;
}

}  // namespace cirgest::detail

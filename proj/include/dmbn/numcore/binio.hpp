#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "dmbn/error.hpp"

// Little-endian primitive readers/writers for the binary artifact formats.
namespace dmbn::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
   public:
    explicit Writer(std::ostream& os) : os_(os) {}

    template <typename V>
        requires std::is_arithmetic_v<V>
    void put(V v) {
        os_.write(reinterpret_cast<const char*>(&v), sizeof(V));
    }
    void u8(std::uint8_t v) { put(v); }
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void f32(float v) { put(v); }
    void f64(double v) { put(v); }

    void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void magic(const char (&m)[5]) { bytes(m, 4); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void f32s(const float* p, std::size_t n) { bytes(p, n * sizeof(float)); }

    void check() const {
        if (!os_) throw FormatError("write failed");
    }

   private:
    std::ostream& os_;
};

class Reader {
   public:
    explicit Reader(std::istream& is) : is_(is) {}

    template <typename V>
        requires std::is_arithmetic_v<V>
    V get() {
        V v{};
        bytes(&v, sizeof(V));
        return v;
    }
    std::uint8_t u8() { return get<std::uint8_t>(); }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    float f32() { return get<float>(); }
    double f64() { return get<double>(); }

    void bytes(void* p, std::size_t n) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) throw FormatError("unexpected end of file");
    }
    void expect_magic(const char (&m)[5]) {
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, m, 4) != 0) {
            throw FormatError(std::string("bad magic: expected \"") + m + "\", found \"" + std::string(got, 4) + "\"");
        }
    }
    std::string str(std::size_t max_len = 1u << 20) {
        const std::uint32_t n = u32();
        if (n > max_len) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    void f32s(float* p, std::size_t n) { bytes(p, n * sizeof(float)); }

    bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

   private:
    std::istream& is_;
};

}  // namespace dmbn::io

#pragma once

// Little-endian readers and writers for the checkpoint and dataset formats.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "cartoondiff/error.hpp"

namespace cartoondiff::detail {

class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc)
    {
        if (!out_) {
            throw IoError("cannot open " + path + " for writing");
        }
    }

    void bytes(const void* data, std::size_t n)
    {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out_) {
            throw IoError("write failed: " + path_);
        }
    }

    void u32(std::uint32_t v)
    {
        std::array<unsigned char, 4> b{};
        for (int i = 0; i < 4; ++i) {
            b[static_cast<std::size_t>(i)] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
        }
        bytes(b.data(), b.size());
    }

    void u64(std::uint64_t v)
    {
        u32(static_cast<std::uint32_t>(v & 0xffffffffu));
        u32(static_cast<std::uint32_t>(v >> 32));
    }

    void f32(float v)
    {
        std::uint32_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        u32(bits);
    }

    void f64(double v)
    {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }

    void finish()
    {
        out_.flush();
        if (!out_) {
            throw IoError("flush failed: " + path_);
        }
    }

private:
    std::string path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path)
      : path_(path), in_(path, std::ios::binary)
    {
        if (!in_) {
            throw IoError("cannot open " + path);
        }
    }

    void bytes(void* data, std::size_t n)
    {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw TruncationError(path_ + ": file truncated");
        }
    }

    std::uint32_t u32()
    {
        std::array<unsigned char, 4> b{};
        bytes(b.data(), b.size());
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | b[static_cast<std::size_t>(i)];
        }
        return v;
    }

    std::uint64_t u64()
    {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }

    float f32()
    {
        const std::uint32_t bits = u32();
        float v = 0;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    double f64()
    {
        const std::uint64_t bits = u64();
        double v = 0;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    void expect_magic(const char (&magic)[5])
    {
        char got[4] = {};
        in_.read(got, 4);
        if (in_.gcount() != 4 || std::memcmp(got, magic, 4) != 0) {
            throw FormatError(path_ + ": bad magic, expected " + std::string(magic, 4));
        }
    }

    bool at_end()
    {
        return in_.peek() == std::char_traits<char>::eof();
    }

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
};

}  // namespace cartoondiff::detail

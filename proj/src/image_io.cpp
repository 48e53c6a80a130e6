#include "cartoondiff/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

namespace cartoondiff {

namespace {

constexpr double kClampTolerance = 1e-3;

class HeaderParser {
public:
    explicit HeaderParser(std::string_view bytes) : bytes_(bytes) { }

    void skip_space_and_comments()
    {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
                    ++pos_;
                }
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                return;
            }
        }
    }

    int integer()
    {
        skip_space_and_comments();
        if (pos_ >= bytes_.size()) {
            throw TruncationError("netpbm header truncated");
        }
        if (!std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            throw FormatError("malformed netpbm header");
        }
        long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > 1 << 20) {
                throw FormatError("netpbm header value too large");
            }
            ++pos_;
        }
        return static_cast<int>(v);
    }

    /// Exactly one whitespace byte separates the header from the raster.
    void end_of_header()
    {
        if (pos_ >= bytes_.size()) {
            throw TruncationError("netpbm header truncated");
        }
        if (!std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            throw FormatError("malformed netpbm header");
        }
        ++pos_;
    }

    std::size_t pos() const { return pos_; }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

unsigned char to_byte(float v)
{
    const double scaled = std::floor((static_cast<double>(v) + 1.0) * 127.5 + 0.5);
    return static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0));
}

std::string encode_netpbm(const ImageTensor& img)
{
    if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3)) {
        throw ShapeError("netpbm encoding needs a 1- or 3-channel C x H x W image, got " + shape_str(img.shape()));
    }
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    bool clamped = false;
    for (float v : img.data()) {
        if (!std::isfinite(v)) {
            throw NonFiniteError("cannot encode non-finite pixel");
        }
        const double excess = std::abs(static_cast<double>(v)) - 1.0;
        if (excess > kClampTolerance) {
            throw RangeError("pixel value " + std::to_string(v) + " outside [-1, 1]");
        }
        clamped = clamped || excess > 0.0;
    }
    if (clamped) {
        std::cerr << "warning: clamping pixel values slightly outside [-1, 1]\n";
    }
    std::ostringstream os;
    os << (C == 1 ? "P5" : "P6") << '\n' << W << ' ' << H << "\n255\n";
    std::string out = os.str();
    out.reserve(out.size() + C * H * W);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            for (std::size_t c = 0; c < C; ++c) {
                out.push_back(static_cast<char>(to_byte(img[(c * H + y) * W + x])));
            }
        }
    }
    return out;
}

ImageTensor decode_netpbm(std::string_view bytes)
{
    if (bytes.size() < 2) {
        throw TruncationError("netpbm data truncated");
    }
    std::size_t C = 0;
    if (bytes.substr(0, 2) == "P5") {
        C = 1;
    } else if (bytes.substr(0, 2) == "P6") {
        C = 3;
    } else {
        throw FormatError("unsupported netpbm magic (expected P5 or P6)");
    }
    HeaderParser p(bytes.substr(2));
    const int W = p.integer();
    const int H = p.integer();
    const int maxval = p.integer();
    if (W <= 0 || H <= 0) {
        throw FormatError("netpbm dimensions must be positive");
    }
    if (maxval != 255) {
        throw FormatError("unsupported netpbm maxval " + std::to_string(maxval) + " (only 255)");
    }
    p.end_of_header();
    const std::size_t offset = 2 + p.pos();
    const std::size_t need = C * static_cast<std::size_t>(H) * static_cast<std::size_t>(W);
    if (bytes.size() - offset < need) {
        throw TruncationError("netpbm raster truncated");
    }
    ImageTensor img({C, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
    std::size_t k = offset;
    for (std::size_t y = 0; y < static_cast<std::size_t>(H); ++y) {
        for (std::size_t x = 0; x < static_cast<std::size_t>(W); ++x) {
            for (std::size_t c = 0; c < C; ++c) {
                const auto b = static_cast<unsigned char>(bytes[k++]);
                img[(c * H + y) * W + x] = static_cast<float>(b / 127.5 - 1.0);
            }
        }
    }
    return img;
}

void encode_image(const ImageTensor& img, const std::string& path)
{
    const std::string data = encode_netpbm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) {
        throw IoError("write failed: " + path);
    }
}

ImageTensor decode_image(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_netpbm(data);
}

}  // namespace cartoondiff

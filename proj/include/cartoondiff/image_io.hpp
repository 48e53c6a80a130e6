#pragma once

#include <string>
#include <string_view>

#include "cartoondiff/tensor.hpp"

namespace cartoondiff {

/// Binary PGM (P5) for one channel, PPM (P6) for three, maxval 255.
/// Values map linearly from [-1, 1] to [0, 255] with round-half-up. Values
/// outside [-1, 1] by less than 1e-3 are clamped with a warning on stderr;
/// anything further out is a RangeError.
std::string encode_netpbm(const ImageTensor& img);

ImageTensor decode_netpbm(std::string_view bytes);

void encode_image(const ImageTensor& img, const std::string& path);

ImageTensor decode_image(const std::string& path);

/// Pixel byte for a value in [-1, 1].
unsigned char to_byte(float v);

}  // namespace cartoondiff

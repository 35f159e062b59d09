#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace unav {

struct View;  // world.hpp

/// Minimal deterministic 8-bit grayscale PNG encoder (stored deflate
/// blocks, no external compression dependency).
std::string encode_gray_png(int width, int height,
                            const std::vector<std::uint8_t>& pixels);

/// Depth view visualization for remote payloads: linear normalization of
/// [0, max_range] meters to [0, 255]; no-return pixels render as 255.
std::vector<std::uint8_t> depth_to_gray(const View& view, double max_range);

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

}  // namespace unav

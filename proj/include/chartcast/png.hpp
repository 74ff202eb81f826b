#pragma once

// Minimal dependency-free PNG output: 8-bit RGB, stored (uncompressed)
// deflate blocks. Good enough for inspecting rendered charts.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace chartcast {

std::vector<std::uint8_t> encode_png_rgb8(const std::uint8_t* pixels,
                                          std::size_t width,
                                          std::size_t height);

void write_png_rgb8(const std::string& path, const std::uint8_t* pixels,
                    std::size_t width, std::size_t height);

}  // namespace chartcast

#pragma once

// Deterministic line-chart rendering: display-range normalization, a fixed
// 12-color palette keyed by variate index, and integer polyline
// rasterization with no anti-aliasing, so buffers are byte-identical across
// runs and platforms.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "chartcast/dataset.hpp"

namespace chartcast {

// 12 evenly spaced full-saturation hues, frozen as byte triples.
inline constexpr std::array<std::array<std::uint8_t, 3>, 12> kPalette = {{
    {255, 0, 0},
    {255, 128, 0},
    {255, 255, 0},
    {128, 255, 0},
    {0, 255, 0},
    {0, 255, 128},
    {0, 255, 255},
    {0, 128, 255},
    {0, 0, 255},
    {128, 0, 255},
    {255, 0, 255},
    {255, 0, 128},
}};

inline constexpr std::array<std::uint8_t, 3> kBackground = {255, 255, 255};
// Single color used for every variate when colorization is ablated.
inline constexpr std::array<std::uint8_t, 3> kMonochrome = {0, 0, 0};

struct VariateImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // height x width x 3, row-major RGB
    std::size_t variate_index = 0;
    std::array<std::uint8_t, 3> line_color = kMonochrome;
    std::size_t clamped = 0;  // input samples clamped into [0, 1]

    bool is_line(std::size_t r, std::size_t c) const {
        const std::uint8_t* p = pixels.data() + (r * width + c) * 3;
        return p[0] == line_color[0] && p[1] == line_color[1] &&
               p[2] == line_color[2];
    }
};

std::array<std::uint8_t, 3> variate_color(std::size_t index, bool grayscale);

// Min-max map onto [0, 1]; constant input maps to the 0.5 midline. The
// output is invariant under positive affine rescaling of v, so rendering
// before or after instance normalization gives identical images.
std::vector<double> display_normalize(const std::vector<double>& v);

// Point t lands on column round(t*(W-1)/(T-1)) and row round((1-v)*(H-1));
// consecutive points are joined with Bresenham segments dilated to a
// stroke_width square brush. Out-of-range values clamp and count.
VariateImage render_variate(const std::vector<double>& v_norm,
                            std::size_t variate_index, std::size_t height,
                            std::size_t width, std::size_t stroke_width,
                            bool grayscale = false);

// One image per channel of the window's lookback.
std::vector<VariateImage> render_sample(const SeriesWindow& window,
                                        std::size_t height, std::size_t width,
                                        std::size_t stroke_width,
                                        bool grayscale = false);

// FNV-1a over dimensions then pixel bytes; used by the golden corpus.
std::uint64_t image_hash(const VariateImage& image);

}  // namespace chartcast

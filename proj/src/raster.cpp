#include "chartcast/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "chartcast/rng.hpp"

namespace chartcast {

std::array<std::uint8_t, 3> variate_color(std::size_t index, bool grayscale) {
    if (grayscale) return kMonochrome;
    return kPalette[index % kPalette.size()];
}

std::vector<double> display_normalize(const std::vector<double>& v) {
    if (v.size() < 2) {
        throw std::invalid_argument("display_normalize: need at least 2 points");
    }
    const auto [mn_it, mx_it] = std::minmax_element(v.begin(), v.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<double> out(v.size());
    if (mx == mn) {
        std::fill(out.begin(), out.end(), 0.5);
        return out;
    }
    const double inv = 1.0 / (mx - mn);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mn) * inv;
    return out;
}

namespace {

void paint_brush(VariateImage& img, long cx, long cy, long brush_lo,
                 long brush_hi) {
    const long h = static_cast<long>(img.height);
    const long w = static_cast<long>(img.width);
    for (long dy = brush_lo; dy <= brush_hi; ++dy) {
        for (long dx = brush_lo; dx <= brush_hi; ++dx) {
            const long x = cx + dx, y = cy + dy;
            if (x < 0 || x >= w || y < 0 || y >= h) continue;
            std::uint8_t* p =
                img.pixels.data() +
                (static_cast<std::size_t>(y) * img.width +
                 static_cast<std::size_t>(x)) * 3;
            p[0] = img.line_color[0];
            p[1] = img.line_color[1];
            p[2] = img.line_color[2];
        }
    }
}

void draw_segment(VariateImage& img, long x0, long y0, long x1, long y1,
                  long brush_lo, long brush_hi) {
    long dx = std::labs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    long dy = -std::labs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    while (true) {
        paint_brush(img, x0, y0, brush_lo, brush_hi);
        if (x0 == x1 && y0 == y1) break;
        const long e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

}  // namespace

VariateImage render_variate(const std::vector<double>& v_norm,
                            std::size_t variate_index, std::size_t height,
                            std::size_t width, std::size_t stroke_width,
                            bool grayscale) {
    if (v_norm.size() < 2) {
        throw std::invalid_argument("render_variate: need at least 2 points");
    }
    if (height < 16 || width < 16) {
        throw std::invalid_argument("render_variate: canvas must be at least 16x16");
    }
    if (stroke_width < 1) {
        throw std::invalid_argument("render_variate: stroke width must be >= 1");
    }
    VariateImage img;
    img.height = height;
    img.width = width;
    img.variate_index = variate_index;
    img.line_color = variate_color(variate_index, grayscale);
    img.pixels.resize(height * width * 3);
    for (std::size_t i = 0; i < height * width; ++i) {
        img.pixels[i * 3 + 0] = kBackground[0];
        img.pixels[i * 3 + 1] = kBackground[1];
        img.pixels[i * 3 + 2] = kBackground[2];
    }

    const std::size_t t_len = v_norm.size();
    std::vector<long> col(t_len), row(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
        double v = v_norm[t];
        if (v < 0.0 || v > 1.0) {
            v = std::clamp(v, 0.0, 1.0);
            ++img.clamped;
        }
        col[t] = std::lround(static_cast<double>(t) *
                             static_cast<double>(width - 1) /
                             static_cast<double>(t_len - 1));
        row[t] = std::lround((1.0 - v) * static_cast<double>(height - 1));
    }
    // square brush of stroke_width, anchored just below-right of center
    const long brush_lo = -static_cast<long>((stroke_width - 1) / 2);
    const long brush_hi = static_cast<long>(stroke_width - 1) + brush_lo;
    for (std::size_t t = 0; t + 1 < t_len; ++t) {
        draw_segment(img, col[t], row[t], col[t + 1], row[t + 1], brush_lo,
                     brush_hi);
    }
    return img;
}

std::vector<VariateImage> render_sample(const SeriesWindow& window,
                                        std::size_t height, std::size_t width,
                                        std::size_t stroke_width,
                                        bool grayscale) {
    const std::size_t n = window.channels, t_len = window.lookback;
    std::vector<VariateImage> out;
    out.reserve(n);
    std::vector<double> channel(t_len);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t t = 0; t < t_len; ++t)
            channel[t] = window.x[t * n + c];
        out.push_back(render_variate(display_normalize(channel), c, height,
                                     width, stroke_width, grayscale));
    }
    return out;
}

std::uint64_t image_hash(const VariateImage& image) {
    std::uint64_t h = 1469598103934665603ull;  // FNV offset basis
    auto mix = [&h](std::uint64_t byte) {
        h ^= byte;
        h *= 1099511628211ull;  // FNV prime
    };
    for (int shift = 0; shift < 64; shift += 8)
        mix((static_cast<std::uint64_t>(image.height) >> shift) & 0xff);
    for (int shift = 0; shift < 64; shift += 8)
        mix((static_cast<std::uint64_t>(image.width) >> shift) & 0xff);
    for (std::uint8_t b : image.pixels) mix(b);
    return h;
}

}  // namespace chartcast

#include "chartcast/png.hpp"

#include <array>
#include <fstream>
#include <stdexcept>

namespace chartcast {

namespace {

std::uint32_t crc32(const std::uint8_t* data, std::size_t len,
                    std::uint32_t crc = 0xffffffffu) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t n = 0; n < 256; ++n) {
            std::uint32_t c = n;
            for (int k = 0; k < 8; ++k)
                c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[n] = c;
        }
        return t;
    }();
    for (std::size_t i = 0; i < len; ++i)
        crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc;
}

std::uint32_t adler32(const std::uint8_t* data, std::size_t len) {
    std::uint32_t a = 1, b = 0;
    for (std::size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
    put_u32be(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t type_pos = out.size();
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(type[i]));
    out.insert(out.end(), data.begin(), data.end());
    const std::uint32_t crc =
        crc32(out.data() + type_pos, 4 + data.size()) ^ 0xffffffffu;
    put_u32be(out, crc);
}

}  // namespace

std::vector<std::uint8_t> encode_png_rgb8(const std::uint8_t* pixels,
                                          std::size_t width,
                                          std::size_t height) {
    if (width == 0 || height == 0) {
        throw std::invalid_argument("encode_png_rgb8: empty image");
    }
    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a,
                                     0x1a, 0x0a};

    std::vector<std::uint8_t> ihdr;
    put_u32be(ihdr, static_cast<std::uint32_t>(width));
    put_u32be(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // adaptive filtering
    ihdr.push_back(0);  // no interlace
    put_chunk(out, "IHDR", ihdr);

    // raw scanlines, each prefixed with filter type 0
    std::vector<std::uint8_t> raw;
    raw.reserve(height * (1 + width * 3));
    for (std::size_t r = 0; r < height; ++r) {
        raw.push_back(0);
        const std::uint8_t* row = pixels + r * width * 3;
        raw.insert(raw.end(), row, row + width * 3);
    }

    // zlib wrapper around stored deflate blocks
    std::vector<std::uint8_t> idat = {0x78, 0x01};
    std::size_t off = 0;
    while (off < raw.size()) {
        const std::size_t n = std::min<std::size_t>(raw.size() - off, 65535);
        const bool final_block = off + n == raw.size();
        idat.push_back(final_block ? 1 : 0);
        idat.push_back(static_cast<std::uint8_t>(n & 0xff));
        idat.push_back(static_cast<std::uint8_t>(n >> 8));
        idat.push_back(static_cast<std::uint8_t>(~n & 0xff));
        idat.push_back(static_cast<std::uint8_t>((~n >> 8) & 0xff));
        idat.insert(idat.end(), raw.begin() + static_cast<std::ptrdiff_t>(off),
                    raw.begin() + static_cast<std::ptrdiff_t>(off + n));
        off += n;
    }
    put_u32be(idat, adler32(raw.data(), raw.size()));
    put_chunk(out, "IDAT", idat);

    put_chunk(out, "IEND", {});
    return out;
}

void write_png_rgb8(const std::string& path, const std::uint8_t* pixels,
                    std::size_t width, std::size_t height) {
    const std::vector<std::uint8_t> bytes =
        encode_png_rgb8(pixels, width, height);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

}  // namespace chartcast

#include "gcnet/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "gcnet/errors.hpp"

namespace gcnet {

namespace {

void check_image(const ImageU8& img, int want_channels = 0) {
    if (img.h < 1 || img.w < 1 || (img.channels != 1 && img.channels != 3))
        throw UsageError("image must be nonempty with 1 or 3 channels");
    if (img.px.size() != static_cast<std::size_t>(img.h) * img.w * img.channels)
        throw UsageError("image byte count does not match dims");
    if (want_channels && img.channels != want_channels)
        throw UsageError("image has wrong channel count for this encoding");
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_be32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void png_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(crc32(0L, nullptr, 0), out.data() + crc_start, static_cast<uInt>(4 + data.size()));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

// Decompresses a zlib stream whose inflated size is known.
std::vector<std::uint8_t> zlib_inflate(const std::uint8_t* data, std::size_t size, std::size_t out_size) {
    std::vector<std::uint8_t> out(out_size);
    uLongf dest_len = static_cast<uLongf>(out_size);
    const int rc = uncompress(out.data(), &dest_len, data, static_cast<uLong>(size));
    if (rc != Z_OK || dest_len != out_size) throw ParseError("PNG: corrupt compressed image data");
    return out;
}

ImageU8 decode_png(const std::vector<std::uint8_t>& bytes) {
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0) throw ParseError("PNG: bad signature");
    std::size_t pos = 8;
    ImageU8 img;
    std::vector<std::uint8_t> idat;
    bool have_header = false;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = get_be32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw ParseError("PNG: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw ParseError("PNG: bad IHDR");
            img.w = static_cast<int>(get_be32(data));
            img.h = static_cast<int>(get_be32(data + 4));
            const int depth = data[8], color = data[9], interlace = data[12];
            if (depth != 8 || (color != 0 && color != 2) || interlace != 0)
                throw ParseError("PNG: unsupported format (need 8-bit gray/RGB, non-interlaced)");
            img.channels = color == 0 ? 1 : 3;
            have_header = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!have_header || img.w < 1 || img.h < 1) throw ParseError("PNG: missing image header");
    const std::size_t stride = static_cast<std::size_t>(img.w) * img.channels;
    const std::vector<std::uint8_t> raw = zlib_inflate(idat.data(), idat.size(), (stride + 1) * img.h);
    img.px.assign(stride * img.h, 0);
    const int bpp = img.channels;
    for (int y = 0; y < img.h; ++y) {
        const std::uint8_t filter = raw[(stride + 1) * y];
        const std::uint8_t* src = raw.data() + (stride + 1) * y + 1;
        std::uint8_t* row = img.px.data() + stride * y;
        const std::uint8_t* prev = y > 0 ? row - stride : nullptr;
        for (std::size_t x = 0; x < stride; ++x) {
            const int a = x >= static_cast<std::size_t>(bpp) ? row[x - bpp] : 0;
            const int b = prev ? prev[x] : 0;
            const int c = (prev && x >= static_cast<std::size_t>(bpp)) ? prev[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw ParseError("PNG: unknown row filter");
            }
            row[x] = static_cast<std::uint8_t>(v & 0xff);
        }
    }
    return img;
}

// Parses "P5"/"P6" headers: whitespace-separated fields with '#' comments.
ImageU8 decode_pnm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2) throw ParseError("PNM: truncated header");
    const int channels = bytes[1] == '6' ? 3 : 1;
    std::size_t pos = 2;
    auto next_int = [&]() -> int {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw ParseError("PNM: malformed header");
        int v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
        return v;
    };
    ImageU8 img;
    img.channels = channels;
    img.w = next_int();
    img.h = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw ParseError("PNM: only maxval 255 supported");
    ++pos;  // single whitespace after maxval
    const std::size_t need = static_cast<std::size_t>(img.w) * img.h * channels;
    if (bytes.size() - pos < need) throw ParseError("PNM: truncated pixel data");
    img.px.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return img;
}

}  // namespace

ImageU8 quantize_image(const std::vector<double>& planar, int c, int h, int w) {
    if (planar.size() != static_cast<std::size_t>(c) * h * w) throw UsageError("planar image size mismatch");
    ImageU8 img;
    img.h = h;
    img.w = w;
    img.channels = c;
    img.px.resize(planar.size());
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) {
            const double v = std::clamp(planar[ch * plane + i], 0.0, 1.0);
            img.px[i * c + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    return img;
}

std::vector<double> dequantize_image(const ImageU8& img) {
    check_image(img);
    const std::size_t plane = static_cast<std::size_t>(img.h) * img.w;
    std::vector<double> out(plane * img.channels);
    for (int ch = 0; ch < img.channels; ++ch)
        for (std::size_t i = 0; i < plane; ++i)
            out[ch * plane + i] = img.px[i * img.channels + ch] / 255.0;
    return out;
}

std::vector<std::uint8_t> encode_ppm(const ImageU8& img) {
    check_image(img, 3);
    char head[64];
    const int n = std::snprintf(head, sizeof(head), "P6\n%d %d\n255\n", img.w, img.h);
    std::vector<std::uint8_t> out(head, head + n);
    out.insert(out.end(), img.px.begin(), img.px.end());
    return out;
}

std::vector<std::uint8_t> encode_pgm(const ImageU8& img) {
    check_image(img, 1);
    char head[64];
    const int n = std::snprintf(head, sizeof(head), "P5\n%d %d\n255\n", img.w, img.h);
    std::vector<std::uint8_t> out(head, head + n);
    out.insert(out.end(), img.px.begin(), img.px.end());
    return out;
}

std::vector<std::uint8_t> encode_png(const ImageU8& img) {
    check_image(img);
    const std::size_t stride = static_cast<std::size_t>(img.w) * img.channels;
    std::vector<std::uint8_t> raw((stride + 1) * img.h);
    for (int y = 0; y < img.h; ++y) {
        raw[(stride + 1) * y] = 0;  // filter: none
        std::memcpy(raw.data() + (stride + 1) * y + 1, img.px.data() + stride * y, stride);
    }
    uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_cap);
    if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("PNG: compression failed");
    comp.resize(comp_cap);

    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<std::uint8_t> out(sig, sig + 8);
    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(img.w));
    put_be32(ihdr, static_cast<std::uint32_t>(img.h));
    ihdr.push_back(8);                                    // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);            // color type
    ihdr.push_back(0);                                    // compression
    ihdr.push_back(0);                                    // filter method
    ihdr.push_back(0);                                    // no interlace
    png_chunk(out, "IHDR", ihdr);
    png_chunk(out, "IDAT", comp);
    png_chunk(out, "IEND", {});
    return out;
}

ImageU8 decode_image(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() >= 8 && bytes[0] == 137 && bytes[1] == 'P') return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return decode_pnm(bytes);
    throw ParseError("unrecognized image format");
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path);
    const std::streamsize size = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    f.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!f) throw IoError("read failed: " + path);
    return bytes;
}

void write_image(const std::string& path, const ImageU8& img) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".ppm") write_bytes(path, encode_ppm(img));
    else if (ext == ".pgm") write_bytes(path, encode_pgm(img));
    else if (ext == ".png") write_bytes(path, encode_png(img));
    else throw UsageError("unsupported image extension: " + path);
}

ImageU8 read_image(const std::string& path) { return decode_image(read_bytes(path)); }

namespace {

ImageU8 mask_to_u8(const MaskGrid& m) {
    ImageU8 img;
    img.h = m.h;
    img.w = m.w;
    img.channels = 1;
    img.px.resize(m.v.size());
    for (std::size_t i = 0; i < m.v.size(); ++i)
        img.px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(m.v[i], 0.0, 1.0) * 255.0));
    return img;
}

}  // namespace

void write_mask_pgm(const std::string& path, const MaskGrid& m) { write_bytes(path, encode_pgm(mask_to_u8(m))); }
void write_mask_png(const std::string& path, const MaskGrid& m) { write_bytes(path, encode_png(mask_to_u8(m))); }

void write_mask_dump(const std::string& path, const MaskGrid& m) {
    std::vector<std::uint8_t> bytes(8 + m.v.size() * 8);
    const std::uint32_t hw[2] = {static_cast<std::uint32_t>(m.h), static_cast<std::uint32_t>(m.w)};
    std::memcpy(bytes.data(), hw, 8);
    std::memcpy(bytes.data() + 8, m.v.data(), m.v.size() * 8);
    write_bytes(path, bytes);
}

MaskGrid read_mask_dump(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_bytes(path);
    if (bytes.size() < 8) throw ParseError("mask dump: truncated header");
    std::uint32_t hw[2];
    std::memcpy(hw, bytes.data(), 8);
    MaskGrid m(static_cast<int>(hw[0]), static_cast<int>(hw[1]));
    if (bytes.size() != 8 + m.v.size() * 8) throw ParseError("mask dump: size does not match header");
    std::memcpy(m.v.data(), bytes.data() + 8, m.v.size() * 8);
    return m;
}

}  // namespace gcnet

#include "mkgc/image.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace mkgc {

namespace {

void put_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void save_image_tensor(const ImageTensor& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write image file '" + path + "'");
    os.write("MKGI", 4);
    put_u32_le(os, static_cast<std::uint32_t>(img.h));
    put_u32_le(os, static_cast<std::uint32_t>(img.w));
    put_u32_le(os, static_cast<std::uint32_t>(img.c));
    for (double v : img.data) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32_le(os, bits);
    }
    if (!os) throw io_error("short write to image file '" + path + "'");
}

ImageTensor load_image_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open image file '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "MKGI", 4) != 0) {
        throw parse_error("'" + path + "' is not an MKGI image tensor");
    }
    const std::uint32_t h = get_u32_le(is);
    const std::uint32_t w = get_u32_le(is);
    const std::uint32_t c = get_u32_le(is);
    if (!is) throw parse_error("truncated image header in '" + path + "'");
    ImageTensor img(h, w, c);
    for (double& v : img.data) {
        const std::uint32_t bits = get_u32_le(is);
        float f;
        std::memcpy(&f, &bits, 4);
        v = static_cast<double>(f);
    }
    if (!is) throw parse_error("truncated image data in '" + path + "'");
    return img;
}

} // namespace mkgc

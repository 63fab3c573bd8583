// SPDX-License-Identifier: Apache-2.0
#include "mat_file.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "maven/data.hpp"

namespace maven::detail {

namespace {

enum : std::uint32_t {
    miINT8 = 1, miUINT8 = 2, miINT16 = 3, miUINT16 = 4, miINT32 = 5, miUINT32 = 6,
    miSINGLE = 7, miDOUBLE = 9, miINT64 = 12, miUINT64 = 13, miMATRIX = 14, miCOMPRESSED = 15,
};

template <typename T>
T read_le(const unsigned char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));  // MAT files written on little-endian hosts ("IM")
    return v;
}

struct Element {
    std::uint32_t type;
    const unsigned char* data;
    std::size_t size;
    std::size_t advance;  // bytes consumed including tag and padding
};

Element read_element(const unsigned char* p, std::size_t remaining) {
    if (remaining < 8) throw DataError("mat: truncated element tag");
    const auto first = read_le<std::uint32_t>(p);
    if ((first >> 16) != 0) {  // small data element: size in the upper half, payload in 4 bytes
        return {first & 0xffffu, p + 4, first >> 16, 8};
    }
    const auto size = read_le<std::uint32_t>(p + 4);
    if (size > remaining - 8) throw DataError("mat: element overruns file");
    std::size_t advance = 8 + size;
    if (first != miCOMPRESSED) advance = 8 + ((size + 7) / 8) * 8;
    if (advance > remaining) advance = remaining;
    return {first, p + 8, size, advance};
}

std::vector<double> decode_numeric(const Element& e) {
    std::size_t width = 0;
    switch (e.type) {
        case miINT8: case miUINT8: width = 1; break;
        case miINT16: case miUINT16: width = 2; break;
        case miINT32: case miUINT32: case miSINGLE: width = 4; break;
        case miDOUBLE: case miINT64: case miUINT64: width = 8; break;
        default: throw DataError("mat: unsupported numeric type " + std::to_string(e.type));
    }
    const std::size_t n = e.size / width;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* q = e.data + i * width;
        switch (e.type) {
            case miINT8: out[i] = static_cast<std::int8_t>(*q); break;
            case miUINT8: out[i] = *q; break;
            case miINT16: out[i] = read_le<std::int16_t>(q); break;
            case miUINT16: out[i] = read_le<std::uint16_t>(q); break;
            case miINT32: out[i] = read_le<std::int32_t>(q); break;
            case miUINT32: out[i] = read_le<std::uint32_t>(q); break;
            case miSINGLE: out[i] = read_le<float>(q); break;
            case miDOUBLE: out[i] = read_le<double>(q); break;
            case miINT64: out[i] = static_cast<double>(read_le<std::int64_t>(q)); break;
            case miUINT64: out[i] = static_cast<double>(read_le<std::uint64_t>(q)); break;
            default: break;
        }
    }
    return out;
}

MatVariable parse_matrix(const unsigned char* p, std::size_t size) {
    MatVariable var;
    std::size_t off = 0;
    const Element flags = read_element(p + off, size - off);
    off += flags.advance;
    if (flags.size >= 4) {
        const auto cls = read_le<std::uint32_t>(flags.data) & 0xffu;
        const bool complex = (read_le<std::uint32_t>(flags.data) >> 11) & 1u;
        if (cls < 6 || cls > 15 || complex) throw DataError("mat: only real numeric arrays are supported");
    }
    const Element dims = read_element(p + off, size - off);
    off += dims.advance;
    for (double d : decode_numeric(dims)) var.dims.push_back(static_cast<std::size_t>(d));
    const Element name = read_element(p + off, size - off);
    off += name.advance;
    var.name.assign(reinterpret_cast<const char*>(name.data), name.size);
    const Element real = read_element(p + off, size - off);
    var.values = decode_numeric(real);
    return var;
}

std::vector<unsigned char> inflate_all(const unsigned char* data, std::size_t size) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw DataError("mat: zlib init failed");
    zs.next_in = const_cast<Bytef*>(data);
    zs.avail_in = static_cast<uInt>(size);
    std::vector<unsigned char> out;
    unsigned char buf[1 << 16];
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw DataError("mat: corrupt compressed element");
        }
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

void collect(const unsigned char* p, std::size_t size, std::vector<MatVariable>& out) {
    std::size_t off = 0;
    while (off + 8 <= size) {
        const Element e = read_element(p + off, size - off);
        if (e.type == miCOMPRESSED) {
            const auto inner = inflate_all(e.data, e.size);
            collect(inner.data(), inner.size(), out);
        } else if (e.type == miMATRIX) {
            out.push_back(parse_matrix(e.data, e.size));
        }
        off += e.advance;
    }
}

}  // namespace

std::vector<MatVariable> parse_mat_v5(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 128) throw DataError("mat: file shorter than the 128-byte header");
    if (bytes[126] != 'I' || bytes[127] != 'M') throw DataError("mat: only little-endian level-5 files are supported");
    std::vector<MatVariable> out;
    collect(bytes.data() + 128, bytes.size() - 128, out);
    return out;
}

std::vector<MatVariable> read_mat_v5(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("mat: cannot open " + file.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_mat_v5(bytes);
}

}  // namespace maven::detail

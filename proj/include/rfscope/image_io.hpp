#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rfscope/common.hpp"

namespace rfscope {

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct ImageU8 {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> rgb;

    uint8_t& at(int y, int x, int ch) { return rgb[(size_t(y) * size_t(w) + size_t(x)) * 3 + size_t(ch)]; }
    uint8_t at(int y, int x, int ch) const { return rgb[(size_t(y) * size_t(w) + size_t(x)) * 3 + size_t(ch)]; }
};

namespace detail {

// PNM header token reader: skips whitespace and '#' comments.
inline int pnm_token(std::istream& in, const std::string& path) {
    for (;;) {
        int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            break;
        }
    }
    int v = -1;
    in >> v;
    if (!in || v < 0) throw Error(path + ": malformed PNM header");
    return v;
}

} // namespace detail

inline ImageU8 read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(path + ": cannot open");
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P6") throw Error(path + ": not a P6 PPM");
    int w = detail::pnm_token(in, path);
    int h = detail::pnm_token(in, path);
    int maxval = detail::pnm_token(in, path);
    if (maxval != 255) throw Error(path + ": unsupported maxval " + std::to_string(maxval));
    in.get(); // single whitespace after maxval
    ImageU8 img;
    img.h = h;
    img.w = w;
    img.rgb.resize(size_t(h) * size_t(w) * 3);
    in.read(reinterpret_cast<char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
    if (in.gcount() != std::streamsize(img.rgb.size())) throw Error(path + ": truncated pixel data");
    return img;
}

inline void write_ppm(const std::string& path, const ImageU8& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(path + ": cannot open for writing");
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
    if (!out) throw Error(path + ": write failed");
}

// 16-bit PGM (P5, maxval 65535, big-endian samples) of a field normalized to
// its max; an all-zero field writes all zeros.
inline void write_pgm16(const std::string& path, const std::vector<double>& field, int h, int w) {
    if (int64_t(field.size()) != int64_t(h) * w) throw Error(path + ": field size does not match dimensions");
    double mx = 0.0;
    for (double v : field)
        if (v > mx) mx = v;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(path + ": cannot open for writing");
    out << "P5\n" << w << " " << h << "\n65535\n";
    for (double v : field) {
        double t = mx > 0.0 ? v / mx : 0.0;
        if (t < 0.0) t = 0.0;
        auto q = uint16_t(t * 65535.0 + 0.5);
        char bytes[2] = {char(q >> 8), char(q & 0xff)};
        out.write(bytes, 2);
    }
    if (!out) throw Error(path + ": write failed");
}

// Full-precision CSV field, one row per line. %.17g round-trips doubles.
inline void write_csv_field(const std::string& path, const std::vector<double>& field, int h, int w) {
    if (int64_t(field.size()) != int64_t(h) * w) throw Error(path + ": field size does not match dimensions");
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot open for writing");
    char buf[64];
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::snprintf(buf, sizeof buf, "%.17g", field[size_t(y) * size_t(w) + size_t(x)]);
            out << buf << (x + 1 < w ? "," : "\n");
        }
    }
    if (!out) throw Error(path + ": write failed");
}

struct CsvField {
    int h = 0;
    int w = 0;
    std::vector<double> values;
};

inline CsvField read_csv_field(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(path + ": cannot open");
    CsvField f;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int cols = 0;
        while (std::getline(ss, cell, ',')) {
            size_t pos = 0;
            double v;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw ParseError(lineno, cols + 1, path + ": not a number: '" + cell + "'");
            }
            (void)pos;
            f.values.push_back(v);
            ++cols;
        }
        if (f.w == 0)
            f.w = cols;
        else if (cols != f.w)
            throw ParseError(lineno, 1, path + ": ragged row, expected " + std::to_string(f.w) + " columns");
        ++f.h;
    }
    if (f.h == 0) throw Error(path + ": empty CSV field");
    return f;
}

inline ImageU8 resize_nearest(const ImageU8& src, int h, int w) {
    ImageU8 dst;
    dst.h = h;
    dst.w = w;
    dst.rgb.resize(size_t(h) * size_t(w) * 3);
    for (int y = 0; y < h; ++y) {
        int sy = int((int64_t(y) * src.h) / h);
        for (int x = 0; x < w; ++x) {
            int sx = int((int64_t(x) * src.w) / w);
            for (int ch = 0; ch < 3; ++ch) dst.at(y, x, ch) = src.at(sy, sx, ch);
        }
    }
    return dst;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(path + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(path + ": cannot open for writing");
    out << text;
    if (!out) throw Error(path + ": write failed");
}

} // namespace rfscope

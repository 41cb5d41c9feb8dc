#include "mvanet/image_io.hpp"

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "mvanet/errors.hpp"

namespace mvanet {

namespace {

unsigned char quantize(double v) {
    const double q = std::floor(v * 255.0 + 0.5);
    return static_cast<unsigned char>(q < 0 ? 0 : (q > 255 ? 255 : q));
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

void read_header(std::istream& in, const char* magic, const std::string& path, Index& w,
                 Index& h) {
    if (next_token(in) != magic) throw IoError(path + ": not a " + magic + " file");
    try {
        w = std::stoll(next_token(in));
        h = std::stoll(next_token(in));
        if (std::stoll(next_token(in)) != 255) throw IoError(path + ": expected 8-bit depth");
    } catch (const std::invalid_argument&) {
        throw IoError(path + ": malformed header");
    }
    if (w <= 0 || h <= 0) throw IoError(path + ": bad dimensions");
}

} // namespace

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 3)
        throw IoError("need a (1,3,H,W) image to write " + path);
    const Index H = image.dim(2), W = image.dim(3);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P6\n" << W << " " << H << "\n255\n";
    std::vector<unsigned char> row(3 * W);
    for (Index y = 0; y < H; ++y) {
        for (Index x = 0; x < W; ++x)
            for (Index c = 0; c < 3; ++c) row[3 * x + c] = quantize(image.at4(0, c, y, x));
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw IoError("short write to " + path);
}

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    Index w = 0, h = 0;
    read_header(in, "P6", path, w, h);
    Tensor image({1, 3, h, w});
    std::vector<unsigned char> row(3 * w);
    for (Index y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), row.size());
        if (!in) throw IoError("truncated pixel data in " + path);
        for (Index x = 0; x < w; ++x)
            for (Index c = 0; c < 3; ++c)
                image.at4(0, c, y, x) = static_cast<double>(row[3 * x + c]) / 255.0;
    }
    return image;
}

void write_pgm(const std::string& path, const Tensor& map) {
    if (map.rank() != 4 || map.dim(0) != 1 || map.dim(1) != 1)
        throw IoError("need a (1,1,H,W) map to write " + path);
    const Index H = map.dim(2), W = map.dim(3);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P5\n" << W << " " << H << "\n255\n";
    std::vector<unsigned char> row(W);
    for (Index y = 0; y < H; ++y) {
        for (Index x = 0; x < W; ++x) row[x] = quantize(map.at4(0, 0, y, x));
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw IoError("short write to " + path);
}

Tensor read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    Index w = 0, h = 0;
    read_header(in, "P5", path, w, h);
    Tensor map({1, 1, h, w});
    std::vector<unsigned char> row(w);
    for (Index y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), row.size());
        if (!in) throw IoError("truncated pixel data in " + path);
        for (Index x = 0; x < w; ++x) map.at4(0, 0, y, x) = static_cast<double>(row[x]) / 255.0;
    }
    return map;
}

} // namespace mvanet
